"""Gram matrices against an independent exact oracle.

The oracle reduces vacuum expectation words <D| L_{w1} ... L_{wn} |D>
directly: repeatedly rewrite the leftmost positive mode with the
commutation relation until every word is empty or annihilates.  It shares
no code or algorithm with the package's mode-action engine and runs in
exact sympy arithmetic.
"""

import functools

import numpy as np
import pytest
import sympy

from liouville import derive_params, DegeneracyError
from liouville.blocks import (
    YoungDiagram, diagrams_at_level, VermaEngine, SymbolicRing,
    gram_level, virasoro_pairing, _GRAM_LEVELS, _POLY_GRAM, _ENGINES,
)

DELTA, CC = sympy.symbols("Delta c")


@functools.lru_cache(maxsize=None)
def vev(word: tuple) -> sympy.Expr:
    """<D| L_{w1} ... L_{wn} |D> by leftmost-positive reduction."""
    if not word:
        return sympy.Integer(1)
    if word[-1] > 0:
        return sympy.Integer(0)     # annihilates the ket
    if word[0] < 0:
        return sympy.Integer(0)     # annihilates the bra
    for i, w in enumerate(word):
        if w == 0:
            lvl = -sum(word[i + 1:])
            return (DELTA + lvl) * vev(word[:i] + word[i + 1:])
    for i in range(len(word) - 1):
        a, b = word[i], word[i + 1]
        if a > 0 and b < 0:
            head, tail = word[:i], word[i + 2:]
            out = vev(head + (b, a) + tail)
            out += (a - b) * vev(head + (a + b,) + tail)
            if a + b == 0:
                out += CC / 12 * (a ** 3 - a) * vev(head + tail)
            return sympy.expand(out)
    raise AssertionError(f"unreachable word {word}")


def oracle_pairing(nu: tuple, nu_p: tuple) -> sympy.Expr:
    # adjoint of L_{-m1}...L_{-mk} (m increasing) is L_{mk}...L_{m1}
    incr = tuple(sorted(nu))
    incr_p = tuple(sorted(nu_p))
    word = tuple(reversed(incr)) + tuple(-m for m in incr_p)
    return vev(word)


@pytest.mark.parametrize("n", range(0, 7))
def test_gram_matches_oracle_exactly(n):
    engine = VermaEngine(SymbolicRing(DELTA, CC))
    basis = diagrams_at_level(n)
    for nu in basis:
        for nu_p in basis:
            got = engine.pairing(nu, nu_p)
            want = oracle_pairing(nu.parts, nu_p.parts)
            assert sympy.expand(got - want) == 0, (nu.parts, nu_p.parts)


def test_pairing_examples():
    d, c = 0.83 + 0.1j, 17.0 - 2.0j
    one = YoungDiagram((1,))
    two = YoungDiagram((2,))
    oneone = YoungDiagram((1, 1))
    assert virasoro_pairing(one, one, d, c) == pytest.approx(2 * d)
    assert virasoro_pairing(two, two, d, c) == pytest.approx(4 * d + c / 2)
    assert virasoro_pairing(two, oneone, d, c) == pytest.approx(6 * d)
    assert virasoro_pairing(one, one, 0.0, c) == 0.0


def test_cross_level_pairing_exact_zero():
    d, c = 1.3, 25.0
    for na, nb in [(1, 2), (3, 5), (0, 4)]:
        for nu in diagrams_at_level(na):
            for nu_p in diagrams_at_level(nb):
                assert virasoro_pairing(nu, nu_p, d, c) == 0.0


def test_level2_matrix_literal():
    d, c = 0.41 - 0.3j, 11.0 + 1.0j
    gl = gram_level(2, d, c)
    assert [x.parts for x in gl.basis] == [(2,), (1, 1)]
    want = np.array([[4 * d + c / 2, 6 * d], [6 * d, 4 * d * (2 * d + 1)]])
    assert np.max(np.abs(gl.gram - want)) < 1e-12


def test_level0_matrix():
    gl = gram_level(0, 0.7, 13.0)
    assert gl.gram.shape == (1, 1)
    assert gl.gram[0, 0] == 1.0
    assert gl.gram_inverse[0, 0] == 1.0


@pytest.mark.parametrize("n", range(1, 9))
def test_gram_symmetry(n):
    rng = np.random.default_rng(n)
    d = complex(*rng.normal(size=2))
    c = complex(*rng.normal(size=2)) * 10.0
    gl = gram_level(n, d, c)
    assert np.max(np.abs(gl.gram - gl.gram.T)) == 0.0


def test_positive_definite_on_spectrum_line():
    p = derive_params(1.0)
    for mom in (0.5, 1.0, 2.0, 5.0):
        dd = (p.Q ** 2 + mom ** 2) / 4.0
        for n in range(1, 9):
            gl = gram_level(n, dd, p.c_L)
            assert np.max(np.abs(gl.gram.imag)) == 0.0
            eig = np.linalg.eigvalsh(gl.gram.real)
            assert eig.min() > 0.0, (mom, n)


def test_inverse_residuals():
    p = derive_params(1.0)
    eye = np.eye
    # scaled residual holds through level 12 even at large weights
    for n, dd in [(6, 1.625), (8, 7.8125), (12, 37.5625)]:
        gl = gram_level(n, dd, p.c_L)
        d = np.sqrt(np.abs(np.diagonal(gl.gram)))
        gs = gl.gram * np.outer(1 / d, 1 / d)
        xs = gl.gram_inverse * np.outer(d, d)
        assert np.max(np.abs(gs @ xs - eye(len(gs)))) < 1e-10
    # raw product residual at desk sizes; the entry-scale spread above
    # level ~6 makes the raw check meaningless in double precision
    for n, dd in [(4, 1.625), (6, 3.4), (6, 1.625)]:
        gl = gram_level(n, dd, p.c_L)
        assert np.max(np.abs(gl.gram @ gl.gram_inverse - eye(len(gl.gram)))) < 1e-10


def test_cache_coherence_bit_for_bit():
    p = derive_params(1.0)
    keep_poly = dict(_POLY_GRAM)
    first = [gram_level(n, 2.3125, p.c_L).gram.copy() for n in range(0, 7)]
    firstinv = [gram_level(n, 2.3125, p.c_L).gram_inverse.copy() for n in range(0, 7)]
    _GRAM_LEVELS.clear()
    _POLY_GRAM.clear()
    _ENGINES.clear()
    try:
        for n in range(0, 7):
            gl = gram_level(n, 2.3125, p.c_L)
            assert np.array_equal(gl.gram, first[n])
            assert np.array_equal(gl.gram_inverse, firstinv[n])
    finally:
        _POLY_GRAM.update(keep_poly)


def test_degeneracy_at_kac_weight():
    # Delta = 0 is the (1,1) Kac weight: level-1 gram [2*Delta] is singular
    with pytest.raises(DegeneracyError) as exc:
        gram_level(1, 0.0, 25.0)
    assert exc.value.kac_rs == (1, 1)
    assert exc.value.level == 1


def test_degeneracy_names_level2_kac_root():
    # roots of det G_2(Delta) located independently from the literal matrix:
    # det = (4D + c/2) 4D(2D+1) - 36 D^2
    c = 25.0
    coeffs = [32.0, 16.0 + 4.0 * c - 36.0, 2.0 * c, 0.0]   # cubic in D
    roots = np.roots(coeffs)
    root = max(roots, key=abs)          # nonzero, level-2-specific root
    with pytest.raises(DegeneracyError) as exc:
        gram_level(2, complex(root), c)
    r, s = exc.value.kac_rs
    assert r * s <= 2
