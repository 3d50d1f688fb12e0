"""Descendant coefficients and truncated blocks: closed-form examples,
the large-central-charge hypergeometric limit, series convergence, and the
on-disk coefficient cache."""

import math

import numpy as np
import pytest

from liouville import derive_params, DomainError
from liouville.blocks import (
    YoungDiagram, descendant_3pt, block, block_coefficients,
    BlockCoefficientCache,
)


def test_descendant_empty_is_one():
    assert descendant_3pt(0.3, 0.9, 1.7, YoungDiagram(())) == 1.0


def test_descendant_level_one():
    d1, d2, dd = 0.3, 0.9, 1.7
    got = descendant_3pt(d1, d2, dd, YoungDiagram((1,)))
    assert got == pytest.approx(dd + d2 - d1)


def test_descendant_level_two_values():
    # unrolled commutator recursion by hand:
    # (2): Delta - Delta1 + 2 Delta2
    # (1,1): (Delta + 1 - Delta1 + Delta2)(Delta - Delta1 + Delta2)
    d1, d2, dd = 0.21, 0.83, 1.9
    assert descendant_3pt(d1, d2, dd, YoungDiagram((2,))) == \
        pytest.approx(dd - d1 + 2 * d2)
    assert descendant_3pt(d1, d2, dd, YoungDiagram((1, 1))) == \
        pytest.approx((dd + 1 - d1 + d2) * (dd - d1 + d2))


@pytest.mark.parametrize("nu", [(3,), (2, 1), (1, 1, 1), (3, 2), (2, 2, 1)])
def test_descendant_degree_bound(nu):
    # along any parameter ray the value is a polynomial of degree <= |nu|;
    # the (N+1)-th finite difference of samples then vanishes
    diagram = YoungDiagram(nu)
    n = diagram.level
    base = np.array([0.4, 0.9, 1.3])
    ray = np.array([0.7, -0.3, 1.1])
    ts = np.arange(n + 2, dtype=float)
    vals = np.array([descendant_3pt(*(base + t * ray), diagram).real for t in ts])
    diff = np.diff(vals, n=n + 1)
    assert np.all(np.abs(diff) <= 1e-9 * max(1.0, np.max(np.abs(vals))))


def test_block_prefactor_at_level_zero():
    p = derive_params(1.0)
    mom = 0.8
    dd = (p.Q ** 2 + mom ** 2) / 4.0
    deltas = (1.1, 0.9, 0.7, 1.3)
    z = 0.23 + 0.4j
    b = block(mom, deltas, z, 0, p)
    assert b.value == z ** (dd - deltas[0] - deltas[1])
    assert b.coefficients == (1.0,)


def test_block_level_one_coefficient():
    p = derive_params(1.0)
    mom = 1.1
    dd = (p.Q ** 2 + mom ** 2) / 4.0
    deltas = (1.1, 0.9, 0.7, 1.3)
    b = block(mom, deltas, 0.1, 3, p)
    want = (dd + deltas[1] - deltas[0]) * (dd + deltas[2] - deltas[3]) / (2 * dd)
    assert abs(b.coefficients[1] - want) <= 1e-12 * abs(want)


def test_large_central_charge_hypergeometric_limit():
    # as c -> infinity the block degenerates to the Gauss series with
    # Pochhammer coefficients (a)_N (b)_N / (N! (2 Delta)_N)
    def poch(x, n):
        return math.prod(x + i for i in range(n)) if n else 1.0

    dd = 2.3
    d1, d2, d3, d4 = 0.3, 0.7, 1.1, 0.45
    cs = block_coefficients(dd, (d1, d2, d3, d4), 6, 1e9)
    for n in range(7):
        want = poch(dd + d2 - d1, n) * poch(dd + d3 - d4, n) \
            / (math.factorial(n) * poch(2 * dd, n))
        assert abs(cs[n] - want) <= 1e-6 * abs(want), n


def test_block_series_is_cauchy():
    # geometric decay of increments for |z| <= 0.4 on the spectrum line
    p = derive_params(1.0)
    deltas = tuple((p.Q ** 2 + mom ** 2) / 4.0 for mom in (0.1, 0.3, 0.2, 0.4))
    for mom in (0.5, 2.0):
        for z in (0.4, 0.25 + 0.2j):
            vals = [block(mom, deltas, z, lvl, p).value for lvl in range(5, 13)]
            incs = [abs(b - a) for a, b in zip(vals, vals[1:])]
            assert all(b < a for a, b in zip(incs, incs[1:])), (mom, z, incs)
            assert incs[-1] < 0.6 * incs[0]


def test_block_rejects_bad_inputs():
    p = derive_params(1.0)
    with pytest.raises(DomainError):
        block(1.0, (1, 1, 1, 1), 1.2, 4, p)
    with pytest.raises(DomainError):
        block(1.0, (1, 1, 1, 1), 0.3, -1, p)


def test_real_coefficients_for_symmetric_externals():
    p = derive_params(1.0)
    dd = (p.Q ** 2 + 1.21) / 4.0
    cs = block_coefficients(dd, (0.9, 0.9, 0.9, 0.9), 8, p.c_L)
    assert all(abs(c.imag) <= 1e-12 * max(1.0, abs(c)) for c in cs)


def test_tail_estimate_brackets_next_increment():
    p = derive_params(1.0)
    deltas = (1.1, 0.9, 0.7, 1.3)
    b10 = block(1.0, deltas, 0.3, 10, p)
    b11 = block(1.0, deltas, 0.3, 11, p)
    inc = abs(b11.value - b10.value)
    assert b10.tail_estimate > 0.2 * inc
    assert b10.tail_estimate < 50.0 * inc


def test_precomputed_coefficients_shortcut():
    p = derive_params(1.0)
    deltas = (1.1, 0.9, 0.7, 1.3)
    dd = (p.Q ** 2 + 1.0) / 4.0
    cs = block_coefficients(dd, deltas, 6, p.c_L)
    a = block(1.0, deltas, 0.2 + 0.1j, 6, p)
    b = block(1.0, deltas, 0.2 + 0.1j, 6, p, coefficients=cs)
    assert a.value == b.value


def test_coefficient_cache_roundtrip(tmp_path):
    path = tmp_path / "cache.json"
    cache = BlockCoefficientCache(path)
    deltas = (1.1 + 0j, 0.9 + 0j, 0.7 + 0j, 1.3 + 0j)
    coeffs = (1.0 + 0j, 2.5 - 0.5j, 3.25 + 0j)
    assert cache.lookup(1.0, 2, 2.0 + 0j, deltas) is None
    cache.store(1.0, 2, 2.0 + 0j, deltas, coeffs)
    cache.save()
    reloaded = BlockCoefficientCache(path)
    assert reloaded.lookup(1.0, 2, 2.0 + 0j, deltas) == coeffs
    assert len(reloaded) == 1
    # distinct weights get distinct keys
    assert reloaded.lookup(1.0, 2, 2.0 + 1e-9j, deltas) is None


def test_coefficient_cache_version_gate(tmp_path):
    path = tmp_path / "cache.json"
    path.write_text('{"version": 0, "entries": {"junk": [[1.0, 0.0]]}}')
    cache = BlockCoefficientCache(path)
    assert len(cache) == 0
