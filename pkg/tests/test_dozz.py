"""Structure constant: frozen oracle values, symmetry and scaling laws,
the alpha shift equation assembled from Gamma functions alone, and pole
bookkeeping on the zero lattices."""

import cmath
import itertools
import math

import numpy as np
import pytest

from liouville import derive_params, dozz, get_evaluator, log_l
from conftest import GAMMA_BY_KEY, parse_c


def test_oracle_values(special_oracle):
    for rec in special_oracle["dozz"]:
        g = GAMMA_BY_KEY[rec["gamma"]]
        p = derive_params(g, mu=float(rec["mu"]))
        alphas = [parse_c(a) for a in rec["alphas"]]
        want = parse_c(rec["dozz"])
        got = dozz(*alphas, p)
        assert not got.is_pole
        assert abs(got.value - want) < 1e-12 * abs(want), rec


def test_permutation_invariance():
    p = derive_params(1.0)
    base = dozz(1.9, 1.8, 1.7, p).value
    for perm in itertools.permutations((1.9, 1.8, 1.7)):
        v = dozz(*perm, p).value
        assert abs(v - base) <= 1e-12 * abs(base)


def test_mu_scaling():
    # C_mu = mu^{(2Q - abar)/gamma} C_1
    alphas = (2.1, 1.6, 1.4)
    for g in (0.8, 1.0, 1.8):
        p1 = derive_params(g, mu=1.0)
        base = dozz(*alphas, p1).value
        for mu in (0.3, 2.0, 17.5):
            pm = derive_params(g, mu=mu)
            want = base * mu ** ((2.0 * p1.Q - sum(alphas)) / g)
            got = dozz(*alphas, pm).value
            assert abs(got - want) <= 1e-12 * abs(want)


def _log_f(x, g):
    # Upsilon(x + g/2) = F(x) Upsilon(x)
    return log_l(g * x / 2.0) + (1.0 - g * x) * math.log(g / 2.0)


def test_alpha_shift_law():
    # C(a1 + gamma, a2, a3) / C(a1, a2, a3) assembled from Gamma factors
    for gkey, g in GAMMA_BY_KEY.items():
        p = derive_params(g, mu=1.3)
        a1, a2, a3 = 0.71 * p.Q, 0.67 * p.Q, 0.59 * p.Q
        abar = a1 + a2 + a3
        num = dozz(a1 + g, a2, a3, p)
        den = dozz(a1, a2, a3, p)
        got = num.value / den.value
        log_a = (math.log(math.pi * p.mu) + log_l(g * g / 4.0)
                 + (2.0 - g * g / 2.0) * math.log(g / 2.0))
        log_want = (-log_a
                    + _log_f(a1, g) + _log_f(a1 + g / 2.0, g)
                    + _log_f(abar / 2.0 - a1 - g / 2.0, g)
                    - _log_f(abar / 2.0 - p.Q, g)
                    - _log_f(abar / 2.0 - a2, g)
                    - _log_f(abar / 2.0 - a3, g))
        want = cmath.exp(log_want)
        assert abs(got / want - 1.0) < 1e-8, gkey


def test_pole_at_total_charge_screening_boundary():
    # abar = 2Q puts the first denominator argument on the lattice corner
    p = derive_params(1.0)
    v = dozz(1.9, 1.8, 1.3, p)
    assert v.is_pole
    assert v.pole_distance < 1e-14
    assert math.isinf(abs(v.value))
    assert v.log_value is None


def test_near_pole_distance_reporting():
    p = derive_params(1.0)
    eps = 1e-9
    v = dozz(1.9, 1.8, 1.3 + eps, p)
    assert v.is_pole
    assert v.pole_distance == pytest.approx(eps / 2.0, rel=1e-3)
    v2 = dozz(1.9, 1.8, 1.3 + 1e-4, p)
    assert not v2.is_pole
    assert v2.pole_distance == pytest.approx(5e-5, rel=1e-3)
    assert abs(v2.value) > 1e3   # close to the pole, so large


def test_lattice_pole_in_fusion_argument():
    # abar/2 - a1 = -gamma/2 with the other arguments off-lattice
    p = derive_params(1.0)
    v = dozz(2.0, 0.7, 0.3, p)
    assert v.is_pole


def test_zero_when_alpha_on_lattice():
    p = derive_params(1.0)
    v = dozz(-0.5, 1.9, 1.8, p)
    assert not v.is_pole
    assert v.value == 0.0


def test_spectrum_line_conjugation():
    # real structure: C(Q - ip) = conj(C(Q + ip))
    p = derive_params(1.0)
    for mom in (0.4, 1.7, 6.0):
        plus = dozz(p.Q + 1j * mom, 1.9, 1.8, p).value
        minus = dozz(p.Q - 1j * mom, 1.9, 1.8, p).value
        assert abs(plus - minus.conjugate()) <= 1e-10 * abs(plus)


def test_explicit_evaluator_matches_default():
    p = derive_params(1.8)
    ev = get_evaluator(1.8)
    a = dozz(1.9, 1.5, 0.9, p)
    b = dozz(1.9, 1.5, 0.9, p, evaluator=ev)
    assert a.value == b.value
