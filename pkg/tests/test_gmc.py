"""Chaos measures and moments against frozen quadrature oracles (gamma = 1/2)."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from liouville.errors import DomainError
from liouville.gff import (
    SPHERE_ROBIN_CONSTANT,
    CircleFieldSpec,
    SphereFieldSpec,
    chaos_measure,
    chaos_moment,
    iter_field_batches,
    sample_circle_field,
    sample_sphere_field,
    total_mass_samples,
    truncated_variance,
)
from liouville.sphharm import sphere_grid

ORACLE = json.loads((Path(__file__).parent / "data" / "gmc_oracle.json").read_text())
M2 = float(ORACLE["m2"])
M3 = float(ORACLE["m3"])


def test_gamma_zero_circle_masses_equal_base_exactly():
    spec = CircleFieldSpec(n_modes=8, seed=1)
    cm = chaos_measure(sample_circle_field(spec), 0.0)
    assert np.array_equal(cm.cell_masses, np.full(spec.n_grid, 1.0 / spec.n_grid))
    assert cm.total_mass == 1.0


def test_gamma_zero_sphere_masses_equal_areas_exactly():
    spec = SphereFieldSpec(l_max=6, seed=1)
    cm = chaos_measure(sample_sphere_field(spec), 0.0)
    assert np.array_equal(cm.cell_masses, sphere_grid(spec.n_lat, spec.n_lon).areas)
    assert cm.total_mass == pytest.approx(4.0 * math.pi, abs=1e-12)


def test_gamma_out_of_range_rejected():
    sample = sample_circle_field(CircleFieldSpec(n_modes=4, seed=0))
    for gamma in (-0.1, 2.0, 2.5):
        with pytest.raises(DomainError):
            chaos_measure(sample, gamma)


def test_masses_nonnegative_and_total_is_sum():
    for gamma in (0.3, 1.0, 1.7):
        for i in range(3):
            cm = chaos_measure(sample_circle_field(CircleFieldSpec(n_modes=16, seed=9), i), gamma)
            assert np.all(cm.cell_masses >= 0.0)
            assert cm.total_mass == float(cm.cell_masses.sum())


def test_renormalization_record():
    circle = chaos_measure(sample_circle_field(CircleFieldSpec(n_modes=8, seed=2)), 0.7)
    assert circle.renormalization.c_robin == 0.0
    assert circle.renormalization.sigma2_trunc == pytest.approx(
        truncated_variance(CircleFieldSpec(n_modes=8, seed=2)))
    sphere = chaos_measure(sample_sphere_field(SphereFieldSpec(l_max=4, seed=2)), 0.7)
    assert sphere.renormalization.c_robin == SPHERE_ROBIN_CONSTANT


def test_circle_mean_mass_is_one():
    est = chaos_moment(CircleFieldSpec(n_modes=64, seed=31), 0.5, 1, 10000)
    assert abs(est.mean - 1.0) < 3.0 * est.stderr
    assert est.n_samples == 10000
    assert est.seed == 31


def test_circle_second_moment_matches_quadrature_oracle():
    est = chaos_moment(CircleFieldSpec(n_modes=256, seed=2024), 0.5, 2, 20000)
    assert abs(est.mean - M2) < 3.0 * est.stderr


def test_circle_third_moment_matches_quadrature_oracle():
    est = chaos_moment(CircleFieldSpec(n_modes=256, seed=2024), 0.5, 3, 20000)
    assert abs(est.mean - M3) < 3.0 * est.stderr


def test_moment_q_zero_is_exactly_one():
    est = chaos_moment(CircleFieldSpec(n_modes=4, seed=0), 0.5, 0, 50)
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert est.ess == 50.0


def test_moment_blowup_rejected():
    spec = CircleFieldSpec(n_modes=4, seed=0)
    for q in (8, 8.5, 100):
        with pytest.raises(DomainError, match="blowup"):
            chaos_moment(spec, 0.5, q, 10)
    # just below the threshold is admissible
    chaos_moment(spec, 0.5, 7.99, 10)


def test_negative_moments_allowed():
    spec = CircleFieldSpec(n_modes=32, seed=8)
    for q in (-0.5, -3.0):
        est = chaos_moment(spec, 0.8, q, 500)
        assert est.mean > 0.0
        assert est.stderr >= 0.0
        assert 0.0 < est.ess <= 500.0


def test_moments_at_gamma_zero_are_exact():
    est = chaos_moment(CircleFieldSpec(n_modes=8, seed=0), 0.0, 1, 100)
    assert est.mean == 1.0
    assert est.stderr == 0.0


def test_truncation_stability_of_second_moment():
    # the martingale approximation converges: doubling the cutoff moves the
    # estimate by less than the combined spread
    for gamma, n in ((0.5, 10000), (0.9, 10000)):
        coarse = chaos_moment(CircleFieldSpec(n_modes=128, seed=1001), gamma, 2, n)
        fine = chaos_moment(CircleFieldSpec(n_modes=512, seed=1002), gamma, 2, n)
        combined = math.hypot(coarse.stderr, fine.stderr)
        assert abs(coarse.mean - fine.mean) < 3.0 * combined


def test_sphere_mean_mass():
    gamma = 0.5
    masses = total_mass_samples(SphereFieldSpec(l_max=8, seed=3), gamma, 4000)
    target = 4.0 * math.pi * math.exp(0.5 * gamma * gamma * SPHERE_ROBIN_CONSTANT)
    se = masses.std(ddof=1) / math.sqrt(masses.size)
    assert abs(masses.mean() - target) < 3.0 * se


def test_wick_mean_one_at_sphere_grid_point():
    spec = SphereFieldSpec(l_max=6, seed=17)
    gamma = 0.6
    var = truncated_variance(spec)
    w = [np.exp(gamma * v[:, 2, 5] - 0.5 * gamma * gamma * var)
         for _, v in iter_field_batches(spec, 10000)]
    w = np.concatenate(w)
    se = w.std(ddof=1) / math.sqrt(w.size)
    assert abs(w.mean() - 1.0) < 3.0 * se


def test_moment_estimate_reproducible():
    spec = CircleFieldSpec(n_modes=32, seed=5)
    a = chaos_moment(spec, 0.5, 2, 200)
    b = chaos_moment(spec, 0.5, 2, 200)
    assert a == b
