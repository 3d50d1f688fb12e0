"""Sphere field sampler: grid exactness, harmonics, covariance, synthesis."""

import math

import numpy as np
import pytest
from scipy.special import eval_legendre

from liouville.errors import ConfigError
from liouville.gff import (
    SphereFieldSpec,
    iter_field_batches,
    sample_sphere_field,
    truncated_variance,
)
from liouville.sphharm import (
    legendre_table,
    sigma2_truncated,
    sphere_grid,
    synthesize,
    synthesize_direct,
    truncated_covariance,
)


def test_grid_areas_sum_to_sphere_area():
    grid = sphere_grid(9, 17)
    assert grid.areas.sum() == pytest.approx(4.0 * math.pi, abs=1e-12)
    assert np.all(grid.areas > 0.0)
    assert np.all(np.abs(grid.x) < 1.0)   # no node at a pole


def test_under_resolved_grids_rejected():
    with pytest.raises(ConfigError):
        SphereFieldSpec(l_max=8, seed=0, n_lon=16)
    with pytest.raises(ConfigError):
        SphereFieldSpec(l_max=8, seed=0, n_lat=8)
    with pytest.raises(ConfigError):
        SphereFieldSpec(l_max=0, seed=0)


def _harmonic(tab, grid, l, m, kind):
    q = tab[m][l - m]
    if m == 0:
        return np.outer(q, np.ones(grid.n_lon))
    trig = np.cos(m * grid.phi) if kind == "c" else np.sin(m * grid.phi)
    return math.sqrt(2.0) * np.outer(q, trig)


def test_harmonics_orthonormal_under_grid_quadrature():
    # products of degree <= 10 harmonics are polynomials of degree <= 20 in
    # cos(theta), integrated exactly by the 11-node Gauss-Legendre rule
    grid = sphere_grid(11, 23)
    tab = legendre_table(10, grid.x)
    picks = [(0, 0, "c"), (1, 1, "s"), (3, 0, "c"), (3, 2, "c"),
             (5, 5, "s"), (7, 1, "s"), (10, 4, "c"), (10, 4, "s")]
    ys = [_harmonic(tab, grid, *p) for p in picks]
    for i, yi in enumerate(ys):
        for j, yj in enumerate(ys):
            val = float((yi * yj * grid.areas).sum())
            assert val == pytest.approx(1.0 if i == j else 0.0, abs=1e-12)


def test_harmonic_pair_sums_reduce_to_legendre():
    # sum over orders of Y_lm(p) Y_lm(p') depends only on the angle between
    # p and p'; the reduction constant is (2l+1)/(4 pi)
    t1, p1 = 0.3, 1.1
    t2, p2 = 2.0, 0.4
    tab = legendre_table(20, np.array([math.cos(t1), math.cos(t2)]))
    cosd = math.sin(t1) * math.sin(t2) * math.cos(p1 - p2) + math.cos(t1) * math.cos(t2)
    for l in (1, 5, 20):
        total = tab[0][l][0] * tab[0][l][1]
        for m in range(1, l + 1):
            q = tab[m][l - m]
            total += 2.0 * q[0] * q[1] * (math.cos(m * p1) * math.cos(m * p2)
                                          + math.sin(m * p1) * math.sin(m * p2))
        expected = (2 * l + 1) / (4.0 * math.pi) * eval_legendre(l, cosd)
        assert total == pytest.approx(expected, abs=1e-12)


def test_synthesis_equals_direct_mode_sum():
    rng = np.random.default_rng(1)
    for l_max, n_lat, n_lon in ((16, 17, 33), (48, 49, 97), (16, 20, 40)):
        grid = sphere_grid(n_lat, n_lon)
        tab = legendre_table(l_max, grid.x)
        cc = [rng.standard_normal((2, l_max - m + 1)) for m in range(l_max + 1)]
        ss = [rng.standard_normal((2, l_max - m + 1)) for m in range(l_max + 1)]
        fast = synthesize(cc, ss, tab, grid)
        slow = synthesize_direct(cc, ss, tab, grid)
        assert np.max(np.abs(fast - slow)) < 1e-10


def test_variance_attached_analytically():
    spec = SphereFieldSpec(l_max=12, seed=0)
    sample = sample_sphere_field(spec)
    assert sample.values.shape == (13, 25)
    assert sample.variance.shape == (13, 25)
    assert np.all(sample.variance == sigma2_truncated(12))
    assert truncated_variance(spec) == sigma2_truncated(12)


def test_seed_determinism_and_batch_consistency():
    spec = SphereFieldSpec(l_max=6, seed=7)
    a = sample_sphere_field(spec, 3)
    b = sample_sphere_field(spec, 3)
    assert np.array_equal(a.values, b.values)
    got = {}
    for indices, vals in iter_field_batches(spec, 5, start_index=2):
        for k, i in enumerate(indices):
            got[i] = vals[k]
    for i in range(2, 7):
        # batched synthesis reassociates the matrix products, so agreement
        # is to rounding, not bit-for-bit
        assert np.allclose(got[i], sample_sphere_field(spec, i).values, rtol=0, atol=1e-12)


def test_sampled_field_mean_zero():
    spec = SphereFieldSpec(l_max=8, seed=13)
    vals = [v[:, 4, 7] for _, v in iter_field_batches(spec, 10000)]
    vals = np.concatenate(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean()) < 3.0 * se


def test_antipodal_pairs_agree():
    # even n_lon puts antipodes on the grid: (i, j) -> (n_lat-1-i, j + n_lon/2)
    spec = SphereFieldSpec(l_max=8, seed=21, n_lat=9, n_lon=18)
    pairs = [((1, 2), (7, 11)), ((3, 5), (5, 14))]
    prods = {pair: [] for pair in pairs}
    for _, vals in iter_field_batches(spec, 10000):
        for (ia, ja), (ib, jb) in pairs:
            prods[((ia, ja), (ib, jb))].append(vals[:, ia, ja] * vals[:, ib, jb])
    target = float(truncated_covariance(8, -1.0))
    stats = []
    for pair in pairs:
        y = np.concatenate(prods[pair])
        se = y.std(ddof=1) / math.sqrt(y.size)
        stats.append((y.mean(), se))
        assert abs(y.mean() - target) < 3.0 * se
    diff_se = math.hypot(stats[0][1], stats[1][1])
    assert abs(stats[0][0] - stats[1][0]) < 3.0 * diff_se


def test_empirical_covariance_matches_truncated_series():
    spec = SphereFieldSpec(l_max=8, seed=3)
    grid = sphere_grid(spec.n_lat, spec.n_lon)
    ia, ja, ib, jb = 2, 3, 6, 11
    xa, xb = grid.x[ia], grid.x[ib]
    cosd = (math.sqrt(1 - xa * xa) * math.sqrt(1 - xb * xb)
            * math.cos(grid.phi[ja] - grid.phi[jb]) + xa * xb)
    prods = [v[:, ia, ja] * v[:, ib, jb] for _, v in iter_field_batches(spec, 20000)]
    prods = np.concatenate(prods)
    target = float(truncated_covariance(8, cosd))
    se = prods.std(ddof=1) / math.sqrt(prods.size)
    assert abs(prods.mean() - target) < 3.0 * se


def test_covariance_series_tends_to_chordal_log():
    # the additive constant of the short-distance expansion is ln 2 - 1/2
    for theta in (0.5, 1.0, 2.0, 3.0):
        chordal = 2.0 * math.sin(theta / 2.0)
        limit = math.log(1.0 / chordal) + math.log(2.0) - 0.5
        series = float(truncated_covariance(2048, math.cos(theta)))
        assert abs(series - limit) < 1e-4
