"""Sphere correlation functions by the exact probabilistic representation.

An n-point function with vertex weights alpha_j at points x_j on the round
unit sphere is estimated as

    prefactor(x, alpha) * mu^{-s} * Gamma(s) * E[ Z^{-s/gamma} ],

where s = sum(alpha) - 2 Q and Z is the chaos mass of the sphere weighted
by the insertion kernel exp(gamma sum_j alpha_j C(x_j, .)).  The covariance
is C(x, y) = ln(1/chordal(x, y)) + ln 2 - 1/2, whose spherical mean in each
argument vanishes; its constant part ln 2 - 1/2 is the (2 pi times) Robin
mass of the round sphere, which also enters the prefactor diagonal.

The determinant of the Laplacian (zero mode removed) enters only as the
global constant (det' / V)^{-1/2}; it cancels in every ratio this package
actually tests.  Its value on the unit round sphere is derived once from
the spectral zeta function sum_{l>=1} (2l+1) (l(l+1))^{-s}, whose
s-derivative at 0 continues to 4 zeta'(-1) - 1/2, giving
det' = exp(1/2 - 4 zeta'(-1)).

Monte Carlo plumbing: field samples come from gff's per-sample streams, so
estimates are reproducible from (job, seed); reductions are single-threaded
sums in sample-index order.  Common-random-number ratios reuse one set of
field samples for both insertion configurations and propagate the joint
fluctuations through the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import loggamma

from .errors import DomainError
from .geometry import chordal_distance, stereo_to_unit
from .gff import (
    FieldSample,
    MCEstimate,
    SphereFieldSpec,
    cell_base_measure,
    chaos_measure,
    iter_field_batches,
    robin_constant,
    truncated_variance,
)
from .params import CFTParams, InsertionSet, check_seiberg
from .sphharm import sphere_grid

# zeta'(-1) = 1/12 - ln(glaisher); the Laplacian determinant below is
# exp(1/2 - 4 zeta'(-1)), rederivable from the spectral zeta function.
ZETA_PRIME_MINUS_ONE = -0.16542114370045093
DET_PRIME_SPHERE = math.exp(0.5 - 4.0 * ZETA_PRIME_MINUS_ONE)

SPHERE_VOLUME = 4.0 * math.pi

# C(x, x') = ln(1/chordal) + ln 2 - 1/2; the additive constant equals the
# constant Robin mass term of the round sphere.
COVARIANCE_CONSTANT = math.log(2.0) - 0.5


def sphere_covariance(x: complex, y: complex) -> float:
    """Covariance C(x, y) = ln(1/chordal(x, y)) + ln 2 - 1/2; x != y required."""
    d = chordal_distance(complex(x), complex(y))
    if d == 0.0:
        raise DomainError(f"covariance diverges at coincident points, got {x} twice")
    return -math.log(d) + COVARIANCE_CONSTANT


@lru_cache(maxsize=4)
def _cell_unit_vectors(n_lat: int, n_lon: int) -> np.ndarray:
    """Unit vectors of the cell centroids, shape (n_lat, n_lon, 3)."""
    grid = sphere_grid(n_lat, n_lon)
    sin_t = np.sqrt(1.0 - grid.x ** 2)
    out = np.empty((n_lat, n_lon, 3))
    out[:, :, 0] = np.outer(sin_t, np.cos(grid.phi))
    out[:, :, 1] = np.outer(sin_t, np.sin(grid.phi))
    out[:, :, 2] = grid.x[:, None]
    out.setflags(write=False)
    return out


def _covariance_to_cells(point: complex, spec: SphereFieldSpec) -> np.ndarray:
    """C(point, cell centroid) for every grid cell, shape (n_lat, n_lon)."""
    u = stereo_to_unit(point)
    cells = _cell_unit_vectors(spec.n_lat, spec.n_lon)
    # chordal^2 = 2 - 2 cos(angle); centroids never coincide with insertion
    # points thanks to the irrational longitude offset of the grid
    d2 = np.clip(2.0 - 2.0 * (cells @ u), 0.0, None)
    return -0.5 * np.log(d2) + COVARIANCE_CONSTANT


def _require_alphas_below_q(insertions: InsertionSet, params: CFTParams) -> None:
    for j, a in enumerate(insertions.alphas):
        if a >= params.Q:
            raise DomainError(
                f"alpha[{j}] = {a:.6g} must be below Q = {params.Q:.6g} for the "
                "insertion singularity to be integrable")


def _insertion_kernel(insertions: InsertionSet, params: CFTParams,
                      spec: SphereFieldSpec) -> np.ndarray:
    """exp(gamma sum_j alpha_j C(x_j, cell)) over the grid."""
    expo = np.zeros((spec.n_lat, spec.n_lon))
    for point, alpha in zip(insertions.points, insertions.alphas):
        if alpha != 0.0:
            expo += alpha * _covariance_to_cells(point, spec)
    return np.exp(params.gamma * expo)


def z_random_mass(sample: FieldSample, insertions: InsertionSet,
                  params: CFTParams) -> float:
    """Insertion-weighted chaos mass Z of one field sample.

    Z = sum over cells of exp(gamma sum_j alpha_j C(x_j, cell)) times the
    renormalized chaos cell mass at gamma = params.gamma.
    """
    spec = sample.spec
    if not isinstance(spec, SphereFieldSpec):
        raise DomainError("z_random_mass needs a sphere field sample")
    _require_alphas_below_q(insertions, params)
    kernel = _insertion_kernel(insertions, params, spec)
    masses = chaos_measure(sample, params.gamma).cell_masses
    return float((kernel * masses).sum())


@dataclass(frozen=True)
class CorrelatorJob:
    """A fully specified correlator estimation run.

    The job seed is authoritative: the embedded field spec is normalized to
    carry it, so (job, seed) determines every draw.  Construction fails if
    the Seiberg bounds do not hold; the mass-scaling exponent s > 0 is
    recorded.
    """

    insertions: InsertionSet
    params: CFTParams
    field_spec: SphereFieldSpec
    n_samples: int
    seed: int
    s: float = 0.0

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise DomainError(f"n_samples must be >= 1, got {self.n_samples}")
        report = check_seiberg(self.insertions.alphas, self.params)
        if not report.satisfied:
            raise DomainError("Seiberg bounds fail: " + "; ".join(report.violations))
        object.__setattr__(self, "s", report.s)
        object.__setattr__(self, "field_spec", replace(self.field_spec, seed=self.seed))


def _z_weight_vector(insertions: InsertionSet, params: CFTParams,
                     spec: SphereFieldSpec) -> np.ndarray:
    """Flat per-cell weights W with Z = const * exp(gamma X) @ W per sample."""
    kernel = _insertion_kernel(insertions, params, spec)
    return (kernel * cell_base_measure(spec)).ravel()


def z_samples_common(field_spec: SphereFieldSpec, params: CFTParams,
                     insertion_sets: list[InsertionSet], n_samples: int,
                     start_index: int = 0) -> list[np.ndarray]:
    """Z realizations for several insertion sets over one shared set of fields.

    Sharing the fields (common random numbers) makes ratios of the returned
    arrays far less noisy than independent runs; each output array has shape
    (n_samples,).
    """
    gamma = params.gamma
    for ins in insertion_sets:
        _require_alphas_below_q(ins, params)
    weights = [_z_weight_vector(ins, params, field_spec) for ins in insertion_sets]
    const = math.exp(0.5 * gamma * gamma
                     * (robin_constant(field_spec) - truncated_variance(field_spec)))
    outs = [np.empty(n_samples) for _ in insertion_sets]
    for indices, values in iter_field_batches(field_spec, n_samples, start_index):
        boltz = np.exp(gamma * values.reshape(len(indices), -1))
        lo = indices[0] - start_index
        hi = lo + len(indices)
        for out, w in zip(outs, weights):
            out[lo:hi] = const * (boltz @ w)
    return outs


def z_samples(job: CorrelatorJob, start_index: int = 0) -> np.ndarray:
    """Z realizations for the job's insertion set, shape (n_samples,)."""
    return z_samples_common(job.field_spec, job.params, [job.insertions],
                            job.n_samples, start_index)[0]


def _log_prefactor(job: CorrelatorJob) -> float:
    """ln of C(x, alpha): determinant factor and Gaussian insertion dressing."""
    alphas = job.insertions.alphas
    points = job.insertions.points
    log_c = -0.5 * math.log(DET_PRIME_SPHERE / SPHERE_VOLUME)
    log_c += sum(0.5 * a * a * COVARIANCE_CONSTANT for a in alphas)
    for i in range(len(alphas)):
        for j in range(i + 1, len(alphas)):
            log_c += alphas[i] * alphas[j] * sphere_covariance(points[i], points[j])
    return log_c


def _estimate_from_moments(y: np.ndarray, log_scale: float, seed: int) -> MCEstimate:
    n = y.size
    scale = math.exp(log_scale)
    mean = float(y.mean())
    stderr = float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    denom = float(np.sum(y * y))
    ess = float(y.sum()) ** 2 / denom if denom > 0.0 else 0.0
    return MCEstimate(mean=scale * mean, stderr=scale * stderr,
                      n_samples=n, seed=seed, ess=ess)


def correlator_mc(job: CorrelatorJob) -> MCEstimate:
    """Estimate the correlator prefactor * mu^{-s} Gamma(s) E[Z^{-s/gamma}]."""
    y = z_samples(job) ** (-job.s / job.params.gamma)
    log_scale = (_log_prefactor(job) - job.s * math.log(job.params.mu)
                 + float(loggamma(job.s)))
    return _estimate_from_moments(y, log_scale, job.seed)


def negative_moment_mc(job: CorrelatorJob, exponent: float) -> MCEstimate:
    """Estimate E[Z^exponent] for exponent <= 0 (always finite for chaos masses)."""
    if exponent > 0.0:
        raise DomainError(f"exponent must be <= 0, got {exponent}")
    if exponent == 0.0:
        return MCEstimate(mean=1.0, stderr=0.0, n_samples=job.n_samples,
                          seed=job.seed, ess=float(job.n_samples))
    y = z_samples(job) ** exponent
    return _estimate_from_moments(y, 0.0, job.seed)


def correlator_ratio_mc(job_a: CorrelatorJob, job_b: CorrelatorJob) -> MCEstimate:
    """Ratio correlator(job_a) / correlator(job_b) with common random numbers.

    Both jobs must share the field spec, seed and sample count.  The two Z
    estimators are evaluated on the same field samples and the standard
    error of the ratio of means follows from the delta method with their
    empirical covariance; all constants that do not depend on the insertion
    weights (the determinant factor in particular) cancel exactly.
    """
    if job_a.field_spec != job_b.field_spec or job_a.n_samples != job_b.n_samples:
        raise DomainError("ratio estimation requires identical field specs, "
                          "seeds and sample counts")
    za, zb = z_samples_common(job_a.field_spec, job_a.params,
                              [job_a.insertions, job_b.insertions], job_a.n_samples)
    ya = za ** (-job_a.s / job_a.params.gamma)
    yb = zb ** (-job_b.s / job_b.params.gamma)
    n = job_a.n_samples
    ma, mb = float(ya.mean()), float(yb.mean())
    ratio = ma / mb
    cov = np.cov(np.stack([ya, yb]), ddof=1) if n > 1 else np.zeros((2, 2))
    rel_var = (cov[0, 0] / ma ** 2 + cov[1, 1] / mb ** 2
               - 2.0 * cov[0, 1] / (ma * mb)) / n
    stderr = abs(ratio) * math.sqrt(max(rel_var, 0.0))
    log_scale = (_log_prefactor(job_a) - _log_prefactor(job_b)
                 - (job_a.s - job_b.s) * math.log(job_a.params.mu)
                 + float(loggamma(job_a.s)) - float(loggamma(job_b.s)))
    scale = math.exp(log_scale)
    ess = float(yb.sum()) ** 2 / float(np.sum(yb * yb))
    return MCEstimate(mean=scale * ratio, stderr=scale * stderr,
                      n_samples=n, seed=job_a.seed, ess=ess)


__all__ = [
    "ZETA_PRIME_MINUS_ONE", "DET_PRIME_SPHERE", "SPHERE_VOLUME",
    "COVARIANCE_CONSTANT", "sphere_covariance", "z_random_mass",
    "CorrelatorJob", "MCEstimate", "z_samples", "z_samples_common",
    "correlator_mc", "negative_moment_mc", "correlator_ratio_mc",
]
