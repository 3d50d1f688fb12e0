"""Spectral assembly of the sphere four-point function.

Positions are parametrised by the s-channel cross-ratio z with |z| < 1:
the modelled insertion slots are (0, 2z, 2, infinity), for which the
block series argument is exactly z.  The reduced correlator is an
integral over the spectrum line alpha = Q + ip: each momentum contributes
the structure constants of the two pairings times the squared block
series.  This module builds the momentum quadrature, assembles the
integrand with its positional prefactors, certifies the cutoff tail, and
runs the crossing comparison between the two channel decompositions
(series in z against series in 1 - z).

Gluing constants (Weyl anomalies, disk normalisations) are never
evaluated; a value carries only the explicitly computable z-dependent
dressing, so every supported comparison is a ratio in which the opaque
constants cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import roots_legendre

from .blocks import BlockCoefficientCache, block, block_coefficients
from .errors import AccuracyError, DomainError
from .geometry import round_density
from .params import CFTParams, conformal_weight
from .special import UpsilonEvaluator, dozz, get_evaluator

__all__ = [
    "SpectralQuadrature", "BootstrapResult", "CrossingReport",
    "spectral_integrand", "four_point_bootstrap", "four_point_ratio",
    "crossing_check",
]


@dataclass(frozen=True)
class SpectralQuadrature:
    """Momentum grid, block truncation, and tail policy for the assembly.

    The half-line grid tiles [0, p_max] with Gauss-Legendre panels, so no
    node lands on p = 0 (where the integrand has a double zero) or on the
    cutoff.  `level` truncates every block series; `tail_rel_tol` is the
    largest certified-tail fraction a value may carry before the cutoff
    is declared too small.  `block_tail` selects how each node's series
    remainder is handled: "complete" folds the geometric extrapolation of
    the remainder into the value (the diagnostic then reports the
    extrapolation's sensitivity to its ratio estimate), "truncate" keeps
    the bare truncated sum (the diagnostic reports the estimated
    remainder itself).
    """

    p_max: float = 12.0
    panels: int = 6
    nodes_per_panel: int = 16
    level: int = 10
    tail_rel_tol: float = 1e-4
    block_tail: str = "complete"

    def __post_init__(self) -> None:
        if not self.p_max > 0.0:
            raise DomainError(f"p_max must be positive, got {self.p_max}")
        if self.panels < 1:
            raise DomainError(f"need at least one panel, got {self.panels}")
        if self.nodes_per_panel < 2:
            raise DomainError("need at least two nodes per panel")
        if self.level < 1:
            raise DomainError(f"block level must be >= 1, got {self.level}")
        if not self.tail_rel_tol > 0.0:
            raise DomainError("tail_rel_tol must be positive")
        if self.block_tail not in ("complete", "truncate"):
            raise DomainError(
                f"block_tail must be 'complete' or 'truncate', got "
                f"{self.block_tail!r}")

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Half-line nodes and weights; nodes in (0, p_max), weights > 0."""
        x, w = roots_legendre(self.nodes_per_panel)
        edges = np.linspace(0.0, self.p_max, self.panels + 1)
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            nodes.append(half * x + 0.5 * (hi + lo))
            weights.append(half * w)
        return np.concatenate(nodes), np.concatenate(weights)

    def doubled(self) -> "SpectralQuadrature":
        """Same policy with twice the nodes per panel (refinement checks)."""
        return replace(self, nodes_per_panel=2 * self.nodes_per_panel)


@dataclass(frozen=True)
class BootstrapResult:
    """Dressed spectral value plus the per-node ledger and diagnostics.

    value = metric_factor * (1/2pi) * sum_i w_i f(p_i); the integrand f
    carries all positional prefactors, so value omits only the opaque
    gluing constants (and equals the reduced correlator up to one such
    constant).  diagnostics records the residual imaginary part, the
    certified cutoff tail, the worst block-series tail, and the smallest
    distance of a structure-constant denominator from its zero lattice.
    """

    value: float
    z: complex
    alphas: tuple[float, float, float, float]
    level: int
    folded: bool
    p_nodes: tuple[float, ...]
    p_weights: tuple[float, ...]
    integrand: tuple[float, ...]
    metric_factor: float
    diagnostics: Mapping[str, float]


@dataclass(frozen=True)
class CrossingReport:
    """Two channel decompositions of one correlator, with their mismatch.

    `transport` is the explicit reflection factor mapping the direct value
    onto the crossed one; `discrepancy` is the relative gap between
    crossed.value and transport * direct.value.  Zero in exact arithmetic;
    finite truncation makes it a convergence diagnostic.
    """

    z: complex
    alphas: tuple[float, float, float, float]
    direct: BootstrapResult
    crossed: BootstrapResult
    transport: float
    discrepancy: float


def _check_weights(alphas: Sequence[float], params: CFTParams) -> tuple[float, ...]:
    if len(alphas) != 4:
        raise DomainError(f"need four weights, got {len(alphas)}")
    a = tuple(float(x) for x in alphas)
    for x in a:
        if x >= params.Q:
            raise DomainError(
                f"weight {x} is not below Q = {params.Q}; the spectral "
                "pairing needs subcritical insertions")
    if a[0] + a[1] <= params.Q:
        raise DomainError(
            f"pair sum alpha1 + alpha2 = {a[0] + a[1]} must exceed Q = {params.Q}")
    if a[2] + a[3] <= params.Q:
        raise DomainError(
            f"pair sum alpha3 + alpha4 = {a[2] + a[3]} must exceed Q = {params.Q}")
    return a


def _check_position(z: complex) -> complex:
    z = complex(z)
    if z == 0.0:
        raise DomainError("cross-ratio z must be nonzero")
    if abs(z) >= 1.0:
        raise DomainError(
            f"block series needs |z| < 1, got |z| = {abs(z):.4f}")
    if z.imag == 0.0 and z.real < 0.0:
        raise DomainError("negative real z sits on the power branch cut")
    return z


def _weights_to_deltas(a: tuple[float, ...], params: CFTParams) -> tuple[float, ...]:
    return tuple(conformal_weight(x, params.Q).real for x in a)


def _coefficient_table(ps: np.ndarray, deltas: tuple[complex, ...], level: int,
                       params: CFTParams,
                       cache: BlockCoefficientCache | None) -> list[tuple[complex, ...]]:
    out = []
    for p in ps:
        delta_p = conformal_weight(params.Q + 1j * float(p), params.Q)
        cs = cache.lookup(params.gamma, level, delta_p, deltas) if cache else None
        if cs is None:
            cs = block_coefficients(delta_p, deltas, level, params.c_L)
            if cache is not None:
                cache.store(params.gamma, level, delta_p, deltas, cs)
        out.append(cs)
    return out


def _geometric_completion(
        terms: np.ndarray) -> tuple[complex, float] | None:
    """Geometric extrapolation of a truncated series remainder.

    Models the terms past the last one as a geometric continuation with
    the last observed term ratio q: remainder = t_L q / (1 - q).  Returns
    (remainder, sensitivity) where the sensitivity is the shift in the
    remainder when the previous term ratio is used instead (the
    extrapolation's own error gauge), or None when no contracting ratio
    is observable.
    """
    if terms.size < 2 or terms[-2] == 0.0:
        return None
    q = terms[-1] / terms[-2]
    if not 0.0 < abs(q) < 1.0:
        return None
    remainder = terms[-1] * q / (1.0 - q)
    sensitivity = abs(remainder)
    if terms.size >= 3 and terms[-3] != 0.0:
        q_prev = terms[-2] / terms[-3]
        if 0.0 < abs(q_prev) < 1.0:
            sensitivity = abs(remainder - terms[-1] * q_prev / (1.0 - q_prev))
    return remainder, sensitivity


def _node_values(ps: np.ndarray, z: complex, a: tuple[float, ...],
                 level: int, params: CFTParams, evaluator: UpsilonEvaluator,
                 coeffs: list[tuple[complex, ...]],
                 complete: bool) -> tuple[np.ndarray, float, np.ndarray]:
    """Integrand values at the given momenta.

    Returns (complex values, min pole distance, per-node relative block
    tails).  The integrand is conj(C(Q+ip, a1, a2)) C(Q+ip, a3, a4)
    |F_p|^2 with |F_p|^2 = 4^{-sum Delta} |B_p(z)|^2 at cross-ratio z
    (slot position 2z): the positional 2-powers of the two fixed slots
    cancel the p-dependence exactly, leaving the canonical series at the
    cross-ratio.

    With `complete` the geometric extrapolation of each node's series
    remainder is folded into the value and the per-node tail reports the
    extrapolation's sensitivity; otherwise the tail reports the estimated
    remainder of the bare truncated sum.  A node whose series has not
    entered geometric decay gets relative tail 1 (its full contribution
    counts as uncertain); a node whose series underflows to zero gets 0.
    """
    deltas = _weights_to_deltas(a, params)
    four_scale = 4.0 ** (-sum(deltas))
    cd = tuple(complex(d) for d in deltas)
    aligned = (a[0], a[1]) == (a[2], a[3])
    vals = np.empty(len(ps), dtype=complex)
    block_rels = np.zeros(len(ps))
    min_pole = math.inf
    for i, p in enumerate(ps):
        arg = params.Q + 1j * float(p)
        left = dozz(arg, a[0], a[1], params, evaluator)
        right = left if aligned else dozz(arg, a[2], a[3], params, evaluator)
        assert not (left.is_pole or right.is_pole), \
            "structure constant pole on the spectrum line despite admissible weights"
        min_pole = min(min_pole, left.pole_distance, right.pole_distance)
        ev = block(float(p), cd, z, level, params, coefficients=coeffs[i])
        terms = np.asarray(coeffs[i], dtype=complex) * z ** np.arange(level + 1)
        series_sum = complex(np.sum(terms))
        series_abs = abs(series_sum)
        bval = ev.value
        rel = 0.0
        comp = _geometric_completion(terms) if complete else None
        if comp is not None and series_sum != 0.0:
            remainder, sensitivity = comp
            bval = ev.value * (1.0 + remainder / series_sum)
            total_abs = abs(series_sum + remainder)
            # |B|^2 doubles the relative series error to first order.
            rel = 2.0 * sensitivity / total_abs if total_abs > 0.0 else 1.0
        elif series_abs > 0.0:
            rel = (2.0 * ev.tail_estimate / series_abs
                   if math.isfinite(ev.tail_estimate) else 1.0)
        block_rels[i] = rel
        vals[i] = np.conj(left.value) * right.value * four_scale * abs(bval) ** 2
    return vals, min_pole, block_rels


def spectral_integrand(p: float, z: complex, alphas: Sequence[float],
                       quad: SpectralQuadrature, params: CFTParams,
                       evaluator: UpsilonEvaluator | None = None) -> float:
    """Single-momentum integrand with all positional prefactors applied.

    Real for real weights; the imaginary residue is a rounding artifact
    (tracked by four_point_bootstrap across the whole grid).
    """
    a = _check_weights(alphas, params)
    z = _check_position(z)
    evaluator = evaluator or get_evaluator(params.gamma)
    ps = np.array([float(p)])
    cd = tuple(complex(d) for d in _weights_to_deltas(a, params))
    coeffs = _coefficient_table(ps, cd, quad.level, params, None)
    vals, _, _ = _node_values(ps, z, a, quad.level, params, evaluator, coeffs,
                              quad.block_tail == "complete")
    return float(vals[0].real)


def _folded(a: tuple[float, ...]) -> bool:
    return sorted(a[:2]) == sorted(a[2:])


def four_point_bootstrap(z: complex, alphas: Sequence[float],
                         quad: SpectralQuadrature, params: CFTParams,
                         evaluator: UpsilonEvaluator | None = None,
                         coefficient_cache: BlockCoefficientCache | None = None,
                         anomaly_constant: float = 1.0) -> BootstrapResult:
    """Spectral value of the four-point function at cross-ratio z.

    The modelled insertion slots are (0, 2z, 2, infinity).  The momentum
    integral folds to (0, p_max] with a factor 2 when the two pairings
    carry the same weight multiset (even integrand); otherwise the grid
    is mirrored across zero and both signs are evaluated.  The value is
    dressed with the round-metric factor of the moving insertion,
    g(2z)^{-Delta_2}, and 1/2pi; all remaining constants are opaque and
    cancel in ratios.  Pass `anomaly_constant` to reinstate one explicitly.
    """
    a = _check_weights(alphas, params)
    z = _check_position(z)
    evaluator = evaluator or get_evaluator(params.gamma)
    deltas = _weights_to_deltas(a, params)
    nodes, weights = quad.grid()
    folded = _folded(a)
    if folded:
        ps = nodes
        ws = 2.0 * weights
    else:
        ps = np.concatenate([-nodes[::-1], nodes])
        ws = np.concatenate([weights[::-1], weights])
    cd = tuple(complex(d) for d in deltas)
    tail_ps = np.array([quad.p_max - 0.5, quad.p_max])
    coeffs = _coefficient_table(np.concatenate([ps, tail_ps]), cd, quad.level,
                                params, coefficient_cache)
    complete = quad.block_tail == "complete"
    vals, min_pole, block_rels = _node_values(
        ps, z, a, quad.level, params, evaluator, coeffs[:len(ps)], complete)
    tail_vals, _, _ = _node_values(
        tail_ps, z, a, quad.level, params, evaluator, coeffs[len(ps):], complete)

    raw = complex(np.dot(ws, vals))
    raw_real = raw.real
    imag_rel = abs(raw.imag) / abs(raw_real) if raw_real != 0.0 else math.inf

    # Cutoff tail: the block power decays like |z|^{p^2/2}, a
    # super-Gaussian envelope with rate kappa = log(1/|z|); p^2 - P^2 >=
    # 2P(p - P) bounds the remainder by f(P)/(kappa P).  The measured
    # decay over the last half-unit gives a second, geometric bound; the
    # larger of the two is kept so a slowly growing spectral density
    # cannot defeat the certificate.
    f_in, f_end = abs(tail_vals[0]), abs(tail_vals[1])
    kappa = math.log(1.0 / abs(z))
    if f_end == 0.0:
        tail_abs = 0.0
    elif f_end >= f_in:
        raise AccuracyError(
            f"integrand is not decaying at the cutoff p_max = {quad.p_max}; "
            "raise p_max")
    else:
        rate = math.log(f_in / f_end) / 0.5
        tail_abs = f_end * max(1.0 / (kappa * quad.p_max), 1.0 / rate)
    tail_total = 2.0 * tail_abs
    denom = abs(raw_real)
    tail_rel = tail_total / denom if denom > 0.0 else (
        0.0 if tail_total == 0.0 else math.inf)
    if tail_rel > quad.tail_rel_tol:
        suggested = math.sqrt(
            quad.p_max ** 2
            + max(0.0, (2.0 / kappa) * math.log(tail_rel / quad.tail_rel_tol)))
        raise AccuracyError(
            f"certified spectrum tail {tail_rel:.2e} exceeds tolerance "
            f"{quad.tail_rel_tol:.2e}; suggest p_max >= {suggested:.1f}")

    block_tail_rel = (
        float(np.dot(np.abs(ws), np.abs(vals) * block_rels)) / denom
        if denom > 0.0 else 0.0)

    metric = round_density(2.0 * z) ** (-deltas[1])
    value = raw_real / (2.0 * math.pi) * metric * anomaly_constant
    diagnostics = {
        "imag_rel": imag_rel,
        "tail_rel": tail_rel,
        "min_pole_distance": min_pole,
        "block_tail_rel": block_tail_rel,
        "raw_integral": raw_real,
    }
    return BootstrapResult(
        value=value, z=z, alphas=a, level=quad.level, folded=folded,
        p_nodes=tuple(float(p) for p in ps),
        p_weights=tuple(float(w) for w in ws),
        integrand=tuple(float(v.real) for v in vals),
        metric_factor=metric, diagnostics=diagnostics)


def four_point_ratio(z_a: complex, z_b: complex, alphas: Sequence[float],
                     quad: SpectralQuadrature, params: CFTParams,
                     evaluator: UpsilonEvaluator | None = None,
                     coefficient_cache: BlockCoefficientCache | None = None) -> float:
    """Ratio of dressed values at two positions; opaque constants cancel."""
    ra = four_point_bootstrap(z_a, alphas, quad, params, evaluator,
                              coefficient_cache)
    rb = four_point_bootstrap(z_b, alphas, quad, params, evaluator,
                              coefficient_cache)
    return ra.value / rb.value


def _crossing_transport(z: complex, deltas: tuple[float, ...]) -> float:
    """Explicit factor relating the dressed values of the two channels.

    The raw spectral integrals of the two decompositions agree exactly
    (the slot reflection u -> 2 - u sends the cross-ratio z to 1 - z, an
    isometry move in the underlying flat picture; the weight-order
    constants it shuffles are opaque and drop out).  What remains is the
    ratio of the explicit round-metric dressings at the two slot
    positions of the moving insertion, 2z and 2 - 2z.
    """
    d2 = deltas[1]
    return (round_density(2.0 - 2.0 * z) / round_density(2.0 * z)) ** (-d2)


def crossing_check(z: complex, alphas: Sequence[float],
                   quad: SpectralQuadrature, params: CFTParams,
                   evaluator: UpsilonEvaluator | None = None,
                   coefficient_cache: BlockCoefficientCache | None = None) -> CrossingReport:
    """Compare the two channel decompositions of one correlator.

    The direct side pairs (alpha1, alpha2) by separating slots {0, 2z}
    from {2, inf}.  The only other pairing separable by a circle when the
    moving slot lies between the fixed ones is (alpha2, alpha3): the slot
    reflection u -> 2 - u carries it onto the standard form as the
    configuration (alpha3, alpha2, alpha1, alpha4) at cross-ratio 1 - z.
    The transported value must match the direct one times the explicit
    reflection factor; the report's discrepancy measures the truncation
    error of both sides.
    """
    a = _check_weights(alphas, params)
    crossed_alphas = (a[2], a[1], a[0], a[3])
    _check_weights(crossed_alphas, params)
    z = _check_position(z)
    _check_position(1.0 - z)
    direct = four_point_bootstrap(z, a, quad, params, evaluator,
                                  coefficient_cache)
    crossed = four_point_bootstrap(1.0 - z, crossed_alphas, quad, params,
                                   evaluator, coefficient_cache)
    deltas = _weights_to_deltas(a, params)
    transport = _crossing_transport(z, deltas)
    predicted = transport * direct.value
    gap = abs(crossed.value - predicted)
    scale = max(abs(crossed.value), abs(predicted))
    discrepancy = gap / scale if scale > 0.0 else 0.0
    return CrossingReport(z=z, alphas=a, direct=direct, crossed=crossed,
                          transport=transport, discrepancy=discrepancy)
