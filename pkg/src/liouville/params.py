"""Coupling data and insertion bookkeeping for Liouville theory on the sphere.

The theory is parametrized by the coupling gamma in (0, 2), the cosmological
constant mu > 0, and the derived quantities

    Q   = 2/gamma + gamma/2,
    c_L = 1 + 6 Q^2,
    Delta_alpha = (alpha/2) (Q - alpha/2).

A correlator insertion set carries points on the Riemann sphere together with
vertex weights alpha_j.  The point at infinity is allowed and flagged by the
value INFINITY_POINT.  Existence of the correlator requires the two Seiberg
bounds: sum_j alpha_j > 2 Q (on the sphere, Euler characteristic 2) and
alpha_j < Q for every j.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

from .errors import DomainError

# Flagged representation of the point at infinity on the Riemann sphere.
INFINITY_POINT = complex(math.inf, 0.0)

SPHERE_EULER_CHARACTERISTIC = 2


def is_infinity(z: complex) -> bool:
    """True if z is the flagged point at infinity."""
    return cmath.isinf(z)


@dataclass(frozen=True)
class CFTParams:
    """Immutable coupling data; derived fields are filled by derive_params."""

    gamma: float
    mu: float
    Q: float
    c_L: float

    def conformal_weight(self, alpha: complex) -> complex:
        """Delta_alpha = (alpha/2)(Q - alpha/2); accepts complex alpha."""
        return conformal_weight(alpha, self.Q)


def derive_params(gamma: float, mu: float = 1.0) -> CFTParams:
    """Build CFTParams from (gamma, mu), validating the domain.

    gamma must lie in the open interval (0, 2); mu must be positive.
    """
    if not (0.0 < gamma < 2.0):
        raise DomainError(f"gamma must lie in (0, 2), got {gamma}")
    if not mu > 0.0:
        raise DomainError(f"mu must be positive, got {mu}")
    Q = 2.0 / gamma + gamma / 2.0
    c_L = 1.0 + 6.0 * Q * Q
    return CFTParams(gamma=gamma, mu=mu, Q=Q, c_L=c_L)


def conformal_weight(alpha: complex, Q: float) -> complex:
    """Weight of the vertex operator V_alpha.

    Real alpha gives a real weight; the spectrum line alpha = Q + i p gives
    Delta = Q^2/4 + p^2/4.  Invariant under alpha -> 2Q - alpha.
    """
    a = complex(alpha)
    w = (a / 2.0) * (Q - a / 2.0)
    if w.imag == 0.0:
        return complex(w.real, 0.0)
    return w


@dataclass(frozen=True)
class SeibergReport:
    """Outcome of the Seiberg-bound check for a weight tuple."""

    satisfied: bool
    s: float                     # sum(alpha) - chi * Q, the mass-scaling exponent
    violations: tuple[str, ...] = field(default_factory=tuple)


def check_seiberg(alphas: tuple[float, ...] | list[float], params: CFTParams,
                  chi: int = SPHERE_EULER_CHARACTERISTIC) -> SeibergReport:
    """Check sum(alpha) > chi*Q and alpha_j < Q; report s = sum(alpha) - chi*Q."""
    alphas = tuple(float(a) for a in alphas)
    violations: list[str] = []
    s = sum(alphas) - chi * params.Q
    if s <= 0.0:
        violations.append(
            f"sum(alpha) = {sum(alphas):.6g} must exceed chi*Q = {chi * params.Q:.6g}")
    for j, a in enumerate(alphas):
        if a >= params.Q:
            violations.append(f"alpha[{j}] = {a:.6g} must be below Q = {params.Q:.6g}")
    return SeibergReport(satisfied=not violations, s=s, violations=tuple(violations))


@dataclass(frozen=True)
class InsertionSet:
    """Vertex insertions: distinct sphere points with weights.

    points use stereographic coordinates; INFINITY_POINT flags the north pole.
    conformal_weights are derived, not caller-supplied.
    """

    points: tuple[complex, ...]
    alphas: tuple[float, ...]
    conformal_weights: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.points)


def make_insertions(points, alphas, params: CFTParams) -> InsertionSet:
    """Validate and build an InsertionSet.

    Points must be pairwise distinct (at most one at infinity); the number of
    points must match the number of weights and be at least 3 for a sphere
    correlator to stand a chance against the Seiberg bounds.
    """
    pts = tuple(complex(p) for p in points)
    als = tuple(float(a) for a in alphas)
    if len(pts) != len(als):
        raise DomainError(f"{len(pts)} points but {len(als)} weights")
    if len(pts) < 3:
        raise DomainError("a sphere correlator needs at least 3 insertions")
    n_inf = sum(1 for p in pts if is_infinity(p))
    if n_inf > 1:
        raise DomainError("at most one insertion may sit at infinity")
    finite = [p for p in pts if not is_infinity(p)]
    for i in range(len(finite)):
        for j in range(i + 1, len(finite)):
            if finite[i] == finite[j]:
                raise DomainError(f"insertion points must be distinct, got {finite[i]} twice")
    weights = tuple(conformal_weight(a, params.Q).real for a in als)
    return InsertionSet(points=pts, alphas=als, conformal_weights=weights)
