"""Upsilon special function, structure constants, and fixed-point correlators.

The double-gamma-type function Upsilon_{gamma/2} is defined on the strip
0 < Re z < Q by the integral representation

    log Upsilon(z) = int_0^inf [ (Q/2 - z)^2 e^{-t}
                     - sinh^2((Q/2 - z) t / 2) / (sinh(t gamma/4) sinh(t/gamma)) ] dt/t

and extended to the whole plane by the shift equations

    Upsilon(z + gamma/2) = l(z gamma/2) (gamma/2)^{1 - z gamma} Upsilon(z)
    Upsilon(z + 2/gamma) = l(2 z/gamma) (gamma/2)^{2 z (2/gamma) - 1} ... (conjugate form)

with l(x) = Gamma(x) / Gamma(1 - x).  It is entire, satisfies
Upsilon(z) = Upsilon(Q - z), and vanishes exactly on the two lattices
-(gamma/2) N - (2/gamma) N and Q + (gamma/2) N + (2/gamma) N.

Everything here works in log space; the exposed structure constant reports
poles (lattice hits of its denominator) instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import loggamma, roots_legendre

from .errors import AccuracyError, DomainError, ResourceError
from .params import CFTParams, conformal_weight
from .geometry import round_density

# zeta'(-1), cross-checked against the Glaisher-Kinkelin constant
ZETA_PRIME_MINUS1 = -0.165421143700450929

# Regularised determinant of the round-sphere Laplacian, exp(1/2 - 4 zeta'(-1))
DET_PRIME_SPHERE = math.exp(0.5 - 4.0 * ZETA_PRIME_MINUS1)


def log_l(x: complex) -> complex:
    """log of l(x) = Gamma(x) / Gamma(1 - x); raises on poles of Gamma."""
    for arg in (x, 1.0 - x):
        if arg.imag == 0.0 and arg.real <= 0.0 and arg.real == int(arg.real):
            raise DomainError(f"l({x}) hits a Gamma pole or zero")
    return loggamma(complex(x)) - loggamma(complex(1.0 - x))


def unit_volume_c0(q: float) -> float:
    """Metric-dependent constant multiplying the structure constant on the
    round sphere: sqrt(pi) * exp(-1/4 + 2 zeta'(-1) - Q^2 (1 - 2 log 2))."""
    return math.sqrt(math.pi) * math.exp(
        -0.25 + 2.0 * ZETA_PRIME_MINUS1 - q * q * (1.0 - 2.0 * math.log(2.0))
    )


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls for the Upsilon integral.

    The integrand is analytic on (0, inf); we expand the t -> 0 limit in a
    short Taylor series on [0, t_small] and cover [t_small, T] by composite
    Gauss-Legendre panels whose lengths grow geometrically.  T is chosen per
    evaluation from a certified bound on the discarded tail.
    """

    panel_nodes: int = 32
    t_small: float = 1e-3
    panel_growth: float = 4.0
    target_tol: float = 1e-13
    t_max: float = 1e5


class UpsilonEvaluator:
    """Upsilon_{gamma/2} and friends at fixed coupling gamma in (0, 2)."""

    def __init__(self, gamma: float, quad: QuadratureSpec | None = None,
                 max_shift_depth: int = 400):
        if not 0.0 < gamma < 2.0:
            raise DomainError(f"gamma must lie in (0, 2), got {gamma}")
        self.gamma = float(gamma)
        self.q = 2.0 / self.gamma + self.gamma / 2.0
        self.quad = quad or QuadratureSpec()
        self.max_shift_depth = max_shift_depth
        self._nodes, self._weights = roots_legendre(self.quad.panel_nodes)

    # -- strip integral ---------------------------------------------------

    def _panel_grid(self, t_hi: float, omega: float) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes on [t_small, t_hi].

        Panel lengths grow geometrically but are capped so that a panel sees
        at most ~N/4 oscillation periods of e^{i omega t}, which keeps the
        per-panel error of an N-node rule at machine level.
        """
        max_len = 24.0 * self.quad.panel_nodes / 32.0 / max(omega, 1.0)
        edges = [self.quad.t_small]
        while edges[-1] < t_hi:
            step = min(edges[-1] * (self.quad.panel_growth - 1.0), max_len)
            edges.append(min(edges[-1] + step, t_hi))
        ts, ws = [], []
        x, w = self._nodes, self._weights
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            ts.append(half * x + 0.5 * (hi + lo))
            ws.append(half * w)
        return np.concatenate(ts), np.concatenate(ws)

    def _tail_cutoff(self, a: complex) -> float:
        """Upper integration limit T with tail below target_tol.

        For t >= T the integrand is bounded by |a|^2 e^{-t} plus
        K e^{-delta t} with delta = Q/2 - |Re a| (standard strip geometry)
        and K the denominator floor at t = 1.
        """
        delta = 0.5 * self.q - abs(a.real)
        eps = 0.5 * self.quad.target_tol
        k_floor = 4.0 / ((1.0 - math.exp(-0.5 * self.gamma))
                         * (1.0 - math.exp(-2.0 / self.gamma)))
        t1 = 5.0
        for _ in range(4):
            t1 = math.log(max((abs(a) ** 2 + 1.0) / (eps * max(t1, 1.0)), 2.0))
        t2 = 5.0
        for _ in range(4):
            t2 = math.log(max(k_floor / (eps * delta * max(t2, 1.0)), 2.0)) / delta
        t_hi = max(t1, t2, 20.0)
        if t_hi > self.quad.t_max:
            raise AccuracyError(
                f"tail cutoff {t_hi:.1f} exceeds t_max={self.quad.t_max}; "
                f"argument too close to the strip boundary")
        return t_hi

    def _integrand(self, a: complex, t: np.ndarray) -> np.ndarray:
        """Stable form of the strip integrand, valid for all t > 0.

        Writing ar for a reflected into Re >= 0 (the integrand depends on a
        only through a^2), the sinh ratio equals
        e^{(ar - Q/2) t} (1 - e^{-ar t})^2 / ((1 - e^{-gamma t/2})(1 - e^{-2t/gamma}))
        which involves only decaying exponentials.
        """
        ar = a if a.real >= 0.0 else -a
        if ar.imag == 0.0:
            ar_v: complex | float = ar.real
            u: complex | float = ar.real * ar.real
            one_m = -np.expm1(-ar_v * t)
        else:
            ar_v = ar
            u = ar * ar
            one_m = 1.0 - np.exp(-ar_v * t)
        num = np.exp((ar_v - 0.5 * self.q) * t) * one_m ** 2
        den = (-np.expm1(-0.5 * self.gamma * t)) * (-np.expm1(-2.0 * t / self.gamma))
        return (u * np.exp(-t) - num / den) / t

    def _series_head(self, u: complex) -> complex:
        """Exact integral of the degree-4 Taylor expansion over [0, t_small]."""
        b2 = (self.gamma / 4.0) ** 2
        c2 = 1.0 / (self.gamma * self.gamma)
        bsum = b2 + c2
        d4 = (b2 * b2 + c2 * c2) / 120.0 + 1.0 / 576.0
        p2 = u / 12.0 - bsum / 6.0
        p4 = u * u / 360.0 - u * bsum / 72.0 + bsum * bsum / 36.0 - d4
        t0 = self.quad.t_small
        return u * (
            -t0
            + (0.5 - p2) * t0 * t0 / 2.0
            - t0 ** 3 / 18.0
            + (1.0 / 24.0 - p4) * t0 ** 4 / 4.0
            - t0 ** 5 / 600.0
        )

    def log_upsilon_strip(self, z: complex) -> complex:
        """log Upsilon(z) from the integral; requires 0 < Re z < Q strictly."""
        z = complex(z)
        if not 0.0 < z.real < self.q:
            raise DomainError(
                f"strip integral needs 0 < Re z < Q = {self.q:.6f}, got {z}")
        a = complex(0.5 * self.q - z)
        t_hi = self._tail_cutoff(a)
        t, w = self._panel_grid(t_hi, 2.0 * abs(a.imag) + 1.0)
        u = a * a
        if a.imag == 0.0:
            u = u.real
        val = np.dot(w, self._integrand(a, t)) + self._series_head(u)
        if z.imag == 0.0:
            return complex(float(np.real(val)), 0.0)
        return complex(val)

    # -- zero lattices ----------------------------------------------------

    def nearest_zero_distance(self, z: complex) -> float:
        """Distance from z to the zero set of Upsilon."""
        z = complex(z)
        best = math.inf
        for x0, sign in ((0.0, -1.0), (self.q, 1.0)):
            # zeros at x0 + sign*(m gamma/2 + n 2/gamma), m, n >= 0
            t = sign * (z.real - x0)  # want m gamma/2 + 2 n/gamma close to t
            m_hi = int(max(t, 0.0) / (0.5 * self.gamma)) + 2
            for m in range(0, m_hi + 1):
                rem = t - 0.5 * self.gamma * m
                n = max(0, round(rem * self.gamma / 2.0))
                for nn in (n - 1, n, n + 1):
                    if nn < 0:
                        continue
                    dx = rem - 2.0 * nn / self.gamma
                    best = min(best, math.hypot(dx, z.imag))
        return best

    def is_zero(self, z: complex, tol: float = 1e-10) -> bool:
        return self.nearest_zero_distance(z) < tol

    # -- shift walk -------------------------------------------------------

    def log_upsilon(self, z: complex) -> complex:
        """log Upsilon(z) anywhere off the zero set.

        Arguments outside the strip are walked back in steps of gamma/2
        using the shift equation; each rung multiplies by
        l(x gamma/2) (gamma/2)^{1 - x gamma} with x the pre-shift argument.
        """
        z = complex(z)
        if self.is_zero(z):
            raise DomainError(f"Upsilon vanishes at {z}; no finite log")
        k = round((0.5 * self.q - z.real) / (0.5 * self.gamma))
        if abs(k) > self.max_shift_depth:
            raise ResourceError(
                f"argument {z} needs {abs(k)} shifts, above the "
                f"limit {self.max_shift_depth}")
        log_shift = 0.0 + 0.0j
        if k >= 0:
            # Upsilon(z) = Upsilon(z + k gamma/2) / prod_{j=0}^{k-1} F(z + j gamma/2)
            for j in range(k):
                log_shift -= self._log_shift_factor(z + 0.5 * self.gamma * j)
            z_in = z + 0.5 * self.gamma * k
        else:
            # Upsilon(z) = prod F(...) Upsilon(z - |k| gamma/2)
            for j in range(1, -k + 1):
                log_shift += self._log_shift_factor(z - 0.5 * self.gamma * j)
            z_in = z + 0.5 * self.gamma * k
        val = log_shift + self.log_upsilon_strip(z_in)
        if z.imag == 0.0 and val.imag == 0.0:
            return complex(val.real, 0.0)
        return val

    def _log_shift_factor(self, x: complex) -> complex:
        """log of F(x) with Upsilon(x + gamma/2) = F(x) Upsilon(x)."""
        arg = 0.5 * self.gamma * x
        lg = log_l(arg)
        return lg + (1.0 - self.gamma * x) * math.log(0.5 * self.gamma)

    def upsilon(self, z: complex) -> complex:
        """Upsilon(z) itself; exact 0.0 on the zero lattice."""
        z = complex(z)
        if self.is_zero(z):
            return 0.0 + 0.0j
        return np.exp(self.log_upsilon(z))

    def upsilon_prime0(self) -> float:
        """Upsilon'(0), equal to Upsilon(gamma/2) by the shift equation."""
        return float(np.real(np.exp(self.log_upsilon(0.5 * self.gamma))))


@lru_cache(maxsize=32)
def get_evaluator(gamma: float) -> UpsilonEvaluator:
    """Shared default-quadrature evaluator per coupling."""
    return UpsilonEvaluator(gamma)


# -- structure constant ---------------------------------------------------


@dataclass(frozen=True)
class DozzValue:
    """Structure constant evaluation with pole bookkeeping.

    value is inf at a pole and 0.0 when the numerator sits on the zero
    lattice; log_value is None in both degenerate cases.  pole_distance is
    the distance from the nearest denominator argument to the zero set.
    """

    value: complex
    log_value: complex | None
    is_pole: bool
    pole_distance: float


def dozz(alpha1: complex, alpha2: complex, alpha3: complex,
         params: CFTParams, evaluator: UpsilonEvaluator | None = None,
         pole_tol: float = 1e-8) -> DozzValue:
    """Three-point structure constant C(alpha1, alpha2, alpha3).

    Assembled in log space as

        (pi mu l(gamma^2/4) (gamma/2)^{2 - gamma^2/2})^{(2Q - abar)/gamma}
        * Upsilon'(0) prod_i Upsilon(alpha_i)
        / (Upsilon(abar/2 - Q) prod_i Upsilon(abar/2 - alpha_i))

    with abar = alpha1 + alpha2 + alpha3.  Denominator lattice hits within
    pole_tol are reported as poles.
    """
    ev = evaluator or get_evaluator(params.gamma)
    g = params.gamma
    alphas = (complex(alpha1), complex(alpha2), complex(alpha3))
    abar = alphas[0] + alphas[1] + alphas[2]
    den_args = (abar / 2.0 - params.Q,) + tuple(abar / 2.0 - a for a in alphas)
    pole_distance = min(ev.nearest_zero_distance(x) for x in den_args)
    if pole_distance < pole_tol:
        return DozzValue(complex(math.inf, 0.0), None, True, pole_distance)
    num_zero = min(ev.nearest_zero_distance(a) for a in alphas)
    if num_zero < pole_tol:
        return DozzValue(0.0 + 0.0j, None, False, pole_distance)

    log_pref = ((2.0 * params.Q - abar) / g) * (
        math.log(math.pi * params.mu)
        + log_l(g * g / 4.0)
        + (2.0 - g * g / 2.0) * math.log(g / 2.0)
    )
    log_num = math.log(ev.upsilon_prime0()) + sum(
        ev.log_upsilon(a) for a in alphas)
    log_den = sum(ev.log_upsilon(x) for x in den_args)
    log_value = log_pref + log_num - log_den
    if all(a.imag == 0.0 for a in alphas) and log_value.imag == 0.0:
        log_value = complex(log_value.real, 0.0)
    return DozzValue(np.exp(log_value), log_value, False, pole_distance)


def three_point_fixed(points: tuple[complex, complex, complex],
                      alphas: tuple[float, float, float],
                      params: CFTParams,
                      evaluator: UpsilonEvaluator | None = None) -> complex:
    """Round-sphere three-point correlator at finite, distinct points.

    Product of mutual-distance powers |z_i - z_j|^{2(Delta_k - Delta_i - Delta_j)}
    (k the remaining index), metric factors g(z_i)^{-Delta_i}, the constant
    unit_volume_c0(Q), and the structure constant.
    """
    z1, z2, z3 = (complex(p) for p in points)
    if len({z1, z2, z3}) != 3:
        raise DomainError("three_point_fixed needs pairwise distinct points")
    a1, a2, a3 = alphas
    d1 = conformal_weight(a1, params.Q).real
    d2 = conformal_weight(a2, params.Q).real
    d3 = conformal_weight(a3, params.Q).real
    c = dozz(a1, a2, a3, params, evaluator)
    if c.is_pole:
        return complex(math.inf, 0.0)
    dist_pow = (
        2.0 * (d2 - d1 - d3) * math.log(abs(z1 - z3))
        + 2.0 * (d1 - d2 - d3) * math.log(abs(z2 - z3))
        + 2.0 * (d3 - d1 - d2) * math.log(abs(z1 - z2))
    )
    metric = -(d1 * math.log(round_density(z1))
               + d2 * math.log(round_density(z2))
               + d3 * math.log(round_density(z3)))
    return unit_volume_c0(params.Q) * c.value * math.exp(dist_pow + metric)


__all__ = [
    "ZETA_PRIME_MINUS1", "DET_PRIME_SPHERE", "log_l", "unit_volume_c0",
    "QuadratureSpec", "UpsilonEvaluator", "get_evaluator",
    "DozzValue", "dozz", "three_point_fixed",
]
