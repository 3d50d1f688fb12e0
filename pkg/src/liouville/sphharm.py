"""Real spherical harmonics on Gauss-Legendre x uniform-longitude grids.

Synthesis pipeline for band-limited random fields on the unit sphere:
orthonormal associated Legendre tables by stable three-term recursions,
one matrix product per azimuthal order to collapse the degree index, and
an inverse real FFT over the longitude index.  The fast path must agree
with the direct trigonometric mode sum to 1e-10; synthesize_direct exists
so tests can enforce that contract.

Conventions.  Latitude nodes are Gauss-Legendre in x = cos(theta), so a
product of two harmonics of degree <= l_max (a polynomial of degree
2*l_max in x) is integrated exactly whenever n_lat >= l_max + 1.
Longitudes are uniform with spacing 2*pi/n_lon and the irrational offset
phi_0 = (2*pi/n_lon)*(1/pi), which keeps every grid longitude a bounded
distance (at least 2/n_lon) away from the rational multiples of pi where
correlator insertions usually sit.  Resolving order m on the FFT grid
without aliasing requires n_lon >= 2*l_max + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre latitudes times offset uniform longitudes.

    x are the n_lat Gauss-Legendre nodes (ascending, interior to (-1, 1),
    so no grid point sits at a pole) and w the matching weights (sum 2).
    areas[i, j] = w[i] * 2*pi/n_lon are exact cell areas, summing to 4*pi.
    """

    n_lat: int
    n_lon: int
    x: np.ndarray
    w: np.ndarray
    phi: np.ndarray
    areas: np.ndarray

    @property
    def phi0(self) -> float:
        return float(self.phi[0])


@lru_cache(maxsize=8)
def sphere_grid(n_lat: int, n_lon: int) -> SphereGrid:
    """Build (and cache) the quadrature grid for the unit round sphere."""
    if n_lat < 1 or n_lon < 1:
        raise ConfigError(f"grid needs at least one node per axis, got {n_lat} x {n_lon}")
    x, w = np.polynomial.legendre.leggauss(n_lat)
    dphi = 2.0 * math.pi / n_lon
    phi = dphi * (np.arange(n_lon) + 1.0 / math.pi)
    areas = np.outer(w, np.full(n_lon, dphi))
    for arr in (x, w, phi, areas):
        arr.setflags(write=False)
    return SphereGrid(n_lat=n_lat, n_lon=n_lon, x=x, w=w, phi=phi, areas=areas)


def legendre_table(l_max: int, x: np.ndarray) -> list[np.ndarray]:
    """Orthonormal associated Legendre values q_lm(x), 0 <= m <= l <= l_max.

    Returns one array per order m, of shape (l_max - m + 1, len(x)), whose
    row k holds q_{m+k, m}.  The normalization makes the real harmonics

        Y_l0 = q_l0,  Y_lm^c = sqrt(2) q_lm cos(m phi),
                      Y_lm^s = sqrt(2) q_lm sin(m phi)   (m >= 1)

    orthonormal for the area measure of the unit sphere, with no
    Condon-Shortley sign.  Diagonal start q_mm = sqrt((2m+1)/(2m)) s q_{m-1,m-1}
    with s = sin(theta); then the standard normalized three-term recursion
    in l at fixed m.  q_mm underflows to zero near the poles for large m,
    which is harmless because the true values are far below double precision
    there anyway.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    tables: list[np.ndarray] = []
    qmm = np.full(x.shape, math.sqrt(0.25 / math.pi))
    for m in range(l_max + 1):
        n_l = l_max - m + 1
        tab = np.empty((n_l, x.size))
        tab[0] = qmm
        if n_l > 1:
            tab[1] = math.sqrt(2.0 * m + 3.0) * x * qmm
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            tab[l - m] = a * (x * tab[l - m - 1] - b * tab[l - m - 2])
        tab.setflags(write=False)
        tables.append(tab)
        if m < l_max:
            qmm = math.sqrt((2.0 * m + 3.0) / (2.0 * m + 2.0)) * s * qmm
    return tables


def _ring_coefficients(coef_cos: list[np.ndarray], coef_sin: list[np.ndarray],
                       tables: list[np.ndarray], m: int) -> tuple[np.ndarray, np.ndarray | None]:
    cm = coef_cos[m] @ tables[m]
    sm = coef_sin[m] @ tables[m] if m >= 1 else None
    return cm, sm


def synthesize(coef_cos: list[np.ndarray], coef_sin: list[np.ndarray],
               tables: list[np.ndarray], grid: SphereGrid) -> np.ndarray:
    """Evaluate sum_m [C_m(x) cos(m phi) + S_m(x) sin(m phi)] on the grid.

    coef_cos[m] and coef_sin[m] have shape (n_batch, tables[m].shape[0]) and
    hold the degree coefficients multiplying q_lm; coef_sin[0] is ignored.
    The azimuthal sum is done by an inverse real FFT with the spectrum
    twisted by exp(i m phi_0) to account for the offset grid.  Output shape
    is (n_batch, n_lat, n_lon).
    """
    l_max = len(tables) - 1
    if grid.n_lon < 2 * l_max + 1:
        raise ConfigError(
            f"n_lon = {grid.n_lon} cannot resolve order {l_max}; need >= {2 * l_max + 1}")
    nb = coef_cos[0].shape[0]
    n_rfft = grid.n_lon // 2 + 1
    spec = np.zeros((nb, grid.n_lat, n_rfft), dtype=complex)
    c0, _ = _ring_coefficients(coef_cos, coef_sin, tables, 0)
    spec[:, :, 0] = grid.n_lon * c0
    for m in range(1, l_max + 1):
        cm, sm = _ring_coefficients(coef_cos, coef_sin, tables, m)
        twist = (grid.n_lon / 2.0) * complex(math.cos(m * grid.phi0), math.sin(m * grid.phi0))
        spec[:, :, m] = twist * (cm - 1j * sm)
    return np.fft.irfft(spec, n=grid.n_lon, axis=2)


def synthesize_direct(coef_cos: list[np.ndarray], coef_sin: list[np.ndarray],
                      tables: list[np.ndarray], grid: SphereGrid) -> np.ndarray:
    """Reference path: the same mode sum via explicit cosine/sine matrices."""
    l_max = len(tables) - 1
    nb = coef_cos[0].shape[0]
    out = np.zeros((nb, grid.n_lat, grid.n_lon))
    c0, _ = _ring_coefficients(coef_cos, coef_sin, tables, 0)
    out += c0[:, :, None]
    for m in range(1, l_max + 1):
        cm, sm = _ring_coefficients(coef_cos, coef_sin, tables, m)
        out += cm[:, :, None] * np.cos(m * grid.phi)[None, None, :]
        out += sm[:, :, None] * np.sin(m * grid.phi)[None, None, :]
    return out


def sigma2_truncated(l_max: int) -> float:
    """Pointwise variance of the degree-truncated field: sum (2l+1)/(2l(l+1)).

    Constant over the sphere because the amplitude spectrum is isotropic.
    """
    ls = np.arange(1, l_max + 1, dtype=float)
    return float(np.sum((2.0 * ls + 1.0) / (2.0 * ls * (ls + 1.0))))


def truncated_covariance(l_max: int, cos_theta) -> np.ndarray:
    """Sum_{l=1}^{l_max} (2l+1)/(2 l (l+1)) P_l(cos theta), by Clenshaw.

    This is the analytic two-point covariance of the truncated field at
    angular separation theta; as l_max grows it tends to
    ln(1/d) + ln 2 - 1/2 with d the chordal distance 2 sin(theta/2).
    """
    coeffs = np.zeros(l_max + 1)
    ls = np.arange(1, l_max + 1, dtype=float)
    coeffs[1:] = (2.0 * ls + 1.0) / (2.0 * ls * (ls + 1.0))
    return np.polynomial.legendre.legval(np.asarray(cos_theta, dtype=float), coeffs)


__all__ = [
    "SphereGrid", "sphere_grid", "legendre_table", "synthesize",
    "synthesize_direct", "sigma2_truncated", "truncated_covariance",
]
