"""Stereographic coordinates, the round metric, and chordal distances.

The unit sphere in R^3 is identified with the extended complex plane by
stereographic projection from the north pole: z = 0 is the south pole and
the flagged INFINITY_POINT is the north pole.  The round metric reads
g(z) |dz|^2 with density g(z) = 4 / (1 + |z|^2)^2, total area 4 pi.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .params import INFINITY_POINT, is_infinity


def round_density(z: complex) -> float:
    """Density of the round metric in the stereographic chart; finite z only."""
    if is_infinity(z):
        raise DomainError("round_density is not defined in this chart at infinity")
    r2 = (z.real * z.real + z.imag * z.imag)
    return 4.0 / (1.0 + r2) ** 2


def stereo_to_unit(z: complex) -> np.ndarray:
    """Unit vector in R^3 for a stereographic coordinate (infinity allowed)."""
    if is_infinity(z):
        return np.array([0.0, 0.0, 1.0])
    r2 = z.real * z.real + z.imag * z.imag
    s = 1.0 / (1.0 + r2)
    return np.array([2.0 * z.real * s, 2.0 * z.imag * s, (r2 - 1.0) * s])


def chordal_distance(z: complex, w: complex) -> float:
    """Chordal (R^3 straight-line) distance between two sphere points.

    For finite z, w this is 2|z-w| / sqrt((1+|z|^2)(1+|w|^2)); one point at
    infinity gives 2 / sqrt(1+|z|^2).
    """
    if is_infinity(z) and is_infinity(w):
        return 0.0
    if is_infinity(z):
        return 2.0 / np.sqrt(1.0 + abs(w) ** 2)
    if is_infinity(w):
        return 2.0 / np.sqrt(1.0 + abs(z) ** 2)
    return 2.0 * abs(z - w) / np.sqrt((1.0 + abs(z) ** 2) * (1.0 + abs(w) ** 2))


__all__ = ["round_density", "stereo_to_unit", "chordal_distance", "INFINITY_POINT"]
