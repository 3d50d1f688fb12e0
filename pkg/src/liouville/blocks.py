"""Verma-module combinatorics and truncated conformal blocks.

Levels of the Verma module over the Virasoro algebra

    [L_n, L_m] = (n - m) L_{n+m} + (c/12)(n^3 - n) delta_{n,-m}

are indexed by Young diagrams (integer partitions).  A diagram nu with
parts m_1 <= ... <= m_k names the descendant word L_{-m_1} ... L_{-m_k}
applied to the highest-weight state (smallest index leftmost).  The
Shapovalov pairing of two such words, normal-ordered from first
principles, fills the per-level Gram matrices; their inverses weight the
block series

    z^{Delta_p - Delta_1 - Delta_2} * sum_N z^N
        sum_{|nu|=|nu'|=N} F^{-1}(nu,nu') w_in(nu) w_out(nu')

where the w factors are the descendant three-point coefficients.

The mode-action engine is generic over a coefficient ring so the same
recursion runs on fast numeric polynomials in Delta (production) and on
exact symbolic entries (tests).  Caches: per-(N, c) polynomial Gram
matrices and per-(N, Delta, c) numeric GramLevel values live in plain
dicts whose values are fully built before insertion, so concurrent
readers may duplicate work but never observe torn state.
"""

from __future__ import annotations

import cmath
import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DegeneracyError, DomainError
from .params import CFTParams, conformal_weight

# -- Young diagrams --------------------------------------------------------


@dataclass(frozen=True)
class YoungDiagram:
    """Integer partition: weakly decreasing positive parts."""

    parts: tuple[int, ...]

    def __post_init__(self):
        if any(p <= 0 for p in self.parts):
            raise DomainError(f"parts must be positive, got {self.parts}")
        if any(a < b for a, b in zip(self.parts, self.parts[1:])):
            raise DomainError(f"parts must be weakly decreasing, got {self.parts}")

    @property
    def level(self) -> int:
        return sum(self.parts)


@lru_cache(maxsize=None)
def diagrams_at_level(n: int) -> tuple[YoungDiagram, ...]:
    """All partitions of n, lexicographically descending."""
    if n < 0:
        raise DomainError("level must be nonnegative")

    def gen(rest: int, maxpart: int):
        if rest == 0:
            yield ()
            return
        for first in range(min(rest, maxpart), 0, -1):
            for tail in gen(rest - first, first):
                yield (first,) + tail

    return tuple(YoungDiagram(p) for p in gen(n, n))


# -- coefficient rings ------------------------------------------------------


class NumericDeltaRing:
    """Polynomials in the weight Delta with complex coefficients, at a
    fixed numeric central charge.  Elements are ascending-order ndarrays."""

    def __init__(self, c: complex):
        self.zero = np.zeros(1, dtype=complex)
        self.one = np.ones(1, dtype=complex)
        self.delta = np.array([0.0, 1.0], dtype=complex)
        self.c = np.array([complex(c)], dtype=complex)

    @staticmethod
    def from_frac(num: int, den: int) -> np.ndarray:
        return np.array([num / den], dtype=complex)

    @staticmethod
    def add(a, b):
        if len(a) < len(b):
            a, b = b, a
        out = a.copy()
        out[: len(b)] += b
        return out

    @staticmethod
    def mul(a, b):
        return np.convolve(a, b)

    @staticmethod
    def evaluate(a, delta: complex) -> complex:
        return complex(np.polynomial.polynomial.polyval(complex(delta), a))


class SymbolicRing:
    """Exact ring over sympy expressions; used by the test oracle path."""

    def __init__(self, delta, c):
        import sympy
        self._sym = sympy
        self.zero = sympy.Integer(0)
        self.one = sympy.Integer(1)
        self.delta = delta
        self.c = c

    def from_frac(self, num: int, den: int):
        return self._sym.Rational(num, den)

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def mul(a, b):
        return (a * b)


# -- mode-action engine -----------------------------------------------------


class VermaEngine:
    """Normal-ordering engine over an arbitrary coefficient ring.

    States are dicts mapping ascending part tuples (the word order) to
    ring elements.  action(m, word) implements L_m on a descendant word by
    commuting it rightward until it hits the highest-weight state;
    insert(n, word) prepends L_{-n}, restoring canonical order.
    """

    def __init__(self, ring):
        self.ring = ring
        self._action: dict = {}
        self._insert: dict = {}

    def _combine(self, target: dict, word: tuple, coeff) -> None:
        if word in target:
            target[word] = self.ring.add(target[word], coeff)
        else:
            target[word] = coeff

    def _scaled(self, state: dict, coeff) -> dict:
        return {w: self.ring.mul(coeff, v) for w, v in state.items()}

    def insert(self, n: int, word: tuple) -> dict:
        """L_{-n} applied to the canonical word, as a canonical state."""
        key = (n, word)
        hit = self._insert.get(key)
        if hit is not None:
            return hit
        if not word or n <= word[0]:
            out = {(n,) + word: self.ring.one}
        else:
            m1, rest = word[0], word[1:]
            out: dict = {}
            # L_{-n} L_{-m1} = L_{-m1} L_{-n} + (m1 - n) L_{-(n+m1)}
            for w, v in self.insert(n, rest).items():
                self._combine(out, (m1,) + w, v)
            scal = self.ring.from_frac(m1 - n, 1)
            for w, v in self.insert(n + m1, rest).items():
                self._combine(out, w, self.ring.mul(scal, v))
        self._insert[key] = out
        return out

    def action(self, m: int, word: tuple) -> dict:
        """L_m (m >= 1) applied to the canonical word, as a canonical state."""
        key = (m, word)
        hit = self._action.get(key)
        if hit is not None:
            return hit
        if not word:
            out: dict = {}
        else:
            a, rest = word[0], word[1:]
            out = {}
            # commutator part: (m + a) L_{m-a} + central term when m == a
            if m > a:
                sub = self.action(m - a, rest)
                scal = self.ring.from_frac(m + a, 1)
                for w, v in sub.items():
                    self._combine(out, w, self.ring.mul(scal, v))
            elif m == a:
                lvl = sum(rest)
                eig = self.ring.add(self.ring.delta, self.ring.from_frac(lvl, 1))
                self._combine(out, rest, self.ring.mul(
                    self.ring.from_frac(2 * m, 1), eig))
                central = self.ring.mul(
                    self.ring.c, self.ring.from_frac(m ** 3 - m, 12))
                self._combine(out, rest, central)
            else:
                sub = self.insert(a - m, rest)
                scal = self.ring.from_frac(m + a, 1)
                for w, v in sub.items():
                    self._combine(out, w, self.ring.mul(scal, v))
            # pass-through part: L_{-a} (L_m rest)
            for w, v in self.action(m, rest).items():
                for w2, v2 in self.insert(a, w).items():
                    self._combine(out, w2, self.ring.mul(v, v2))
        self._action[key] = out
        return out

    def pairing(self, nu: YoungDiagram, nu_prime: YoungDiagram):
        """Shapovalov pairing <L_{-nu} Psi, L_{-nu'} Psi>; exact ring zero
        across levels."""
        if nu.level != nu_prime.level:
            return self.ring.zero
        state = {tuple(sorted(nu_prime.parts)): self.ring.one}
        for m in sorted(nu.parts):
            nxt: dict = {}
            for w, v in state.items():
                for w2, v2 in self.action(m, w).items():
                    self._combine(nxt, w2, self.ring.mul(v, v2))
            state = nxt
        return state.get((), self.ring.zero)


# -- Gram matrices ----------------------------------------------------------


@dataclass(frozen=True)
class GramLevel:
    """Shapovalov matrix and inverse at one level of the Verma module."""

    level: int
    basis: tuple[YoungDiagram, ...]
    gram: np.ndarray
    gram_inverse: np.ndarray
    delta: complex
    c: complex


_POLY_GRAM: dict = {}      # (N, c) -> list of rows of poly coefficient arrays
_GRAM_LEVELS: dict = {}    # (N, Delta, c) -> GramLevel
_ENGINES: dict = {}        # c -> VermaEngine over NumericDeltaRing


def _poly_gram(n: int, c: complex):
    key = (n, c)
    hit = _POLY_GRAM.get(key)
    if hit is not None:
        return hit
    engine = _ENGINES.get(c)
    if engine is None:
        engine = VermaEngine(NumericDeltaRing(c))
        _ENGINES[c] = engine
    basis = diagrams_at_level(n)
    rows = []
    for i, nu in enumerate(basis):
        row = []
        for j, nu_p in enumerate(basis):
            if j < i:
                row.append(rows[j][i])    # symmetric
            else:
                row.append(engine.pairing(nu, nu_p))
        rows.append(row)
    _POLY_GRAM[key] = (basis, rows)
    return basis, rows


def nearest_kac_degeneration(delta: complex, c: complex,
                             max_level: int) -> tuple[tuple[int, int], float]:
    """Closest Kac-type degenerate weight with r*s <= max_level.

    Writing c = 1 + 6(b + 1/b)^2, the degenerate weights are
    Delta_{r,s} = ((b + 1/b)^2 - (r b + s/b)^2) / 4 for r, s >= 1.
    """
    q = cmath.sqrt((c - 1.0) / 6.0)
    b = (q + cmath.sqrt(q * q - 4.0)) / 2.0
    best, best_rs = math.inf, (1, 1)
    for r in range(1, max(max_level, 1) + 1):
        for s in range(1, max(max_level, 1) // r + 1):
            drs = (q * q - (r * b + s / b) ** 2) / 4.0
            d = abs(delta - drs)
            if d < best:
                best, best_rs = d, (r, s)
    return best_rs, best


def gram_level(n: int, delta: complex, c: complex,
               cond_limit: float = 1e12) -> GramLevel:
    """Gram matrix and inverse at level n, cached by value.

    Raw entries spread over ~Delta^n in magnitude, which is pure basis
    normalization, so conditioning and the inversion run on the
    diagonally rescaled matrix: Gs = D G D with D = diag(G)^{-1/2}.  The
    degeneracy threshold applies to cond(Gs), which is the quantity that
    diverges at Kac weights, and the inverse is refined with extended
    precision residuals until Gs @ inv(Gs) matches the identity to 1e-10
    or to the rounding floor of the stored inverse, whichever is looser.
    """
    delta = complex(delta)
    c = complex(c)
    key = (n, delta, c)
    hit = _GRAM_LEVELS.get(key)
    if hit is not None:
        return hit
    basis, rows = _poly_gram(n, c)
    dim = len(basis)
    gram = np.empty((dim, dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            gram[i, j] = NumericDeltaRing.evaluate(rows[i][j], delta)
    if n == 0:
        inv = np.ones((1, 1), dtype=complex)
        out = GramLevel(n, basis, gram, inv, delta, c)
        _GRAM_LEVELS[key] = out
        return out
    d = np.sqrt(np.abs(np.diagonal(gram)))
    d[d == 0.0] = 1.0
    scale = np.outer(1.0 / d, 1.0 / d)
    gs = gram * scale
    cond = np.linalg.cond(gs)
    if not np.isfinite(cond) or cond > cond_limit:
        rs, dist = nearest_kac_degeneration(delta, c, n)
        raise DegeneracyError(
            f"Gram matrix at level {n} is degenerate (scaled condition "
            f"{cond:.3g}); nearest Kac weight has (r, s) = {rs} "
            f"at distance {dist:.3g}", level=n, kac_rs=rs)
    eye = np.eye(dim, dtype=complex)
    xs = np.linalg.solve(gs, eye)
    gs_l = gs.astype(np.clongdouble)
    xs_l = xs.astype(np.clongdouble)
    best_xs = xs_l
    best_resid = float(np.max(np.abs((gs_l @ xs_l).astype(complex) - eye)))
    for _ in range(4):
        if best_resid <= 1e-13:
            break
        resid_l = eye - (gs_l @ best_xs).astype(complex)
        xs_l = best_xs + best_xs @ resid_l.astype(np.clongdouble)
        resid = float(np.max(np.abs((gs_l @ xs_l).astype(complex) - eye)))
        if resid >= best_resid:
            break
        best_xs, best_resid = xs_l, resid
    # Any stored representation of the inverse carries entrywise rounding,
    # so no iteration can push the residual below roughly
    # eps * max(|Gs| @ |inv|); accept anything within a small factor of
    # that floor so well-conditioned but large-inverse levels (high n at
    # small Delta on the spectrum line) are not misreported as degenerate.
    floor = float(np.max(np.abs(gs) @ np.abs(best_xs.astype(complex))))
    attainable = float(np.finfo(np.clongdouble).eps) * floor
    if best_resid > max(1e-10, 8.0 * attainable):
        rs, dist = nearest_kac_degeneration(delta, c, n)
        raise DegeneracyError(
            f"Gram inversion residual {best_resid:.3e} at level {n} exceeds "
            f"its attainable floor {attainable:.3e}; nearest Kac weight has "
            f"(r, s) = {rs} at distance {dist:.3g}", level=n, kac_rs=rs)
    inv = best_xs.astype(complex) * scale
    out = GramLevel(n, basis, gram, inv, delta, c)
    _GRAM_LEVELS[key] = out
    return out


def virasoro_pairing(nu: YoungDiagram, nu_prime: YoungDiagram,
                     delta: complex, c: complex) -> complex:
    """Single Shapovalov pairing at numeric weight and charge."""
    if nu.level != nu_prime.level:
        return 0.0 + 0.0j
    basis, rows = _poly_gram(nu.level, complex(c))
    i = basis.index(nu)
    j = basis.index(nu_prime)
    return NumericDeltaRing.evaluate(rows[i][j], complex(delta))


# -- descendant three-point coefficients ------------------------------------


def descendant_3pt(delta1: complex, delta2: complex, delta: complex,
                   nu: YoungDiagram) -> complex:
    """Coefficient of <Delta1| V_2(1) L_{-nu} |Delta> relative to the
    primary matrix element, at canonical positions.

    Commuting the word's modes leftward through V_2 one at a time, the
    smallest part first, each L_{-m} contributes
    (h - Delta1 + m Delta2) where h is the weight of the state still to
    the right; unrolled, with parts m_1 <= ... <= m_k:

        prod_i (Delta + sum_{j>i} m_j - Delta1 + m_i Delta2)
    """
    parts = tuple(sorted(nu.parts))
    val = 1.0 + 0.0j
    remaining = sum(parts)
    for m in parts:
        remaining -= m
        val *= (delta + remaining - delta1 + m * delta2)
    return val


# -- blocks -----------------------------------------------------------------


@dataclass(frozen=True)
class BlockEval:
    """One truncated block evaluation with its coefficient ledger."""

    p: float
    deltas: tuple[complex, complex, complex, complex]
    z: complex
    level: int
    coefficients: tuple[complex, ...]
    value: complex
    tail_estimate: float


def block_coefficients(delta_p: complex,
                       deltas: tuple[complex, complex, complex, complex],
                       level: int, c: complex) -> tuple[complex, ...]:
    """Per-level series coefficients c_N, N = 0..level."""
    d1, d2, d3, d4 = (complex(d) for d in deltas)
    out = []
    for n in range(level + 1):
        gl = gram_level(n, delta_p, c)
        w_in = np.array([descendant_3pt(d1, d2, delta_p, nu)
                         for nu in gl.basis])
        w_out = np.array([descendant_3pt(d4, d3, delta_p, nu)
                          for nu in gl.basis])
        out.append(complex(w_in @ gl.gram_inverse @ w_out))
    return tuple(out)


def block(p: float, deltas: tuple[complex, complex, complex, complex],
          z: complex, level: int, params: CFTParams,
          coefficients: tuple[complex, ...] | None = None) -> BlockEval:
    """Truncated spectrum-line conformal block at cross-ratio position z.

    value = z^{Delta_p - Delta_1 - Delta_2} sum_{N<=level} c_N z^N with the
    power on the principal branch.  Pass precomputed coefficients to skip
    the Gram work (they depend on everything but z).
    """
    z = complex(z)
    if abs(z) >= 1.0:
        raise DomainError(f"block series needs |z| < 1, got |z| = {abs(z):.4f}")
    if level < 0:
        raise DomainError("truncation level must be nonnegative")
    delta_p = conformal_weight(params.Q + 1j * p, params.Q)
    coeffs = coefficients if coefficients is not None else \
        block_coefficients(delta_p, deltas, level, params.c_L)
    powers = z ** np.arange(level + 1)
    series = complex(np.dot(np.asarray(coeffs), powers))
    prefactor = z ** (delta_p - deltas[0] - deltas[1])
    terms = np.abs(np.asarray(coeffs) * powers)
    tail = math.inf
    if level >= 2 and terms[-2] > 0.0:
        ratio = max(terms[-1] / terms[-2], abs(z))
        if ratio < 1.0:
            tail = terms[-1] * ratio / (1.0 - ratio)
    elif level >= 0 and terms[-1] == 0.0:
        tail = 0.0
    return BlockEval(p=float(p), deltas=tuple(complex(d) for d in deltas),
                     z=z, level=level, coefficients=tuple(coeffs),
                     value=prefactor * series, tail_estimate=tail)


# -- on-disk coefficient cache ----------------------------------------------


class BlockCoefficientCache:
    """Versioned JSON store for block coefficient ledgers.

    Layout: {"version": 1, "entries": {key: [[re, im], ...]}} with
    key = "gamma|level|sha256(weight tuple + spectral weight)".  Values are
    the c_N ledgers from block_coefficients; everything else is cheap to
    recompute.
    """

    VERSION = 1

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, list] = {}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("version") == self.VERSION:
                self._entries = data["entries"]

    @staticmethod
    def _key(gamma: float, level: int, delta_p: complex,
             deltas: tuple[complex, ...]) -> str:
        tag = "|".join(f"{complex(d).real:.17g},{complex(d).imag:.17g}"
                       for d in (delta_p,) + tuple(deltas))
        digest = hashlib.sha256(tag.encode()).hexdigest()[:32]
        return f"{gamma:.17g}|{level}|{digest}"

    def lookup(self, gamma: float, level: int, delta_p: complex,
               deltas: tuple[complex, ...]) -> tuple[complex, ...] | None:
        raw = self._entries.get(self._key(gamma, level, delta_p, deltas))
        if raw is None:
            return None
        return tuple(complex(re, im) for re, im in raw)

    def store(self, gamma: float, level: int, delta_p: complex,
              deltas: tuple[complex, ...],
              coefficients: tuple[complex, ...]) -> None:
        key = self._key(gamma, level, delta_p, deltas)
        self._entries[key] = [[v.real, v.imag] for v in coefficients]

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(
            {"version": self.VERSION, "entries": self._entries}))
        tmp.replace(self.path)

    def __len__(self) -> int:
        return len(self._entries)


__all__ = [
    "YoungDiagram", "diagrams_at_level", "VermaEngine", "NumericDeltaRing",
    "SymbolicRing", "GramLevel", "gram_level", "virasoro_pairing",
    "nearest_kac_degeneration", "descendant_3pt", "BlockEval",
    "block", "block_coefficients", "BlockCoefficientCache",
]
