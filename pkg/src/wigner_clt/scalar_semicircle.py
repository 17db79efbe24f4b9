"""Scalar calculus of the semicircle law.

Everything here is a pure function of complex spectral parameters: the
Stieltjes transform ``m(z)`` and its derivatives, the two-body stability
factor ``q_ij`` and iterated (Hermite) divided differences of ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import NearSingularStability

#: Threshold on ``|1 - m_i m_j|`` below which the stability factor is refused.
NEAR_SINGULAR_TOL = 1e-14

#: Distance from the spectral edges that defines the bulk, ``|E| <= 2 - delta``.
BULK_DELTA = 0.2

#: Highest derivative order of ``m`` that the closed-form recurrence supports.
MAX_DERIVATIVE_ORDER = 12


@dataclass(frozen=True)
class SpectralPoint:
    """A spectral parameter together with ``m(z)`` and ``m'(z)``."""

    z: complex
    m: complex
    m_prime: complex

    @property
    def eta(self) -> float:
        return abs(self.z.imag)

    def conjugate(self) -> "SpectralPoint":
        return SpectralPoint(self.z.conjugate(), self.m.conjugate(), self.m_prime.conjugate())


PointLike = Union[complex, float, SpectralPoint]


def _as_complex(z: PointLike) -> complex:
    if isinstance(z, SpectralPoint):
        return z.z
    return complex(z)


def _solve_dyson(z: complex) -> complex:
    # both roots of m^2 + z m + 1 = 0; keep the one in the same half plane as z
    disc = complex(np.sqrt(complex(z) * z - 4.0))
    r1 = (-z + disc) / 2.0
    r2 = (-z - disc) / 2.0
    # the roots multiply to one; rebuild the small one from the large one to avoid cancellation
    if abs(r1) >= abs(r2):
        r2 = 1.0 / r1
    else:
        r1 = 1.0 / r2
    return r1 if r1.imag * z.imag > 0 else r2


@lru_cache(maxsize=65536)
def _stieltjes_cached(z: complex) -> SpectralPoint:
    m = _solve_dyson(z)
    # polish with one Newton step on m^2 + z m + 1 = 0
    m = m - (m * m + z * m + 1.0) / (2.0 * m + z)
    return SpectralPoint(z, m, m * m / (1.0 - m * m))


def stieltjes(z: PointLike) -> SpectralPoint:
    """Return ``m(z)`` for the semicircle law, with ``sign Im m = sign Im z``.

    Raises ``ValueError`` for real ``z``.
    """
    if isinstance(z, SpectralPoint):
        return z
    z = complex(z)
    if z.imag == 0.0 or not math.isfinite(z.imag) or not math.isfinite(z.real):
        raise ValueError(f"spectral parameter must have nonzero finite imaginary part, got {z!r}")
    return _stieltjes_cached(z)


def semicircle_density(x):
    """Density ``sqrt(4 - x^2) / (2 pi)`` on ``[-2, 2]``, zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.sqrt(np.clip(4.0 - x * x, 0.0, None)) / (2.0 * np.pi)
    return out if out.ndim else float(out)


def dyson_residual(p: SpectralPoint) -> float:
    return abs(p.m * p.m + p.z * p.m + 1.0)


def stability_factor(p: PointLike, q: PointLike, tol: float = NEAR_SINGULAR_TOL) -> complex:
    """Two-body stability factor ``q_ij = m_i m_j / (1 - m_i m_j)``.

    Equal points give ``m'(z)``, which is the same expression evaluated on
    the diagonal.
    """
    p, q = stieltjes(p), stieltjes(q)
    if p.z == q.z:
        return p.m_prime
    prod = p.m * q.m
    denom = 1.0 - prod
    if abs(denom) <= tol:
        raise NearSingularStability(
            f"|1 - m(z1) m(z2)| = {abs(denom):.3e} for z1={p.z}, z2={q.z}; widen Im z"
        )
    return prod / denom


@lru_cache(maxsize=None)
def _derivative_polynomial(order: int) -> tuple:
    """Integer coefficients of ``p_n`` with ``m^(n) = p_n(m) / (1 - m^2)^(2n-1)``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order == 1:
        return (0, 0, 1)
    prev = list(_derivative_polynomial(order - 1))
    n = order - 1
    deriv = [i * c for i, c in enumerate(prev)][1:] or [0]
    # p' (1 - m^2)
    term = [0] * (len(deriv) + 2)
    for i, c in enumerate(deriv):
        term[i] += c
        term[i + 2] -= c
    # + 2(2n-1) m p
    scaled = [0] + [2 * (2 * n - 1) * c for c in prev]
    size = max(len(term), len(scaled))
    total = [(term[i] if i < len(term) else 0) + (scaled[i] if i < len(scaled) else 0) for i in range(size)]
    # times m^2
    out = [0, 0] + total
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def m_derivative(z: PointLike, order: int) -> complex:
    """``order``-th derivative of ``m`` at ``z`` (order 0 returns ``m``)."""
    p = stieltjes(z)
    if order == 0:
        return p.m
    if order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivatives beyond order {MAX_DERIVATIVE_ORDER} are not supported")
    coeffs = _derivative_polynomial(order)
    val = 0j
    for c in reversed(coeffs):
        val = val * p.m + c
    return val / (1.0 - p.m * p.m) ** (2 * order - 1)


@lru_cache(maxsize=65536)
def _divided_difference_sorted(points: tuple) -> complex:
    if points[0] == points[-1]:
        k = len(points)
        return m_derivative(points[0], k - 1) / math.factorial(k - 1)
    head = _divided_difference_sorted(points[1:])
    tail = _divided_difference_sorted(points[:-1])
    return (head - tail) / (points[-1] - points[0])


def _canonical(zs: Iterable[PointLike]) -> tuple:
    pts = [_as_complex(z) for z in zs]
    if not pts:
        raise ValueError("divided difference needs at least one point")
    for z in pts:
        stieltjes(z)
    # sorted order puts two distinct points at the ends whenever any exist
    return tuple(sorted(pts, key=lambda c: (c.real, c.imag)))


def iterated_divided_difference(zs: Sequence[PointLike]) -> complex:
    """Iterated divided difference ``m[z_1, ..., z_k]`` over a multi-set.

    Repeated points are handled through derivatives of ``m``, so any mix of
    distinct and coincident points is allowed.
    """
    return _divided_difference_sorted(_canonical(zs))


def divided_difference_partial_fractions(zs: Sequence[PointLike]) -> complex:
    """Lagrange form ``sum_j m(z_j) prod_{i != j} 1/(z_j - z_i)`` for distinct points."""
    pts = [_as_complex(z) for z in zs]
    total = 0j
    for j, zj in enumerate(pts):
        term = stieltjes(zj).m
        for i, zi in enumerate(pts):
            if i != j:
                if zi == zj:
                    raise ValueError("partial-fraction form needs distinct points")
                term /= zj - zi
        total += term
    return total


def in_bulk(z: PointLike, delta: float = BULK_DELTA) -> bool:
    return abs(_as_complex(z).real) <= 2.0 - delta
