"""Limiting covariance ``m[alpha|beta]`` of ``N <T_alpha>`` and ``N <T_beta>``.

The covariance splits as ``m_GUE + kappa4 * m_kappa``.  Both parts obey one
linear recursion that shortens the first chain; its sources are

* ``s_GUE``: first chain glued to every rotation of the second chain,
  closed by a bare resolvent at the rotation start;
* ``s_kappa``: products of Hadamard traces pairing arcs of the two chains,
  where arcs of the second chain may wrap around its end.

The convention is ``m[alpha|beta] ~ N^2 E[X_alpha X_beta]`` with no complex
conjugation; a variance uses the conjugate chain as ``beta``.

The module also carries the scalar case ``m[S1|S2]`` (all matrices equal to
the identity), its closed sum formula, and the double-integral representation
of ``m_GUE[S1|S2]`` with the logarithmic kernel ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .chain_core import (
    Chain,
    DeterministicMatrix,
    EvaluationContext,
    Slot,
    context_for,
    hadamard_trace,
    mat_mul,
)
from .errors import QuadratureFailure, SizeLimit
from .scalar_semicircle import PointLike, _as_complex, stability_factor, stieltjes

MAX_TOTAL_LENGTH = 7


@dataclass(frozen=True)
class CovarianceValue:
    total: complex
    gue_part: complex
    kappa_part: complex
    kappa4: float = 0.0

    @classmethod
    def from_parts(cls, gue: complex, kappa: complex, kappa4: float) -> "CovarianceValue":
        return cls(gue + kappa4 * kappa, gue, kappa, float(kappa4))


Pair = Tuple[complex, complex]


@dataclass
class CovarianceSolver:
    ctx: EvaluationContext
    _memo: Dict[Tuple, Pair] = field(default_factory=dict)

    def cov(self, alpha: Sequence[Slot], beta: Sequence[Slot]) -> Pair:
        """``(m_GUE, m_kappa)`` of the two ordered slot tuples."""
        alpha, beta = tuple(alpha), tuple(beta)
        k, l = len(alpha), len(beta)
        if k == 0 or l == 0:
            return 0j, 0j
        key = (alpha, beta)
        got = self._memo.get(key)
        if got is not None:
            return got
        ctx = self.ctx
        z1, w1 = alpha[0]
        zk, wk = alpha[-1]
        m1 = stieltjes(z1).m
        q = stability_factor(z1, zk)
        ak = ctx.word_trace(wk)
        bare_k = (zk, ())
        gue = kap = 0j

        def acc(pair, weight):
            nonlocal gue, kap
            gue += weight * pair[0]
            kap += weight * pair[1]

        if k >= 2:
            mid = alpha[1:k - 1]
            acc(self.cov(mid + ((zk, wk + w1),), beta), 1.0)
            if ak != 0:
                acc(self.cov(mid + ((zk, w1),), beta), q * ak)
        for j in range(1, k):
            sub = self.cov(alpha[:j - 1] + ((alpha[j - 1][0], ()),), beta)
            weight = ctx.m(alpha[j - 1:])
            if ak != 0:
                weight += q * ak * ctx.m(alpha[j - 1:k - 1] + (bare_k,))
            acc(sub, weight)
        for j in range(2, k + 1):
            weight = ctx.m(alpha[:j - 1] + ((alpha[j - 1][0], ()),))
            acc(self.cov(alpha[j - 1:], beta), weight)
            if ak != 0:
                acc(self.cov(alpha[j - 1:k - 1] + (bare_k,), beta), weight * q * ak)
        gue += self._source_gue(alpha, beta, q, ak)
        kap += self._source_kappa(alpha, beta, q, ak)
        out = (m1 * gue, m1 * kap)
        self._memo[key] = out
        return out

    def _source_gue(self, alpha, beta, q, ak) -> complex:
        ctx = self.ctx
        k, l = len(alpha), len(beta)
        out = 0j
        for j in range(1, l + 1):
            rot = beta[j - 1:] + beta[:j - 1]
            close = ((beta[j - 1][0], ()),)
            out += ctx.m(alpha + rot + close)
            if ak != 0:
                out += q * ak * ctx.m(alpha[:k - 1] + ((alpha[-1][0], ()),) + rot + close)
        return out

    def _source_kappa(self, alpha, beta, q, ak) -> complex:
        ctx = self.ctx
        k, l = len(alpha), len(beta)
        last = ctx.word(alpha[-1][1])
        out = 0j
        for r in range(1, k + 1):
            head = ctx.M(alpha[:r])
            tail = ctx.M(alpha[r - 1:])
            tail_a = mat_mul(tail, last)
            for s in range(1, l + 1):
                for t in range(1, s + 1):
                    first = hadamard_trace(head, ctx.M(beta[s - 1:] + beta[:t]))
                    piece = ctx.M(beta[t - 1:s])
                    second = hadamard_trace(tail_a, piece)
                    if ak != 0:
                        second += q * ak * hadamard_trace(tail, piece)
                    out += first * second
                for t in range(s, l + 1):
                    first = hadamard_trace(head, ctx.M(beta[s - 1:t]))
                    piece = ctx.M(beta[t - 1:] + beta[:s])
                    second = hadamard_trace(tail_a, piece)
                    if ak != 0:
                        second += q * ak * hadamard_trace(tail, piece)
                    out += first * second
        return out


def covariance_m(alpha: Chain, beta: Chain, kappa4: float = 0.0,
                 ctx: Optional[EvaluationContext] = None) -> CovarianceValue:
    """Limiting covariance of ``N <T_alpha>`` and ``N <T_beta>`` (no conjugation)."""
    if len(alpha) + len(beta) > MAX_TOTAL_LENGTH:
        raise SizeLimit(f"k + l = {len(alpha) + len(beta)} exceeds {MAX_TOTAL_LENGTH}")
    if len(alpha) == 0 or len(beta) == 0:
        return CovarianceValue.from_parts(0j, 0j, kappa4)
    ctx = ctx or context_for(alpha, beta)
    gue, kap = CovarianceSolver(ctx).cov(ctx.slots(alpha), ctx.slots(beta))
    return CovarianceValue.from_parts(gue, kap, kappa4)


def scalar_cov_m(zs1: Sequence[PointLike], zs2: Sequence[PointLike], kappa4: float = 0.0) -> CovarianceValue:
    """``m[S1|S2]``: the covariance with every matrix equal to the identity."""
    ident = DeterministicMatrix.identity(1)
    a = Chain.build(list(zs1), [ident] * len(zs1))
    b = Chain.build(list(zs2), [ident] * len(zs2))
    return covariance_m(a, b, kappa4)


def _base_pair(s: complex, t: complex) -> Tuple[complex, complex]:
    ps, pt = stieltjes(s), stieltjes(t)
    prod = ps.m * pt.m
    gue = ps.m_prime * pt.m_prime / (1.0 - prod) ** 2
    kap = 2.0 * ps.m * ps.m_prime * pt.m * pt.m_prime
    return gue, kap


def scalar_cov_closed_form(zs1: Sequence[PointLike], zs2: Sequence[PointLike], kappa4: float = 0.0) -> CovarianceValue:
    """Lagrange-type sum over ``(s, t)`` of ``m[s|t]`` for distinct points in each set.

    The weight of ``(s, t)`` is ``prod_{i != s} 1/(z_s - z_i) * prod_{j != t} 1/(z_t - z_j)``,
    the Newton divided-difference orientation; ``m[s|t]`` carries both the GUE
    part and the ``kappa4`` part ``2 m_s m_s' m_t m_t'``.
    """
    z1 = [_as_complex(z) for z in zs1]
    z2 = [_as_complex(z) for z in zs2]
    gue = kap = 0j
    for s_idx, s in enumerate(z1):
        ws = 1.0
        for i, zi in enumerate(z1):
            if i != s_idx:
                ws /= s - zi
        for t_idx, t in enumerate(z2):
            wt = 1.0
            for j, zj in enumerate(z2):
                if j != t_idx:
                    wt /= t - zj
            g, c = _base_pair(s, t)
            gue += ws * wt * g
            kap += ws * wt * c
    return CovarianceValue.from_parts(gue, kap, kappa4)


def kk1_closed_form(z1: PointLike, a1: DeterministicMatrix, z2: PointLike, a2: DeterministicMatrix,
                    kappa4: float) -> CovarianceValue:
    """Explicit ``k = l = 1`` covariance in terms of traces of ``A_1, A_2``."""
    p1, p2 = stieltjes(z1), stieltjes(z2)
    m1, m2, d1, d2 = p1.m, p2.m, p1.m_prime, p2.m_prime
    e1, e2 = a1.dense(), a2.dense()
    t12 = complex(np.trace(e1 @ e2) / a1.n)
    diag12 = complex(np.mean(np.diagonal(e1) * np.diagonal(e2)))
    t1, t2 = a1.trace(), a2.trace()
    prod = m1 * m2
    gue = t12 * prod ** 2 / (1 - prod) + t1 * t2 * (d1 * d2 / (1 - prod) ** 2 - prod ** 2 / (1 - prod))
    kap = diag12 * prod ** 3 + t1 * t2 * (2 * m1 * d1 * m2 * d2 - prod ** 3)
    return CovarianceValue.from_parts(gue, kap, kappa4)


def size_bound_exponents(k: int, l: int, a: int, b: int) -> Tuple[int, int]:
    """Exponents of ``1/eta_*`` bounding ``|m_GUE|`` and ``|m_kappa|``."""
    g = k + l - math.ceil((a + b) / 2)
    return max(g, 0), max(g - 1, 0)


# ---------------------------------------------------------------------------
# kernel and integral representation
# ---------------------------------------------------------------------------

def kernel_u(x, y):
    """Logarithmic kernel on ``(-2, 2)^2``.

    With ``a = sqrt(4 - x^2)`` and ``b = sqrt(4 - y^2)``,
    ``u = (1/(4 pi^2)) log[(a + b)^2 (xy + 4 - ab) / ((a - b)^2 (xy + 4 + ab))]``.
    It is symmetric, nonnegative and logarithmically singular on ``x = y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = np.sqrt(np.clip(4 - x * x, 0, None))
    b = np.sqrt(np.clip(4 - y * y, 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log((a + b) ** 2 * (x * y + 4 - a * b) / ((a - b) ** 2 * (x * y + 4 + a * b))) / (4 * np.pi ** 2)
    return out if out.ndim else float(out)


def kernel_u_angles(theta, phi):
    """``kernel_u`` in angles ``x = 2 cos theta``, ``y = 2 cos phi``.

    Equal to ``(1/(2 pi^2)) log|sin((theta + phi)/2) / sin((theta - phi)/2)|``,
    which stays accurate next to the diagonal.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(np.abs(np.sin((theta + phi) / 2) / np.sin((theta - phi) / 2))) / (2 * np.pi ** 2)
    return out if out.ndim else float(out)


def kernel_w_form(x: float, y: float) -> float:
    """Kernel written as a ``w``-integral over ``(0, 1)``.

    ``sqrt(4-x^2) sqrt(4-y^2) / pi^2 * int_0^1 (1 - w^2) / (w^2 (x-y)^2 - w x y (1-w)^2 + (1-w^2)^2) dw``.
    This evaluates to exactly ``4 * kernel_u(x, y)``.
    """
    def integrand(w):
        return (1 - w * w) / (w * w * (x - y) ** 2 - w * x * y * (1 - w) ** 2 + (1 - w * w) ** 2)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=400)
    return math.sqrt(4 - x * x) * math.sqrt(4 - y * y) / math.pi ** 2 * val


def _divided_resolvent_derivative(x, zs: Sequence[complex]):
    """``d/dx prod_j 1/(x - z_j)``."""
    prod = 1.0
    for z in zs:
        prod = prod / (x - z)
    s = 0.0
    for z in zs:
        s = s + 1.0 / (x - z)
    return -prod * s


def integral_rep_m_gue(zs1: Sequence[PointLike], zs2: Sequence[PointLike],
                       epsabs: float = 1e-9, limit: int = 200) -> complex:
    """``m_GUE[S1|S2] = iint F'(x) G'(y) u(x, y) dx dy`` with ``F = prod_i 1/(x - z_i)``.

    There is no factor ``1/2`` in front: with it the base case
    ``m'(z_1) m'(z_2) / (1 - m_1 m_2)^2`` comes out halved.  The substitution ``x = 2 cos theta`` absorbs the edge square roots and the
    inner integral splits at the diagonal log singularity.
    """
    z1 = [_as_complex(z) for z in zs1]
    z2 = [_as_complex(z) for z in zs2]
    if len(z1) > 3 or len(z2) > 3:
        raise SizeLimit("integral representation supports at most three points per side")
    for z in z1 + z2:
        stieltjes(z)

    def dF(theta, zs):
        x = 2 * math.cos(theta)
        # dx = -2 sin(theta) dtheta; orientation flips the bounds, leaving +2 sin
        return complex(_divided_resolvent_derivative(x, zs)) * 2 * math.sin(theta)

    def inner(theta, part):
        f = dF(theta, z1)

        def g(phi):
            val = f * dF(phi, z2) * kernel_u_angles(theta, phi)
            return val.real if part == 0 else val.imag

        v, e = integrate.quad(g, 0.0, math.pi, points=[theta], limit=limit, epsabs=epsabs / 10)
        return v

    total = 0j
    for part in (0, 1):
        v, e = integrate.quad(lambda th: inner(th, part), 0.0, math.pi, limit=limit, epsabs=epsabs)
        if not math.isfinite(v) or e > 100 * max(epsabs, 1e-15) * max(1.0, abs(v)):
            raise QuadratureFailure(f"double integral error estimate {e:.2e} above tolerance")
        total += v if part == 0 else 1j * v
    return total
