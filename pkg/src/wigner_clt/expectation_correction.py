"""The ``1/N`` correction ``E[T_1..T_k]`` to ``E <G_1 A_1 ... G_k A_k>``.

For a Wigner ensemble with fourth cumulant ``kappa4`` the expectation of a
chain trace is ``m[T] + kappa4 * E[T] / N`` up to smaller errors.  ``E`` is
defined by a linear recursion on shorter chains with a source built from
Hadamard traces ``<X (.) Y>`` of the ``M`` matrices; see
:meth:`ExpectationSolver.E` for the exact index conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from .chain_core import (
    Chain,
    EvaluationContext,
    Slot,
    context_for,
    hadamard_trace,
    mat_mul,
    scalar_m,
)
from .errors import SizeLimit
from .scalar_semicircle import stability_factor, stieltjes

MAX_E_LENGTH = 6

ERROR_ORDER = "O(N^eps / (N * sqrt(N eta_*) * eta_*^(k - a/2)))"


@dataclass
class ExpectationSolver:
    ctx: EvaluationContext
    _memo: Dict[Tuple[Slot, ...], complex] = field(default_factory=dict)

    def E(self, slots: Sequence[Slot]) -> complex:
        """Correction for the ordered slots.

        With ``q = q_{1k}``, ``a_k = <A_k>`` and ``Id`` standing for a bare
        resolvent, ``E[T_1..T_k] / m_1`` is the sum of

        * ``E[T_2..T_{k-1}, G_k A_k A_1] + q a_k E[T_2..T_{k-1}, G_k A_1]``;
        * for ``j < k``: ``E[T_1..T_{j-1}, G_j] * (m[T_j..T_k] + q a_k m[T_j..T_{k-1}, G_k])``;
        * for ``j >= 2``: ``m[T_1..T_{j-1}, G_j] * (E[T_j..T_k] + q a_k E[T_j..T_{k-1}, G_k])``;
        * the Hadamard source over ``r <= s <= t``
          ``<M_[1,r] (.) M_[s,t]> <M_[r,s] (.) M_[t,k] A_k>`` and its twin
          with ``A_k`` dropped, weighted by ``q a_k``.
        """
        slots = tuple(slots)
        k = len(slots)
        if k == 0:
            return 0j
        if k > self.ctx.max_length:
            raise SizeLimit(f"chain length {k} exceeds {self.ctx.max_length}")
        got = self._memo.get(slots)
        if got is not None:
            return got
        ctx = self.ctx
        z1, w1 = slots[0]
        zk, wk = slots[-1]
        m1 = stieltjes(z1).m
        q = stability_factor(z1, zk)
        ak = ctx.word_trace(wk)
        bare_k = (zk, ())

        total = 0j
        if k >= 2:
            mid = slots[1:k - 1]
            total += self.E(mid + ((zk, wk + w1),))
            if ak != 0:
                total += q * ak * self.E(mid + ((zk, w1),))
        for j in range(1, k):
            left = self.E(slots[:j - 1] + ((slots[j - 1][0], ()),))
            if left != 0:
                right = ctx.m(slots[j - 1:])
                if ak != 0:
                    right += q * ak * ctx.m(slots[j - 1:k - 1] + (bare_k,))
                total += left * right
        for j in range(2, k + 1):
            left = ctx.m(slots[:j - 1] + ((slots[j - 1][0], ()),))
            right = self.E(slots[j - 1:])
            if ak != 0:
                right += q * ak * self.E(slots[j - 1:k - 1] + (bare_k,))
            total += left * right
        total += self._source(slots, q, ak)
        total *= m1
        self._memo[slots] = total
        return total

    def _source(self, slots, q, ak) -> complex:
        ctx = self.ctx
        k = len(slots)
        last = ctx.word(slots[-1][1])
        out = 0j
        for r in range(1, k + 1):
            head = ctx.M(slots[:r])
            for s in range(r, k + 1):
                mid = ctx.M(slots[r - 1:s])
                for t in range(s, k + 1):
                    first = hadamard_trace(head, ctx.M(slots[s - 1:t]))
                    if first == 0:
                        continue
                    tail = ctx.M(slots[t - 1:])
                    second = hadamard_trace(mid, mat_mul(tail, last))
                    if ak != 0:
                        second += q * ak * hadamard_trace(mid, tail)
                    out += first * second
        return out


def correction_E_closed_form(zs) -> complex:
    """``sum_j E[G_j] prod_{i != j} 1/(z_j - z_i)`` for distinct points, ``E[G_j] = m_j' m_j^3``."""
    zs = [complex(z) for z in zs]
    total = 0j
    for j, zj in enumerate(zs):
        p = stieltjes(zj)
        term = p.m_prime * p.m ** 3
        for i, zi in enumerate(zs):
            if i != j:
                term /= zj - zi
        total += term
    return total


def correction_E(chain: Chain, ctx: Optional[EvaluationContext] = None) -> complex:
    """The ``kappa4 / N`` coefficient ``E[T_1..T_k]`` of the chain expectation."""
    if len(chain) > MAX_E_LENGTH:
        raise SizeLimit(f"chain length {len(chain)} exceeds {MAX_E_LENGTH}")
    if len(chain) == 0:
        return 0j
    ctx = ctx or context_for(chain)
    return ExpectationSolver(ctx).E(ctx.slots(chain))


@dataclass(frozen=True)
class ExpectationExpansion:
    leading: complex
    correction: complex
    kappa4: float
    N: int
    error_order: str = ERROR_ORDER

    @property
    def predicted(self) -> complex:
        return self.leading + self.kappa4 * self.correction / self.N


def predict_expectation(chain: Chain, N: int, kappa4: float) -> ExpectationExpansion:
    """``m[T] + kappa4 E[T] / N``; the error order is reported, not bounded."""
    if N < 1:
        raise ValueError("N must be positive")
    ctx = context_for(chain)
    lead = scalar_m(chain, ctx)
    corr = correction_E(chain, ctx)
    return ExpectationExpansion(lead, corr, float(kappa4), int(N))
