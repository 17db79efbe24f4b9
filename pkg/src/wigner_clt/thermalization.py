"""Heisenberg-evolved overlaps ``<A_1(t) A_2>`` with ``A(t) = e^{itW} A e^{-itW}``.

For traceless ``A_1, A_2`` and ``kappa4 = 0`` the overlap is
``<A_1 A_2> (J_1(2t)/t)^2 + xi(t)/N`` with a centred Gaussian ``xi(t)``.
The variance of ``xi(t)`` is the functional covariance with
``f = (e^{itx}, e^{-itx})`` on ``(A_1, A_2)`` against the same functions on
``(A_1^*, A_2^*)``, since the conjugate overlap is the trace of that chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .chain_core import DeterministicMatrix, mat_mul, ntrace
from .closed_form import CovarianceAssembly, TestFunction, assemble_covariance
from .errors import NotTraceless

SERIES_CUTOFF = 12.0


def _j1_series(x: float) -> float:
    half = x / 2.0
    term = half
    total = term
    k = 0
    while abs(term) > 1e-17 * max(1.0, abs(total)):
        k += 1
        term *= -half * half / (k * (k + 1))
        total += term
    return total


def _j1_hankel(x: float) -> float:
    # Hankel expansion with mu = 4 n^2 = 4; stop at the smallest term.
    mu = 4.0
    p, q = 1.0, 0.0
    term = 1.0
    k = 0
    last = math.inf
    while True:
        k += 1
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) >= last or abs(term) < 1e-17:
            break
        last = abs(term)
        if k % 2:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 else term
    chi = x - 0.75 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def bessel_j1(x: float) -> float:
    """``J_1(x)`` by the ascending series for ``|x| <= 12`` and the Hankel expansion beyond."""
    x = float(x)
    if x < 0:
        return -bessel_j1(-x)
    if x <= SERIES_CUTOFF:
        return _j1_series(x)
    return _j1_hankel(x)


def bessel_j1_over_t(t: float) -> float:
    """``J_1(2t)/t``, the semicircle average of ``e^{itx}``; equals 1 at ``t = 0``."""
    t = float(t)
    if t == 0.0:
        return 1.0
    return bessel_j1(2.0 * t) / t


@dataclass
class ThermalPrediction:
    t: float
    leading: complex
    variance: float
    cross_times: Dict[float, complex] = field(default_factory=dict)
    asymptote: float = 0.0
    assembly: Optional[CovarianceAssembly] = None

    @property
    def nonzero_terms(self) -> int:
        if self.assembly is None:
            return 0
        return sum(1 for term in self.assembly.terms if abs(term.matrix_factor) > 1e-12)


def _check_traceless(a: DeterministicMatrix, name: str):
    tr = a.trace()
    if abs(tr) > 1e-10:
        raise NotTraceless(f"{name} has normalized trace {tr}; thermal fluctuations need <A> = 0")


def _phase_pair(t: float):
    return [TestFunction.exp_phase(t, id=0), TestFunction.exp_phase(-t, id=1)]


def thermal_covariance(A1: DeterministicMatrix, A2: DeterministicMatrix, t1: float, t2: float) -> CovarianceAssembly:
    """Limit of ``E xi(t1) conj(xi(t2))`` as an assembled sum."""
    return assemble_covariance(_phase_pair(t1), [A1, A2], _phase_pair(t2), [A1.adjoint(), A2.adjoint()])


def thermal_prediction(A1: DeterministicMatrix, A2: DeterministicMatrix, t: float,
                       cross_with: Iterable[float] = ()) -> ThermalPrediction:
    """Leading term, variance of ``xi(t)`` and optional cross-time covariances."""
    _check_traceless(A1, "A1")
    _check_traceless(A2, "A2")
    t = float(t)
    b = bessel_j1_over_t(t)
    leading = ntrace(mat_mul(A1.entries, A2.entries)) * b * b
    assembly = thermal_covariance(A1, A2, t, t)
    variance = assembly.total.real
    cross = {float(s): thermal_covariance(A1, A2, t, float(s)).total for s in cross_with}
    return ThermalPrediction(t, leading, variance, cross, thermal_asymptote(A1, A2), assembly)


def thermal_asymptote(A1: DeterministicMatrix, A2: DeterministicMatrix) -> float:
    """Large-``t`` limit ``<|A_1|^2> <|A_2|^2>`` of the variance."""
    n1 = ntrace(mat_mul(A1.adjoint().entries, A1.entries)).real
    n2 = ntrace(mat_mul(A2.adjoint().entries, A2.entries)).real
    return n1 * n2


def cross_time_asymptote(A1: DeterministicMatrix, A2: DeterministicMatrix, t1: float, t2: float) -> float:
    """Leading large-time form of ``E xi(t1) conj(xi(t2))``."""
    b = bessel_j1_over_t(t1 - t2)
    return thermal_asymptote(A1, A2) * b * b


@dataclass(frozen=True)
class DecayFit:
    constant: float
    slope: float
    times: tuple
    residuals: tuple


def fit_variance_decay(A1: DeterministicMatrix, A2: DeterministicMatrix,
                       times: Sequence[float] = tuple(np.linspace(10.0, 80.0, 8))) -> DecayFit:
    """Residual ``Var xi(t) - <|A_1|^2><|A_2|^2>`` over ``times``.

    ``constant`` is ``max t^2 |residual|``; ``slope`` is the least-squares
    log-log slope of the residual envelope.
    """
    limit = thermal_asymptote(A1, A2)
    res = []
    for t in times:
        res.append(thermal_prediction(A1, A2, t).variance - limit)
    ts = np.asarray(times, dtype=float)
    r = np.abs(np.asarray(res))
    const = float(np.max(ts ** 2 * r))
    slope = float(np.polyfit(np.log(ts), np.log(np.maximum(r, 1e-300)), 1)[0])
    return DecayFit(const, slope, tuple(float(t) for t in ts), tuple(float(x) for x in res))


# Structures with a non-vanishing matrix factor for generic traceless A_1, A_2.
CONTRIBUTING_ANNULAR = frozenset({
    "(1 4)(2 3)", "(1 3)(2 4)", "(1)(2 4)(3)", "(1 4)(2)(3)", "(1)(2 3)(4)", "(1 3)(2)(4)",
})
CONTRIBUTING_MARKED = frozenset({
    "[1](2) x [3](4)", "[1](2) x (3)[4]", "(1)[2] x [3](4)", "(1)[2] x (3)[4]",
})


def contributing_structures(pred: ThermalPrediction, tol: float = 1e-12):
    """Annular and marked structures whose matrix factor is non-zero."""
    terms = pred.assembly.terms if pred.assembly else []
    ann = {t.structure for t in terms if t.kind == "annular" and abs(t.matrix_factor) > tol}
    mk = {t.structure for t in terms if t.kind == "marked" and abs(t.matrix_factor) > tol}
    return ann, mk
