"""Closed-form covariance of functional modes for ``kappa4 = 0``.

The covariance of ``N <f_1(W) A_1 ... f_k(W) A_k>`` and the ``l``-mode with
functions ``f_{k+1}, ..`` is a sum over annular non-crossing permutations and
over marked pairs of non-crossing partitions.  Each term multiplies traces of
products of the matrices (over Kreweras blocks) by free cumulants of the
semicircle moment functional ``sc[...]`` and of the cross functional
``sc[...|...]``.

``sc[F|G] = iint F'(x) G'(y) u(x, y) dx dy`` is evaluated spectrally: with
``F(2 cos theta) = c_0/2 + sum c_n cos(n theta)`` one has
``sc[F|G] = (1/4) sum_n n c_n d_n``.  An adaptive two-dimensional quadrature
is kept as a second route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, integrate

from .chain_core import DeterministicMatrix, mat_mul, ntrace
from .covariance_engine import kernel_u_angles
from .errors import ConfigError, QuadratureFailure, SizeLimit
from .noncrossing import (
    CumulantTable,
    enumerate_annular,
    enumerate_marked_pairs,
    annular_kreweras,
    kreweras_cycles,
)
from .scalar_semicircle import semicircle_density, stieltjes

MAX_TOTAL_FUNCTIONS = 7
MOMENT_TOL = 1e-10
MAX_CHEB_NODES = 1 << 18

# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

PROFILES = ("gaussian_bump", "cosine_bump", "exp_phase", "custom", "resolvent", "power", "constant")


@dataclass
class TestFunction:
    """``f(x) = g(N^gamma (x - E))`` for a named base profile ``g``.

    ``g`` and ``g'`` take numpy arrays; ``support`` is the support of ``g``
    when it is compact.
    """

    __test__ = False  # keep pytest from collecting this class

    id: int
    base_profile: str
    g: Callable[[np.ndarray], np.ndarray]
    dg: Callable[[np.ndarray], np.ndarray]
    scale_gamma: float = 0.0
    center_E: float = 0.0
    N: int = 1
    support: Optional[Tuple[float, float]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.base_profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.base_profile!r}")
        if self.scale_gamma < 0:
            raise ConfigError("scale_gamma must be nonnegative")
        if self.scale_gamma > 0 and not -2 < self.center_E < 2:
            raise ConfigError("center_E must lie in (-2, 2) for rescaled functions")

    @property
    def scale(self) -> float:
        return float(self.N) ** self.scale_gamma

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.g(self.scale * (x - self.center_E))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * self.dg(self.scale * (x - self.center_E))

    def x_support(self) -> Optional[Tuple[float, float]]:
        if self.support is None:
            return None
        a, b = self.support
        return self.center_E + a / self.scale, self.center_E + b / self.scale

    def rescaled(self, N: int, gamma: float, E: float) -> "TestFunction":
        return TestFunction(self.id, self.base_profile, self.g, self.dg, gamma, E, N, self.support, dict(self.params))

    # -- constructors ------------------------------------------------------
    @classmethod
    def gaussian_bump(cls, id: int = 0, **scale) -> "TestFunction":
        return cls(id, "gaussian_bump", lambda u: np.exp(-u * u / 2), lambda u: -u * np.exp(-u * u / 2), **scale)

    @classmethod
    def cosine_bump(cls, id: int = 0, **scale) -> "TestFunction":
        """Raised cosine ``(1 + cos(pi u)) / 2`` on ``[-1, 1]``."""
        def g(u):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) <= 1, (1 + np.cos(np.pi * u)) / 2, 0.0)

        def dg(u):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) <= 1, -np.pi * np.sin(np.pi * u) / 2, 0.0)

        return cls(id, "cosine_bump", g, dg, support=(-1.0, 1.0), **scale)

    @classmethod
    def exp_phase(cls, t: float, id: int = 0, **scale) -> "TestFunction":
        return cls(id, "exp_phase", lambda u: np.exp(1j * t * u), lambda u: 1j * t * np.exp(1j * t * u),
                   params={"t": t}, **scale)

    @classmethod
    def resolvent(cls, z: complex, id: int = 0) -> "TestFunction":
        """``1 / (x - z)``; links the functional side to the resolvent recursions."""
        stieltjes(z)
        return cls(id, "resolvent", lambda u: 1.0 / (u - z), lambda u: -1.0 / (u - z) ** 2, params={"z": z})

    @classmethod
    def power(cls, p: int, id: int = 0) -> "TestFunction":
        if p == 0:
            return cls(id, "constant", lambda u: np.ones_like(np.asarray(u, dtype=float)),
                       lambda u: np.zeros_like(np.asarray(u, dtype=float)), params={"p": 0})
        return cls(id, "power", lambda u: np.asarray(u, dtype=float) ** p,
                   lambda u: p * np.asarray(u, dtype=float) ** (p - 1), params={"p": p})

    @classmethod
    def custom(cls, g, dg, id: int = 0, support=None, **scale) -> "TestFunction":
        return cls(id, "custom", g, dg, support=support, **scale)

    @classmethod
    def from_spec(cls, spec: dict, id: int = 0, N: int = 1) -> "TestFunction":
        """Build from ``{"profile": .., "t": .., "gamma": .., "E": ..}``."""
        if not isinstance(spec, dict) or "profile" not in spec:
            raise ConfigError("function entry needs a 'profile' field")
        scale = {"scale_gamma": float(spec.get("gamma", 0.0)), "center_E": float(spec.get("E", 0.0)),
                 "N": int(spec.get("N", N))}
        prof = spec["profile"]
        if prof == "gaussian_bump":
            return cls.gaussian_bump(id, **scale)
        if prof == "cosine_bump":
            return cls.cosine_bump(id, **scale)
        if prof == "exp_phase":
            if "t" not in spec:
                raise ConfigError("exp_phase needs a 't' field")
            return cls.exp_phase(float(spec["t"]), id, **scale)
        if prof == "resolvent":
            return cls.resolvent(complex(float(spec["re"]), float(spec["im"])), id)
        if prof == "power":
            return cls.power(int(spec["p"]), id)
        raise ConfigError(f"unknown or non-serializable profile {prof!r}")


def _product(fs: Sequence[TestFunction], x):
    out = np.ones_like(np.asarray(x, dtype=float), dtype=complex)
    for f in fs:
        out = out * f(x)
    return out


def _product_derivative(fs: Sequence[TestFunction], x):
    """Leibniz rule for ``(prod f)'``."""
    x = np.asarray(x, dtype=float)
    vals = [f(x) for f in fs]
    out = np.zeros_like(x, dtype=complex)
    for i, f in enumerate(fs):
        term = f.derivative(x).astype(complex)
        for j, v in enumerate(vals):
            if j != i:
                term = term * v
        out = out + term
    return out


def _joint_support(fs: Sequence[TestFunction]) -> Tuple[float, float]:
    lo, hi = -2.0, 2.0
    for f in fs:
        s = f.x_support()
        if s is not None:
            lo, hi = max(lo, s[0]), min(hi, s[1])
    return lo, hi


def _breakpoints(fs: Sequence[TestFunction], lo: float, hi: float) -> List[float]:
    pts = set()
    for f in fs:
        s = f.x_support()
        if s is not None:
            pts.update(p for p in s if lo < p < hi)
    return sorted(pts)


# ---------------------------------------------------------------------------
# sc moments
# ---------------------------------------------------------------------------

def _gauss_chebyshev_moment(F: Callable, n: int) -> complex:
    # second-kind Gauss-Chebyshev in theta: int_0^pi h(theta) sin^2 theta
    j = np.arange(1, n + 1)
    theta = j * np.pi / (n + 1)
    w = np.pi / (n + 1) * np.sin(theta) ** 2
    return complex((2 / np.pi) * np.sum(w * F(2 * np.cos(theta))))


def sc_moment(fs: Sequence[TestFunction], tol: float = MOMENT_TOL) -> complex:
    """``int prod_j f_j(x) rho_sc(x) dx``."""
    if not fs:
        raise ValueError("sc_moment needs at least one function")
    compact = any(f.x_support() is not None for f in fs)
    if compact:
        lo, hi = _joint_support(fs)
        if lo >= hi:
            return 0j
        pts = _breakpoints(fs, lo, hi)
        out = 0j
        for part in (np.real, np.imag):
            def h(x):
                return float(part(_product(fs, x) * semicircle_density(x)))
            v, e = integrate.quad(h, lo, hi, points=pts or None, limit=500, epsabs=tol / 4, epsrel=1e-12)
            if e > tol:
                raise QuadratureFailure(f"sc_moment error estimate {e:.2e} above {tol:.1e}")
            out += v if part is np.real else 1j * v
        return out
    F = lambda x: _product(fs, x)  # noqa: E731
    n = 64
    prev = _gauss_chebyshev_moment(F, n)
    while n < MAX_CHEB_NODES:
        n *= 2
        cur = _gauss_chebyshev_moment(F, n)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureFailure(f"sc_moment did not converge with {n} nodes")


# ---------------------------------------------------------------------------
# sc cross terms
# ---------------------------------------------------------------------------

def chebyshev_coefficients(F: Callable, n: int) -> np.ndarray:
    """``c_0..c_n`` with ``F(2 cos theta) = c_0/2 + sum c_k cos(k theta)``."""
    theta = np.pi * np.arange(n + 1) / n
    vals = F(2 * np.cos(theta)).astype(complex)
    c = (fft.dct(vals.real, type=1) + 1j * fft.dct(vals.imag, type=1)) / n
    return c


def _cross_sum(F1: Callable, F2: Callable, n: int) -> complex:
    c, d = chebyshev_coefficients(F1, n), chebyshev_coefficients(F2, n)
    m = n - n // 8
    k = np.arange(m)
    return complex(np.sum(k * c[:m] * d[:m]) / 4)


def sc_cross(fs1: Sequence[TestFunction], fs2: Sequence[TestFunction], method: str = "chebyshev",
             tol: float = 1e-9) -> complex:
    """``iint (prod fs1)'(x) (prod fs2)'(y) u(x, y) dx dy``.

    The Chebyshev route uses ``sum_k k c_k d_k / 4``.  Convergence is judged on
    the series itself, which settles much sooner than the coefficients of a
    profile with limited smoothness (a compactly supported bump, say).
    """
    if not fs1 or not fs2:
        raise ValueError("sc_cross needs nonempty function lists")
    if method == "chebyshev":
        F1, F2 = (lambda x: _product(fs1, x)), (lambda x: _product(fs2, x))
        n = 128
        prev, settled = _cross_sum(F1, F2, n), 0
        while n < MAX_CHEB_NODES:
            n *= 2
            cur = _cross_sum(F1, F2, n)
            # two quiet doublings in a row, so a narrow profile that the
            # coarse grid misses entirely cannot pass as converged
            settled = settled + 1 if abs(cur - prev) < tol * max(1.0, abs(cur)) else 0
            if settled == 2:
                return cur
            prev = cur
        raise QuadratureFailure(f"sc_cross series not resolved with {n} coefficients")
    if method == "quadrature":
        return _sc_cross_quadrature(fs1, fs2, tol=max(tol, 1e-9))
    raise ValueError(f"unknown method {method!r}")


def _sc_cross_quadrature(fs1, fs2, tol: float = 1e-9, limit: int = 200) -> complex:
    """Adaptive 2-D route in angles, split at the diagonal log singularity."""
    def dF(theta, fs):
        x = 2 * np.cos(theta)
        return complex(_product_derivative(fs, x)) * 2 * np.sin(theta)

    def outer(theta, part):
        f = dF(theta, fs1)

        def g(phi):
            v = f * dF(phi, fs2) * kernel_u_angles(theta, phi)
            return v.real if part == 0 else v.imag

        v, _ = integrate.quad(g, 0.0, math.pi, points=[theta], limit=limit, epsabs=tol / 10)
        return v

    out = 0j
    for part in (0, 1):
        v, e = integrate.quad(lambda th: outer(th, part), 0.0, math.pi, limit=limit, epsabs=tol)
        if e > 100 * tol * max(1.0, abs(v)):
            raise QuadratureFailure(f"sc_cross quadrature error estimate {e:.2e}")
        out += v if part == 0 else 1j * v
    return out


def macroscopic_variance_integral(t: float, tol: float = 1e-8) -> float:
    """``(1/(2 pi^2)) iint (1 - cos t(x-y)) / (x-y)^2 (4 - xy) / (sqrt(4-x^2) sqrt(4-y^2))``.

    An independent route to ``sc_cross`` for ``e^{itx}`` against ``e^{-ity}``.
    """
    def integrand(phi, theta):
        x, y = 2 * math.cos(theta), 2 * math.cos(phi)
        d = x - y
        if abs(d) < 1e-7:
            q = t * t / 2
        else:
            q = (1 - math.cos(t * d)) / (d * d)
        # dx dy / (sqrt(4-x^2) sqrt(4-y^2)) = dtheta dphi
        return q * (4 - x * y)

    v, e = integrate.dblquad(integrand, 0, math.pi, 0, math.pi, epsabs=tol, epsrel=1e-10)
    return v / (2 * math.pi ** 2)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class AssemblyTerm:
    kind: str  # "annular" or "marked"
    structure: str
    matrix_factor: complex
    function_factor: complex

    @property
    def value(self) -> complex:
        return self.matrix_factor * self.function_factor


@dataclass
class CovarianceAssembly:
    annular_sum: complex
    marked_sum: complex
    terms: List[AssemblyTerm]

    @property
    def total(self) -> complex:
        return self.annular_sum + self.marked_sum


def _block_trace(mats: Sequence[np.ndarray], cycle: Sequence[int]) -> complex:
    prod = mats[cycle[0]]
    for j in cycle[1:]:
        prod = mat_mul(prod, mats[j])
    return ntrace(prod)


def sc_tables(fs: Sequence[TestFunction]) -> CumulantTable:
    """Cumulant table over labels ``0..len(fs)-1`` driven by ``sc_moment`` and ``sc_cross``."""
    cache1, cache2 = {}, {}

    def moments1(key):
        canon = tuple(sorted(key))
        if canon not in cache1:
            cache1[canon] = sc_moment([fs[i] for i in canon])
        return cache1[canon]

    def moments2(k1, k2):
        canon = tuple(sorted((tuple(sorted(k1)), tuple(sorted(k2)))))
        if canon not in cache2:
            cache2[canon] = sc_cross([fs[i] for i in canon[0]], [fs[i] for i in canon[1]])
        return cache2[canon]

    return CumulantTable(moments1, moments2)


def assemble_covariance(alpha_fs: Sequence[TestFunction], alpha_mats: Sequence[DeterministicMatrix],
                        beta_fs: Sequence[TestFunction], beta_mats: Sequence[DeterministicMatrix],
                        kappa4: float = 0.0, table: Optional[CumulantTable] = None) -> CovarianceAssembly:
    """Limiting ``E xi(alpha) xi(beta)`` (no conjugation) from the combinatorial formula.

    Matrix traces run over Kreweras cycles in cycle order; cumulants of
    annular cycles follow the cycle order of the permutation.
    """
    if kappa4 != 0:
        raise ConfigError("the closed form holds for kappa4 = 0; use covariance_m for kappa4 != 0")
    k, l = len(alpha_fs), len(beta_fs)
    if k != len(alpha_mats) or l != len(beta_mats):
        raise ValueError("need one matrix per function")
    if k == 0 or l == 0:
        return CovarianceAssembly(0j, 0j, [])
    if k + l > MAX_TOTAL_FUNCTIONS:
        raise SizeLimit(f"k + l = {k + l} exceeds {MAX_TOTAL_FUNCTIONS}")
    fs = list(alpha_fs) + list(beta_fs)
    mats = [a.entries for a in list(alpha_mats) + list(beta_mats)]
    table = table or sc_tables(fs)
    terms: List[AssemblyTerm] = []
    annular = 0j
    for p in enumerate_annular(k, l):
        mf = 1.0 + 0j
        for cyc in annular_kreweras(p):
            mf *= _block_trace(mats, cyc)
        ff = 1.0 + 0j
        for cyc in p.cycles:
            ff *= table.kappa(cyc)
        terms.append(AssemblyTerm("annular", str(p), mf, ff))
        annular += mf * ff
    marked = 0j
    for pair in enumerate_marked_pairs(k, l):
        mf = 1.0 + 0j
        for cyc in kreweras_cycles(pair.pi1):
            mf *= _block_trace(mats, cyc)
        for cyc in kreweras_cycles(pair.pi2):
            mf *= _block_trace(mats, tuple(k + i for i in cyc))
        ff = table.kappa2(pair.marked1, tuple(k + i for i in pair.marked2))
        for b in pair.pi1.blocks:
            if b != pair.marked1:
                ff *= table.kappa(b)
        for b in pair.pi2.blocks:
            if b != pair.marked2:
                ff *= table.kappa(tuple(k + i for i in b))
        terms.append(AssemblyTerm("marked", str(pair), mf, ff))
        marked += mf * ff
    return CovarianceAssembly(annular, marked, terms)


# ---------------------------------------------------------------------------
# mesoscopic asymptotics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BulkAsymptotics:
    l2_term: complex
    h_half_term: complex
    rho_E0: float


def _base_product(fs: Sequence[TestFunction]):
    def g(u):
        out = np.ones_like(np.asarray(u, dtype=float), dtype=complex)
        for f in fs:
            out = out * f.g(u)
        return out
    return g


def _base_support(fs: Sequence[TestFunction], default: float = 12.0) -> Tuple[float, float]:
    lo, hi = -default, default
    for f in fs:
        if f.support is not None:
            lo, hi = max(lo, f.support[0]), min(hi, f.support[1])
    return lo, hi


def l2_inner(fs1: Sequence[TestFunction], fs2: Sequence[TestFunction]) -> complex:
    """``int prod g (fs1) * prod g (fs2) du`` over the unscaled profiles (no conjugation)."""
    G1, G2 = _base_product(fs1), _base_product(fs2)
    lo, hi = _base_support(list(fs1) + list(fs2))
    out = 0j
    for part in (np.real, np.imag):
        v, _ = integrate.quad(lambda u: float(part(G1(u) * G2(u))), lo, hi, limit=400, epsabs=1e-12)
        out += v if part is np.real else 1j * v
    return out


def h_half_inner(fs1: Sequence[TestFunction], fs2: Sequence[TestFunction]) -> complex:
    """``iint (F(x)-F(y))/(x-y) * (G(x)-G(y))/(x-y) dx dy`` in difference-quotient form.

    Substituting ``x = y + s`` gives ``2 int_0^inf D(s) / s^2 ds`` with
    ``D(s) = int (F(y+s)-F(y)) (G(y+s)-G(y)) dy``, which is ``O(s^2)`` at 0.
    """
    F, G = _base_product(fs1), _base_product(fs2)
    lo1, hi1 = _base_support(fs1)
    lo2, hi2 = _base_support(fs2)
    lo, hi = min(lo1, lo2), max(hi1, hi2)
    width = hi - lo

    def D(s, part):
        def h(y):
            return float(part((F(y + s) - F(y)) * (G(y + s) - G(y))))
        v, _ = integrate.quad(h, lo - s, hi, limit=400, epsabs=1e-13)
        return v

    pts = [1.0, width] if width > 1.0 else None
    out = 0j
    for part in (np.real, np.imag):
        near, e1 = integrate.quad(lambda s: D(s, part) / (s * s), 0.0, width, limit=400, epsabs=1e-10, points=pts)
        # beyond the joint width the shifted copies no longer overlap: D(s) = int F G + int F G shifted away
        far_const = D(2 * width + 1.0, part)
        far = far_const / width
        out += 2 * (near + far) * (1 if part is np.real else 1j)
    return out


def bulk_asymptotics(fs1: Sequence[TestFunction], fs2: Sequence[TestFunction]) -> BulkAsymptotics:
    """Leading mesoscopic terms for functions sharing one scale and center.

    ``N^gamma sc[fs1, fs2] -> rho(E0) <prod g1, prod g2>_{L^2}`` and
    ``sc[fs1|fs2] -> (1/(4 pi^2)) <prod g1, prod g2>_{H^{1/2}}``.
    """
    all_fs = list(fs1) + list(fs2)
    gammas = {f.scale_gamma for f in all_fs}
    centers = {f.center_E for f in all_fs}
    if len(gammas) != 1 or len(centers) != 1 or gammas.pop() <= 0:
        raise ConfigError("bulk asymptotics need one common gamma > 0 and one common center")
    E0 = centers.pop()
    rho = float(semicircle_density(E0))
    return BulkAsymptotics(rho * l2_inner(fs1, fs2), h_half_inner(fs1, fs2) / (4 * math.pi ** 2), rho)
