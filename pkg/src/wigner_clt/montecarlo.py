"""Sampling Wigner matrices and measuring chain statistics and their fluctuations.

Every sample is reproducible from ``(seed, index)``: the generator is Philox
keyed by the seed with the sample index in the high counter word, so the
streams of distinct samples never overlap and can be drawn in any order.
One eigendecomposition per sample serves all statistics; traces of chains are
evaluated in the eigenbasis with ``B = U^* A U`` cached per matrix.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .chain_core import Chain, DeterministicMatrix
from .closed_form import TestFunction
from .errors import ConfigError, EigendecompositionFailure

log = logging.getLogger(__name__)

ENTRY_LAWS = ("gue", "uniform_phase", "custom_table")
LAW_KAPPA4 = {"gue": 0.0, "uniform_phase": -1.0}
RECONSTRUCTION_TOL = 1e-10
MIN_BATCHES = 20
MIN_SAMPLES = 400
MAX_N = 4096


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntryTable:
    """Discrete off-diagonal law: ``P(chi = values[i]) = probs[i]``."""

    values: Tuple[complex, ...]
    probs: Tuple[float, ...]

    def moments(self) -> Dict[str, complex]:
        v = np.asarray(self.values, dtype=complex)
        p = np.asarray(self.probs, dtype=float)
        return {
            "mean": complex(np.sum(p * v)),
            "abs2": float(np.sum(p * np.abs(v) ** 2)),
            "pseudo": complex(np.sum(p * v * v)),
            "abs4": float(np.sum(p * np.abs(v) ** 4)),
        }

    def kappa4(self) -> float:
        return self.moments()["abs4"] - 2.0

    def validate(self, tol: float = 1e-9):
        if len(self.values) != len(self.probs) or not self.values:
            raise ConfigError("custom_table: values and probs must be non-empty and of equal length")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > tol:
            raise ConfigError("custom_table: probs must be non-negative and sum to 1")
        mo = self.moments()
        if abs(mo["mean"]) > tol:
            raise ConfigError(f"custom_table: mean {mo['mean']} is not 0")
        if abs(mo["abs2"] - 1) > tol:
            raise ConfigError(f"custom_table: E|chi|^2 = {mo['abs2']} is not 1")
        if abs(mo["pseudo"]) > tol:
            raise ConfigError(f"custom_table: E chi^2 = {mo['pseudo']} is not 0")


@dataclass(frozen=True)
class EnsembleConfig:
    N: int
    entry_law: str = "gue"
    kappa4: Optional[float] = None
    seed: int = 0
    samples: int = 1000
    custom_table: Optional[EntryTable] = None

    def __post_init__(self):
        if not (1 <= self.N <= MAX_N):
            raise ConfigError(f"N = {self.N} outside [1, {MAX_N}]")
        if self.entry_law not in ENTRY_LAWS:
            raise ConfigError(f"entry_law must be one of {ENTRY_LAWS}, got {self.entry_law!r}")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.entry_law == "custom_table":
            if self.custom_table is None:
                raise ConfigError("entry_law custom_table needs custom_table")
            self.custom_table.validate()
            expected = self.custom_table.kappa4()
        else:
            expected = LAW_KAPPA4[self.entry_law]
        if self.kappa4 is None:
            object.__setattr__(self, "kappa4", expected)
        elif abs(self.kappa4 - expected) > 1e-9:
            raise ConfigError(f"kappa4 = {self.kappa4} does not match entry_law {self.entry_law} ({expected})")


def _generator(cfg: EnsembleConfig, index: int) -> np.random.Generator:
    bits = np.random.Philox(key=cfg.seed, counter=[0, 0, 0, int(index)])
    return np.random.Generator(bits)


def _offdiagonal(cfg: EnsembleConfig, rng: np.random.Generator, count: int) -> np.ndarray:
    if cfg.entry_law == "gue":
        z = rng.standard_normal((2, count))
        return (z[0] + 1j * z[1]) / math.sqrt(2.0)
    if cfg.entry_law == "uniform_phase":
        return np.exp(2j * math.pi * rng.random(count))
    table = cfg.custom_table
    idx = rng.choice(len(table.values), size=count, p=np.asarray(table.probs))
    return np.asarray(table.values, dtype=complex)[idx]


def _diagonal(cfg: EnsembleConfig, rng: np.random.Generator, count: int) -> np.ndarray:
    if cfg.entry_law == "gue":
        return rng.standard_normal(count)
    return rng.choice(np.array([-1.0, 1.0]), size=count)


def sample_wigner(cfg: EnsembleConfig, index: int) -> np.ndarray:
    """The ``index``-th Hermitian sample ``W = N^{-1/2} X``."""
    n = cfg.N
    rng = _generator(cfg, index)
    iu = np.triu_indices(n, k=1)
    off = _offdiagonal(cfg, rng, len(iu[0]))
    diag = _diagonal(cfg, rng, n)
    w = np.zeros((n, n), dtype=complex)
    w[iu] = off
    w = w + w.conj().T
    w[np.diag_indices(n)] = diag
    return w / math.sqrt(n)


# ---------------------------------------------------------------------------
# spectral evaluation
# ---------------------------------------------------------------------------

class SpectralSample:
    """Eigendecomposition of one sample; eigenvectors are computed on demand."""

    def __init__(self, w: np.ndarray, check: bool = True, probe_seed: int = 0):
        self.w = w
        self.n = w.shape[0]
        self._vals: Optional[np.ndarray] = None
        self._vecs: Optional[np.ndarray] = None
        self._rotated: Dict[int, np.ndarray] = {}
        self._check = check
        self._probe_seed = probe_seed
        self._keep: List[DeterministicMatrix] = []

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._vals is None:
            try:
                self._vals = scipy.linalg.eigvalsh(self.w, check_finite=False, driver="evr")
            except np.linalg.LinAlgError as exc:
                raise EigendecompositionFailure(str(exc)) from None
            if self._check:
                self._verify_moments()
        return self._vals

    def _verify_moments(self, tol: float = RECONSTRUCTION_TOL):
        # first two spectral moments against the entries: an O(N^2) check
        lam = self._vals
        scale = max(np.abs(lam).max(), 1e-300)
        e1 = abs(lam.sum() - np.trace(self.w).real) / self.n
        e2 = abs(np.sum(lam ** 2) - np.sum(np.abs(self.w) ** 2)) / self.n
        if not (e1 <= tol * scale and e2 <= tol * scale ** 2):
            raise EigendecompositionFailure(f"spectral moments off by {e1:.3e}, {e2:.3e}")

    def needs_vectors(self, mats: Sequence[DeterministicMatrix]):
        """Decompose fully up front when any matrix is not the identity."""
        if any(not _is_identity(a) for a in mats):
            self.eigenvectors

    @property
    def eigenvectors(self) -> np.ndarray:
        if self._vecs is None:
            try:
                vals, vecs = scipy.linalg.eigh(self.w, check_finite=False, driver="evr")
            except np.linalg.LinAlgError as exc:
                raise EigendecompositionFailure(str(exc)) from None
            self._vals, self._vecs = vals, vecs
            if self._check:
                self.verify()
        return self._vecs

    def verify(self, tol: float = RECONSTRUCTION_TOL):
        """Probe ``W v`` against ``U Lambda U^* v`` for two random vectors.

        The probes cost ``O(N^2)`` and detect a reconstruction error of the
        size of ``tol * ||W||`` with overwhelming probability.
        """
        u, lam = self._vecs, self._vals
        rng = np.random.default_rng(self._probe_seed)
        v = rng.standard_normal((self.n, 2)) + 1j * rng.standard_normal((self.n, 2))
        v /= np.linalg.norm(v, axis=0)
        err = np.linalg.norm(self.w @ v - u @ (lam[:, None] * (u.conj().T @ v)), axis=0).max()
        scale = max(np.abs(lam).max(), 1e-300)
        if not err <= tol * scale:
            raise EigendecompositionFailure(f"reconstruction error {err:.3e} exceeds {tol:.1e} * ||W||")

    def rotated(self, a: DeterministicMatrix) -> np.ndarray:
        """``U^* A U`` cached by matrix identity."""
        key = id(a)
        got = self._rotated.get(key)
        if got is None:
            u = self.eigenvectors
            if a.is_diagonal:
                got = (u.conj().T * a.entries) @ u
            else:
                got = u.conj().T @ (a.entries @ u)
            self._rotated[key] = got
            self._keep.append(a)  # ids stay unique while the matrix is referenced
        return got

    def rotated_diagonal(self, a: DeterministicMatrix) -> np.ndarray:
        """Diagonal of ``U^* A U`` without forming the full product when ``A`` is diagonal."""
        if id(a) in self._rotated:
            return np.diagonal(self._rotated[id(a)])
        u = self.eigenvectors
        if a.is_diagonal:
            return np.einsum("ji,j,ji->i", u.conj(), a.entries, u)
        return np.sum(u.conj() * (a.entries @ u), axis=0)


def _is_identity(a: DeterministicMatrix) -> bool:
    return a.kind == "identity"


def trace_diag_chain(sample: SpectralSample, pairs: Sequence[Tuple[np.ndarray, DeterministicMatrix]]) -> complex:
    """``<D_1 A_1 ... D_k A_k>`` where each ``D_j`` is diagonal in the eigenbasis.

    Identity matrices merge neighbouring diagonals, so chains whose matrices
    are all the identity need only the eigenvalues.
    """
    k = len(pairs)
    if k == 0:
        return 1.0 + 0j
    n = sample.n
    # rotate so that the last matrix is not the identity, then merge diagonals
    last = max((j for j in range(k) if not _is_identity(pairs[j][1])), default=None)
    if last is None:
        prod = np.ones(n, dtype=complex)
        for d, _ in pairs:
            prod = prod * d
        return complex(prod.sum() / n)
    pairs = list(pairs[last + 1:]) + list(pairs[:last + 1])
    segs: List[Tuple[np.ndarray, DeterministicMatrix]] = []
    acc = np.ones(n, dtype=complex)
    for d, a in pairs:
        acc = acc * d
        if not _is_identity(a):
            segs.append((acc, a))
            acc = np.ones(n, dtype=complex)
    if len(segs) == 1:
        d, a = segs[0]
        return complex(np.dot(d, sample.rotated_diagonal(a)) / n)
    x = segs[0][0][:, None] * sample.rotated(segs[0][1])
    for d, a in segs[1:-1]:
        x = x @ (d[:, None] * sample.rotated(a))
    d, a = segs[-1]
    y = d[:, None] * sample.rotated(a)
    return complex(np.sum(x * y.T) / n)


def _as_sample(w: Union[np.ndarray, SpectralSample]) -> SpectralSample:
    return w if isinstance(w, SpectralSample) else SpectralSample(np.asarray(w))


def chain_statistic(w: Union[np.ndarray, SpectralSample], chain: Chain) -> complex:
    """``<G(z_1) A_1 ... G(z_k) A_k>`` from the eigendecomposition of ``w``."""
    s = _as_sample(w)
    if chain.n is not None and chain.n != s.n:
        raise ValueError(f"chain dimension {chain.n} does not match sample dimension {s.n}")
    s.needs_vectors([a for _, a in chain.items])
    lam = s.eigenvalues
    pairs = [(1.0 / (lam - p.z), a) for p, a in chain.items]
    return trace_diag_chain(s, pairs)


def functional_statistic(w: Union[np.ndarray, SpectralSample], fs: Sequence[TestFunction],
                         mats: Sequence[DeterministicMatrix]) -> complex:
    """``<f_1(W) A_1 ... f_k(W) A_k>`` with ``f_j(W) = U f_j(Lambda) U^*``."""
    if len(fs) != len(mats):
        raise ValueError("need one matrix per function")
    s = _as_sample(w)
    for a in mats:
        if a.n != s.n:
            raise ValueError(f"matrix dimension {a.n} does not match sample dimension {s.n}")
    s.needs_vectors(mats)
    lam = s.eigenvalues
    pairs = [(np.asarray(f(lam), dtype=complex), a) for f, a in zip(fs, mats)]
    return trace_diag_chain(s, pairs)


# ---------------------------------------------------------------------------
# modes and estimation
# ---------------------------------------------------------------------------

@dataclass
class Mode:
    """A named statistic evaluated on a spectral sample."""

    name: str
    evaluate: Callable[[SpectralSample], complex]

    @classmethod
    def of_chain(cls, chain: Chain, name: str = "") -> "Mode":
        return cls(name or f"chain{len(chain)}", lambda s: chain_statistic(s, chain))

    @classmethod
    def of_functions(cls, fs: Sequence[TestFunction], mats: Sequence[DeterministicMatrix], name: str = "") -> "Mode":
        return cls(name or f"func{len(fs)}", lambda s: functional_statistic(s, fs, mats))


def _to_mode(item, i: int) -> Mode:
    if isinstance(item, Mode):
        return item
    if isinstance(item, Chain):
        return Mode.of_chain(item, f"mode{i}")
    if isinstance(item, tuple) and len(item) == 2:
        return Mode.of_functions(item[0], item[1], f"mode{i}")
    raise TypeError(f"cannot interpret {type(item).__name__} as a mode")


def _evaluate_index(cfg: EnsembleConfig, modes: Sequence[Mode], idx: int,
                    on_sample: Optional[Callable[[int, SpectralSample], None]]):
    s = SpectralSample(sample_wigner(cfg, idx), probe_seed=idx)
    try:
        row = [m.evaluate(s) for m in modes]
        if on_sample is not None:
            on_sample(idx, s)
        return row
    except EigendecompositionFailure as exc:
        log.warning("sample %d skipped: %s", idx, exc)
        return None


def collect_samples(cfg: EnsembleConfig, modes: Sequence[Mode], indices: Optional[Sequence[int]] = None,
                    on_sample: Optional[Callable[[int, SpectralSample], None]] = None,
                    workers: Optional[int] = None) -> Tuple[np.ndarray, List[int]]:
    """Per-sample values, shape ``(samples, modes)``; failed samples are skipped and logged.

    With ``workers > 1`` samples are evaluated on a thread pool; results are
    reassembled in index order so the output does not depend on scheduling.
    """
    indices = list(range(cfg.samples) if indices is None else indices)
    workers = workers or thread_cap() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: _evaluate_index(cfg, modes, i, on_sample), indices))
    else:
        results = [_evaluate_index(cfg, modes, i, on_sample) for i in indices]
    rows = [r for r in results if r is not None]
    skipped = [i for i, r in zip(indices, results) if r is None]
    return np.asarray(rows, dtype=complex).reshape(len(rows), len(modes)), skipped


def _batches(m: int, nb: int) -> List[slice]:
    edges = np.linspace(0, m, nb + 1).astype(int)
    return [slice(edges[i], edges[i + 1]) for i in range(nb)]


def _component_se(batch_values: np.ndarray) -> np.ndarray:
    """Complex array whose real/imaginary parts are the batch-mean standard errors of each component."""
    nb = batch_values.shape[0]
    re = np.std(batch_values.real, axis=0, ddof=1) / math.sqrt(nb)
    im = np.std(batch_values.imag, axis=0, ddof=1) / math.sqrt(nb)
    return re + 1j * im


def wick_ratio(x: np.ndarray) -> float:
    """``E|X|^4 / (2 (E|X|^2)^2 + |E X^2|^2)`` for centred samples ``x``; 1 for complex Gaussians."""
    a2 = np.mean(np.abs(x) ** 2)
    p2 = np.mean(x * x)
    return float(np.mean(np.abs(x) ** 4) / (2 * a2 ** 2 + abs(p2) ** 2))


@dataclass
class Comparison:
    label: str
    estimate: complex
    prediction: complex
    std_error: complex
    z_re: float
    z_im: float
    gate: float

    @property
    def passed(self) -> bool:
        return abs(self.z_re) <= self.gate and abs(self.z_im) <= self.gate

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "estimate": {"re": self.estimate.real, "im": self.estimate.imag},
            "prediction": {"re": self.prediction.real, "im": self.prediction.imag},
            "std_error": {"re": self.std_error.real, "im": self.std_error.imag},
            "z": {"re": self.z_re, "im": self.z_im},
            "gate": self.gate,
            "pass": self.passed,
        }


def _z(est: complex, pred: complex, se: complex) -> Tuple[float, float]:
    def one(d, s):
        if s > 0:
            return d / s
        return 0.0 if abs(d) < 1e-12 else math.inf
    return one(est.real - pred.real, se.real), one(est.imag - pred.imag, se.imag)


def compare(label: str, est: complex, pred: complex, se: complex, gate: float = 3.0) -> Comparison:
    zr, zi = _z(complex(est), complex(pred), complex(se))
    return Comparison(label, complex(est), complex(pred), complex(se), zr, zi, gate)


@dataclass
class SampleStatistics:
    """Moments of the per-sample values of several modes.

    ``covariance[a, b]`` estimates ``E (N X_a)(conj N X_b)`` for the centred
    values ``X``; ``mean_scaled_se`` is the error of ``N * mean``.
    """

    names: List[str]
    N: int
    per_sample_values: np.ndarray
    mean: np.ndarray
    mean_se: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    wick: np.ndarray
    wick_se: np.ndarray
    batches: int
    skipped: List[int] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def centered(self) -> np.ndarray:
        return self.N * (self.per_sample_values - self.mean)

    @property
    def std_errors(self) -> np.ndarray:
        return self.mean_se

    def covariance_with(self, a: int, b: int) -> complex:
        return complex(self.covariance[a, b])

    def compare_mean(self, i: int, pred: complex, gate: float = 3.0) -> Comparison:
        return compare(f"mean[{self.names[i]}]", self.mean[i], pred, self.mean_se[i], gate)

    def compare_scaled_mean(self, i: int, leading: complex, pred: complex, gate: float = 3.0) -> Comparison:
        """``N (mean - leading)`` against ``pred``."""
        est = self.N * (self.mean[i] - leading)
        return compare(f"N(mean-m)[{self.names[i]}]", est, pred, self.N * self.mean_se[i], gate)

    def compare_covariance(self, a: int, b: int, pred: complex, gate: float = 3.0) -> Comparison:
        return compare(f"cov[{self.names[a]},{self.names[b]}]", self.covariance[a, b], pred,
                       self.covariance_se[a, b], gate)

    def compare_wick(self, i: int, gate: float = 4.0) -> Comparison:
        return compare(f"wick[{self.names[i]}]", self.wick[i], 1.0, complex(self.wick_se[i], 0.0), gate)


def summarize(values: np.ndarray, N: int, names: Sequence[str], batches: int = MIN_BATCHES,
              skipped: Sequence[int] = (), elapsed: float = 0.0) -> SampleStatistics:
    """Means, covariances and Wick ratios with batch-means standard errors."""
    values = np.asarray(values, dtype=complex)
    m, p = values.shape
    if batches < MIN_BATCHES:
        raise ValueError(f"at least {MIN_BATCHES} batches are required")
    if m < 2 * batches:
        raise ValueError(f"{m} samples are too few for {batches} batches")
    mean = values.mean(axis=0)
    x = N * (values - mean)
    cov = np.einsum("sa,sb->ab", x, x.conj()) / m
    wick = np.array([wick_ratio(x[:, i]) for i in range(p)])
    bmeans, bcov, bwick = [], [], []
    for sl in _batches(m, batches):
        xb = values[sl]
        bmeans.append(xb.mean(axis=0))
        cb = N * (xb - mean)
        bcov.append(np.einsum("sa,sb->ab", cb, cb.conj()) / cb.shape[0])
        cw = N * (xb - xb.mean(axis=0))
        bwick.append([wick_ratio(cw[:, i]) for i in range(p)])
    mean_se = _component_se(np.asarray(bmeans))
    cov_se = _component_se(np.asarray(bcov))
    wick_se = np.std(np.asarray(bwick), axis=0, ddof=1) / math.sqrt(batches)
    return SampleStatistics(list(names), N, values, mean, mean_se, cov, cov_se, wick, wick_se, batches,
                            list(skipped), elapsed)


def estimate_clt(cfg: EnsembleConfig, chains_or_functions: Sequence, batches: int = MIN_BATCHES,
                 min_samples: int = MIN_SAMPLES) -> SampleStatistics:
    """Sample ``cfg.samples`` matrices and summarize the requested modes."""
    if cfg.samples < min_samples:
        raise ConfigError(f"estimate_clt needs at least {min_samples} samples, got {cfg.samples}")
    modes = [_to_mode(item, i) for i, item in enumerate(chains_or_functions)]
    t0 = time.perf_counter()
    values, skipped = collect_samples(cfg, modes)
    return summarize(values, cfg.N, [m.name for m in modes], batches, skipped, time.perf_counter() - t0)


def thread_cap() -> Optional[int]:
    """Value of ``WIGNER_CLT_THREADS`` if set to a positive integer."""
    raw = os.environ.get("WIGNER_CLT_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"WIGNER_CLT_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("WIGNER_CLT_THREADS must be positive")
    return value
