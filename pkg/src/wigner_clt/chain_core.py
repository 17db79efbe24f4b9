"""Deterministic approximation of resolvent chains.

A chain is an ordered list of slots ``(z_j, A_j)`` standing for the product
``G(z_1) A_1 ... G(z_k) A_k``.  The matrix recursion for ``M_[k]`` (which
involves ``A_1, ..., A_{k-1}`` only) and the scalar ``m[T_1..T_k] = <M_[k] A_k>``
live in :class:`EvaluationContext`, which memoizes every sub-chain it touches.

Inside a context, a slot is a pair ``(z, word)`` where ``word`` is a tuple of
registered matrix ids whose ordered product is the deterministic factor; the
empty word is the identity.  Products such as ``A_k A_1`` that appear when a
matrix is rotated across the chain boundary are just concatenated words, so
they are memoized like any other slot.

Matrices are dense ``n x n`` arrays, or 1-D arrays holding a diagonal.  When
every input is diagonal, every ``M`` stays diagonal and all work is ``O(n)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NotTraceless, SizeLimit
from .scalar_semicircle import SpectralPoint, stability_factor, stieltjes

MAX_CHAIN_LENGTH = 8
#: internal recursions (covariance sources) evaluate chains up to this length
MAX_INTERNAL_LENGTH = 12
NORM_BOUND = 10.0
TRACELESS_TOL = 1e-12

KINDS = ("identity", "traceless", "general")


# ---------------------------------------------------------------------------
# dense / diagonal helpers
# ---------------------------------------------------------------------------

def mat_mul(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.ndim == 1 and y.ndim == 1:
        return x * y
    if x.ndim == 1:
        return x[:, None] * y
    if y.ndim == 1:
        return x * y[None, :]
    return x @ y


def mat_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.ndim == y.ndim:
        return x + y
    if x.ndim == 1:
        return np.diag(x) + y
    return x + np.diag(y)


def add_scalar(x: np.ndarray, c: complex) -> np.ndarray:
    """``X + c Id``."""
    if x.ndim == 1:
        return x + c
    out = x.copy()
    out[np.diag_indices_from(out)] += c
    return out


def ntrace(x: np.ndarray) -> complex:
    """Normalized trace ``<X> = Tr X / n``."""
    d = x if x.ndim == 1 else np.diagonal(x)
    return complex(np.mean(d))


def hadamard_trace(x: np.ndarray, y: np.ndarray) -> complex:
    """``<X (.) Y>``, the normalized trace of the entrywise product."""
    dx = x if x.ndim == 1 else np.diagonal(x)
    dy = y if y.ndim == 1 else np.diagonal(y)
    return complex(np.mean(dx * dy))


def ntrace_product(x: np.ndarray, y: np.ndarray) -> complex:
    """``<X Y>`` without forming the product."""
    if x.ndim == 1 or y.ndim == 1:
        return ntrace(mat_mul(x, y))
    return complex(np.einsum("ij,ji->", x, y) / x.shape[0])


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DeterministicMatrix:
    """A deterministic ``n x n`` matrix; ``entries`` may be a 1-D diagonal."""

    entries: np.ndarray
    kind: str = "general"
    label: str = ""

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim == 2 and e.shape[0] != e.shape[1]:
            raise ValueError(f"matrix must be square, got {e.shape}")
        if e.ndim not in (1, 2):
            raise ValueError("entries must be a 1-D diagonal or a 2-D array")
        self.entries = e
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if self.kind == "traceless" and abs(ntrace(e)) >= TRACELESS_TOL:
            raise NotTraceless(f"<A> = {ntrace(e):.3e} for a matrix tagged traceless")
        if self.kind == "identity" and not np.allclose(self.dense(), np.eye(self.n), atol=0, rtol=0):
            raise ValueError("matrix tagged identity differs from the identity")
        if self.operator_norm() > NORM_BOUND:
            raise ValueError(f"operator norm {self.operator_norm():.3g} exceeds {NORM_BOUND}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.entries.ndim == 1

    def dense(self) -> np.ndarray:
        return np.diag(self.entries) if self.is_diagonal else self.entries

    def trace(self) -> complex:
        return ntrace(self.entries)

    def operator_norm(self) -> float:
        if self.is_diagonal:
            return float(np.max(np.abs(self.entries))) if self.n else 0.0
        return float(np.linalg.norm(self.entries, 2))

    def adjoint(self) -> "DeterministicMatrix":
        e = self.entries.conj() if self.is_diagonal else self.entries.conj().T
        return DeterministicMatrix(e, self.kind, self.label + "*")

    def centered(self) -> "DeterministicMatrix":
        e = self.entries - self.trace() if self.is_diagonal else self.entries - self.trace() * np.eye(self.n)
        return DeterministicMatrix(e, "traceless", self.label)

    def kron_identity(self, r: int) -> "DeterministicMatrix":
        """``A (x) I_r``; every deterministic prediction is invariant under this lift."""
        if self.is_diagonal:
            e = np.repeat(self.entries, r)
        else:
            e = np.kron(self.entries, np.eye(r))
        return DeterministicMatrix(e, self.kind, self.label)

    @classmethod
    def identity(cls, n: int) -> "DeterministicMatrix":
        return cls(np.ones(n, dtype=complex), "identity", "Id")

    @classmethod
    def traceless_diag_pm1(cls, n: int, seed: Optional[int] = None) -> "DeterministicMatrix":
        """Diagonal matrix of ``+1``/``-1`` with equal counts (``n`` even)."""
        if n % 2:
            raise ValueError("traceless +-1 diagonal needs even n")
        d = np.array([1.0, -1.0] * (n // 2))
        if seed is not None:
            d = np.random.default_rng(seed).permutation(d)
        return cls(d.astype(complex), "traceless", f"diag_pm1[{seed}]")

    @classmethod
    def hermitian_offdiag(cls, n: int) -> "DeterministicMatrix":
        """Traceless Hermitian matrix with zero diagonal (nearest-neighbour hopping)."""
        a = np.zeros((n, n), dtype=complex)
        idx = np.arange(n - 1)
        a[idx, idx + 1] = 1.0
        a[idx + 1, idx] = 1.0
        if n > 2:
            a[0, n - 1] = a[n - 1, 0] = 1.0
        return cls(a / 2.0, "traceless", "offdiag")


@dataclass
class Chain:
    """Ordered slots ``(spectral point, matrix)`` representing ``G_1 A_1 ... G_k A_k``."""

    items: List[Tuple[SpectralPoint, DeterministicMatrix]]

    def __post_init__(self):
        self.items = [(stieltjes(p), a) for p, a in self.items]
        dims = {a.n for _, a in self.items}
        if len(dims) > 1:
            raise ValueError(f"chain matrices have mismatched dimensions {sorted(dims)}")

    @classmethod
    def build(cls, zs: Sequence[complex], mats: Sequence[DeterministicMatrix]) -> "Chain":
        if len(zs) != len(mats):
            raise ValueError("need one matrix per spectral parameter")
        return cls([(stieltjes(z), a) for z, a in zip(zs, mats)])

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n(self) -> Optional[int]:
        return self.items[0][1].n if self.items else None

    @property
    def traceless_count(self) -> int:
        return sum(1 for _, a in self.items if a.kind == "traceless")

    @property
    def eta_star(self) -> float:
        return min(p.eta for p, _ in self.items)

    def rotate(self, shift: int) -> "Chain":
        s = shift % len(self.items) if self.items else 0
        return Chain(self.items[s:] + self.items[:s])

    def conjugate(self) -> "Chain":
        """Chain with ``(conj z_j, A_j^*)`` in the same order.

        ``<G(z_1)A_1..>`` conjugates to the reversed adjoint product, which is
        not the same as this chain unless ``k <= 2``; the covariance uses
        the unreversed form as the second argument of a variance.
        """
        return Chain([(p.conjugate(), a.adjoint()) for p, a in self.items])

    def adjoint(self) -> "Chain":
        """Chain whose trace is the complex conjugate of this chain's trace."""
        k = len(self.items)
        if k == 0:
            return Chain([])
        zs = [p.conjugate() for p, _ in self.items]
        mats = [a.adjoint() for _, a in self.items]
        # conj <G1 A1 ... Gk Ak> = <Ak* Gk* ... A1* G1*> = <G(k)* A(k-1)* ... G(1)* Ak*>
        new = [(zs[k - 1 - i], mats[k - 2 - i] if i < k - 1 else mats[k - 1]) for i in range(k)]
        return Chain(new)


@dataclass
class MatrixApprox:
    value: np.ndarray

    def dense(self) -> np.ndarray:
        return np.diag(self.value) if self.value.ndim == 1 else self.value


# ---------------------------------------------------------------------------
# evaluation context
# ---------------------------------------------------------------------------

Word = Tuple[int, ...]
Slot = Tuple[complex, Word]


@dataclass
class EvaluationContext:
    """Registry of matrices plus memo tables for ``M``, ``m`` and products.

    A context is not shared between threads; independent contexts can run
    concurrently.
    """

    n: int
    matrices: List[np.ndarray] = field(default_factory=list)
    _words: Dict[Word, np.ndarray] = field(default_factory=dict)
    _ids: Dict[int, int] = field(default_factory=dict)
    _m_memo: Dict[Tuple, np.ndarray] = field(default_factory=dict)
    _scalar_memo: Dict[Tuple, complex] = field(default_factory=dict)
    _word_trace: Dict[Word, complex] = field(default_factory=dict)
    _keep: List[DeterministicMatrix] = field(default_factory=list)
    max_length: int = MAX_INTERNAL_LENGTH

    def __post_init__(self):
        self._words[()] = np.ones(self.n, dtype=complex)

    # -- registry ----------------------------------------------------------
    def register(self, a: DeterministicMatrix) -> Word:
        if a.kind == "identity":
            return ()
        if a.n != self.n:
            raise ValueError(f"matrix of size {a.n} in a context of size {self.n}")
        key = id(a)
        if key not in self._ids:
            self._ids[key] = len(self.matrices)
            self.matrices.append(a.entries)
            self._words[(self._ids[key],)] = a.entries
            # holding a reference keeps id(a) unique for the context lifetime
            self._keep.append(a)
        return (self._ids[key],)

    def slots(self, chain: Chain) -> Tuple[Slot, ...]:
        return tuple((p.z, self.register(a)) for p, a in chain.items)

    def word(self, w: Word) -> np.ndarray:
        got = self._words.get(w)
        if got is None:
            got = mat_mul(self.word(w[:-1]), self._words[(w[-1],)])
            self._words[w] = got
        return got

    def word_trace(self, w: Word) -> complex:
        got = self._word_trace.get(w)
        if got is None:
            if len(w) == 2:
                got = ntrace_product(self.word(w[:1]), self.word(w[1:]))
            else:
                got = ntrace(self.word(w))
            self._word_trace[w] = got
        return got

    # -- recursion ---------------------------------------------------------
    @staticmethod
    def _key(slots: Sequence[Slot]) -> Tuple:
        # the last matrix does not enter M
        return tuple(slots[:-1]) + (slots[-1][0],)

    def M(self, slots: Sequence[Slot]) -> np.ndarray:
        """``M`` of the ordered slots, excluding the last slot's matrix."""
        k = len(slots)
        if k == 0:
            raise ValueError("M of an empty chain is undefined here")
        if k > self.max_length:
            raise SizeLimit(f"chain length {k} exceeds {self.max_length}")
        key = self._key(slots)
        got = self._m_memo.get(key)
        if got is not None:
            return got
        z1 = slots[0][0]
        m1 = stieltjes(z1).m
        if k == 1:
            val = np.full(self.n, m1, dtype=complex)
        else:
            q = stability_factor(z1, slots[-1][0])
            tail = self.M(slots[1:])
            a1 = self.word(slots[0][1])
            a1_tail = mat_mul(a1, tail)
            val = add_scalar(a1_tail, q * ntrace(a1_tail))
            for j in range(2, k):
                left = ntrace(self.M(slots[:j]))
                right = self.M(slots[j - 1:])
                val = mat_add(val, left * add_scalar(right, q * ntrace(right)))
            val = m1 * val
        self._m_memo[key] = val
        return val

    def m(self, slots: Sequence[Slot]) -> complex:
        """Scalar ``<M A_k>`` of the ordered slots."""
        if not slots:
            return 0j
        key = tuple(slots)
        got = self._scalar_memo.get(key)
        if got is None:
            got = ntrace_product(self.M(slots), self.word(slots[-1][1]))
            self._scalar_memo[key] = got
        return got

    def M_times_last(self, slots: Sequence[Slot]) -> np.ndarray:
        return mat_mul(self.M(slots), self.word(slots[-1][1]))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check_length(chain: Chain, cap: int = MAX_CHAIN_LENGTH):
    if not 1 <= len(chain) <= cap:
        raise SizeLimit(f"chain length {len(chain)} outside [1, {cap}]")


def context_for(*chains: Chain) -> EvaluationContext:
    ns = {c.n for c in chains if len(c)}
    if len(ns) > 1:
        raise ValueError(f"chains have mismatched dimensions {sorted(ns)}")
    return EvaluationContext(ns.pop() if ns else 1)


def matrix_m(chain: Chain, ctx: Optional[EvaluationContext] = None) -> MatrixApprox:
    """``M_[k]`` for the chain (uses ``A_1..A_{k-1}``)."""
    _check_length(chain)
    ctx = ctx or context_for(chain)
    return MatrixApprox(ctx.M(ctx.slots(chain)))


def scalar_m(chain: Chain, ctx: Optional[EvaluationContext] = None) -> complex:
    """Deterministic approximation ``<M_[k] A_k>`` of ``E <G_1 A_1 ... G_k A_k>``."""
    _check_length(chain)
    ctx = ctx or context_for(chain)
    return ctx.m(ctx.slots(chain))


def size_bound_exponent(k: int, traceless: int) -> int:
    """Exponent ``k - 1 - ceil(a/2)`` of ``1/eta_*`` in the single-chain size bound."""
    return max(k - 1 - math.ceil(traceless / 2), 0)


# ---------------------------------------------------------------------------
# JSON chain loader
# ---------------------------------------------------------------------------

def parse_complex_entry(text: str) -> complex:
    t = text.strip().replace(" ", "").replace("i", "j")
    if not t:
        raise ValueError("empty matrix entry")
    return complex(t)


def load_matrix_csv(path, center: bool = False) -> Tuple[DeterministicMatrix, complex]:
    """Read a CSV of complex entries ``a+bi``; returns the matrix and its original ``<A>``."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([parse_complex_entry(c) for c in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad entry ({exc})") from None
    a = np.array(rows, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"{path}: matrix must be square, got shape {a.shape}")
    tr = ntrace(a)
    if center:
        a = a - tr * np.eye(a.shape[0])
        kind = "traceless"
    else:
        kind = "traceless" if abs(tr) < TRACELESS_TOL else "general"
    return DeterministicMatrix(a, kind, str(path)), tr


def matrix_from_spec(spec: dict, n: Optional[int], base_dir: Path = Path(".")) -> Tuple[DeterministicMatrix, complex]:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("matrix entry must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "identity":
        if n is None:
            raise ConfigError("identity matrix needs the chain field 'n'")
        return DeterministicMatrix.identity(n), 1.0
    if kind == "traceless_diag_pm1":
        if n is None:
            raise ConfigError("traceless_diag_pm1 needs the chain field 'n'")
        return DeterministicMatrix.traceless_diag_pm1(n, spec.get("seed")), 0.0
    if kind == "file":
        if "path" not in spec:
            raise ConfigError("file matrix needs a 'path' field")
        path = Path(spec["path"])
        if not path.is_absolute():
            path = base_dir / path
        return load_matrix_csv(path, bool(spec.get("center", False)))
    if kind == "hermitian_offdiag":
        if n is None:
            raise ConfigError("hermitian_offdiag needs the chain field 'n'")
        return DeterministicMatrix.hermitian_offdiag(n), 0.0
    if kind == "dense":
        try:
            entries = np.asarray(spec["re"], dtype=float) + 1j * np.asarray(spec.get("im", 0.0), dtype=float)
        except KeyError:
            raise ConfigError("dense matrix needs a 're' field") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"dense matrix entries: {exc}") from None
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise ConfigError(f"dense matrix must be square, got shape {entries.shape}")
        if n is not None and entries.shape[0] != n:
            raise ConfigError(f"dense matrix has dimension {entries.shape[0]}, expected {n}")
        tr = complex(np.trace(entries)) / entries.shape[0]
        if spec.get("center", False):
            return DeterministicMatrix(entries - tr * np.eye(entries.shape[0]), "traceless"), tr
        return DeterministicMatrix(entries, "traceless" if abs(tr) <= TRACELESS_TOL else "general"), tr
    raise ConfigError(f"unknown matrix kind {kind!r}")


def chain_from_json(doc, base_dir: Path = Path(".")) -> Tuple[Chain, List[complex]]:
    """Build a chain from ``{"n": .., "items": [{"z": {"re":..,"im":..}, "A": {...}}, ...]}``.

    Returns the chain and the recorded ``<A_j>`` before any centering.
    """
    if isinstance(doc, (str, Path)):
        path = Path(doc)
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
        base_dir = path.parent
    if not isinstance(doc, dict) or "items" not in doc:
        raise ConfigError("chain document needs an 'items' list")
    n = doc.get("n")
    items, traces = [], []
    for i, item in enumerate(doc["items"]):
        try:
            zspec = item["z"]
            z = complex(float(zspec["re"]), float(zspec["im"]))
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"items[{i}].z must be {{'re': float, 'im': float}}") from None
        if z.imag == 0:
            raise ConfigError(f"items[{i}].z must have nonzero imaginary part")
        try:
            a, tr = matrix_from_spec(item.get("A", {"kind": "identity"}), n, base_dir)
        except ConfigError as exc:
            raise ConfigError(f"items[{i}].A: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"items[{i}].A: {exc}") from None
        items.append((stieltjes(z), a))
        traces.append(tr)
    try:
        return Chain(items), traces
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
