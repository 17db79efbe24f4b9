"""Non-crossing partitions, annular non-crossing permutations and free cumulants.

Conventions
-----------
Points are 0-based internally and printed 1-based.  Permutations are tuples
``p`` with ``p[i]`` the image of ``i``.  Blocks of a non-crossing partition are
read as increasing cycles.  The Kreweras complement of ``pi`` is the
permutation ``pi^{-1} o gamma`` (apply ``gamma`` first), where ``gamma`` is
the rotation ``(0 1 ... n-1)`` on a disc and ``(0 ... k-1)(k ... k+l-1)`` on
the ``(k, l)`` annulus, both circles carrying the same orientation.

Cumulant tables are keyed by index tuples rotated to start at their smallest
entry.  Free cumulants of commuting functions are cyclic but not fully
symmetric, so tuples keep their cyclic order.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Mapping, Sequence, Tuple, Union

from .errors import SizeLimit

MAX_NCP_SIZE = 10
MAX_ANNULUS_SIZE = 9

_cache_lock = threading.Lock()


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------

def cycles(perm: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    """Cycle decomposition, each cycle starting at its smallest element."""
    seen = [False] * len(perm)
    out = []
    for start in range(len(perm)):
        if seen[start]:
            continue
        cyc = []
        i = start
        while not seen[i]:
            seen[i] = True
            cyc.append(i)
            i = perm[i]
        out.append(tuple(cyc))
    return tuple(out)


def from_cycles(n: int, cycs: Sequence[Sequence[int]]) -> Tuple[int, ...]:
    perm = list(range(n))
    for cyc in cycs:
        for a, b in zip(cyc, tuple(cyc[1:]) + (cyc[0],)):
            perm[a] = b
    return tuple(perm)


def inverse(perm: Sequence[int]) -> Tuple[int, ...]:
    inv = [0] * len(perm)
    for i, j in enumerate(perm):
        inv[j] = i
    return tuple(inv)


def compose(p: Sequence[int], q: Sequence[int]) -> Tuple[int, ...]:
    """``p o q``: apply ``q`` first."""
    return tuple(p[q[i]] for i in range(len(q)))


def disc_rotation(n: int) -> Tuple[int, ...]:
    return tuple((i + 1) % n for i in range(n))


def annulus_rotation(k: int, l: int) -> Tuple[int, ...]:
    outer = [(i + 1) % k for i in range(k)]
    inner = [k + (i + 1) % l for i in range(l)]
    return tuple(outer + inner)


def format_cycles(cycs: Sequence[Sequence[int]]) -> str:
    return "".join("(" + " ".join(str(i + 1) for i in c) + ")" for c in cycs)


# ---------------------------------------------------------------------------
# non-crossing partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NCPartition:
    n: int
    blocks: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        flat = sorted(i for b in self.blocks for i in b)
        if flat != list(range(self.n)):
            raise ValueError(f"blocks {self.blocks} do not partition [{self.n}]")
        if any(list(b) != sorted(b) or not b for b in self.blocks):
            raise ValueError("blocks must be nonempty and increasing")
        if is_crossing(self.blocks):
            raise ValueError(f"blocks {self.blocks} are crossing")

    def as_permutation(self) -> Tuple[int, ...]:
        return from_cycles(self.n, self.blocks)

    def __str__(self) -> str:
        return format_cycles(self.blocks)


def is_crossing(blocks: Sequence[Sequence[int]]) -> bool:
    """True if some ``a < b < c < d`` has ``a, c`` and ``b, d`` in different blocks."""
    label = {}
    for idx, b in enumerate(blocks):
        for i in b:
            label[i] = idx
    pts = sorted(label)
    for a, b, c, d in itertools.combinations(pts, 4):
        if label[a] == label[c] and label[b] == label[d] and label[a] != label[b]:
            return True
    return False


def _generate_nc(elements: Tuple[int, ...]) -> Iterator[List[Tuple[int, ...]]]:
    if not elements:
        yield []
        return

    def extend(block, remaining):
        for rest in _generate_nc(remaining):
            yield [block] + rest
        for idx in range(len(remaining)):
            for inner in _generate_nc(remaining[:idx]):
                for rest in extend(block + (remaining[idx],), remaining[idx + 1:]):
                    yield inner + rest

    yield from extend((elements[0],), elements[1:])


@lru_cache(maxsize=None)
def _ncp_cached(n: int) -> Tuple[NCPartition, ...]:
    parts = []
    for blocks in _generate_nc(tuple(range(n))):
        parts.append(NCPartition(n, tuple(sorted(blocks))))
    parts.sort(key=lambda p: (len(p.blocks), p.blocks))
    return tuple(parts)


def enumerate_ncp(n: int) -> Tuple[NCPartition, ...]:
    """All non-crossing partitions of ``n`` points, deterministic order."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > MAX_NCP_SIZE:
        raise SizeLimit(f"NCP({n}) exceeds the enumeration cap {MAX_NCP_SIZE}")
    with _cache_lock:
        return _ncp_cached(n)


def kreweras_cycles(p: NCPartition) -> Tuple[Tuple[int, ...], ...]:
    """Cycles of ``pi^{-1} gamma``, each in cycle order."""
    k = compose(inverse(p.as_permutation()), disc_rotation(p.n))
    return cycles(k)


def kreweras(p: NCPartition) -> NCPartition:
    return NCPartition(p.n, tuple(sorted(tuple(sorted(c)) for c in kreweras_cycles(p))))


# ---------------------------------------------------------------------------
# annular non-crossing permutations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnularPermutation:
    k: int
    l: int
    perm: Tuple[int, ...]

    @property
    def cycles(self) -> Tuple[Tuple[int, ...], ...]:
        return cycles(self.perm)

    def __str__(self) -> str:
        return format_cycles(self.cycles)


def _has_through_cycle(perm: Sequence[int], k: int) -> bool:
    return any(min(c) < k <= max(c) for c in cycles(perm))


def is_annular_noncrossing(perm: Sequence[int], k: int, l: int) -> bool:
    """Geodesic test: a through-cycle and ``#(pi) + #(pi^-1 gamma) = k + l``."""
    if len(perm) != k + l or not _has_through_cycle(perm, k):
        return False
    gamma = annulus_rotation(k, l)
    return len(cycles(perm)) + len(cycles(compose(inverse(perm), gamma))) == k + l


@lru_cache(maxsize=None)
def _annular_cached(k: int, l: int) -> Tuple[AnnularPermutation, ...]:
    out = []
    for perm in itertools.permutations(range(k + l)):
        if is_annular_noncrossing(perm, k, l):
            out.append(AnnularPermutation(k, l, perm))
    out.sort(key=lambda a: (len(a.cycles), a.cycles))
    return tuple(out)


def enumerate_annular(k: int, l: int) -> Tuple[AnnularPermutation, ...]:
    """All non-crossing permutations of the ``(k, l)`` annulus."""
    if k < 1 or l < 1:
        raise ValueError("both circles need at least one point")
    if k + l > MAX_ANNULUS_SIZE:
        raise SizeLimit(f"annulus ({k},{l}) exceeds the enumeration cap {MAX_ANNULUS_SIZE}")
    with _cache_lock:
        return _annular_cached(k, l)


def annular_kreweras(p: AnnularPermutation) -> Tuple[Tuple[int, ...], ...]:
    """Cycles of ``pi^{-1} gamma`` on the annulus, each in cycle order."""
    k = compose(inverse(p.perm), annulus_rotation(p.k, p.l))
    return cycles(k)


# ---------------------------------------------------------------------------
# marked partition pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkedPartitionPair:
    pi1: NCPartition
    pi2: NCPartition
    marked1: Tuple[int, ...]
    marked2: Tuple[int, ...]

    def __post_init__(self):
        if self.marked1 not in self.pi1.blocks or self.marked2 not in self.pi2.blocks:
            raise ValueError("marked blocks must belong to their partitions")

    def __str__(self) -> str:
        def fmt(p, mark, offset):
            return "".join(
                ("[" if b == mark else "(") + " ".join(str(i + 1 + offset) for i in b) + ("]" if b == mark else ")")
                for b in p.blocks
            )
        return fmt(self.pi1, self.marked1, 0) + " x " + fmt(self.pi2, self.marked2, self.pi1.n)


def enumerate_marked_pairs(k: int, l: int) -> Tuple[MarkedPartitionPair, ...]:
    out = []
    for p1 in enumerate_ncp(k):
        for p2 in enumerate_ncp(l):
            for u1 in p1.blocks:
                for u2 in p2.blocks:
                    out.append(MarkedPartitionPair(p1, p2, u1, u2))
    return tuple(out)


# ---------------------------------------------------------------------------
# moment <-> cumulant inversion
# ---------------------------------------------------------------------------

Key = Tuple[int, ...]
MomentSource = Union[Callable[[Key], complex], Mapping[Key, complex]]


def cyclic_key(indices: Sequence[int]) -> Key:
    """Rotate an index tuple so that it starts at the smallest entry (first occurrence)."""
    t = tuple(indices)
    if not t:
        return t
    best = min(t[i:] + t[:i] for i in range(len(t)))
    return best


def _lookup(source: MomentSource, key: Key) -> complex:
    if callable(source):
        return complex(source(key))
    return complex(source[key])


@dataclass
class CumulantTable:
    """First- and second-order free cumulants computed by recursive subtraction.

    ``moments1(key)`` returns the first-order moment of an index tuple and
    ``moments2(key1, key2)`` the second-order moment of a pair of tuples.
    Keys are cyclic keys (see :func:`cyclic_key`).
    """

    moments1: MomentSource
    moments2: Callable[[Key, Key], complex] = None
    first_order: Dict[Key, complex] = field(default_factory=dict)
    second_order: Dict[Tuple[Key, Key], complex] = field(default_factory=dict)

    def moment(self, idx: Sequence[int]) -> complex:
        return _lookup(self.moments1, cyclic_key(idx))

    def kappa(self, idx: Sequence[int]) -> complex:
        """First-order cumulant ``h_o[idx]``."""
        key = cyclic_key(idx)
        if key in self.first_order:
            return self.first_order[key]
        n = len(key)
        if n > MAX_NCP_SIZE:
            raise SizeLimit(f"cumulant of order {n} exceeds cap")
        total = self.moment(key)
        for p in enumerate_ncp(n):
            if len(p.blocks) == 1:
                continue
            prod = 1.0 + 0j
            for b in p.blocks:
                prod *= self.kappa(tuple(key[i] for i in b))
            total -= prod
        self.first_order[key] = total
        return total

    def moment2(self, idx1: Sequence[int], idx2: Sequence[int]) -> complex:
        return complex(self.moments2(cyclic_key(idx1), cyclic_key(idx2)))

    def kappa2(self, idx1: Sequence[int], idx2: Sequence[int]) -> complex:
        """Second-order cumulant ``h_oo[idx1 | idx2]``."""
        key = (cyclic_key(idx1), cyclic_key(idx2))
        if key in self.second_order:
            return self.second_order[key]
        s1, s2 = key
        total = self.moment2(s1, s2) - annular_sum(s1, s2, self.kappa)
        for pair in enumerate_marked_pairs(len(s1), len(s2)):
            if len(pair.pi1.blocks) == 1 and len(pair.pi2.blocks) == 1:
                continue
            total -= _marked_term(pair, s1, s2, self.kappa, self.kappa2)
        self.second_order[key] = total
        return total


def noncrossing_sum(idx: Sequence[int], kappa: Callable[[Key], complex]) -> complex:
    """``sum_{pi in NCP} prod_B kappa[B]`` over the positions of ``idx``."""
    idx = tuple(idx)
    total = 0j
    for p in enumerate_ncp(len(idx)):
        prod = 1.0 + 0j
        for b in p.blocks:
            prod *= kappa(tuple(idx[i] for i in b))
        total += prod
    return total


def annular_sum(idx1: Sequence[int], idx2: Sequence[int], kappa: Callable[[Key], complex]) -> complex:
    """``sum_{pi annular} prod_{cycles C} kappa[C]`` with cycles read in cycle order."""
    labels = tuple(idx1) + tuple(idx2)
    total = 0j
    for p in enumerate_annular(len(idx1), len(idx2)):
        prod = 1.0 + 0j
        for c in p.cycles:
            prod *= kappa(tuple(labels[i] for i in c))
        total += prod
    return total


def _marked_term(pair: MarkedPartitionPair, idx1, idx2, kappa, kappa2) -> complex:
    prod = kappa2(tuple(idx1[i] for i in pair.marked1), tuple(idx2[i] for i in pair.marked2))
    for b in pair.pi1.blocks:
        if b != pair.marked1:
            prod *= kappa(tuple(idx1[i] for i in b))
    for b in pair.pi2.blocks:
        if b != pair.marked2:
            prod *= kappa(tuple(idx2[i] for i in b))
    return prod


def second_order_moment_sum(idx1, idx2, kappa, kappa2) -> complex:
    """Forward second-order moment-cumulant relation."""
    total = annular_sum(idx1, idx2, kappa)
    for pair in enumerate_marked_pairs(len(idx1), len(idx2)):
        total += _marked_term(pair, tuple(idx1), tuple(idx2), kappa, kappa2)
    return total


def first_order_cumulants(moments: MomentSource, idx: Sequence[int]) -> CumulantTable:
    """Fill a table with every first-order cumulant needed for ``idx``."""
    table = CumulantTable(moments)
    table.kappa(idx)
    return table


def second_order_cumulants(
    moments1: MomentSource,
    moments2: Callable[[Key, Key], complex],
    idx1: Sequence[int],
    idx2: Sequence[int],
) -> CumulantTable:
    table = CumulantTable(moments1, moments2)
    table.kappa2(idx1, idx2)
    return table
