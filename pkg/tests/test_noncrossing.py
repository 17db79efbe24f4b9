import itertools
import math
import threading

import numpy as np
import pytest

from wigner_clt.errors import SizeLimit
from wigner_clt.noncrossing import (
    AnnularPermutation,
    CumulantTable,
    NCPartition,
    annular_kreweras,
    annulus_rotation,
    compose,
    cycles,
    cyclic_key,
    enumerate_annular,
    enumerate_marked_pairs,
    enumerate_ncp,
    first_order_cumulants,
    from_cycles,
    inverse,
    kreweras,
    kreweras_cycles,
    noncrossing_sum,
    second_order_cumulants,
    second_order_moment_sum,
)


def set_partitions(elements):
    if not elements:
        yield []
        return
    first, rest = elements[0], elements[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def crosses(part):
    owner = {x: i for i, b in enumerate(part) for x in b}
    n = len(owner)
    for a, b, c, d in itertools.combinations(range(n), 4):
        if owner[a] == owner[c] != owner[b] == owner[d]:
            return True
    return False


def catalan(n):
    return math.comb(2 * n, n) // (n + 1)


def annular_count(p, q):
    # number of annular non-crossing permutations of a (p, q) annulus
    return round(2 * p * q / (p + q) * math.comb(2 * p - 1, p) * math.comb(2 * q - 1, q))


@pytest.mark.parametrize("n", range(1, 9))
def test_ncp_counts_are_catalan(n):
    assert len(enumerate_ncp(n)) == catalan(n)


@pytest.mark.parametrize("n", [3, 5, 6])
def test_ncp_matches_brute_force(n):
    oracle = {tuple(sorted(tuple(sorted(b)) for b in p)) for p in set_partitions(list(range(n))) if not crosses(p)}
    got = {tuple(sorted(p.blocks)) for p in enumerate_ncp(n)}
    assert got == oracle
    assert len(enumerate_ncp(n)) == len(got)


def test_ncp_size_cap():
    with pytest.raises(SizeLimit):
        enumerate_ncp(11)


def test_invalid_partitions_rejected():
    with pytest.raises(ValueError):
        NCPartition(4, ((0, 2), (1, 3)))
    with pytest.raises(ValueError):
        NCPartition(3, ((0, 1),))


def test_kreweras_examples():
    n = 5
    full = NCPartition(n, (tuple(range(n)),))
    assert kreweras(full) == NCPartition(n, tuple((i,) for i in range(n)))
    singles = NCPartition(3, ((0,), (1,), (2,)))
    assert kreweras(singles) == NCPartition(3, ((0, 1, 2),))


@pytest.mark.parametrize("n", range(1, 7))
def test_kreweras_block_count(n):
    for p in enumerate_ncp(n):
        assert len(p.blocks) + len(kreweras(p).blocks) == n + 1


def test_kreweras_is_bijection():
    for n in range(1, 7):
        images = {kreweras(p).blocks for p in enumerate_ncp(n)}
        assert len(images) == catalan(n)


@pytest.mark.parametrize("k,l", [(k, l) for k in range(1, 6) for l in range(1, 6) if k + l <= 7])
def test_annular_counts(k, l):
    assert len(enumerate_annular(k, l)) == annular_count(k, l)


def test_annular_one_one():
    (p,) = enumerate_annular(1, 1)
    assert p.perm == (1, 0)
    assert annular_kreweras(p) == ((0, 1),)


@pytest.mark.parametrize("k,l", [(k, l) for k in range(1, 6) for l in range(1, 6) if k + l <= 6])
def test_annular_geodesic_identity_and_through_cycle(k, l):
    gamma = annulus_rotation(k, l)
    for p in enumerate_annular(k, l):
        assert len(p.cycles) + len(annular_kreweras(p)) == k + l
        assert any(min(c) < k <= max(c) for c in p.cycles)
        assert compose(p.perm, from_cycles(k + l, annular_kreweras(p))) == gamma


def test_annular_matches_brute_force_two_one():
    gamma = annulus_rotation(2, 1)
    oracle = set()
    for perm in itertools.permutations(range(3)):
        cyc = cycles(perm)
        through = any(min(c) < 2 <= max(c) for c in cyc)
        if through and len(cyc) + len(cycles(compose(inverse(perm), gamma))) == 3:
            oracle.add(perm)
    assert {p.perm for p in enumerate_annular(2, 1)} == oracle


def test_annular_cap():
    with pytest.raises(SizeLimit):
        enumerate_annular(5, 5)


def test_marked_pairs_count():
    for k in range(1, 5):
        for l in range(1, 5):
            expected = sum(len(p.blocks) for p in enumerate_ncp(k)) * sum(len(p.blocks) for p in enumerate_ncp(l))
            assert len(enumerate_marked_pairs(k, l)) == expected


def test_concurrent_enumeration_is_consistent():
    results = []

    def worker():
        results.append(len(enumerate_ncp(9)))

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [catalan(9)] * 4


def test_cyclic_key():
    assert cyclic_key((2, 0, 1)) == (0, 1, 2)
    assert cyclic_key((1, 0, 2)) == (0, 2, 1)


class RandomTable(dict):
    def __init__(self, rng):
        super().__init__()
        self.rng = rng

    def __missing__(self, key):
        v = complex(*self.rng.standard_normal(2))
        self[key] = v
        return v


def test_first_order_small_cases(rng):
    mom = RandomTable(rng)
    t = first_order_cumulants(mom, (0, 1))
    assert t.kappa((0,)) == mom[(0,)]
    assert abs(t.kappa((0, 1)) - (mom[(0, 1)] - mom[(0,)] * mom[(1,)])) < 1e-14


@pytest.mark.parametrize("idx", [(0, 1, 2, 3), (0, 0, 1, 2), (0, 1, 2, 3, 4)])
def test_first_order_round_trip(rng, idx):
    kap = RandomTable(rng)

    def kappa(key):
        return kap[cyclic_key(key)]

    moments = lambda key: noncrossing_sum(key, kappa)
    table = CumulantTable(moments)
    for r in range(1, len(idx) + 1):
        for sub in itertools.combinations(idx, r):
            assert abs(table.kappa(sub) - kappa(sub)) < 1e-12
    assert abs(noncrossing_sum(idx, table.kappa) - moments(idx)) < 1e-12


@pytest.mark.parametrize("idx1,idx2", [((0,), (1,)), ((0, 1), (2,)), ((0, 1), (2, 3)), ((0, 1, 2), (3, 4)), ((0,), (1, 2, 3))])
def test_second_order_round_trip(rng, idx1, idx2):
    kap = RandomTable(rng)
    kap2 = RandomTable(rng)

    def kappa(key):
        return kap[cyclic_key(key)]

    def kappa2(a, b):
        a, b = cyclic_key(a), cyclic_key(b)
        return kap2[tuple(sorted((a, b)))]

    m1 = lambda key: noncrossing_sum(key, kappa)
    m2 = lambda a, b: second_order_moment_sum(a, b, kappa, kappa2)
    table = second_order_cumulants(m1, m2, idx1, idx2)
    assert abs(table.kappa2(idx1, idx2) - kappa2(idx1, idx2)) < 1e-12
    assert abs(table.kappa2(idx2, idx1) - table.kappa2(idx1, idx2)) < 1e-12
    rebuilt = second_order_moment_sum(idx1, idx2, table.kappa, table.kappa2)
    assert abs(rebuilt - m2(idx1, idx2)) < 1e-12


def test_second_order_one_one(rng):
    m1 = RandomTable(rng)
    m2 = {((0,), (1,)): 0.7 - 0.2j}
    table = CumulantTable(m1, lambda a, b: m2[(a, b)])
    expected = m2[((0,), (1,))] - table.kappa((0, 1))
    assert abs(table.kappa2((0,), (1,)) - expected) < 1e-14
