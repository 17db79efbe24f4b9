import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wigner_clt.chain_core import Chain, DeterministicMatrix
from wigner_clt.covariance_engine import (
    covariance_m,
    integral_rep_m_gue,
    kernel_u,
    kernel_u_angles,
    kernel_w_form,
    kk1_closed_form,
    scalar_cov_closed_form,
    scalar_cov_m,
    size_bound_exponents,
)
from wigner_clt.errors import SizeLimit
from wigner_clt.scalar_semicircle import stieltjes

from helpers import bulk_points, random_chain, random_general, random_traceless


def test_kk1_matches_recursion(rng):
    for _ in range(50):
        z1, z2 = bulk_points(rng, 2)
        a1, a2 = random_general(rng, 4), random_general(rng, 4)
        for k4 in (0.0, -1.0, 0.7):
            rec = covariance_m(Chain.build([z1], [a1]), Chain.build([z2], [a2]), k4)
            ref = kk1_closed_form(z1, a1, z2, a2, k4)
            assert abs(rec.total - ref.total) < 1e-10
            assert abs(rec.kappa_part - ref.kappa_part) < 1e-10


def test_empty_argument_is_zero(rng):
    ch = random_chain(rng, 3)
    assert covariance_m(ch, Chain([]), -1.0).total == 0
    assert covariance_m(Chain([]), ch, -1.0).total == 0


def test_symmetry_and_cyclicity(rng):
    for k, l in [(1, 2), (2, 2), (2, 3), (1, 4)]:
        a, b = random_chain(rng, k, n=3), random_chain(rng, l, n=3)
        base = covariance_m(a, b, -1.0).total
        assert abs(covariance_m(b, a, -1.0).total - base) < 1e-9
        for s in range(k):
            for t in range(l):
                assert abs(covariance_m(a.rotate(s), b.rotate(t), -1.0).total - base) < 1e-9


@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 2 ** 32 - 1))
def test_symmetry_property(k, l, seed):
    rng = np.random.default_rng(seed)
    a, b = random_chain(rng, k, n=2), random_chain(rng, l, n=2)
    x, y = covariance_m(a, b, -1.0).total, covariance_m(b, a, -1.0).total
    assert abs(x - y) < 1e-9 * max(1.0, abs(x))


@pytest.mark.parametrize("k,l", [(1, 1), (2, 1), (2, 2), (3, 2)])
def test_scalar_closed_form(rng, k, l):
    for _ in range(5):
        z1, z2 = bulk_points(rng, k), bulk_points(rng, l)
        for k4 in (0.0, -1.0):
            assert abs(scalar_cov_m(z1, z2, k4).total - scalar_cov_closed_form(z1, z2, k4).total) < 1e-9


def test_trailing_identity_divided_difference(rng):
    za = bulk_points(rng, 3)
    mats = [random_general(rng, 3) for _ in range(2)]
    beta = random_chain(rng, 2, n=3)
    full = covariance_m(Chain.build(za, mats + [DeterministicMatrix.identity(3)]), beta, -1.0).total
    moved = covariance_m(Chain.build([za[2], za[1]], mats), beta, -1.0).total
    dropped = covariance_m(Chain.build(za[:2], mats), beta, -1.0).total
    assert abs(full - (moved - dropped) / (za[2] - za[0])) < 1e-9


def test_conjugate_pair_is_real_positive():
    val = scalar_cov_m([1j], [-1j]).total
    assert abs(val.imag) < 1e-14 and val.real > 0


def test_hermitian_pairing_positivity(rng):
    for _ in range(20):
        a = random_general(rng, 4)
        (z,) = bulk_points(rng, 1)
        alpha = Chain.build([z], [a])
        assert covariance_m(alpha, alpha.conjugate(), -1.0).total.real >= -1e-12


def test_gue_decomposition(rng):
    a, b = random_chain(rng, 2), random_chain(rng, 2)
    v = covariance_m(a, b, 0.0)
    assert v.total == v.gue_part
    w = covariance_m(a, b, -1.0)
    assert w.gue_part == v.gue_part and abs(w.total - (v.gue_part - w.kappa_part)) < 1e-15


def test_length_cap(rng):
    with pytest.raises(SizeLimit):
        covariance_m(random_chain(rng, 4), random_chain(rng, 4))


@pytest.mark.parametrize("eta", [0.5, 0.25, 0.125])
def test_size_bounds(rng, eta):
    for _ in range(10):
        k, l = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        raw = [random_chain(rng, k, n=3), random_chain(rng, l, n=3)]
        ch = [Chain.build([complex(p.z.real, eta * (-1) ** j) for j, (p, _) in enumerate(c.items)],
                          [m for _, m in c.items]) for c in raw]
        v = covariance_m(ch[0], ch[1], 1.0)
        eg, ek = size_bound_exponents(k, l, ch[0].traceless_count, ch[1].traceless_count)
        assert abs(v.gue_part) <= 100 * eta ** (-eg)
        assert abs(v.kappa_part) <= 100 * eta ** (-ek)


def test_kernel_symmetry_and_positivity(rng):
    x = rng.uniform(-1.99, 1.99, 500)
    y = rng.uniform(-1.99, 1.99, 500)
    assert np.max(np.abs(kernel_u(x, y) - kernel_u(y, x))) < 1e-12
    assert np.all(kernel_u(x, y) >= 0)


def test_kernel_angle_form(rng):
    th = rng.uniform(0.05, math.pi - 0.05, 200)
    ph = rng.uniform(0.05, math.pi - 0.05, 200)
    ref = kernel_u(2 * np.cos(th), 2 * np.cos(ph))
    assert np.max(np.abs(kernel_u_angles(th, ph) - ref)) < 1e-9


@pytest.mark.parametrize("x,y", [(0.3, -1.1), (1.5, 1.2), (-0.7, 0.0)])
def test_kernel_w_form(x, y):
    assert abs(kernel_w_form(x, y) - 4 * kernel_u(x, y)) < 1e-9


def test_integral_representation_base_case():
    p1, p2 = stieltjes(2j), stieltjes(3j)
    ref = p1.m_prime * p2.m_prime / (1 - p1.m * p2.m) ** 2
    assert abs(integral_rep_m_gue([2j], [3j]) - ref) < 1e-6
    assert abs(scalar_cov_m([2j], [3j]).gue_part - ref) < 1e-12


def test_integral_representation_two_points():
    z1, z2 = [0.4 + 0.8j, -0.2 - 0.6j], [0.9 + 0.7j]
    assert abs(integral_rep_m_gue(z1, z2) - scalar_cov_m(z1, z2).gue_part) < 1e-6


def test_integral_representation_cap():
    with pytest.raises(SizeLimit):
        integral_rep_m_gue([1j] * 4, [1j])
