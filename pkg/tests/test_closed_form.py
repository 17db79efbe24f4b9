import math

import numpy as np
import pytest
from scipy import special

from wigner_clt.chain_core import Chain, DeterministicMatrix
from wigner_clt.closed_form import (
    TestFunction,
    assemble_covariance,
    bulk_asymptotics,
    h_half_inner,
    l2_inner,
    macroscopic_variance_integral,
    sc_cross,
    sc_moment,
)
from wigner_clt.covariance_engine import covariance_m
from wigner_clt.errors import ConfigError

from helpers import bulk_points, random_general, random_traceless


def test_moment_examples():
    assert abs(sc_moment([TestFunction.power(0)]) - 1) < 1e-10
    assert abs(sc_moment([TestFunction.power(2)]) - 1) < 1e-10
    assert abs(sc_moment([TestFunction.power(2), TestFunction.power(2)]) - 2) < 1e-10
    assert abs(sc_moment([TestFunction.exp_phase(1.0)]) - special.j1(2.0)) < 1e-10


def test_moment_order_symmetry():
    fs = [TestFunction.exp_phase(0.7, id=0), TestFunction.gaussian_bump(id=1), TestFunction.power(3, id=2)]
    assert abs(sc_moment(fs) - sc_moment(fs[::-1])) < 1e-12


def test_moment_of_resolvent_is_m():
    from wigner_clt.scalar_semicircle import stieltjes
    z = 0.3 + 0.8j
    assert abs(sc_moment([TestFunction.resolvent(z)]) - stieltjes(z).m) < 1e-9


def test_cross_of_constants_vanishes():
    assert sc_cross([TestFunction.power(0)], [TestFunction.exp_phase(1.0)]) == 0


def test_cross_matches_macroscopic_integral():
    got = sc_cross([TestFunction.exp_phase(1.0)], [TestFunction.exp_phase(-1.0)])
    assert abs(got - macroscopic_variance_integral(1.0)) < 1e-5


def test_cross_chebyshev_agrees_with_quadrature():
    f1 = [TestFunction.exp_phase(0.8), TestFunction.power(1, id=1)]
    f2 = [TestFunction.gaussian_bump(id=2)]
    a = sc_cross(f1, f2)
    b = sc_cross(f1, f2, method="quadrature")
    assert abs(a - b) < 1e-6


def test_cross_symmetric_and_real():
    f1, f2 = [TestFunction.gaussian_bump()], [TestFunction.power(3, id=1)]
    a, b = sc_cross(f1, f2), sc_cross(f2, f1)
    assert abs(a - b) < 1e-12 and abs(a.imag) < 1e-14


def test_cross_of_x_with_x_is_one():
    # N <W> has variance <1 . 1> = 1 for GUE
    assert abs(sc_cross([TestFunction.power(1)], [TestFunction.power(1)]) - 1) < 1e-10


def test_cross_grows_linearly_in_t():
    ts = np.array([5.0, 10.0, 20.0, 40.0])
    vals = [sc_cross([TestFunction.exp_phase(t)], [TestFunction.exp_phase(-t)]).real for t in ts]
    slope = np.polyfit(np.log(ts), np.log(vals), 1)[0]
    assert 0.8 < slope < 1.2


def test_cross_handles_narrow_compact_bump():
    f = TestFunction.cosine_bump(scale_gamma=0.3, center_E=0.5, N=2 ** 16)
    limit = bulk_asymptotics([f], [f]).h_half_term
    assert abs(sc_cross([f], [f]) - limit) < 5 * (2 ** 16) ** -0.3


def test_unknown_method():
    with pytest.raises(ValueError):
        sc_cross([TestFunction.power(1)], [TestFunction.power(1)], method="bogus")


@pytest.mark.parametrize("k,l", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_assembly_matches_resolvent_recursion(rng, k, l):
    n = 3
    mats = [random_traceless(rng, n) if rng.random() < 0.5 else random_general(rng, n) for _ in range(k + l)]
    zs = bulk_points(rng, k + l)
    fs = [TestFunction.resolvent(z, id=i) for i, z in enumerate(zs)]
    got = assemble_covariance(fs[:k], mats[:k], fs[k:], mats[k:]).total
    ref = covariance_m(Chain.build(zs[:k], mats[:k]), Chain.build(zs[k:], mats[k:])).total
    assert abs(got - ref) < 1e-7


def test_assembly_linear_statistics(rng):
    a, b = random_general(rng, 4), random_general(rng, 4)
    got = assemble_covariance([TestFunction.power(1)], [a], [TestFunction.power(1, id=1)], [b]).total
    assert abs(got - np.trace(a.dense() @ b.dense()) / 4) < 1e-10


def test_assembly_odd_traceless_vanishes(rng):
    a = random_traceless(rng, 4)
    got = assemble_covariance([TestFunction.exp_phase(1.0)], [a],
                              [TestFunction.exp_phase(-1.0, id=1)], [DeterministicMatrix.identity(4)])
    assert abs(got.total) < 1e-12


def test_assembly_terms_add_up(rng):
    mats = [random_traceless(rng, 3) for _ in range(4)]
    fs = [TestFunction.exp_phase(t, id=i) for i, t in enumerate([1.0, -1.0, 0.5, -0.5])]
    res = assemble_covariance(fs[:2], mats[:2], fs[2:], mats[2:])
    assert abs(sum(t.value for t in res.terms) - res.total) < 1e-12
    assert {t.kind for t in res.terms} == {"annular", "marked"}


def test_assembly_gate_and_shapes(rng):
    a = random_general(rng, 2)
    f = TestFunction.power(1)
    with pytest.raises(ConfigError):
        assemble_covariance([f], [a], [f], [a], kappa4=-1.0)
    with pytest.raises(ValueError):
        assemble_covariance([f, f], [a], [f], [a])
    assert assemble_covariance([], [], [f], [a]).total == 0


@pytest.mark.parametrize("maker", [TestFunction.gaussian_bump, TestFunction.cosine_bump])
def test_derivatives_against_finite_differences(maker):
    f = maker(scale_gamma=0.3, center_E=0.2, N=100)
    x = np.linspace(-0.3, 0.7, 11)
    h = 1e-6
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert np.max(np.abs(fd - f.derivative(x))) < 1e-5


def test_rescaled_support():
    f = TestFunction.cosine_bump().rescaled(2 ** 10, 0.3, 0.5)
    lo, hi = f.x_support()
    assert abs((hi - lo) - 2 * 2 ** (-3.0)) < 1e-12 and abs((lo + hi) / 2 - 0.5) < 1e-15


def test_function_spec_errors():
    with pytest.raises(ConfigError):
        TestFunction.from_spec({"t": 1.0})
    with pytest.raises(ConfigError):
        TestFunction.from_spec({"profile": "exp_phase"})
    with pytest.raises(ConfigError):
        TestFunction.from_spec({"profile": "cosine_bump", "gamma": 0.3, "E": 2.5})


def test_l2_and_h_half_oracles():
    bump = [TestFunction.cosine_bump()]
    assert abs(l2_inner(bump, bump) - 0.75) < 1e-10
    gauss = [TestFunction.gaussian_bump()]
    # int |xi| |g^(xi)|^2 d xi with g^ = sqrt(2 pi) exp(-xi^2 / 2)
    assert abs(h_half_inner(gauss, gauss) - 2 * math.pi) < 1e-6


def test_bulk_limits_at_moderate_N():
    N, gamma = 2 ** 10, 0.3
    fs = [TestFunction.gaussian_bump(scale_gamma=gamma, center_E=0.0, N=N)]
    ba = bulk_asymptotics(fs, fs)
    assert abs(N ** gamma * sc_moment(fs + fs) - ba.l2_term) < 5 * N ** -gamma
    assert abs(sc_cross(fs, fs) - ba.h_half_term) < 5 * N ** -gamma


def test_bulk_needs_common_scale():
    a = TestFunction.gaussian_bump(scale_gamma=0.3, N=64)
    b = TestFunction.gaussian_bump(scale_gamma=0.2, N=64, id=1)
    with pytest.raises(ConfigError):
        bulk_asymptotics([a], [b])
