import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from wigner_clt.chain_core import DeterministicMatrix
from wigner_clt.closed_form import TestFunction, sc_moment
from wigner_clt.errors import NotTraceless
from wigner_clt.thermalization import (
    CONTRIBUTING_ANNULAR,
    CONTRIBUTING_MARKED,
    bessel_j1,
    bessel_j1_over_t,
    contributing_structures,
    cross_time_asymptote,
    fit_variance_decay,
    thermal_asymptote,
    thermal_covariance,
    thermal_prediction,
)

from helpers import random_traceless


@given(st.floats(-200.0, 200.0))
def test_bessel_matches_scipy(x):
    assert abs(bessel_j1(x) - special.j1(x)) < 1e-11


@pytest.mark.parametrize("x", [0.0, 1e-8, 11.999, 12.0, 12.001, 30.0, 1e4])
def test_bessel_branch_points(x):
    assert abs(bessel_j1(x) - special.j1(x)) < 1e-12


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 5.0])
def test_bessel_average_matches_semicircle(t):
    assert abs(bessel_j1_over_t(t) - sc_moment([TestFunction.exp_phase(t)])) < 1e-8


def test_bessel_small_t_limit():
    assert bessel_j1_over_t(0.0) == 1.0
    assert abs(bessel_j1_over_t(1e-6) - 1) < 1e-11
    assert abs(bessel_j1_over_t(1.0) - 0.5767248077568736) < 1e-12


def test_bessel_large_t_envelope():
    ts = np.linspace(20, 200, 50)
    assert np.all(np.abs([bessel_j1_over_t(t) for t in ts]) <= 1 / np.sqrt(np.pi) / ts ** 1.5 * 1.1)


@pytest.fixture
def pair(rng):
    return random_traceless(rng, 4, hermitian=True), random_traceless(rng, 4)


def test_leading_term(pair):
    a1, a2 = pair
    pred = thermal_prediction(a1, a2, 2.0)
    expected = np.trace(a1.dense() @ a2.dense()) / 4 * bessel_j1_over_t(2.0) ** 2
    assert abs(pred.leading - expected) < 1e-14


def test_contributing_terms(pair):
    pred = thermal_prediction(*pair, 2.0)
    ann, marked = contributing_structures(pred)
    assert ann == CONTRIBUTING_ANNULAR
    assert marked == CONTRIBUTING_MARKED
    assert pred.nonzero_terms == 10


def test_variance_is_real_and_positive(pair):
    for t in (0.5, 2.0, 6.0):
        val = thermal_covariance(*pair, t, t).total
        assert abs(val.imag) < 1e-10 and val.real > 0


def test_variance_at_time_zero_vanishes(pair):
    # xi(0) = N <A1 A2> - E N <A1 A2> is deterministic
    assert abs(thermal_prediction(*pair, 0.0).variance) < 1e-10


def test_large_time_decay(pair):
    fit = fit_variance_decay(*pair)
    assert fit.constant < 1.0
    assert max(abs(r) for r in fit.residuals) < 1e-3 * thermal_asymptote(*pair)


def test_cross_time_asymptote(pair):
    a1, a2 = pair
    t1, t2 = 40.0, 41.5
    val = thermal_covariance(a1, a2, t1, t2).total
    ref = cross_time_asymptote(a1, a2, t1, t2)
    assert abs(val - ref) < 1e-3 * thermal_asymptote(a1, a2)
    pred = thermal_prediction(a1, a2, t1, cross_with=[t2])
    assert pred.cross_times[t2] == val


def test_rejects_non_traceless(rng):
    with pytest.raises(NotTraceless):
        thermal_prediction(DeterministicMatrix.identity(3), random_traceless(rng, 3), 1.0)
