import math

import numpy as np
import pytest
from scipy import linalg

from wigner_clt.chain_core import Chain, DeterministicMatrix
from wigner_clt.closed_form import TestFunction
from wigner_clt.errors import ConfigError, EigendecompositionFailure
from wigner_clt.montecarlo import (
    EnsembleConfig,
    EntryTable,
    Mode,
    SpectralSample,
    chain_statistic,
    collect_samples,
    compare,
    estimate_clt,
    functional_statistic,
    sample_wigner,
    summarize,
    wick_ratio,
)
from wigner_clt.scalar_semicircle import stieltjes

from helpers import bulk_points, random_chain, random_general, random_traceless

TABLE = EntryTable((1, -1, 1j, -1j), (0.25, 0.25, 0.25, 0.25))


def direct_chain(w, chain):
    n = w.shape[0]
    out = np.eye(n, dtype=complex)
    for p, a in chain.items:
        out = out @ np.linalg.inv(w - p.z * np.eye(n)) @ a.dense()
    return np.trace(out) / n


@pytest.mark.parametrize("law", ["gue", "uniform_phase"])
def test_samples_are_hermitian_and_reproducible(law):
    cfg = EnsembleConfig(32, law, seed=7)
    w = sample_wigner(cfg, 3)
    assert np.array_equal(w, w.conj().T)
    assert np.array_equal(w, sample_wigner(cfg, 3))
    assert not np.array_equal(w, sample_wigner(cfg, 4))
    assert not np.array_equal(w, sample_wigner(EnsembleConfig(32, law, seed=8), 3))


def test_entry_laws():
    n = 300
    g = math.sqrt(n) * sample_wigner(EnsembleConfig(n, "gue"), 0)
    off = g[np.triu_indices(n, 1)]
    assert abs(np.mean(np.abs(off) ** 2) - 1) < 0.02
    assert abs(np.mean(off ** 2)) < 0.02
    assert abs(np.mean(np.abs(off) ** 4) - 2) < 0.05
    u = math.sqrt(n) * sample_wigner(EnsembleConfig(n, "uniform_phase"), 0)
    assert np.allclose(np.abs(u[np.triu_indices(n, 1)]), 1.0)
    assert set(np.round(np.diagonal(u).real, 12)) <= {-1.0, 1.0}
    t = math.sqrt(n) * sample_wigner(EnsembleConfig(n, "custom_table", custom_table=TABLE), 0)
    assert set(np.round(t[np.triu_indices(n, 1)], 12)) <= {1, -1, 1j, -1j}


def test_config_validation():
    with pytest.raises(ConfigError):
        EnsembleConfig(0)
    with pytest.raises(ConfigError):
        EnsembleConfig(8, "poisson")
    with pytest.raises(ConfigError):
        EnsembleConfig(8, "gue", kappa4=-1.0)
    with pytest.raises(ConfigError):
        EnsembleConfig(8, "custom_table")
    assert EnsembleConfig(8, "uniform_phase").kappa4 == -1.0
    assert EnsembleConfig(8, "custom_table", custom_table=TABLE).kappa4 == -1.0


@pytest.mark.parametrize("values,probs", [
    ((1, -1), (0.5, 0.4)),
    ((1, 1), (0.5, 0.5)),
    ((2, -2), (0.5, 0.5)),
    ((1, -1), (0.5, 0.5)),
    ((), ()),
])
def test_custom_table_rejected(values, probs):
    with pytest.raises(ConfigError):
        EntryTable(values, probs).validate()


def test_diagonal_test_double_is_exact(rng):
    lam = np.linspace(-1.5, 1.5, 6)
    w = np.diag(lam).astype(complex)
    for k in (1, 2, 3):
        ch = random_chain(rng, k, n=6)
        assert abs(chain_statistic(w, ch) - direct_chain(w, ch)) < 1e-12


def test_chain_statistic_matches_inversion(rng):
    w = sample_wigner(EnsembleConfig(40, "gue", seed=1), 0)
    s = SpectralSample(w)
    for k in (1, 2, 3, 4):
        ch = random_chain(rng, k, n=40)
        assert abs(chain_statistic(s, ch) - direct_chain(w, ch)) < 1e-10
    ident = Chain.build(bulk_points(rng, 3), [DeterministicMatrix.identity(40)] * 3)
    assert abs(chain_statistic(w, ident) - direct_chain(w, ident)) < 1e-10


def test_adjoint_chain_is_conjugate(rng):
    w = sample_wigner(EnsembleConfig(24, "uniform_phase", seed=2), 5)
    ch = random_chain(rng, 3, n=24)
    assert abs(chain_statistic(w, ch.adjoint()) - np.conj(chain_statistic(w, ch))) < 1e-10


def test_functional_statistic(rng):
    n = 20
    w = sample_wigner(EnsembleConfig(n, seed=3), 0)
    ident = DeterministicMatrix.identity(n)
    assert abs(functional_statistic(w, [TestFunction.power(0)], [ident]) - 1) < 1e-12
    a1, a2 = random_traceless(rng, n, hermitian=True), random_general(rng, n)
    t = 1.3
    u = linalg.expm(1j * t * w)
    heisenberg = np.trace(u @ a1.dense() @ u.conj().T @ a2.dense()) / n
    got = functional_statistic(w, [TestFunction.exp_phase(t), TestFunction.exp_phase(-t, id=1)], [a1, a2])
    assert abs(got - heisenberg) < 1e-10


def test_dimension_mismatch(rng):
    w = sample_wigner(EnsembleConfig(8), 0)
    with pytest.raises(ValueError):
        chain_statistic(w, random_chain(rng, 2, n=4))


def test_eigendecomposition_failure_detected():
    w = np.eye(4, dtype=complex)
    w[0, 0] = np.nan
    with pytest.raises(EigendecompositionFailure):
        SpectralSample(w).eigenvalues


def test_failed_samples_are_skipped():
    cfg = EnsembleConfig(8, samples=10)
    calls = []

    def evaluate(s):
        calls.append(1)
        if len(calls) == 4:
            raise EigendecompositionFailure("synthetic")
        return complex(s.eigenvalues.sum())

    values, skipped = collect_samples(cfg, [Mode("m", evaluate)])
    assert values.shape == (9, 1) and skipped == [3]


def test_thread_pool_matches_serial(monkeypatch):
    cfg = EnsembleConfig(16, samples=12, seed=4)
    mode = [Mode.of_chain(Chain.build([0.2 + 1j], [DeterministicMatrix.identity(16)]))]
    serial, _ = collect_samples(cfg, mode, workers=1)
    pooled, _ = collect_samples(cfg, mode, workers=3)
    assert np.array_equal(serial, pooled)


def test_wick_ratio_of_gaussian():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200000) + 1j * rng.standard_normal(200000)
    assert abs(wick_ratio(x - x.mean()) - 1) < 0.02


def test_compare_zero_error():
    assert compare("x", 1.0, 1.0, 0.0).passed
    assert not compare("x", 1.0, 2.0, 0.0).passed


def test_summarize_needs_enough_batches():
    with pytest.raises(ValueError):
        summarize(np.zeros((100, 1)), 4, ["a"], batches=10)
    with pytest.raises(ValueError):
        summarize(np.zeros((30, 1)), 4, ["a"], batches=20)


def test_estimate_requires_samples():
    with pytest.raises(ConfigError):
        estimate_clt(EnsembleConfig(8, samples=100), [])


def test_small_gue_mean_and_variance():
    n = 64
    z = 0.3 + 0.5j
    ident = DeterministicMatrix.identity(n)
    cfg = EnsembleConfig(n, "gue", seed=11, samples=800)
    stats = estimate_clt(cfg, [Chain.build([z], [ident]), Chain.build([np.conj(z)], [ident])])
    assert stats.compare_mean(0, stieltjes(z).m).passed
    # E |N <G(z)> - E|^2 = m'(z) m'(zbar) / (1 - m(z) m(zbar))^2 in the limit
    from wigner_clt.covariance_engine import scalar_cov_m
    pred = scalar_cov_m([z], [np.conj(z)]).total
    assert stats.compare_covariance(0, 0, pred).passed
    assert abs(stats.covariance_with(0, 1) - np.conj(stats.covariance_with(1, 0))) < 1e-9
