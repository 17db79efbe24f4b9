"""Shared builders for randomized test inputs."""

import numpy as np

from wigner_clt.chain_core import Chain, DeterministicMatrix


def random_traceless(rng, n, hermitian=False, norm=1.0):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if hermitian:
        x = x + x.conj().T
    x -= np.trace(x) / n * np.eye(n)
    return DeterministicMatrix(norm * x / np.linalg.norm(x, 2), "traceless")


def random_general(rng, n, norm=1.0):
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return DeterministicMatrix(norm * x / np.linalg.norm(x, 2), "general")


def bulk_points(rng, count, eta=(0.3, 1.5), mixed_signs=True, delta=0.5):
    re = rng.uniform(-2 + delta, 2 - delta, count)
    im = rng.uniform(*eta, count)
    if mixed_signs:
        im = im * rng.choice([-1.0, 1.0], count)
    return list(re + 1j * im)


def random_chain(rng, k, n=4, traceless=None):
    """Chain of length ``k``; ``traceless`` picks which slots get traceless matrices (default random)."""
    zs = bulk_points(rng, k)
    mats = []
    for j in range(k):
        tl = rng.random() < 0.5 if traceless is None else j in traceless
        mats.append(random_traceless(rng, n) if tl else random_general(rng, n))
    return Chain.build(zs, mats)
