"""Fast invariant checks run by ``wigner-clt selftest`` (well under a minute)."""

from __future__ import annotations

import math
from typing import Callable, List, Tuple

import numpy as np

from .chain_core import Chain, DeterministicMatrix, context_for, scalar_m
from .closed_form import TestFunction, assemble_covariance, sc_moment
from .covariance_engine import covariance_m, kk1_closed_form, scalar_cov_closed_form, scalar_cov_m
from .expectation_correction import correction_E, correction_E_closed_form
from .noncrossing import enumerate_annular, enumerate_ncp, kreweras
from .scalar_semicircle import divided_difference_partial_fractions, dyson_residual, iterated_divided_difference, stieltjes
from .thermalization import bessel_j1_over_t

Check = Tuple[str, bool, str]


def _random_matrix(rng, n: int) -> DeterministicMatrix:
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x -= np.trace(x) / n * np.eye(n)
    return DeterministicMatrix(x / np.linalg.norm(x, 2), "traceless")


def _bulk_points(rng, count: int, eta=(0.3, 1.5)) -> List[complex]:
    re = rng.uniform(-1.5, 1.5, count)
    im = rng.uniform(*eta, count) * rng.choice([-1, 1], count)
    return list(re + 1j * im)


def _scalars(rng) -> Tuple[bool, str]:
    err = abs(stieltjes(2j).m - (math.sqrt(2) - 1) * 1j)
    worst = max(dyson_residual(stieltjes(z)) for z in _bulk_points(rng, 200))
    return err < 1e-12 and worst < 1e-12, f"m(2i) error {err:.1e}, Dyson residual {worst:.1e}"


def _divided(rng) -> Tuple[bool, str]:
    zs = _bulk_points(rng, 4)
    a = iterated_divided_difference(zs)
    b = iterated_divided_difference(zs[::-1])
    c = divided_difference_partial_fractions(zs)
    err = max(abs(a - b), abs(a - c))
    return err < 1e-10, f"max deviation {err:.1e}"


def _combinatorics(rng) -> Tuple[bool, str]:
    cat = [len(enumerate_ncp(n)) == math.comb(2 * n, n) // (n + 1) for n in range(1, 7)]
    kr = all(len(p.blocks) + len(kreweras(p).blocks) == n + 1 for n in range(1, 6) for p in enumerate_ncp(n))
    ann = len(enumerate_annular(1, 1)) == 1 and len(enumerate_annular(2, 2)) > 0
    return all(cat) and kr and ann, "Catalan counts, Kreweras block counts, annular enumeration"


def _kk1(rng) -> Tuple[bool, str]:
    worst = 0.0
    for _ in range(10):
        z1, z2 = _bulk_points(rng, 2)
        a1 = DeterministicMatrix(rng.standard_normal((4, 4)) / 4 + 0j)
        a2 = DeterministicMatrix(rng.standard_normal((4, 4)) / 4 + 0j)
        for k4 in (0.0, -1.0):
            r = covariance_m(Chain.build([z1], [a1]), Chain.build([z2], [a2]), k4).total
            worst = max(worst, abs(r - kk1_closed_form(z1, a1, z2, a2, k4).total))
    return worst < 1e-10, f"max deviation {worst:.1e}"


def _cyclicity(rng) -> Tuple[bool, str]:
    n = 4
    mats = [_random_matrix(rng, n) for _ in range(3)]
    zs = _bulk_points(rng, 3)
    ch = Chain.build(zs, mats)
    ctx = context_for(ch)
    base_m, base_e = scalar_m(ch, ctx), correction_E(ch, ctx)
    rot = ch.rotate(1)
    err = max(abs(scalar_m(rot, ctx) - base_m), abs(correction_E(rot, ctx) - base_e))
    other = Chain.build(_bulk_points(rng, 2), [_random_matrix(rng, n) for _ in range(2)])
    c1 = covariance_m(ch, other, -1.0).total
    c2 = covariance_m(other.rotate(1), ch.rotate(2), -1.0).total
    err = max(err, abs(c1 - c2))
    return err < 1e-9, f"max deviation {err:.1e}"


def _scalar_closed_sums(rng) -> Tuple[bool, str]:
    z1, z2 = _bulk_points(rng, 2), _bulk_points(rng, 2)
    e = abs(correction_E(Chain.build(z1, [DeterministicMatrix.identity(1)] * 2)) - correction_E_closed_form(z1))
    a = scalar_cov_m(z1, z2, -1.0).total
    b = scalar_cov_closed_form(z1, z2, -1.0).total
    err = max(e, abs(a - b))
    return err < 1e-9, f"max deviation {err:.1e}"


def _assembly(rng) -> Tuple[bool, str]:
    n = 3
    mats = [_random_matrix(rng, n) for _ in range(3)]
    zs = _bulk_points(rng, 3)
    direct = covariance_m(Chain.build(zs[:2], mats[:2]), Chain.build(zs[2:], mats[2:])).total
    fs = [TestFunction.resolvent(z, id=i) for i, z in enumerate(zs)]
    closed = assemble_covariance(fs[:2], mats[:2], fs[2:], mats[2:]).total
    err = abs(direct - closed)
    return err < 1e-7, f"deviation {err:.1e}"


def _bessel(rng) -> Tuple[bool, str]:
    err = abs(bessel_j1_over_t(1.0) - sc_moment([TestFunction.exp_phase(1.0)]))
    return err < 1e-8 and bessel_j1_over_t(0.0) == 1.0, f"deviation {err:.1e}"


CHECKS: List[Tuple[str, Callable]] = [
    ("scalar semicircle", _scalars),
    ("divided differences", _divided),
    ("non-crossing combinatorics", _combinatorics),
    ("k=l=1 covariance", _kk1),
    ("cyclicity", _cyclicity),
    ("scalar closed sums", _scalar_closed_sums),
    ("closed-form assembly", _assembly),
    ("Bessel average", _bessel),
]


def run_selftest(seed: int = 20240607) -> List[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
