"""Command-line interface: ``wigner-clt <subcommand> ...``.

Exit codes: 0 success, 1 validation or input error, 2 failed statistical gate
(``mc-verify`` and ``thermalize`` only).  Outputs are JSON (``"schema": 1``)
or CSV and always carry the run manifest digest.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .chain_core import Chain, DeterministicMatrix, chain_from_json, load_matrix_csv, matrix_from_spec
from .closed_form import TestFunction, assemble_covariance
from .covariance_engine import covariance_m
from .errors import WignerCLTError
from .expectation_correction import predict_expectation
from .montecarlo import (
    EnsembleConfig,
    EntryTable,
    Mode,
    collect_samples,
    summarize,
    thread_cap,
)
from .noncrossing import enumerate_annular, enumerate_marked_pairs, enumerate_ncp

SCHEMA = 1
ETA_FLOOR_FACTOR = 10.0

log = logging.getLogger("wigner_clt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# manifest and serialization
# ---------------------------------------------------------------------------

def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.complexfloating):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cx(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: Optional[int]
    versions: Dict[str, str]
    outputs: List[str] = field(default_factory=list)

    @classmethod
    def create(cls, command: str, config: dict, seed: Optional[int] = None, outputs: Sequence[str] = ()):
        versions = {
            "wigner_clt": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        }
        digest = hashlib.sha256(_canonical({"command": command, "config": config, "seed": seed}).encode()).hexdigest()
        return cls(command, digest, seed, versions, list(outputs))

    @property
    def digest(self) -> str:
        return hashlib.sha256(_canonical(asdict(self)).encode()).hexdigest()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["digest"] = self.digest
        return d


def _emit_json(payload: dict, manifest: RunManifest, out: Optional[str]):
    doc = {"schema": SCHEMA, "manifest": manifest.as_dict()}
    doc.update(payload)
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise WignerCLTError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WignerCLTError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise WignerCLTError(f"{path}: top level must be an object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise WignerCLTError(f"{path}: unsupported schema {schema!r} (expected {SCHEMA})")
    return doc


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def _check_eta_floor(chain: Chain, N: int, where: str):
    floor = ETA_FLOOR_FACTOR / N
    for j, (p, _) in enumerate(chain.items):
        if p.eta < floor:
            raise WignerCLTError(
                f"{where}.items[{j}].z: |Im z| = {p.eta:.3g} is below 10/N = {floor:.3g}; "
                "comparisons need |Im z| >= N^(-1+zeta)")


def lift_matrix(a: DeterministicMatrix, N: int, where: str = "matrix") -> DeterministicMatrix:
    """Return ``a`` at dimension ``N``, lifting ``A -> A (x) I_r`` when ``n`` divides ``N``."""
    if a.n == N:
        return a
    if N % a.n:
        raise WignerCLTError(f"{where}: dimension {a.n} does not divide N = {N}")
    return a.kron_identity(N // a.n)


def lift_chain(chain: Chain, N: int, where: str = "chain") -> Chain:
    return Chain([(p, lift_matrix(a, N, f"{where}.items[{j}].A")) for j, (p, a) in enumerate(chain.items)])


def _function_items(items, n: Optional[int], where: str, base_dir: Path):
    if not isinstance(items, list) or not items:
        raise WignerCLTError(f"{where} must be a non-empty list")
    fs, mats = [], []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "f" not in item:
            raise WignerCLTError(f"{where}[{i}] needs an 'f' field")
        try:
            fs.append(TestFunction.from_spec(item["f"], id=i))
        except (KeyError, TypeError, ValueError) as exc:
            raise WignerCLTError(f"{where}[{i}].f: {exc}") from None
        try:
            a, _ = matrix_from_spec(item.get("A", {"kind": "identity"}), n, base_dir)
        except (WignerCLTError, ValueError) as exc:
            raise WignerCLTError(f"{where}[{i}].A: {exc}") from None
        mats.append(a)
    return fs, mats


def _chain_doc(doc, where: str, base_dir: Path) -> Chain:
    try:
        chain, _ = chain_from_json(doc, base_dir)
    except (WignerCLTError, ValueError) as exc:
        raise WignerCLTError(f"{where}: {exc}") from None
    return chain


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_predict_mean(args) -> int:
    chain = _chain_doc(args.chain, "chain", Path(args.chain).parent)
    exp = predict_expectation(chain, args.N, args.kappa4)
    config = {"chain": _file_digest(Path(args.chain)), "N": args.N, "kappa4": args.kappa4}
    manifest = RunManifest.create("predict-mean", config, outputs=[args.out] if args.out else [])
    _emit_json({
        "leading": _cx(exp.leading),
        "correction": _cx(exp.correction),
        "predicted": _cx(exp.predicted),
        "N": exp.N,
        "kappa4": exp.kappa4,
        "error_order": exp.error_order,
    }, manifest, args.out)
    return 0


def cmd_predict_cov(args) -> int:
    alpha = _chain_doc(args.alpha, "alpha", Path(args.alpha).parent)
    beta = _chain_doc(args.beta, "beta", Path(args.beta).parent)
    if args.conjugate:
        beta = beta.adjoint()
    val = covariance_m(alpha, beta, args.kappa4)
    config = {"alpha": _file_digest(Path(args.alpha)), "beta": _file_digest(Path(args.beta)),
              "kappa4": args.kappa4, "conjugate": args.conjugate}
    manifest = RunManifest.create("predict-cov", config, outputs=[args.out] if args.out else [])
    _emit_json({"total": _cx(val.total), "gue_part": _cx(val.gue_part), "kappa_part": _cx(val.kappa_part),
                "kappa4": val.kappa4}, manifest, args.out)
    return 0


def cmd_predict_funccov(args) -> int:
    doc = _load_json(args.config)
    base = Path(args.config).parent
    n = doc.get("n")
    afs, amats = _function_items(doc.get("alpha"), n, "alpha", base)
    bfs, bmats = _function_items(doc.get("beta"), n, "beta", base)
    kappa4 = float(doc.get("kappa4", 0.0))
    res = assemble_covariance(afs, amats, bfs, bmats, kappa4=kappa4)
    manifest = RunManifest.create("predict-funccov", doc, outputs=[args.out] if args.out else [])
    terms = [{"kind": t.kind, "structure": t.structure, "matrix_factor": _cx(t.matrix_factor),
              "function_factor": _cx(t.function_factor)} for t in res.terms]
    _emit_json({"total": _cx(res.total), "annular_sum": _cx(res.annular_sum), "marked_sum": _cx(res.marked_sum),
                "terms": terms}, manifest, args.out)
    return 0


def _ensemble_from(doc: dict, where: str = "ensemble") -> EnsembleConfig:
    if not isinstance(doc, dict):
        raise WignerCLTError(f"{where} must be an object")
    try:
        table = None
        if "custom_table" in doc:
            t = doc["custom_table"]
            table = EntryTable(tuple(complex(v["re"], v["im"]) for v in t["values"]), tuple(float(p) for p in t["probs"]))
        return EnsembleConfig(N=int(doc["N"]), entry_law=doc.get("entry_law", "gue"),
                              kappa4=doc.get("kappa4"), seed=int(doc.get("seed", 0)),
                              samples=int(doc.get("samples", 1000)), custom_table=table)
    except KeyError as exc:
        raise WignerCLTError(f"{where}.{exc.args[0]} is required") from None
    except (TypeError, ValueError) as exc:
        raise WignerCLTError(f"{where}: {exc}") from None


@dataclass
class _ModeSpec:
    name: str
    kind: str  # "chain" or "functions"
    base_chain: Optional[Chain] = None
    chain: Optional[Chain] = None
    fs: Optional[list] = None
    base_mats: Optional[list] = None
    mats: Optional[list] = None

    def mode(self) -> Mode:
        if self.kind == "chain":
            return Mode.of_chain(self.chain, self.name)
        return Mode.of_functions(self.fs, self.mats, self.name)


def _mode_specs(doc: dict, N: int, base: Path) -> List[_ModeSpec]:
    modes = doc.get("modes")
    if not isinstance(modes, list) or not modes:
        raise WignerCLTError("modes must be a non-empty list")
    out, seen = [], set()
    for i, m in enumerate(modes):
        where = f"modes[{i}]"
        if not isinstance(m, dict):
            raise WignerCLTError(f"{where} must be an object")
        name = str(m.get("name", f"mode{i}"))
        if name in seen:
            raise WignerCLTError(f"{where}.name {name!r} is duplicated")
        seen.add(name)
        if "chain" in m:
            base_chain = _chain_doc(m["chain"], f"{where}.chain", base)
            _check_eta_floor(base_chain, N, f"{where}.chain")
            out.append(_ModeSpec(name, "chain", base_chain, lift_chain(base_chain, N, f"{where}.chain")))
        elif "functions" in m:
            fs, mats = _function_items(m["functions"], m.get("n"), f"{where}.functions", base)
            lifted = [lift_matrix(a, N, f"{where}.functions[{j}].A") for j, a in enumerate(mats)]
            out.append(_ModeSpec(name, "functions", fs=fs, base_mats=mats, mats=lifted))
        else:
            raise WignerCLTError(f"{where} needs a 'chain' or 'functions' field")
    return out


def _auto_predictions(specs: List[_ModeSpec], cfg: EnsembleConfig) -> dict:
    means, covs = [], []
    for s in specs:
        if s.kind == "chain":
            exp = predict_expectation(s.base_chain, cfg.N, cfg.kappa4)
            means.append({"mode": s.name, "value": _cx(exp.predicted)})
    for a in specs:
        for b in specs:
            if a.kind == b.kind == "chain":
                # predictions are invariant under A -> A (x) I, so use the smallest common dimension
                n = math.lcm(a.base_chain.n, b.base_chain.n)
                v = covariance_m(lift_chain(a.base_chain, n), lift_chain(b.base_chain, n).adjoint(), cfg.kappa4).total
            elif a.kind == b.kind == "functions" and cfg.kappa4 == 0:
                n = math.lcm(a.base_mats[0].n, b.base_mats[0].n)
                bf = [TestFunction.custom(lambda x, f=f: np.conj(f(x)), lambda x, f=f: np.conj(f.derivative(x)),
                                          id=j, support=f.x_support()) for j, f in enumerate(b.fs)]
                # conj <f_1 A_1 .. f_l A_l> is the trace of the reversed adjoint product
                l = len(bf)
                rf = [bf[(l - 1 - j) % l] for j in range(l)]
                rm = [lift_matrix(b.base_mats[(l - 2 - j) % l].adjoint(), n) for j in range(l)]
                v = assemble_covariance(a.fs, [lift_matrix(m, n) for m in a.base_mats], rf, rm).total
            else:
                continue
            covs.append({"a": a.name, "b": b.name, "value": _cx(v)})
    return {"means": means, "covariances": covs, "wick": [s.name for s in specs]}


def _parse_cx(v, where: str) -> complex:
    try:
        return complex(float(v["re"]), float(v["im"]))
    except (KeyError, TypeError, ValueError):
        raise WignerCLTError(f"{where} must be {{'re': float, 'im': float}}") from None


def cmd_mc_verify(args) -> int:
    doc = _load_json(args.config)
    base = Path(args.config).parent
    cfg = _ensemble_from(doc.get("ensemble"))
    if args.seed is not None:
        cfg = EnsembleConfig(cfg.N, cfg.entry_law, cfg.kappa4, args.seed, cfg.samples, cfg.custom_table)
    if args.samples is not None:
        cfg = EnsembleConfig(cfg.N, cfg.entry_law, cfg.kappa4, cfg.seed, args.samples, cfg.custom_table)
    gate = float(doc.get("gate", 3.0))
    wick_gate = float(doc.get("wick_gate", 4.0))
    batches = int(doc.get("batches", 20))
    specs = _mode_specs(doc, cfg.N, base)
    if cfg.samples < 2 * batches:
        raise WignerCLTError(f"ensemble.samples = {cfg.samples} is too small for {batches} batches")
    if args.predictions:
        preds = _load_json(args.predictions)
        pred_digest = _file_digest(Path(args.predictions))
    else:
        preds = _auto_predictions(specs, cfg)
        pred_digest = "auto"
    names = [s.name for s in specs]
    index = {n: i for i, n in enumerate(names)}

    def lookup(name, where):
        if name not in index:
            raise WignerCLTError(f"{where}: unknown mode {name!r}")
        return index[name]

    checks = []
    for j, p in enumerate(preds.get("means", [])):
        checks.append(("mean", lookup(p.get("mode"), f"predictions.means[{j}]"), None,
                       _parse_cx(p.get("value"), f"predictions.means[{j}].value")))
    for j, p in enumerate(preds.get("covariances", [])):
        checks.append(("cov", lookup(p.get("a"), f"predictions.covariances[{j}]"),
                       lookup(p.get("b"), f"predictions.covariances[{j}]"),
                       _parse_cx(p.get("value"), f"predictions.covariances[{j}].value")))
    for j, name in enumerate(preds.get("wick", [])):
        checks.append(("wick", lookup(name, f"predictions.wick[{j}]"), None, 1.0))

    values, skipped = collect_samples(cfg, [s.mode() for s in specs])
    stats = summarize(values, cfg.N, names, batches, skipped)
    comps = []
    for kind, a, b, pred in checks:
        if kind == "mean":
            comps.append(stats.compare_mean(a, pred, gate))
        elif kind == "cov":
            comps.append(stats.compare_covariance(a, b, pred, gate))
        else:
            comps.append(stats.compare_wick(a, wick_gate))
    ok = all(c.passed for c in comps)
    config = {"config": doc, "predictions": pred_digest, "samples": cfg.samples}
    manifest = RunManifest.create("mc-verify", config, cfg.seed, [args.out] if args.out else [])
    _emit_json({
        "ensemble": {"N": cfg.N, "entry_law": cfg.entry_law, "kappa4": cfg.kappa4, "seed": cfg.seed,
                     "samples": cfg.samples, "batches": batches},
        "skipped_samples": skipped,
        "comparisons": [c.as_dict() for c in comps],
        "pass": ok,
    }, manifest, args.out)
    return 0 if ok else 2


def _load_thermal_matrix(path: str, N: int, name: str) -> DeterministicMatrix:
    try:
        a, tr = load_matrix_csv(path)
    except OSError as exc:
        raise WignerCLTError(f"{name}: {path}: {exc.strerror}") from None
    if a.kind != "traceless":
        raise WignerCLTError(f"{name}: {path}: normalized trace {tr} is not zero")
    lift_matrix(a, N, name)
    return a


def cmd_thermalize(args) -> int:
    from .thermalization import thermal_prediction

    a1 = _load_thermal_matrix(args.A1, args.N, "--A1")
    a2 = _load_thermal_matrix(args.A2, args.N, "--A2")
    if args.dt <= 0 or args.tmax < 0:
        raise WignerCLTError("--dt must be positive and --tmax non-negative")
    steps = int(math.floor(args.tmax / args.dt + 1e-9))
    ts = [round(i * args.dt, 12) for i in range(steps + 1)]
    if args.check_t not in ts:
        ts.append(args.check_t)
        ts.sort()
    cfg = EnsembleConfig(args.N, args.entry_law, None, args.seed, args.samples)
    if cfg.kappa4 != 0:
        log.warning("the variance prediction assumes kappa4 = 0")
    preds = [thermal_prediction(a1, a2, t) for t in ts]
    l1, l2 = lift_matrix(a1, args.N), lift_matrix(a2, args.N)
    modes = [Mode.of_functions([TestFunction.exp_phase(t), TestFunction.exp_phase(-t)], [l1, l2], f"t={t}")
             for t in ts]
    values, skipped = collect_samples(cfg, modes)
    stats = summarize(values, cfg.N, [m.name for m in modes], skipped=skipped)
    rows = []
    worst = 0.0
    var_check = None
    for i, (t, p) in enumerate(zip(ts, preds)):
        resid = abs(stats.mean[i] - p.leading)
        worst = max(worst, resid)
        c = stats.compare_covariance(i, i, p.variance, args.gate)
        if t == args.check_t:
            var_check = c
        rows.append({
            "t": t, "leading_re": p.leading.real, "leading_im": p.leading.imag, "variance_pred": p.variance,
            "mean_re": stats.mean[i].real, "mean_im": stats.mean[i].imag,
            "mean_se_re": stats.mean_se[i].real, "mean_se_im": stats.mean_se[i].imag,
            "nvar": stats.covariance[i, i].real, "nvar_se": stats.covariance_se[i, i].real,
        })
    ok = worst <= 10.0 / args.N and var_check.passed
    long_path = Path(args.out).with_name(Path(args.out).stem + "_long.csv")
    config = {"A1": _file_digest(Path(args.A1)), "A2": _file_digest(Path(args.A2)), "N": args.N,
              "samples": args.samples, "tmax": args.tmax, "dt": args.dt, "entry_law": args.entry_law,
              "check_t": args.check_t, "gate": args.gate}
    manifest = RunManifest.create("thermalize", config, args.seed, [args.out, str(long_path)])
    digest = manifest.digest
    fields = list(rows[0])
    buf = io.StringIO()
    buf.write(f"# manifest {digest}\n")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(float(v)) for k, v in r.items()})
    Path(args.out).write_text(buf.getvalue())
    buf = io.StringIO()
    buf.write(f"# manifest {digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "quantity", "value", "se"])
    for r in rows:
        w.writerow([repr(r["t"]), "leading_re", repr(r["leading_re"]), ""])
        w.writerow([repr(r["t"]), "variance_pred", repr(r["variance_pred"]), ""])
        w.writerow([repr(r["t"]), "mean_re", repr(float(r["mean_re"])), repr(float(r["mean_se_re"]))])
        w.writerow([repr(r["t"]), "mean_im", repr(float(r["mean_im"])), repr(float(r["mean_se_im"]))])
        w.writerow([repr(r["t"]), "nvar", repr(float(r["nvar"])), repr(float(r["nvar_se"]))])
    long_path.write_text(buf.getvalue())
    summary = {"max_mean_residual": worst, "residual_bound": 10.0 / args.N,
               "variance_check": var_check.as_dict(), "skipped_samples": skipped, "pass": ok}
    _emit_json(summary, manifest, None)
    return 0 if ok else 2


def cmd_enumerate(args) -> int:
    if args.kind == "ncp":
        if args.n is None:
            raise WignerCLTError("--n is required for kind ncp")
        items = [str(p) for p in enumerate_ncp(args.n)]
        config = {"kind": "ncp", "n": args.n}
    else:
        if args.k is None or args.l is None:
            raise WignerCLTError(f"--k and --l are required for kind {args.kind}")
        if args.kind == "annular":
            items = [str(p) for p in enumerate_annular(args.k, args.l)]
        else:
            items = [str(p) for p in enumerate_marked_pairs(args.k, args.l)]
        config = {"kind": args.kind, "k": args.k, "l": args.l}
    manifest = RunManifest.create("enumerate", config, outputs=[args.out] if args.out else [])
    _emit_json({"kind": args.kind, "count": len(items), "items": items}, manifest, args.out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    t0 = time.perf_counter()
    results = run_selftest()
    failed = [r for r in results if not r[1]]
    for name, ok, detail in results:
        sys.stderr.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    sys.stderr.write(f"selftest: {len(results) - len(failed)}/{len(results)} passed in "
                     f"{time.perf_counter() - t0:.1f}s\n")
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wigner-clt", description="Deterministic predictions and Monte Carlo checks "
                                               "for chains of Wigner resolvents.")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("predict-mean", help="leading term and kappa4/N correction of a chain expectation")
    s.add_argument("--chain", required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--kappa4", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict_mean)

    s = sub.add_parser("predict-cov", help="limiting covariance m[alpha|beta] of two chains")
    s.add_argument("--alpha", required=True)
    s.add_argument("--beta", required=True)
    s.add_argument("--kappa4", type=float, default=0.0)
    s.add_argument("--conjugate", action="store_true", help="conjugate the second chain (E X conj(Y))")
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict_cov)

    s = sub.add_parser("predict-funccov", help="closed-form covariance of functional modes")
    s.add_argument("--spec", "--config", dest="config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict_funccov)

    s = sub.add_parser("mc-verify", help="Monte Carlo comparison against predictions")
    s.add_argument("--config", required=True)
    s.add_argument("--predictions")
    s.add_argument("--seed", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mc_verify)

    s = sub.add_parser("thermalize", help="Heisenberg-evolved overlap trajectory against predictions")
    s.add_argument("--A1", required=True)
    s.add_argument("--A2", required=True)
    s.add_argument("--N", type=int, default=1024)
    s.add_argument("--samples", type=int, default=3000)
    s.add_argument("--tmax", type=float, default=8.0)
    s.add_argument("--dt", type=float, default=0.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--entry-law", default="gue")
    s.add_argument("--check-t", type=float, default=2.0)
    s.add_argument("--gate", type=float, default=3.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_thermalize)

    s = sub.add_parser("enumerate", help="list non-crossing structures")
    s.add_argument("--kind", choices=("ncp", "annular", "marked"), required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--l", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("selftest", help="fast invariant checks")
    s.set_defaults(func=cmd_selftest)
    return p


def _thread_limit():
    cap = thread_cap()
    if cap is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=cap)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with _thread_limit():
            return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"wigner-clt: usage error: {exc}\n")
        return 1
    except (WignerCLTError, ValueError, OSError) as exc:
        sys.stderr.write(f"wigner-clt: error: {exc}\n")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
