"""Command-line experiment runner: ``avgsim gen-graph|spectrum|run|verify|sweep``."""
from __future__ import annotations

import argparse
import json
import math
import statistics
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .dynamics import run as run_averaging
from .errors import (
    AvgSimError,
    ConfigError,
    DegenerateGap,
    InvalidParams,
    InvariantBreach,
    NotConverged,
    RetryExhausted,
)
from .graphgen import ClusteredGraph, SbmParams, generate_clustered_regular, generate_sbm, verify_clustered_invariants
from .metrics import csl_evaluate, score_dict, stopping_time_coverage, weak_reconstruction_error
from .protocols import (
    JumpConfig,
    boosted_jump_run,
    jump_default_parameters,
    jump_labeling_run,
    sign_default_parameters,
    sign_labeling_run,
    write_labels_csv,
)
from .seeding import trial_seed
from .spectral import compute_spectrum
from .workers import map_ordered

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_GENERATION, EXIT_INVARIANT = 0, 1, 2, 3, 4
PROTOCOLS = ("averaging", "sign", "jump", "jump-boosted")

RUN_DEFAULTS: dict[str, Any] = {
    "graph": None,
    "protocol": "averaging",
    "delta": 0.5,
    "T": "auto",
    "ell": "auto",
    "taus": "auto",
    "rounds": 1000,
    "trials": 1,
    "seed": 0,
    "observe_every": 1,
    "eps": None,
    "eta": None,
    "out_dir": "out",
    "timings": False,
}


# ------------------------------------------------------------------ helpers

def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    # a run report can be fed back: its echoed config reproduces the run
    return dict(data.get("config", data))


def _merge(defaults: dict, file_cfg: dict, args: argparse.Namespace) -> dict:
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(defaults)
    cfg.update(file_cfg)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    return cfg


def _int_or_auto(v: Any, name: str) -> int | str:
    if v == "auto":
        return "auto"
    try:
        iv = int(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be an integer or 'auto', got {v!r}") from exc
    if iv < 1:
        raise ConfigError(f"{name} must be >= 1")
    return iv


def _summary(values: list[float]) -> dict:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return {}
    return {"mean": statistics.fmean(vals), "median": statistics.median(vals), "min": min(vals), "max": max(vals)}


def _spectrum_line(spec) -> str:
    return (f"λ2={spec.lambda2:.4f} λ3={spec.lambda3:.4f} λ3c={spec.lambda3_complement:.4f} "
            f"wbar_gap={spec.wbar_gap:.6g} m12={spec.m12}")


# ------------------------------------------------------------------ commands

def cmd_gen_graph(args: argparse.Namespace) -> int:
    if args.sbm:
        if args.p is None or args.q is None:
            raise ConfigError("--sbm needs --p and --q")
        g = generate_sbm(SbmParams(args.n, args.p, args.q), args.seed)
    else:
        if args.d is None or args.b is None:
            raise ConfigError("clustered-regular generation needs --d and --b")
        g = generate_clustered_regular(args.n, args.d, args.b, args.seed, max_retries=args.max_retries)
    g.save(args.out)
    rep = verify_clustered_invariants(g)
    print(f"wrote {args.out} kind={g.kind} n={g.n} m={g.m} fingerprint={g.fingerprint()}")
    print(f"verification: {'ok' if rep.ok else 'violations: ' + '; '.join(rep.violations)}")
    if g.kind == "sbm":
        print(f"beta={g.beta:.6g} connected={g.connected}")
    try:
        print(_spectrum_line(compute_spectrum(g)))
    except (NotConverged, DegenerateGap) as exc:
        print(f"spectrum unavailable: {exc}")
    return EXIT_OK


def cmd_spectrum(args: argparse.Namespace) -> int:
    g = ClusteredGraph.load(args.graph)
    spec = compute_spectrum(g)
    print(_spectrum_line(spec))
    if args.out:
        spec.save(args.out)
    return EXIT_OK


def _resolve(cfg: dict, g: ClusteredGraph) -> dict:
    proto = cfg["protocol"]
    if proto not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {PROTOCOLS}")
    if int(cfg["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    out: dict[str, Any] = {}
    if proto == "sign":
        T = _int_or_auto(cfg["T"], "T")
        ell = _int_or_auto(cfg["ell"], "ell")
        eps = 0.2 if cfg["eps"] is None else float(cfg["eps"])
        if "auto" in (T, ell):
            T0, ell0 = sign_default_parameters(compute_spectrum(g), eps)
            T = T0 if T == "auto" else T
            ell = ell0 if ell == "auto" else ell
        out.update(T=T, ell=ell, eps=eps)
    elif proto in ("jump", "jump-boosted"):
        delta = float(cfg["delta"])
        if cfg["taus"] == "auto":
            jc = jump_default_parameters(g, delta)
        else:
            taus = cfg["taus"]
            if isinstance(taus, str):
                taus = taus.split(",")
            try:
                vals = [int(v) for v in taus]
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"taus must be four integers or 'auto', got {cfg['taus']!r}") from exc
            if len(vals) != 4:
                raise ConfigError("taus needs exactly four values")
            jc = JumpConfig(delta, *vals)
        out.update(taus=[jc.tau_s, jc.tau_s_tilde, jc.tau_e, jc.tau_e_tilde], jump=jc)
        if proto == "jump-boosted":
            ell = _int_or_auto(cfg["ell"], "ell")
            ell = 11 if ell == "auto" else ell
            if ell % 2 == 0:
                raise ConfigError("jump-boosted needs an odd ell")
            out["ell"] = ell
    else:
        if int(cfg["rounds"]) < 0 or int(cfg["observe_every"]) < 1:
            raise ConfigError("rounds must be >= 0 and observe_every >= 1")
        if not 0.0 < float(cfg["delta"]) < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
    return out


def _one_trial(cfg: dict, res: dict, g: ClusteredGraph, i: int) -> dict:
    seed = trial_seed(int(cfg["seed"]), i)
    proto = cfg["protocol"]
    t0 = time.perf_counter()
    rec: dict[str, Any] = {"trial": i, "seed": seed}
    if proto == "averaging":
        rep = run_averaging(g, float(cfg["delta"]), int(cfg["rounds"]), seed,
                            observe_every=int(cfg["observe_every"]), eta=cfg["eta"], eps=cfg["eps"])
        a = rep.series["a_par"]
        drift = float(np.max(np.abs(a - a[0])))
        if drift > 1e-9 * max(1.0, math.sqrt(g.n)):
            raise InvariantBreach(f"trial {i}: a_par drifted by {drift:.3e}")
        rec.update(a_par_drift=drift, y_norm_sq_final=float(rep.series["y_norm_sq"][-1]),
                   z_norm_sq_final=float(rep.series["z_norm_sq"][-1]))
        rec["_series"] = rep
    elif proto == "sign":
        r = sign_labeling_run(g, res["T"], res["ell"], seed)
        csl = csl_evaluate(r.labels, g.chi, res["eps"])
        rec.update(score_dict(recon=weak_reconstruction_error(r.labels[:, 0], g.chi), csl=csl))
        rec.update(total_rounds=r.total_rounds, reference_distance=csl.reference_distance,
                   freeze_coverage=stopping_time_coverage(r.freeze_local, res["T"], g.n))
        rec["_labels"] = (r.labels[:, 0], r.freeze_times.max(axis=1), r.labels.T)
    else:
        if proto == "jump":
            r = jump_labeling_run(g, res["jump"], seed)
        else:
            r = boosted_jump_run(g, res["jump"], res["ell"], seed)
        rec.update(score_dict(recon=weak_reconstruction_error(r.labels, g.chi)))
        rec["total_rounds"] = r.total_rounds
        rec["_labels"] = (r.labels, r.label_times.max(axis=0),
                          r.copy_labels if proto == "jump-boosted" else None)
    rec["_seconds"] = time.perf_counter() - t0
    return rec


def execute_run(cfg: dict) -> dict:
    """Run all trials of a resolved config and write outputs; returns the report."""
    if not cfg.get("graph"):
        raise ConfigError("run needs --graph")
    g = ClusteredGraph.load(cfg["graph"])
    started = time.perf_counter()
    res = _resolve(cfg, g)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    trials = map_ordered(lambda i: _one_trial(cfg, res, g, i), range(int(cfg["trials"])))
    rows = []
    for rec in trials:
        i = rec["trial"]
        if "_series" in rec:
            name = f"trial_{i:04d}_series.csv"
            rec.pop("_series").write_csv(out / name)
            rec["series_csv"] = name
        if "_labels" in rec:
            lab, times, copies = rec.pop("_labels")
            name = f"trial_{i:04d}_labels.csv"
            write_labels_csv(out / name, g.chi, lab, times, copies)
            rec["labels_csv"] = name
        secs = rec.pop("_seconds")
        if cfg["timings"]:
            rec["seconds"] = secs
        rows.append(rec)
    echo = {k: cfg[k] for k in RUN_DEFAULTS}
    resolved = {k: v for k, v in res.items() if k != "jump"}
    report: dict[str, Any] = {
        "version": __version__,
        "config": echo,
        "resolved": resolved,
        "graph": {"path": cfg["graph"], "fingerprint": g.fingerprint(), "kind": g.kind,
                  "n": g.n, "d": g.d, "b": g.b, "m": g.m},
        "trials": rows,
        "summary": {k: _summary([r.get(k) for r in rows])
                    for k in ("error_fraction", "gamma", "c1_observed", "c2_observed", "a_par_drift")
                    if any(r.get(k) is not None for r in rows)},
    }
    if cfg["timings"]:
        report["timings"] = {"total_seconds": time.perf_counter() - started}
    (out / "report.json").write_text(_dump(report))
    return report


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _merge(RUN_DEFAULTS, _load_config(args.config), args)
    report = execute_run(cfg)
    s = report["summary"]
    print(f"{len(report['trials'])} trial(s) written to {cfg['out_dir']}")
    for k, v in s.items():
        print(f"{k}: mean={v['mean']:.6g} median={v['median']:.6g} min={v['min']:.6g} max={v['max']:.6g}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _merge(RUN_DEFAULTS, _load_config(args.config), args)
    if args.param not in RUN_DEFAULTS or args.param in ("graph", "out_dir", "protocol"):
        raise ConfigError(f"cannot sweep over {args.param!r}")
    base = Path(cfg["out_dir"])
    points = []
    for raw in args.values.split(","):
        val: Any = raw.strip()
        if args.param in ("delta", "eps", "eta"):
            val = float(val)
        elif args.param in ("rounds", "trials", "seed", "observe_every"):
            val = int(val)
        sub = dict(cfg, **{args.param: val, "out_dir": str(base / f"{args.param}={raw.strip()}")})
        rep = execute_run(sub)
        points.append({"value": val, "out_dir": sub["out_dir"], "summary": rep["summary"]})
        print(f"{args.param}={raw.strip()}: " + ", ".join(f"{k} median={v['median']:.6g}" for k, v in rep["summary"].items()))
    base.mkdir(parents=True, exist_ok=True)
    (base / "sweep.json").write_text(_dump({"version": __version__, "param": args.param, "points": points}))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    if args.graph:
        g = ClusteredGraph.load(args.graph)
        rep = verify_clustered_invariants(g)
        print(f"graph {args.graph}: fingerprint={g.fingerprint()} "
              f"{'ok' if rep.ok else 'violations: ' + '; '.join(rep.violations)}")
        return EXIT_OK if rep.ok else EXIT_VERIFY
    from .verify import run_suite

    results = run_suite(quick=not args.full)
    failed = [r.key for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_OK if not failed else EXIT_VERIFY


# ------------------------------------------------------------------ parser

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--graph", help="graph JSON written by gen-graph")
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--delta", type=float)
    p.add_argument("--T", dest="T", help="Sign-Labeling freeze count or 'auto'")
    p.add_argument("--ell", help="components/copies or 'auto'")
    p.add_argument("--taus", help="tau_s,tau_s~,tau_e,tau_e~ or 'auto'")
    p.add_argument("--auto", action="store_true", help="resolve every protocol parameter from the spectrum")
    p.add_argument("--rounds", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--observe-every", dest="observe_every", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--timings", action="store_true", default=None,
                   help="add wall-clock timings (the report is then no longer byte-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="avgsim", description="Averaging dynamics and community labeling experiments.")
    ap.add_argument("--version", action="version", version=f"avgsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-graph", help="generate a clustered-regular or SBM graph")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int)
    g.add_argument("--b", type=int)
    g.add_argument("--sbm", action="store_true")
    g.add_argument("--p", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-retries", dest="max_retries", type=int, default=100)
    g.add_argument("--out", default="graph.json")
    g.set_defaults(func=cmd_gen_graph)

    s = sub.add_parser("spectrum", help="print and optionally save the spectrum of a graph file")
    s.add_argument("--graph", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)

    r = sub.add_parser("run", help="run trials of a protocol on a graph file")
    _add_run_flags(r)
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", help="repeat `run` over a list of values of one parameter")
    _add_run_flags(w)
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True, help="comma-separated values")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="acceptance suite, or invariant check of one graph file")
    mode = v.add_mutually_exclusive_group()
    mode.add_argument("--quick", action="store_true")
    mode.add_argument("--full", action="store_true")
    v.add_argument("--graph")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "auto", False):
        args.T = args.T or "auto"
        args.ell = args.ell or "auto"
        args.taus = args.taus or "auto"
    try:
        return args.func(args)
    except RetryExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InvalidParams, ConfigError, DegenerateGap, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AvgSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
