"""Command-line interface: ``stsfa {estimate,weights,simulate,mc,replay}``.

Exit codes: 0 success, 1 invalid input, 2 misaligned weights,
3 optimizer hit max_iter (results still written), 4 non-finite likelihood
at the starting values.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from ._backend import BACKEND
from .estimator import (
    AlignmentError, CollinearityError, EstimationError, FitOptions, ModelSpec, StartError, fit,
)
from .montecarlo import ETA_GRID, N_GRID, RHO_GRID, DgpConfig, build_grid, default_threads, run_experiment, simulate_dgp
from .panel import PanelError, PanelSchema, load_panel_csv, transformed
from .weights import (
    WeightsError, group_contiguity_weights, knn_weights, read_coords, read_dense, read_groups,
    read_triplets, row_standardize, write_triplets,
)

EXIT_OK, EXIT_INPUT, EXIT_ALIGN, EXIT_MAXITER, EXIT_START = 0, 1, 2, 3, 4

log = logging.getLogger("stsfa")


class UsageError(Exception):
    pass


def _list(text, cast=str):
    return [cast(x) for x in str(text).split(",") if x.strip() != ""]


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, argv, inputs, seed=None, started=None):
    manifest = {
        "command": command,
        "argv": list(argv),
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None and Path(p).exists()},
        "seed": seed,
        "out": str(out),
        "version": __version__,
        "backend": BACKEND,
        "wall_time": round(time.perf_counter() - started, 3) if started else None,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------

def _load_weights(path, fmt, data, standardize):
    if fmt == "triplet":
        W = read_triplets(path, n=data.n).with_ids(data.unit_ids)
    elif fmt == "dense":
        W = read_dense(path)
        if W.n == data.n:
            W = W.with_ids(data.unit_ids)
    elif fmt == "groups":
        ids, labels = read_groups(path)
        W = group_contiguity_weights(labels).with_ids(ids)
    else:
        raise UsageError(f"unknown weight format {fmt!r}")
    return row_standardize(W) if standardize else W


def cmd_estimate(args, argv) -> int:
    started = time.perf_counter()
    spec = ModelSpec.from_name(args.model, s=-1 if args.cost else 1, te_mode=args.te_mode, pooled=args.pooled)
    if spec.spatial and not args.weights:
        raise UsageError(f"model {args.model} needs --weights")
    if not spec.spatial and args.weights:
        raise UsageError(f"model {args.model} is non-spatial; --weights not allowed")
    schema = PanelSchema(args.unit, args.time, args.y, _list(args.x), intercept=not args.no_intercept)
    data = load_panel_csv(args.data, schema)
    data = transformed(data, _list(args.log_x), args.log_y)
    W = _load_weights(args.weights, args.wformat, data, args.standardize) if args.weights else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = fit(spec, data, W, FitOptions(max_iter=args.max_iter))
    (out / "fit.json").write_text(res.to_json(indent=2) + "\n")
    rows = [(u, t, res.efficiency[i, j]) for i, u in enumerate(data.unit_ids) for j, t in enumerate(data.time_ids)]
    pd.DataFrame(rows, columns=["unit", "time", "TE"]).to_csv(out / "efficiency.csv", index=False, float_format="%.17g")
    (out / "table.txt").write_text(res.table())
    _write_manifest(out, "estimate", argv, [args.data, args.weights], started=started)
    print(res.table(), end="")
    return EXIT_MAXITER if res.convergence == "max_iter" else EXIT_OK


def cmd_weights(args, argv) -> int:
    started = time.perf_counter()
    if bool(args.coords) == bool(args.groups):
        raise UsageError("give exactly one of --coords/--knn or --groups")
    if args.coords:
        if args.knn is None:
            raise UsageError("--coords needs --knn K")
        ids, pts = read_coords(args.coords)
        W = knn_weights(pts, args.knn).with_ids(ids)
    else:
        ids, labels = read_groups(args.groups)
        W = group_contiguity_weights(labels).with_ids(ids)
    if args.standardize:
        W = row_standardize(W)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_triplets(W, out / "weights.csv")
    rs = W.row_sums
    summary = {"n": W.n, "nnz": W.nnz, "min_row_sum": float(rs.min()), "max_row_sum": float(rs.max()),
               "standardized": W.standardized, "empty_rows": W.empty_rows().tolist(),
               "unit_ids": [str(u) for u in W.unit_ids]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest(out, "weights", argv, [args.coords, args.groups], started=started)
    print(f"n={W.n} nnz={W.nnz} row sums in [{rs.min():.6g}, {rs.max():.6g}]")
    return EXIT_OK


def _v_spec(text):
    return {"literal": "literal_paper", "zero-mean": "zero_mean"}[text]


def cmd_simulate(args, argv) -> int:
    started = time.perf_counter()
    cfg = DgpConfig(n=args.n, t=args.t, rho=args.rho, eta=args.eta, seed=args.seed,
                    v_spec=_v_spec(args.v_spec), k_frac=args.k_frac, standardize=not args.raw_weights)
    sim = simulate_dgp(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = sim.data
    df = pd.DataFrame({
        "unit": np.repeat(d.unit_ids, d.t),
        "time": np.tile(d.time_ids, d.n),
        "y": d.y.ravel(),
        "x": d.X[:, :, 1].ravel(),
        "u": sim.u.ravel(),
    })
    df.to_csv(out / "panel.csv", index=False, float_format="%.17g")
    write_triplets(sim.weights, out / "weights.csv")
    pd.DataFrame({"unit": d.unit_ids, "cx": sim.coords[:, 0], "cy": sim.coords[:, 1]}).to_csv(
        out / "coords.csv", index=False, float_format="%.17g")
    truth = {"beta0": cfg.beta0, "beta1": cfg.beta1, "sigma2_v": 1.0, "sigma2_u": 1.0,
             "rho": cfg.rho, "eta": cfg.eta, "n": cfg.n, "t": cfg.t, "k": cfg.k,
             "v_spec": cfg.v_spec, "v_mean": cfg.v_mean, "seed": cfg.seed}
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    _write_manifest(out, "simulate", argv, [], seed=args.seed, started=started)
    print(f"wrote {len(df)} rows to {out / 'panel.csv'}")
    return EXIT_OK


def cmd_mc(args, argv) -> int:
    started = time.perf_counter()
    ns = _list(args.n, int)
    rhos = _list(args.rho, float)
    etas = _list(args.eta, float)
    if not ns or not rhos or not etas:
        raise UsageError("empty grid")
    if args.reps < 2:
        raise UsageError("--reps must be >= 2")
    grid = build_grid(ns, rhos, etas, t=args.t, v_spec=_v_spec(args.v_spec))
    spec = ModelSpec.from_name(args.model)
    threads = args.threads if args.threads is not None else default_threads()
    report = run_experiment(grid, args.reps, spec, master_seed=args.seed, threads=threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    for n in ns:
        (out / f"table_n{n}.txt").write_text(report.table(n))
    if args.dump_estimates:
        (out / "estimates.csv").write_text(report.estimates_csv())
    _write_manifest(out, "mc", argv, [], seed=args.seed, started=started)
    for n in ns:
        print(report.table(n))
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    return main(manifest["argv"])


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stsfa", description="Spatio-temporal stochastic frontier estimation")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="fit a model to a panel CSV")
    e.add_argument("--data", required=True)
    e.add_argument("--unit", required=True)
    e.add_argument("--time", required=True)
    e.add_argument("--y", required=True)
    e.add_argument("--x", required=True, help="comma-separated input columns")
    e.add_argument("--model", required=True, choices=["sfa", "ssfa", "tsfa-ti", "tsfa-tv", "stsfa-ti", "stsfa-tv"])
    e.add_argument("--weights")
    e.add_argument("--wformat", choices=["triplet", "groups", "dense"], default="triplet")
    e.add_argument("--standardize", action="store_true", help="row-standardize the weights")
    e.add_argument("--cost", action="store_true", help="cost frontier (s=-1)")
    e.add_argument("--te-mode", choices=["paper", "bc92"], default="bc92")
    e.add_argument("--log-x", default="", help="comma-separated columns to log")
    e.add_argument("--log-y", action="store_true")
    e.add_argument("--no-intercept", action="store_true")
    e.add_argument("--pooled", action="store_true", help="pool a panel for sfa")
    e.add_argument("--max-iter", type=int, default=2000)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_estimate)

    w = sub.add_parser("weights", help="build a spatial weight matrix")
    w.add_argument("--coords")
    w.add_argument("--knn", type=int)
    w.add_argument("--groups")
    w.add_argument("--standardize", action="store_true")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_weights)

    s = sub.add_parser("simulate", help="draw one dataset from the simulation design")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--t", type=int, default=5)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--v-spec", choices=["literal", "zero-mean"], default="literal")
    s.add_argument("--k-frac", type=float, default=0.10)
    s.add_argument("--raw-weights", action="store_true", help="do not row-standardize W")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mc", help="run a Monte Carlo experiment")
    m.add_argument("--n", default=",".join(map(str, N_GRID)))
    m.add_argument("--rho", default=",".join(map(str, RHO_GRID)))
    m.add_argument("--eta", default=",".join(map(str, ETA_GRID)))
    m.add_argument("--t", type=int, default=5)
    m.add_argument("--reps", type=int, default=1000)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--v-spec", choices=["literal", "zero-mean"], default="literal")
    m.add_argument("--model", default="stsfa-tv", choices=["stsfa-tv", "stsfa-ti", "tsfa-tv", "tsfa-ti"])
    m.add_argument("--threads", type=int, default=None, help="worker processes (default $STSFA_THREADS or 1)")
    m.add_argument("--dump-estimates", action="store_true")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mc)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest.json")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


_LIST_FLAGS = ("--n", "--rho", "--eta")


def _glue_negative_lists(argv):
    """Let ``--eta -0.1,0.05`` through; argparse would read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if a in _LIST_FLAGS and nxt is not None and nxt[:1] == "-" and (nxt[1:2].isdigit() or nxt[1:2] == "."):
            out.append(f"{a}={nxt}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    argv = _glue_negative_lists(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args, argv)
    except AlignmentError as exc:
        print(f"error: misaligned weights: {exc}", file=sys.stderr)
        return EXIT_ALIGN
    except StartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_START
    except (UsageError, PanelError, WeightsError, CollinearityError, EstimationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
