"""Command line interface.

Subcommands: gen-data (lattice or planar synthetic), train, eval
(nll / mmd / exact-logz), oracle (named self-checks), sweep (config grid).

Exit codes: 0 success, 2 configuration or input errors, 3 training aborted
by the divergence guard.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .bits import Dataset, load_dataset_csv, save_dataset_csv
from .config import ConfigError, apply_overrides, config_digest, load_config, validate_config
from .gray import float_to_bits_batch
from .metrics import (
    exact_log_partition,
    mmd_bootstrap_stderr,
    mmd_hamming,
    nll_importance,
    MetricsLog,
    MetricRecord,
)
from .models import load_checkpoint
from .oracles import ORACLES, run_oracles
from .rng import RngStream
from .samplers import generate_ising_dataset
from .synthetic import GENERATOR_PARAMS, sample_synthetic, save_points_csv
from .training import run_density_recipe, run_ising_recipe


def _fail(message, code=2):
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_gen_data(args):
    rng = RngStream(args.seed)
    if args.source == "ising":
        data, J = generate_ising_dataset(
            args.L, args.sigma, args.n, args.site_steps, rng, periodic=args.periodic
        )
        data.seed = args.seed
        save_dataset_csv(data, args.out)
        print(f"wrote {args.n} samples (d={args.L * args.L}) to {args.out}")
        if args.j_out:
            np.savetxt(args.j_out, J, delimiter=",")
            print(f"wrote couplings to {args.j_out}")
        return 0
    params = json.loads(args.params) if args.params else None
    try:
        points = sample_synthetic(args.name, args.n, rng, params=params)
    except (ValueError, KeyError) as exc:
        return _fail(str(exc))
    save_points_csv(points, args.out)
    print(f"wrote {args.n} points from {args.name} to {args.out}")
    if args.bits_out:
        bits = float_to_bits_batch(points)
        save_dataset_csv(Dataset(bits, provenance=args.name, seed=args.seed), args.bits_out)
        print(f"wrote encoded bits (d={bits.shape[1]}) to {args.bits_out}")
    return 0


def _run_training(cfg, digest, out_dir):
    if cfg["task"]["kind"] == "ising":
        return run_ising_recipe(cfg, digest=digest, out_dir=out_dir)
    return run_density_recipe(cfg, digest=digest, out_dir=out_dir)


def cmd_train(args):
    try:
        cfg, digest = load_config(args.config, args.override)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    out_dir = args.out_dir or os.path.join("runs", digest[:12])
    print(f"config digest {digest}")
    print(f"writing artifacts to {out_dir}")
    summary = _run_training(cfg, digest, out_dir)
    for key in ("nll", "nll_stderr", "mmd", "mmd_stderr", "best_l1", "best_neg_log_rmse"):
        if key in summary and summary[key] is not None:
            print(f"{key} = {summary[key]}")
    print(f"status = {summary['status']}")
    if summary["status"] != "ok" or summary["flags"].get("diverged"):
        print("training aborted by divergence guard", file=sys.stderr)
        return 3
    return 0


def cmd_eval(args):
    try:
        model, meta = load_checkpoint(args.checkpoint) if args.checkpoint else (None, None)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        return _fail(f"checkpoint: {exc}")
    records = []
    if args.metric == "nll":
        data = load_dataset_csv(args.data)
        if data.states.shape[1] != model.d:
            return _fail(
                f"dimension mismatch: data d={data.states.shape[1]}, model d={model.d}"
            )
        rec = nll_importance(model, data, args.S, RngStream(args.seed))
        records.append((meta.get("step", 0), rec))
        print(f"nll = {rec.value!r} stderr = {rec.stderr!r} S = {rec.n_samples}")
    elif args.metric == "exact-logz":
        if model.d > 20:
            return _fail(f"exact log-partition needs d <= 20, checkpoint has d={model.d}")
        value = exact_log_partition(model)
        records.append((meta.get("step", 0), MetricRecord("exact_logz", value)))
        print(f"exact_logz = {value!r}")
    else:  # mmd
        X = load_dataset_csv(args.x)
        Y = load_dataset_csv(args.y)
        if X.states.shape[1] != Y.states.shape[1]:
            return _fail(
                f"dimension mismatch: x d={X.states.shape[1]}, y d={Y.states.shape[1]}"
            )
        value = mmd_hamming(X, Y, bandwidth=args.bandwidth)
        stderr = None
        if args.bootstrap > 0:
            stderr = mmd_bootstrap_stderr(
                X, Y, bandwidth=args.bandwidth, n_boot=args.bootstrap,
                rng=RngStream(args.seed),
            )
        records.append((0, MetricRecord("mmd", value, stderr=stderr,
                                        n_samples=X.states.shape[0])))
        print(f"mmd = {value!r}" + (f" stderr = {stderr!r}" if stderr is not None else ""))
    if args.out:
        log = MetricsLog(config_digest=(meta or {}).get("config_digest", ""))
        for step, rec in records:
            log.log(step, rec)
        log.write(args.out)
        print(f"wrote metrics to {args.out}")
    return 0


def cmd_oracle(args):
    names = args.only.split(",") if args.only else None
    try:
        results = run_oracles(names, d=args.d, trials=args.trials, seed=args.seed)
    except KeyError as exc:
        return _fail(f"{exc.args[0]} (known: {', '.join(ORACLES)})")
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        mark = "ok  " if r.ok else "FAIL"
        line = f"{mark} {r.name:<{width}}  err={r.max_err:.3e}  tol={r.tolerance:.1e}"
        if r.detail:
            line += f"  [{r.detail}]"
        print(line)
        failures += 0 if r.ok else 1
    return 1 if failures else 0


def _split_grid_values(text):
    """Split on top-level commas only, so list literals survive."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_grid(specs):
    axes = []
    for spec in specs:
        key, sep, values = spec.partition("=")
        if not sep or not key:
            raise ConfigError(f"grid {spec!r}: expected key=v1,v2,...")
        axes.append((key.strip(), _split_grid_values(values)))
    return axes


def _sweep_cell(payload):
    """Worker for one sweep cell; module-level so it can cross processes."""
    raw, overrides, cell_dir = payload
    try:
        cfg = validate_config(apply_overrides(raw, overrides))
        digest = config_digest(cfg)
        summary = _run_training(cfg, digest, cell_dir)
        flags = summary.get("flags", {})
        metric_name, metric_value = "", ""
        for key in ("nll", "best_neg_log_rmse"):
            if summary.get(key) is not None:
                metric_name, metric_value = key, repr(summary[key])
                break
        return {
            "status": summary["status"],
            "diverged": flags.get("diverged", False),
            "flatlined": flags.get("flatlined", False),
            "converged": flags.get("converged", False),
            "metric": metric_name,
            "value": metric_value,
        }
    except Exception as exc:  # a broken cell must not kill the sweep
        return {"status": f"error: {exc}", "diverged": True, "flatlined": False,
                "converged": False, "metric": "", "value": ""}


def cmd_sweep(args):
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.override:
            raw = apply_overrides(raw, args.override)
        validate_config(raw)  # surface base config errors before any cell runs
        axes = _parse_grid(args.grid)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        return _fail(str(exc))
    if not axes:
        print("no grid axes given; nothing to do")
        return 0
    out_dir = args.out_dir or "sweep"
    os.makedirs(out_dir, exist_ok=True)
    keys = [k for k, _ in axes]
    cells = list(itertools.product(*[vals for _, vals in axes]))
    payloads = []
    for idx, values in enumerate(cells):
        overrides = [f"{k}={v}" for k, v in zip(keys, values)]
        cell_dir = os.path.join(out_dir, f"cell{idx:03d}")
        payloads.append((raw, overrides, cell_dir))
    workers = int(os.environ.get("ED_NUM_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, payloads))
    else:
        results = [_sweep_cell(p) for p in payloads]
    index_path = os.path.join(out_dir, "index.csv")
    with open(index_path, "w") as fh:
        fh.write("cell,overrides,status,diverged,flatlined,converged,metric,value\n")
        for idx, (values, res) in enumerate(zip(cells, results)):
            overrides = ";".join(f"{k}={v}" for k, v in zip(keys, values))
            fh.write(
                f"cell{idx:03d},{overrides},{res['status']},{res['diverged']},"
                f"{res['flatlined']},{res['converged']},{res['metric']},{res['value']}\n"
            )
            print(f"cell{idx:03d} [{overrides}] -> {res['status']}"
                  f" diverged={res['diverged']} converged={res['converged']}")
    print(f"wrote {index_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="edbm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate datasets")
    gs = g.add_subparsers(dest="source", required=True)
    gi = gs.add_parser("ising", help="sample an Ising lattice with Gibbs chains")
    gi.add_argument("--L", type=int, default=10)
    gi.add_argument("--sigma", type=float, default=0.2)
    gi.add_argument("--n", type=int, default=2000)
    gi.add_argument("--site-steps", type=int, default=100000)
    gi.add_argument("--periodic", action="store_true")
    gi.add_argument("--seed", type=int, default=0)
    gi.add_argument("--out", required=True)
    gi.add_argument("--j-out", default=None)
    gn = gs.add_parser("synthetic", help="sample a planar synthetic dataset")
    gn.add_argument("--name", required=True, choices=sorted(GENERATOR_PARAMS))
    gn.add_argument("--n", type=int, default=100000)
    gn.add_argument("--params", default=None, help="JSON dict of generator overrides")
    gn.add_argument("--seed", type=int, default=0)
    gn.add_argument("--out", required=True)
    gn.add_argument("--bits-out", default=None)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--out-dir", default=None)

    e = sub.add_parser("eval", help="evaluate a saved model or datasets")
    es = e.add_subparsers(dest="metric", required=True)
    en = es.add_parser("nll", help="importance-sampled negative log-likelihood")
    en.add_argument("--checkpoint", required=True)
    en.add_argument("--data", required=True)
    en.add_argument("--S", type=int, default=1000000)
    en.add_argument("--seed", type=int, default=0)
    en.add_argument("--out", default=None)
    em = es.add_parser("mmd", help="squared kernel discrepancy of two bit datasets")
    em.add_argument("--x", required=True)
    em.add_argument("--y", required=True)
    em.add_argument("--bandwidth", type=float, default=0.1)
    em.add_argument("--bootstrap", type=int, default=0)
    em.add_argument("--seed", type=int, default=0)
    em.add_argument("--out", default=None)
    em.set_defaults(checkpoint=None)
    ez = es.add_parser("exact-logz", help="enumerated log partition function")
    ez.add_argument("--checkpoint", required=True)
    ez.add_argument("--out", default=None)

    o = sub.add_parser("oracle", help="run named mathematical self-checks")
    o.add_argument("--only", default=None, help="comma-separated check names")
    o.add_argument("--d", type=int, default=None)
    o.add_argument("--trials", type=int, default=None)
    o.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", help="cross product of config overrides")
    s.add_argument("--config", required=True)
    s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2,...")
    s.add_argument("--out-dir", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "eval": cmd_eval,
        "oracle": cmd_oracle,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
