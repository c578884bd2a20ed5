"""Command line front end.

Subcommands:
  train     run the training loop and write rows, summary and a snapshot
  eval      frozen-parameter evaluation from a snapshot
  oracle    brute-force optimum and artifact bound for small instances
  tabulate  recompute aggregate metrics from an existing rows CSV

Every run writes a manifest.json (config, seed, version, timestamp)
before any computation starts.  Timestamps appear only in the manifest;
rows, summaries and snapshots are byte-identical across reruns of the
same config and seed.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

import argparse
import concurrent.futures
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, baselines, engine
from .config import ConfigError, SimConfig, parse_config, with_overrides

OUT_ENV = "SPECTRUM_SIM_OUT"


def _out_dir(args) -> Path:
    if args.out is not None:
        return Path(args.out)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path("runs")


def _load_config(args) -> SimConfig:
    cfg = parse_config(args.config, args.set or ())
    if getattr(args, "seed", None) is not None:
        cfg = with_overrides(cfg, seed=args.seed[0])
    if getattr(args, "policy", None) is not None:
        cfg = with_overrides(cfg, policy=args.policy)
    return cfg


def _write_manifest(path: Path, cfg: SimConfig, command: str):
    manifest = {
        "command": command,
        "version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": cfg.to_dict(),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _train_one(cfg_dict: dict, out_dir: str) -> str:
    cfg = SimConfig(**cfg_dict)
    out = Path(out_dir)
    snapshots, record = engine.run_training(cfg)
    record.to_csv(out / f"rows_{cfg.seed}.csv")
    record.summary_to_csv(out / f"summary_{cfg.seed}.csv", cfg.seed)
    engine.save_snapshot(out / f"snapshot_{cfg.seed}.npz", snapshots)
    return f"seed {cfg.seed}: avg_reward={record.aggregates['avg_reward']:.6f}"


def cmd_train(args) -> int:
    cfg = _load_config(args)
    seeds = args.seed if args.seed else [cfg.seed]
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [with_overrides(cfg, seed=s) for s in seeds]
    for c in cfgs:
        _write_manifest(out / f"manifest_{c.seed}.json", c, "train")
    if args.workers > 1 and len(cfgs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            lines = list(pool.map(_train_one, [c.to_dict() for c in cfgs],
                                  [str(out)] * len(cfgs)))
    else:
        lines = [_train_one(c.to_dict(), str(out)) for c in cfgs]
    for line in lines:
        print(line)
    print(f"wrote {len(cfgs)} run(s) to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out / f"eval_manifest_{cfg.seed}.json", cfg, "eval")
    snapshots = None
    if args.snapshot is not None:
        snapshots = engine.load_snapshot(args.snapshot)
    record = engine.run_evaluation(cfg, snapshots)
    record.to_csv(out / f"eval_rows_{cfg.seed}.csv")
    record.summary_to_csv(out / f"eval_summary_{cfg.seed}.csv", cfg.seed)
    print(f"seed {cfg.seed}: avg_reward={record.aggregates['avg_reward']:.6f}")
    return 0


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out / "oracle_manifest.json", cfg, "oracle")
    bound = baselines.upper_bound_curve(cfg)
    lines = [f"artifact_bound,{repr(bound)}"]
    if cfg.channel_mode == "fixed":
        table = baselines.UtilityTable(
            effective_gains=cfg.radio().snr * cfg.fixed_gain_matrix()
        )
        profile, welfare = baselines.brute_force_optimal(table)
        nash = baselines.is_pure_nash(profile, table)
        lines.append("optimal_profile," + " ".join(str(a) for a in profile))
        lines.append(f"optimal_welfare,{repr(welfare)}")
        lines.append(f"optimal_is_nash,{int(nash)}")
    text = "metric,value\n" + "\n".join(lines) + "\n"
    (out / "oracle.csv").write_text(text)
    print(text, end="")
    return 0


def read_rows_csv(path) -> engine.MetricsRecord:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    data = np.atleast_1d(data)
    if data.size and data.dtype.names != tuple(engine.ROWS_HEADER.split(",")):
        raise ConfigError(f"{path}: unexpected column header")
    as_i = lambda name: np.asarray(data[name], np.int64) if data.size else np.empty(0, np.int64)
    rec = engine.MetricsRecord(
        run=as_i("run"), iteration=as_i("iteration"), episode=as_i("episode"),
        slot=as_i("slot"), user=as_i("user"), action=as_i("action"),
        ack=as_i("ack"),
        reward=np.asarray(data["reward"], float) if data.size else np.empty(0, float),
    )
    return rec


def cmd_tabulate(args) -> int:
    cfg = _load_config(args)
    print("file,metric,value")
    for path in args.rows:
        record = read_rows_csv(path)
        aggregates = engine.recompute_aggregates(record, cfg)
        name = Path(path).name
        for key in sorted(aggregates):
            print(f"{name},{key},{repr(float(aggregates[key]))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectrum-sim",
        description="Deterministic multi-agent spectrum sharing simulator.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", default=None,
                       help=f"output directory (default $" + OUT_ENV + " or ./runs)")
        p.add_argument("--policy", choices=("d3rl", "softmax", "random"), default=None)
        if seeds:
            p.add_argument("--seed", type=int, action="append",
                           help="run seed (repeatable for multi-seed fan-out)")

    p_train = sub.add_parser("train", help="run the training loop")
    common(p_train)
    p_train.add_argument("--workers", type=int, default=1,
                         help="parallel processes for multi-seed runs")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained snapshot")
    common(p_eval)
    p_eval.add_argument("--snapshot", default=None, help="snapshot .npz path")
    p_eval.set_defaults(func=cmd_eval)

    p_oracle = sub.add_parser("oracle", help="brute-force optimum and bound")
    common(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_tab = sub.add_parser("tabulate", help="recompute aggregates from rows CSVs")
    common(p_tab, seeds=False)
    p_tab.add_argument("rows", nargs="+", help="rows CSV file(s)")
    p_tab.set_defaults(func=cmd_tabulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
