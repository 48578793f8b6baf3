"""Command-line entry point: train / eval / ablate / plot / oracle.

Output goes under the directory named by the TACIT_OUT environment variable
(default ./runs); each run gets a directory keyed by a hash of its resolved
configuration, and an existing run directory is never overwritten.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from .autodiff import NumericsError, load_params
from .config import ConfigError, VARIANTS, load_config
from .envs import oracle_optimal_return
from .trainer import Trainer

EXIT_CONFIG = 2
EXIT_NUMERICS = 3


def out_root(override=None):
    return override or os.environ.get("TACIT_OUT", "runs")


def run_dir_for(cfg, root):
    """Content-addressed run directory; suffixed if already occupied."""
    digest = hashlib.sha256(
        json.dumps(cfg.to_dict(), sort_keys=True).encode()
    ).hexdigest()[:10]
    base = os.path.join(root, f"{cfg.env}-{cfg.variant}-s{cfg.seed}-{digest}")
    path, k = base, 0
    while os.path.isdir(path) and os.listdir(path):
        k += 1
        path = f"{base}-{k}"
    return path


def cmd_train(args):
    cfg = load_config(args.config, args.set or ())
    out = args.out or run_dir_for(cfg, out_root(args.out_root))
    trainer = Trainer(cfg)
    metrics = trainer.run(out, quiet=args.quiet)
    print(f"run complete: {metrics}")
    return 0


def _load_run(run_dir):
    manifest_path = os.path.join(run_dir, "manifest.json")
    ckpt_path = os.path.join(run_dir, "checkpoint_final.bin")
    if not os.path.isfile(manifest_path) or not os.path.isfile(ckpt_path):
        raise FileNotFoundError(f"{run_dir} is not a finished run directory")
    with open(manifest_path) as f:
        manifest = json.load(f)
    cfg = load_config(
        None, [f"{k}={v}" for k, v in manifest["config"].items()]
    )
    trainer = Trainer(cfg)
    loaded = load_params(ckpt_path)
    if loaded.names() != trainer.params.names():
        raise ValueError(
            "checkpoint does not match the run's configuration "
            f"(parameter sets differ: {ckpt_path})"
        )
    trainer.params.copy_from(loaded)
    trainer.target_params.copy_from(loaded)
    return trainer


def cmd_eval(args):
    if args.episodes < 1:
        print("eval: need at least one episode", file=sys.stderr)
        return EXIT_CONFIG
    trainer = _load_run(args.run)
    mean, std, _ = trainer.evaluate(args.mode, args.episodes)
    optimal = oracle_optimal_return(trainer.cfg.build_env())
    print(f"mode={args.mode} episodes={args.episodes} "
          f"return={mean:.4f} +- {std:.4f} (oracle optimal {optimal:.4f})")
    return 0


def cmd_ablate(args):
    cfg_base = load_config(args.config, args.set or ())
    variants = args.variants or list(VARIANTS)
    seeds = args.seeds or [0, 1, 2]
    root = args.out or os.path.join(out_root(args.out_root), "ablation")
    os.makedirs(root, exist_ok=True)
    rows = []
    failures = []
    for variant in variants:
        for seed in seeds:
            cfg = load_config(args.config, list(args.set or ()) +
                              [f"variant={variant}", f"seed={seed}"])
            cell_dir = run_dir_for(cfg, root)
            try:
                trainer = Trainer(cfg)
                trainer.run(cell_dir, quiet=True)
                mean_dec, _, _ = trainer.evaluate("decentralized", cfg.eval_episodes)
                final_align = _final_align(os.path.join(cell_dir, "metrics.csv"))
                rows.append([variant, seed, mean_dec, final_align])
                print(f"{variant} seed={seed}: decentralized return {mean_dec:.4f}")
            except Exception as exc:  # keep remaining cells running
                failures.append((variant, seed, repr(exc)))
                print(f"{variant} seed={seed}: FAILED ({exc})", file=sys.stderr)
    summary = os.path.join(root, "summary.csv")
    with open(summary, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "seed", "final_eval_return_decentralized",
                         "final_L_Align"])
        writer.writerows(rows)
    print(f"summary: {summary}")
    return 1 if failures else 0


def _final_align(metrics_path):
    last = None
    with open(metrics_path) as f:
        for row in csv.DictReader(f):
            last = row
    return float(last["L_Align"]) if last else float("nan")


def cmd_plot(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = []
    for run in args.runs:
        steps, vals = [], []
        with open(os.path.join(run, "metrics.csv")) as f:
            for row in csv.DictReader(f):
                v = row[args.column]
                if v != "":
                    steps.append(int(row["step"]))
                    vals.append(float(v))
        series.append((np.array(steps), np.array(vals)))
    if not series:
        print("plot: no runs given", file=sys.stderr)
        return EXIT_CONFIG
    grid = series[0][0]
    stacked = np.stack([v for _, v in series])
    mean = stacked.mean(axis=0)
    if len(series) > 1:
        sem = stacked.std(axis=0, ddof=1) / np.sqrt(len(series))
        band = 1.96 * sem
    else:
        band = np.zeros_like(mean)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, mean, label=f"mean over {len(series)} runs")
    ax.fill_between(grid, mean - band, mean + band, alpha=0.25,
                    label="95% confidence band")
    ax.set_xlabel("training step")
    ax.set_ylabel(args.column)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.svg, format="svg")
    print(f"wrote {args.svg}")
    return 0


def cmd_oracle(args):
    cfg = load_config(args.config, args.set or ())
    env = cfg.build_env()
    value = oracle_optimal_return(env, seed=args.env_seed)
    print(f"env={cfg.env} seed={args.env_seed}: optimal return {value:.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tacit", description="selective implicit-cooperation MARL trainer"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help="explicit run directory")
    p.add_argument("--out-root", help="output root (default $TACIT_OUT or ./runs)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a finished run")
    p.add_argument("--run", required=True, help="run directory with checkpoint")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--mode", choices=("centralized", "decentralized"),
                   default="decentralized")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="run every variant x seed and summarize")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--variants", nargs="+", choices=VARIANTS)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--out", help="ablation output directory")
    p.add_argument("--out-root")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("plot", help="learning-curve SVG across runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--svg", required=True)
    p.add_argument("--column", default="eval_return_decentralized")
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("oracle", help="print the environment's optimal return")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--env-seed", type=int, default=0)
    p.set_defaults(fn=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
