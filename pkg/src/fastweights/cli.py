"""Command-line entry point: gen, train, eval, check.

Exit codes: 0 success, 1 runtime failure, 2 usage or contract error.
Flag values override config-file values, which override defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from .autodiff import ContractError
from .config import ConfigError, load_config_file, validate_config
from .numerics import ShapeError
from .tasks.mnist import IdxError
from .tasks.retrieval import EncodeError, gen_retrieval
from .training.checkpoint import CheckpointError
from . import experiments, verify

USAGE_ERRORS = (
    ConfigError,
    ContractError,
    ShapeError,
    EncodeError,
    IdxError,
    CheckpointError,
    FileNotFoundError,
    ValueError,
)


def build_hash() -> str:
    """Content hash of the installed package sources, for run provenance."""
    root = os.path.dirname(os.path.abspath(__file__))
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith((".py", ".json")):
                path = os.path.join(dirpath, name)
                digest.update(os.path.relpath(path, root).encode())
                with open(path, "rb") as f:
                    digest.update(f.read())
    return digest.hexdigest()


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastweights")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate datasets")
    gen_sub = gen.add_subparsers(dest="gen_task", required=True)
    gr = gen_sub.add_parser("retrieval")
    gr.add_argument("--pairs", type=int, default=4)
    gr.add_argument("--train", type=int, default=100_000)
    gr.add_argument("--valid", type=int, default=10_000)
    gr.add_argument("--test", type=int, default=20_000)
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train a model")
    tr.add_argument("task", choices=["retrieval", "glimpse", "catch"])
    tr.add_argument("--config", help="JSON config file")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--cell", choices=["fast", "lstm", "irnn"])
    tr.add_argument("--hidden", type=int)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--eta", type=float)
    tr.add_argument("--lam", type=float)
    tr.add_argument("--inner-steps", type=int, dest="inner_steps")
    tr.add_argument("--boundary", choices=["sustained", "identity"])
    tr.add_argument("--backend", choices=["attention", "materialized"])
    tr.add_argument("--batch", type=int, dest="batch_size")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--max-steps", type=int, dest="max_steps")
    tr.add_argument("--eval-every", type=int, dest="eval_every")
    tr.add_argument("--pairs", type=int)
    tr.add_argument("--data-dir", dest="data_dir")
    tr.add_argument("--mnist-dir", dest="mnist_dir")
    tr.add_argument("--program", choices=["repeat24", "plain20"])
    tr.add_argument("--n", type=int)
    tr.add_argument("--m", type=int)
    tr.add_argument("--env-steps", type=int, dest="max_env_steps")
    tr.add_argument("--episodes-per-update", type=int, dest="episodes_per_update")
    tr.add_argument("--entropy-coef", type=float, dest="entropy_coef")
    tr.add_argument("--value-coef", type=float, dest="value_coef")

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", help="retrieval dataset file")
    ev.add_argument("--mnist-dir", dest="mnist_dir")
    ev.add_argument("--split", default="test", choices=["train", "valid", "test"])
    ev.add_argument("--episodes", type=int, default=1000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--metrics", help="metrics CSV to append to")

    ck = sub.add_parser("check", help="run a verification suite")
    ck.add_argument("suite", choices=["grad", "equiv", "closure", "env", "all"])
    ck.add_argument("--cases", type=int, default=1000)
    ck.add_argument("--seed", type=int, default=7)
    ck.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


TRAIN_OVERRIDE_KEYS = (
    "cell", "hidden", "seed", "lr", "eta", "lam", "inner_steps", "boundary",
    "backend", "batch_size", "epochs", "max_steps", "eval_every", "pairs",
    "data_dir", "mnist_dir", "program", "n", "m", "max_env_steps",
    "episodes_per_update", "entropy_coef", "value_coef",
)


def cmd_gen(args) -> int:
    manifest = gen_retrieval(args.pairs, args.train, args.valid, args.test, args.seed, args.out)
    print(json.dumps(manifest))
    return 0


def cmd_train(args) -> int:
    if args.config:
        cfg = load_config_file(args.config, task=args.task)
        if cfg["task"] != args.task:
            raise ConfigError(f"$.task: config is for {cfg['task']!r}, command says {args.task!r}")
    else:
        cfg = validate_config({"task": args.task})
    overrides = {
        k: getattr(args, k) for k in TRAIN_OVERRIDE_KEYS if getattr(args, k, None) is not None
    }
    cfg = validate_config({**cfg, **overrides})
    experiments.write_run_provenance(args.out, cfg, build_hash())
    if args.task == "retrieval":
        result = experiments.run_retrieval_training(cfg, args.out)
        print(f"best validation error: {100 * result['best_valid_error']:.2f}%")
    elif args.task == "glimpse":
        result = experiments.run_glimpse_training(cfg, args.out)
        print(f"best validation error: {100 * result['best_valid_error']:.2f}%")
    else:
        result = experiments.run_catch_training(cfg, args.out)
        print(f"best eval mean reward: {result['best_eval_reward']:.3f}")
    return 0


def cmd_eval(args) -> int:
    result = experiments.evaluate_checkpoint(
        args.checkpoint,
        data_path=args.data,
        mnist_dir=args.mnist_dir,
        split=args.split,
        episodes=args.episodes,
        seed=args.seed,
    )
    print(f"{result['value']:.2f}")
    metrics_path = args.metrics or os.path.join(
        os.path.dirname(os.path.abspath(args.checkpoint)), "metrics.csv"
    )
    experiments.append_eval_metrics(metrics_path, result)
    return 0


def cmd_check(args) -> int:
    suites = ["grad", "equiv", "closure", "env"] if args.suite == "all" else [args.suite]
    failed = False
    for suite in suites:
        if suite == "grad":
            report = verify.grad_suite(seed=args.seed, inject_fault=args.inject_fault)
            for name, r in sorted(report["reports"].items()):
                status = "pass" if r["passed"] else "FAIL"
                print(f"[{status}] grad {name}: max rel error {r['max_rel_error']:.3e}")
        elif suite == "equiv":
            report = verify.equivalence_suite(cases=args.cases, seed=args.seed)
            print(f"[{'pass' if report['passed'] else 'FAIL'}] equiv: "
                  f"{report['cases']} cases, worst {report['worst']:.3e}")
            for f in report["failures"]:
                print(f"  failing case_seed={f['case_seed']} max_abs_diff={f['max_abs_diff']:.3e}")
        elif suite == "closure":
            report = verify.closure_suite(seed=args.seed)
            print(f"[{'pass' if report['passed'] else 'FAIL'}] closure: "
                  f"unroll-vs-closed {report['worst_closure']:.3e}, "
                  f"decay rel {report['worst_decay_rel']:.3e}")
        else:
            report = verify.env_suite(seed=args.seed)
            print(f"[{'pass' if report['passed'] else 'FAIL'}] env: "
                  f"oracle mean reward {report['oracle_mean_n16']:.3f}")
            for p in report["problems"]:
                print(f"  {p}")
        failed = failed or not report["passed"]
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_check(args)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
