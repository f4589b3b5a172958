"""Command-line entry point.

Exit status: 0 on success, 2 on usage or configuration errors, 1 when a run
fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .. import checkpoint as ckpt
from .. import pretrain as pt
from ..embedder import HashedEmbedder
from .config import (
    BenchmarkConfig,
    ConfigError,
    GenDataJob,
    PretrainJob,
    RunConfig,
    load_json,
    pretrain_config,
    regressor_config,
    strict,
)
from .loop import write_json
from .runner import evaluate_in_context, heldout_tasks, run_benchmark, run_config

log = logging.getLogger("stringbo")


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the seed in the config")
    parser.add_argument("--out-dir", default=default, help="directory for result files")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stringbo", description="Embed-then-regress Bayesian optimization.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pretrain a regressor checkpoint")
    p.add_argument("--config", required=True)
    _global_flags(p, suppress=True)

    p = sub.add_parser("optimize", help="run one optimization task")
    p.add_argument("--config", required=True)
    _global_flags(p, suppress=True)

    p = sub.add_parser("benchmark", help="run a benchmark suite")
    p.add_argument("--suite", required=True, choices=["bbob", "combo"])
    p.add_argument("--config", help="JSON overrides for the suite")
    _global_flags(p, suppress=True)

    p = sub.add_parser("eval-regressor", help="in-context predictive metrics of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--suite", required=True, help="bbob-test, bbob-train or combo")
    p.add_argument("--tasks", type=int, default=20)
    p.add_argument("--contexts", default="10,50", help="comma-separated history sizes")
    _global_flags(p, suppress=True)

    p = sub.add_parser("gen-data", help="generate a pretraining dataset")
    p.add_argument("--config", required=True)
    _global_flags(p, suppress=True)
    return parser


def _out_dir(args, fallback="."):
    path = args.out_dir or fallback
    os.makedirs(path, exist_ok=True)
    return path


def _with_seed(data: dict, args, key="seed"):
    if args.seed is not None:
        data = {**data, key: args.seed}
    return data


def cmd_pretrain(args) -> int:
    job = strict(PretrainJob, load_json(args.config), "pretrain job")
    pconf = pretrain_config(_with_seed(job.pretrain, args))
    rconf = regressor_config(job.regressor)
    out = _out_dir(args)
    path = job.checkpoint if os.path.isabs(job.checkpoint) else os.path.join(out, job.checkpoint)
    dataset = None
    if job.dataset:
        if not os.path.exists(job.dataset):
            raise ConfigError(f"dataset not found: {job.dataset}")
        dataset = pt.load_dataset(job.dataset)
    result = pt.train(pconf, rconf, dataset, checkpoint_path=path, callback=lambda row: log.info(json.dumps(row)))
    write_json(os.path.join(out, "train_metrics.json"), result.metrics)
    print(path)
    return 0


def cmd_optimize(args) -> int:
    data = load_json(args.config)
    cfg = strict(RunConfig, _with_seed(data, args), "run config")
    summary = run_config(cfg, _out_dir(args, cfg.out_dir or "."))
    print(json.dumps(summary["algorithms"], indent=2, sort_keys=True))
    return 0


def cmd_benchmark(args) -> int:
    data = load_json(args.config) if args.config else {}
    if data.get("suite", args.suite) != args.suite:
        raise ConfigError(f"config suite {data['suite']!r} disagrees with --suite {args.suite}")
    data["suite"] = args.suite
    cfg = strict(BenchmarkConfig, _with_seed(data, args), "benchmark config")
    out = _out_dir(args, os.path.join(".", f"benchmark_{args.suite}"))
    run_benchmark(cfg, out, progress=lambda s: log.info("finished %s", s["task"]))
    print(os.path.join(out, "summary.json"))
    return 0


def cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    try:
        contexts = tuple(int(c) for c in args.contexts.split(","))
    except ValueError:
        raise ConfigError(f"--contexts must be comma-separated integers, got {args.contexts!r}") from None
    regressor = ckpt.load_regressor(args.checkpoint)
    seed = 10_000 if args.seed is None else args.seed
    tasks = heldout_tasks(args.suite, args.tasks, seed)
    embedder = HashedEmbedder(regressor.config.d_embed)
    metrics = evaluate_in_context(regressor, embedder, tasks, contexts)
    out = _out_dir(args)
    write_json(os.path.join(out, "metrics.json"), {"suite": args.suite, "tasks": args.tasks, "contexts": metrics})
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def cmd_gen_data(args) -> int:
    job = strict(GenDataJob, load_json(args.config), "gen-data job")
    pconf = pretrain_config(_with_seed(job.pretrain, args))
    out = _out_dir(args)
    path = job.output if os.path.isabs(job.output) else os.path.join(out, job.output)
    pt.save_dataset(pt.generate_tasks(pconf), path, pconf)
    print(path)
    return 0


COMMANDS = {
    "pretrain": cmd_pretrain,
    "optimize": cmd_optimize,
    "benchmark": cmd_benchmark,
    "eval-regressor": cmd_eval,
    "gen-data": cmd_gen_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
