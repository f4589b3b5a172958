"""Repeated runs, benchmark suites and regressor evaluation."""

from __future__ import annotations

import os

import numpy as np

from .. import normalizer as nz
from ..checkpoint import load_regressor
from ..embedder import Backend, make_embedder
from ..pretrain import Family, PretrainConfig, generate_tasks
from .config import BenchmarkConfig, ConfigError, RunConfig, acquisition_config, embedder_config
from .loop import Algorithm, TrialLog, curves, curves_csv, prediction_metrics, run_optimization, write_json, write_text
from .metrics import log_efficiency, predictive_metrics
from .tasks import bbob_suite, build_task, combo_suite


def needs_model(algorithms) -> bool:
    return any(Algorithm(a).uses_model for a in algorithms)


def load_model(checkpoint, embedder_data):
    """Regressor plus a matching embedder; configuration problems raise ConfigError."""
    if not checkpoint:
        raise ConfigError("a checkpoint is required for model-based algorithms")
    if not os.path.exists(checkpoint):
        raise ConfigError(f"checkpoint not found: {checkpoint}")
    regressor = load_regressor(checkpoint)
    econf = embedder_config(embedder_data)
    if econf.backend is Backend.HASHED and econf.d != regressor.config.d_embed:
        if "d" in (embedder_data or {}):
            raise ConfigError(f"embedder d={econf.d} does not match checkpoint d_embed={regressor.config.d_embed}")
        econf = embedder_config({**(embedder_data or {}), "d": regressor.config.d_embed})
    return regressor, make_embedder(econf)


def _seed_dir(out_dir, task_name, algorithm, repeat):
    return os.path.join(out_dir, task_name, algorithm, f"seed_{repeat}")


def _write_single(path, log: TrialLog):
    os.makedirs(path, exist_ok=True)
    log.write(os.path.join(path, "trials.csv"))
    write_text(os.path.join(path, "curves.csv"), curves_csv(*curves([log])))
    write_json(os.path.join(path, "metrics.json"), _metrics_block(prediction_metrics(log), None))


def _metrics_block(pred, log_eff) -> dict:
    pred = pred or {}
    return {
        "nll": pred.get("nll"),
        "mae": pred.get("mae"),
        "r2": pred.get("r2"),
        "mace": pred.get("mace"),
        "log_efficiency": log_eff or {},
    }


def _pooled_prediction_metrics(logs):
    rows = [p for log in logs for p in log.predictions if p is not None and "y" in p]
    if len(rows) < 2:
        return None
    return predictive_metrics([r["mu"] for r in rows], [r["sigma"] for r in rows], [r["y"] for r in rows])


def run_task(task_spec, algorithms, budget, repeats, seed, out_dir=None, model=None, acq=None, record_wall_time=False):
    """Run every algorithm on every repeat of one task spec.

    Returns ``{"name", "tasks": [BenchmarkTask per repeat], "logs": {algo: [TrialLog]}}``.
    """
    regressor, embedder = model if model is not None else (None, None)
    tasks = [build_task(task_spec, r) for r in range(repeats)]
    name = tasks[0].name
    logs = {}
    for algo in algorithms:
        logs[algo] = []
        for r, task in enumerate(tasks):
            flush = None
            if out_dir:
                path = _seed_dir(out_dir, name, algo, r)
                os.makedirs(path, exist_ok=True)
                flush = os.path.join(path, "trials.csv")
            log = run_optimization(
                task, algo, budget, seed, r, regressor, embedder, acq, record_wall_time, flush_path=flush
            )
            logs[algo].append(log)
            if out_dir:
                _write_single(_seed_dir(out_dir, name, algo, r), log)
    return {"name": name, "tasks": tasks, "logs": logs}


def summarise(result, out_dir=None, gap_rng_seed=0) -> dict:
    """Aggregate curves, log-efficiencies and (for minimisation tasks) optimality gaps."""
    name, tasks, logs = result["name"], result["tasks"], result["logs"]
    algos = list(logs)
    means = {a: curves(logs[a]) for a in algos}
    summary = {"task": name, "algorithms": {}}
    gaps = None
    if tasks[0].minimize:
        gaps = {a: [] for a in algos}
        for r, task in enumerate(tasks):
            observed = min(task.raw_value(y) for a in algos for y in logs[a][r].ys)
            ref = min(task.objective.reference_minimum(np.random.default_rng([gap_rng_seed, r])), observed)
            for a in algos:
                best_raw = min(task.raw_value(y) for y in logs[a][r].ys)
                gaps[a].append(best_raw - ref)
    for a in algos:
        mean, std = means[a]
        eff = {}
        for b in algos:
            if b != a:
                eff[b] = log_efficiency(mean, means[b][0]).to_dict()
        block = _metrics_block(_pooled_prediction_metrics(logs[a]), eff)
        block["final_mean_best"] = float(mean[-1])
        block["final_stddev_best"] = float(std[-1])
        if gaps is not None:
            block["optimality_gaps"] = [float(g) for g in gaps[a]]
            block["mean_optimality_gap"] = float(np.mean(gaps[a]))
        summary["algorithms"][a] = block
        if out_dir:
            base = os.path.join(out_dir, name, a)
            write_text(os.path.join(base, "curves.csv"), curves_csv(mean, std))
            write_json(os.path.join(base, "metrics.json"), block)
    return summary


def run_config(cfg: RunConfig, out_dir=None) -> dict:
    acq = acquisition_config(cfg.acquisition)
    model = load_model(cfg.checkpoint, cfg.embedder) if needs_model([cfg.algorithm]) else None
    out_dir = out_dir or cfg.out_dir
    result = run_task(cfg.task, [cfg.algorithm], cfg.budget, cfg.repeats, cfg.seed, out_dir, model, acq, cfg.record_wall_time)
    return summarise(result, out_dir)


def run_benchmark(cfg: BenchmarkConfig, out_dir=None, progress=None) -> dict:
    acq = acquisition_config(cfg.acquisition)
    model = load_model(cfg.checkpoint, cfg.embedder) if needs_model(cfg.algorithms) else None
    if cfg.suite == "bbob":
        specs = bbob_suite(cfg.seed, cfg.functions, tuple(cfg.dims))
    else:
        specs = combo_suite(cfg.seed, cfg.kinds)
    summaries = []
    for spec in specs:
        result = run_task(spec, cfg.algorithms, cfg.budget, cfg.repeats, cfg.seed, out_dir, model, acq, cfg.record_wall_time)
        summaries.append(summarise(result, out_dir))
        if progress is not None:
            progress(summaries[-1])
    out = {"suite": cfg.suite, "budget": cfg.budget, "repeats": cfg.repeats, "tasks": summaries}
    if out_dir:
        write_json(os.path.join(out_dir, "summary.json"), out)
    return out


# --------------------------------------------------------------------------
# in-context predictive evaluation
# --------------------------------------------------------------------------

EVAL_FAMILIES = {"bbob": Family.BBOB_TEST, "bbob-test": Family.BBOB_TEST, "bbob-train": Family.BBOB_TRAIN, "combo": Family.COMBINATORIAL}


def heldout_tasks(suite: str, count: int, seed: int, trajectory_length: int = 100):
    if suite not in EVAL_FAMILIES:
        raise ConfigError(f"unknown evaluation suite {suite!r}; choose from {sorted(EVAL_FAMILIES)}")
    cfg = PretrainConfig(task_count=count, trajectory_length=trajectory_length, seed=seed, family=EVAL_FAMILIES[suite], randomize_names=False)
    return generate_tasks(cfg)


def evaluate_in_context(regressor, embedder, tasks, contexts=(10, 50), n_targets=40) -> dict:
    """Mean predictive metrics over tasks for each history size.

    Every context size predicts the same final ``n_targets`` trials of a task;
    values are normalised with the state fitted on that history.
    """
    out = {}
    for c in contexts:
        per_task = []
        for task in tasks:
            if c + n_targets > task.length:
                raise ValueError(f"context {c} + {n_targets} targets exceeds task length {task.length}")
            state = nz.fit(task.ys[:c])
            hx = embedder.embed_uncached(task.strings[:c])
            tx = embedder.embed_uncached(task.strings[-n_targets:])
            meta = embedder.embed(task.metadata) if regressor.config.use_metadata else None
            mu, sigma = regressor.predict(hx, nz.apply(state, task.ys[:c]), tx, meta)
            per_task.append(predictive_metrics(mu, sigma, nz.apply(state, task.ys[-n_targets:])))
        out[str(c)] = {
            key: float(np.mean([m[key] for m in per_task if m[key] is not None]))
            for key in ("nll", "mae", "r2", "mace")
        }
    return out
