"""Sequential optimization runs and their result files."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import acquisition as acq
from .. import normalizer as nz
from .. import space as sp
from ..space import format_number
from .metrics import best_so_far, predictive_metrics
from .tasks import BenchmarkTask

TRIAL_COLUMNS = ("trial", "candidate", "y", "best_so_far", "wall_ms")


def fmt(value: float) -> str:
    """Six significant digits; infinities (singular LOGDET minors) spelled out."""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format_number(value)


class Algorithm(str, enum.Enum):
    ETR = "ETR"
    RANDOM = "RANDOM"
    REGEVO = "REGEVO"
    REGEVO_ETR = "REGEVO_ETR"

    @property
    def uses_model(self) -> bool:
        return self in (Algorithm.ETR, Algorithm.REGEVO_ETR)


@dataclass
class TrialLog:
    candidates: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    predictions: list = field(default_factory=list)

    def __len__(self):
        return len(self.ys)

    def append(self, cand_string: str, y: float, wall_ms: float = 0.0):
        self.candidates.append(cand_string)
        self.ys.append(float(y))
        self.wall_ms.append(float(wall_ms))

    @property
    def best(self) -> np.ndarray:
        return best_so_far(self.ys)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRIAL_COLUMNS)
        for i, (c, y, b, w) in enumerate(zip(self.candidates, self.ys, self.best, self.wall_ms), start=1):
            writer.writerow([i, c, fmt(y), fmt(b), fmt(w)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrialLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != TRIAL_COLUMNS:
            raise ValueError(f"trials CSV must start with header {','.join(TRIAL_COLUMNS)}")
        log = cls()
        for row in rows[1:]:
            log.append(row[1], float(row[2]), float(row[4]))
        return log

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


class ObjectiveFailure(RuntimeError):
    def __init__(self, message, log: TrialLog):
        super().__init__(message)
        self.log = log


def run_rng(seed: int, repeat: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, repeat, 11]))


def run_optimization(
    task: BenchmarkTask,
    algorithm,
    budget: int,
    seed: int = 0,
    repeat: int = 0,
    regressor=None,
    embedder=None,
    acq_config: acq.AcquisitionConfig | None = None,
    record_wall_time: bool = False,
    flush_path=None,
) -> TrialLog:
    """Run ``budget`` trials of ``algorithm`` on ``task``.

    With ``record_wall_time`` false the ``wall_ms`` column is zero, which keeps
    logs byte-identical across reruns.  If the objective raises, the partial
    log is written to ``flush_path`` (when given) and :class:`ObjectiveFailure`
    is raised.
    """
    algorithm = Algorithm(algorithm)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if algorithm.uses_model and (regressor is None or embedder is None):
        raise ValueError(f"{algorithm.value} needs a regressor and an embedder")
    config = acq.AcquisitionConfig() if acq_config is None else acq_config
    rng = run_rng(seed, repeat)
    space = task.space
    combinatorial = space.kind is not sp.SpaceKind.FLAT
    evolution = acq.EvolutionState() if algorithm in (Algorithm.REGEVO, Algorithm.REGEVO_ETR) or (
        algorithm is Algorithm.ETR and combinatorial
    ) else None
    model = regressor if algorithm.uses_model else None
    history: list = []
    log = TrialLog()
    for trial in range(budget):
        started = time.perf_counter()
        if algorithm is Algorithm.RANDOM:
            cand = sp.sample(space, rng)
        elif algorithm is Algorithm.REGEVO:
            cand = acq.regevo_propose(evolution, space, rng)
        else:
            cand = acq.suggest(history, space, model, embedder, config, rng, evolution, trial)
        if model is not None and len(history) >= 2:
            log.predictions.append(_one_step_prediction(history, space, model, embedder, config, cand))
        else:
            log.predictions.append(None)
        try:
            y = task.evaluate(cand)
        except Exception as exc:
            if flush_path:
                log.write(flush_path)
            raise ObjectiveFailure(f"objective failed at trial {trial + 1}: {exc}", log) from exc
        if evolution is not None:
            evolution.insert(cand, y)
        history.append((cand, y))
        wall = (time.perf_counter() - started) * 1000.0 if record_wall_time else 0.0
        log.append(sp.candidate_to_string(space, cand), y, wall)
        pred = log.predictions[-1]
        if pred is not None:
            state = pred.pop("state")
            pred["y"] = float(nz.apply(state, acq.finite_values(np.array([y]))[0]))
    return log


def _one_step_prediction(history, space, model, embedder, config, cand) -> dict:
    """Prediction for the chosen candidate, kept for predictive metrics."""
    ucb = acq.UCBAcquisition(history, space, model, embedder, config.sqrt_beta)
    mu, sigma = ucb.predict([cand])
    return {"mu": float(mu[0]), "sigma": float(sigma[0]), "state": ucb.state}


def prediction_metrics(log: TrialLog) -> dict | None:
    rows = [p for p in log.predictions if p is not None and "y" in p]
    if len(rows) < 2:
        return None
    return predictive_metrics([r["mu"] for r in rows], [r["sigma"] for r in rows], [r["y"] for r in rows])


# --------------------------------------------------------------------------
# aggregation and persistence
# --------------------------------------------------------------------------


def curves(logs) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of best-so-far across repeats."""
    stacked = np.vstack([log.best for log in logs])
    return stacked.mean(axis=0), stacked.std(axis=0)


def curves_csv(mean: np.ndarray, std: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("trial", "mean_best", "stddev_best"))
    for i, (m, s) in enumerate(zip(mean, std), start=1):
        writer.writerow([i, fmt(m), fmt(s)])
    return buf.getvalue()


def write_text(path, text: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_json(path, data):
    write_text(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")
