"""Offline task generation and regressor pretraining.

A task is a trajectory of ``T`` uniformly sampled candidates from one
randomly drawn objective.  Training cuts each trajectory at a random
``t'``: the first ``t'`` trials form the history and the rest are targets
whose summed Gaussian NLL is the loss.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import string
import struct
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import checkpoint as ckpt
from . import normalizer as nz
from . import space as sp
from .embedder import HashedEmbedder
from .objectives import bbob, objective_from_dict
from .objectives.combinatorial import ProblemKind, sample_problem
from .objectives.synthetic import apply_transforms
from .regressor import Regressor, RegressorConfig, batch_nll_loss, forward

log = logging.getLogger(__name__)

MIN_CUT = 10
DATASET_MAGIC = b"ETRD"
DATASET_VERSION = 1


class Family(str, enum.Enum):
    BBOB_TRAIN = "BBOB_TRAIN"
    BBOB_TEST = "BBOB_TEST"
    COMBINATORIAL = "COMBINATORIAL"
    MIXED = "MIXED"


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass(frozen=True)
class PretrainConfig:
    task_count: int = 10_000
    trajectory_length: int = 100
    batch_size: int = 16
    lr: float = 5e-4
    weight_decay: float = 1e-5
    clip_norm: float = 0.5
    steps: int = 3000
    seed: int = 0
    family: Family = Family.BBOB_TRAIN
    min_dim: int = 2
    max_dim: int = 4
    randomize_names: bool | None = None
    rename_prob: float = 0.5
    log_every: int = 100
    checkpoint_every: int = 500
    embed_dim: int = 256
    ngram_n: int = 3

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.trajectory_length < 100:
            raise ValueError(f"trajectory_length must be >= 100, got {self.trajectory_length}")
        if self.batch_size < 1 or self.task_count < 1 or self.steps < 0:
            raise ValueError("batch_size and task_count must be positive, steps non-negative")
        if not 1 <= self.min_dim <= self.max_dim:
            raise ValueError("need 1 <= min_dim <= max_dim")

    @property
    def names_randomized(self) -> bool:
        if self.randomize_names is None:
            return self.family in (Family.BBOB_TRAIN, Family.MIXED)
        return self.randomize_names

    def to_dict(self):
        d = asdict(self)
        d["family"] = self.family.value
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown pretrain config keys: {unknown}")
        return cls(**data)


# --------------------------------------------------------------------------
# tasks
# --------------------------------------------------------------------------


@dataclass
class Task:
    seed: int
    objective: dict
    strings: list
    ys: np.ndarray
    metadata: str = ""

    @property
    def length(self) -> int:
        return len(self.strings)


def task_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def random_name(rng) -> str:
    head = string.ascii_lowercase
    tail = string.ascii_lowercase + string.digits + "_"
    length = int(rng.integers(1, 9))
    return head[int(rng.integers(len(head)))] + "".join(tail[int(i)] for i in rng.integers(len(tail), size=length - 1))


def _random_names(count, rng):
    names: list[str] = []
    while len(names) < count:
        name = random_name(rng)
        if name not in names:
            names.append(name)
    return names


COMBO_PERM_SIZES = (5, 10)
COMBO_CHOICE_SIZES = (8, 20)


def _combinatorial_instance(rng):
    kind = list(ProblemKind)[int(rng.integers(len(ProblemKind)))]
    if kind.is_permutation:
        n = int(rng.integers(COMBO_PERM_SIZES[0], COMBO_PERM_SIZES[1] + 1))
        k = 0
    else:
        n = int(rng.integers(COMBO_CHOICE_SIZES[0], COMBO_CHOICE_SIZES[1] + 1))
        k = int(rng.integers(2, n // 2 + 1))
    return sample_problem(kind, n, k, rng)


def make_task(config: PretrainConfig, seed: int) -> Task:
    """Build one task deterministically from its seed."""
    rng = np.random.default_rng(seed)
    T = config.trajectory_length
    family = config.family
    if family is Family.MIXED:
        family = Family.BBOB_TRAIN if rng.random() < 0.5 else Family.COMBINATORIAL
    if family is Family.COMBINATORIAL:
        prob = _combinatorial_instance(rng)
        space = prob.space
        cands = [sp.sample(space, rng) for _ in range(T)]
        ys = prob.evaluate_batch(np.array([sorted(c) if not prob.kind.is_permutation else c for c in cands]))
        # singular LOGDET minors would poison the normaliser
        finite = ys[np.isfinite(ys)]
        floor = float(finite.min()) - 1.0 if finite.size else 0.0
        ys = np.where(np.isfinite(ys), ys, floor)
        strings = [sp.candidate_to_string(space, c) for c in cands]
        return Task(seed, prob.to_dict(), strings, ys, sp.metadata_to_string(space))
    names = bbob.TRAIN if family is Family.BBOB_TRAIN else bbob.TEST
    base = names[int(rng.integers(len(names)))]
    dim = int(rng.integers(config.min_dim, config.max_dim + 1))
    obj = apply_transforms(base, dim, rng)
    vecs_space = obj.space
    cands = [sp.sample(vecs_space, rng) for _ in range(T)]
    ys = -obj.evaluate_vectors(np.array([obj.decode(c) for c in cands]))
    space = vecs_space
    if config.names_randomized and rng.random() < config.rename_prob:
        new = _random_names(dim, rng)
        mapping = dict(zip(space.names, new))
        space = sp.rename_params(space, new)
        cands = [sp.rename_candidate(c, mapping) for c in cands]
    strings = [sp.candidate_to_string(space, c) for c in cands]
    return Task(seed, obj.to_dict(), strings, ys, sp.metadata_to_string(space))


def generate_tasks(config: PretrainConfig, count: int | None = None, start: int = 0) -> list[Task]:
    count = config.task_count if count is None else count
    return [make_task(config, task_seed(config.seed, start + i)) for i in range(count)]


def objective_of(task: Task):
    return objective_from_dict(task.objective)


# --------------------------------------------------------------------------
# on-disk dataset
# --------------------------------------------------------------------------


def _write_task(fh, task: Task):
    header = json.dumps(
        {"seed": task.seed, "objective": task.objective, "metadata": task.metadata}, sort_keys=True
    ).encode("utf-8")
    fh.write(struct.pack("<I", len(header)))
    fh.write(header)
    fh.write(struct.pack("<I", task.length))
    for s in task.strings:
        raw = s.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
    fh.write(np.ascontiguousarray(task.ys, dtype="<f8").tobytes())


def save_dataset(tasks, path, config: PretrainConfig | None = None):
    meta = json.dumps(config.to_dict() if config else {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<HI", DATASET_VERSION, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(tasks)))
        for task in tasks:
            _write_task(fh, task)


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated dataset: wanted {n} bytes, got {len(data)}")
    return data


def iter_dataset(path):
    """Stream tasks from a dataset file without loading all of it."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != DATASET_MAGIC:
            raise ValueError(f"{path} is not a task dataset")
        version, meta_len = struct.unpack("<HI", _read_exact(fh, 6))
        if version != DATASET_VERSION:
            raise ValueError(f"dataset version {version} unsupported (expected {DATASET_VERSION})")
        _read_exact(fh, meta_len)
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(count):
            (hlen,) = struct.unpack("<I", _read_exact(fh, 4))
            header = json.loads(_read_exact(fh, hlen).decode("utf-8"))
            (T,) = struct.unpack("<I", _read_exact(fh, 4))
            strings = []
            for _ in range(T):
                (slen,) = struct.unpack("<I", _read_exact(fh, 4))
                strings.append(_read_exact(fh, slen).decode("utf-8"))
            ys = np.frombuffer(_read_exact(fh, 8 * T), dtype="<f8").astype(np.float64)
            yield Task(header["seed"], header["objective"], strings, ys, header.get("metadata", ""))


def load_dataset(path) -> list[Task]:
    return list(iter_dataset(path))


# --------------------------------------------------------------------------
# examples and batches
# --------------------------------------------------------------------------


@dataclass
class TrainingExample:
    history_strings: list
    history_y: np.ndarray
    target_strings: list
    target_y: np.ndarray
    metadata: str
    state: nz.NormalizerState = field(repr=False)

    @property
    def cut(self) -> int:
        return len(self.history_strings)


def make_example(task: Task, cut: int) -> TrainingExample:
    """Split ``task`` at ``cut``; normalisation is fitted on the history only."""
    if not MIN_CUT <= cut <= task.length - MIN_CUT:
        raise ValueError(f"cut {cut} outside [{MIN_CUT}, {task.length - MIN_CUT}]")
    state = nz.fit(task.ys[:cut])
    normed = nz.apply(state, task.ys)
    return TrainingExample(
        task.strings[:cut], normed[:cut], task.strings[cut:], normed[cut:], task.metadata, state
    )


def sample_training_example(dataset, rng) -> TrainingExample:
    task = dataset[int(rng.integers(len(dataset)))]
    cut = int(rng.integers(MIN_CUT, task.length - MIN_CUT + 1))
    return make_example(task, cut)


def build_batch(examples, embedder, config: RegressorConfig):
    """Stack examples of equal length into tokens, masks, targets and weights."""
    lengths = {ex.cut + len(ex.target_strings) for ex in examples}
    if len(lengths) != 1:
        raise ValueError(f"examples in a batch need equal lengths, got {sorted(lengths)}")
    (T,) = lengths
    B = len(examples)
    tokens = np.zeros((B, T, config.d_input))
    mask = np.zeros((B, T, T), dtype=bool)
    ys = np.zeros((B, T))
    weights = np.zeros((B, T))
    all_strings = [s for ex in examples for s in ex.history_strings + ex.target_strings]
    emb = embedder.embed_uncached(all_strings).reshape(B, T, -1)
    meta = embedder.embed_uncached([ex.metadata for ex in examples]) if config.use_metadata else None
    for b, ex in enumerate(examples):
        t = ex.cut
        col = config.d_embed
        tokens[b, :, :col] = emb[b]
        if meta is not None:
            tokens[b, :, col : 2 * col] = meta[b]
            col *= 2
        tokens[b, :t, col] = ex.history_y
        tokens[b, t:, col + 1] = 1.0
        mask[b, :, :t] = True
        ys[b, :t] = ex.history_y
        ys[b, t:] = ex.target_y
        weights[b, t:] = 1.0
    return tokens, mask, ys, weights


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


@dataclass
class TrainResult:
    regressor: Regressor
    metrics: list
    diverged: bool = False


def make_embedder(config: PretrainConfig):
    return HashedEmbedder(config.embed_dim, config.ngram_n)


def loss_and_grads(params, rconfig, batch):
    tokens, mask, ys, weights = batch
    mu, sigma = forward(params, rconfig, tokens, mask)
    loss = batch_nll_loss(mu, sigma, ys, weights, rconfig.sigma_floor)
    grads = ad.backward(loss, list(params.values()))
    return float(loss.data), grads


def train(
    pconfig: PretrainConfig,
    rconfig: RegressorConfig,
    dataset=None,
    checkpoint_path=None,
    callback=None,
) -> TrainResult:
    """Pretrain a regressor; returns parameters rounded to checkpoint precision.

    On a non-finite loss the loop stops, the last good parameters are kept
    (and saved when ``checkpoint_path`` is given) and
    :class:`TrainingDivergedError` is raised.
    """
    if rconfig.d_embed != pconfig.embed_dim:
        raise ValueError(f"regressor d_embed {rconfig.d_embed} != embedder dim {pconfig.embed_dim}")
    dataset = generate_tasks(pconfig) if dataset is None else dataset
    if not dataset:
        raise ValueError("empty dataset")
    embedder = make_embedder(pconfig)
    rng = np.random.default_rng(np.random.SeedSequence([pconfig.seed, 1]))
    reg = Regressor.initialise(rconfig, seed=pconfig.seed)
    params = reg.tensors()
    plist = list(params.values())
    opt = ad.AdamW(plist, pconfig.lr, weight_decay=pconfig.weight_decay, clip_norm=pconfig.clip_norm)
    metrics = []
    window = []
    last_good = {k: v.data.copy() for k, v in params.items()}
    started = time.perf_counter()
    for step in range(1, pconfig.steps + 1):
        examples = [sample_training_example(dataset, rng) for _ in range(pconfig.batch_size)]
        batch = build_batch(examples, embedder, rconfig)
        opt.zero_grad()
        try:
            loss, grads = loss_and_grads(params, rconfig, batch)
            if not math.isfinite(loss):
                raise ad.NonFiniteError("loss is not finite")
            norm = opt.step(grads)
        except ad.NonFiniteError as exc:
            good = Regressor(ckpt.round_params(last_good), rconfig)
            if checkpoint_path:
                ckpt.save_checkpoint(good.params, rconfig, checkpoint_path)
            raise TrainingDivergedError(f"step {step}: {exc}") from exc
        last_good = {k: v.data.copy() for k, v in params.items()}
        window.append((loss, norm))
        if step % pconfig.log_every == 0 or step == pconfig.steps:
            arr = np.array(window)
            row = {
                "step": step,
                "train_nll": float(arr[:, 0].mean()),
                "grad_norm": float(arr[:, 1].mean()),
                "elapsed_s": round(time.perf_counter() - started, 3),
            }
            metrics.append(row)
            log.info("step %d nll %.4f grad %.3f", step, row["train_nll"], row["grad_norm"])
            if callback is not None:
                callback(row)
            window = []
        if checkpoint_path and pconfig.checkpoint_every and step % pconfig.checkpoint_every == 0:
            ckpt.save_checkpoint(last_good, rconfig, checkpoint_path)
    final = Regressor(ckpt.round_params(last_good), rconfig)
    if checkpoint_path:
        ckpt.save_checkpoint(final.params, rconfig, checkpoint_path)
    return TrainResult(final, metrics)


def batch_loss(regressor: Regressor, batch) -> float:
    with ad.no_grad():
        mu, sigma = forward(regressor.tensors(False), regressor.config, batch[0], batch[1])
        return float(batch_nll_loss(mu, sigma, batch[2], batch[3]).data)
