"""Cached artefacts for the acceptance suite.

Pretrained checkpoints are expensive, so they are written once under
``.acceptance_cache/`` (override with ``STRINGBO_ACCEPTANCE_CACHE``) and keyed
by their full configuration.  Delete the directory to retrain.
"""

import hashlib
import json
import os
import time

from stringbo import checkpoint as ckpt
from stringbo import pretrain as pt
from stringbo.regressor import RegressorConfig

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CACHE = os.environ.get("STRINGBO_ACCEPTANCE_CACHE", os.path.join(ROOT, ".acceptance_cache"))

MODELS = {
    "bbob4": (dict(task_count=10_000, steps=2000, family="BBOB_TRAIN", seed=0), dict(n_layers=4)),
    "bbob1": (dict(task_count=10_000, steps=2000, family="BBOB_TRAIN", seed=0), dict(n_layers=1)),
    "combo4": (dict(task_count=10_000, steps=2000, family="COMBINATORIAL", seed=0), dict(n_layers=4)),
}


RESULTS: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    """Record one PASS/FAIL line; the conftest repeats them in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _path(name):
    pconf, rconf = MODELS[name]
    key = json.dumps({"p": pconf, "r": rconf, "format": 2}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:12]
    return os.path.join(CACHE, f"{name}-{digest}.etrr")


def model(name, log=print):
    """Load the named checkpoint, training it first if it is not cached."""
    path = _path(name)
    if not os.path.exists(path):
        os.makedirs(CACHE, exist_ok=True)
        pconf, rconf = MODELS[name]
        started = time.perf_counter()
        tmp = path + ".partial"
        pt.train(pt.PretrainConfig(**pconf), RegressorConfig(**rconf), checkpoint_path=tmp)
        os.replace(tmp, path)
        log(f"trained {name} in {time.perf_counter() - started:.0f}s -> {path}")
    return ckpt.load_regressor(path)


if __name__ == "__main__":
    import sys

    for name in sys.argv[1:] or list(MODELS):
        model(name)
