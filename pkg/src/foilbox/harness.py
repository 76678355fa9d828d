"""Experiment protocol: sample image pairs, attack each, persist statistics.

For every pair the harness charges two bookkeeping queries to the same
meter the attack uses (one for the target image's explanation map, one
for the clean image's probability vector), runs the attack, and writes a
per-pair directory with the trace CSV, the adversarial image, and the
maps. Everything lives under a timestamp-free, seed-named run directory
so identical configurations produce byte-identical artifacts, regardless
of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .attack import AttackConfig, run_attack, write_trace_csv
from .errors import ConfigError, ShapeError
from .fixtures import load_dataset
from .oracle import Oracle

__all__ = ["ExperimentConfig", "RunRecord", "mse", "run_experiment", "summarize", "write_summary"]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_dir: str
    model_path: str
    xai_method: str
    attack: AttackConfig
    out_dir: str
    n_pairs: int = 100
    workers: int = 1
    different_class_only: bool = False

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class RunRecord:
    pair_id: int
    image_index: int
    target_index: int
    xai_method: str
    config: dict
    mse_expl_initial: float
    mse_expl_final: float
    mse_input: float
    pred_preserved: bool
    queries_used: int
    trace_path: str


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared elementwise difference; inputs must have equal dims."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"mse shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _choose_pairs(cfg: ExperimentConfig, labels, rng: np.random.Generator):
    """Deterministic distinct (image, target) index pairs, no repeats while possible."""
    n = len(labels)
    if n < 2:
        raise ConfigError("dataset needs at least 2 images")
    seen = set()
    pairs = []
    for _ in range(cfg.n_pairs):
        for attempt in range(10_000):
            i = int(rng.integers(n))
            j = int(rng.integers(n))
            if i == j:
                continue
            if cfg.different_class_only and labels[i] == labels[j]:
                continue
            if (i, j) in seen and attempt < 5_000:
                continue
            break
        else:
            raise ConfigError("could not sample a valid image pair")
        seen.add((i, j))
        pairs.append((i, j))
    return pairs


def _run_pair(cfg: ExperimentConfig, net, dataset, pair_id, indices, pair_seed, run_dir: Path):
    i_img, i_tgt = indices
    x = dataset.images[i_img]
    y = int(dataset.labels[i_img])
    x_tgt = dataset.images[i_tgt]
    y_tgt = int(dataset.labels[i_tgt])

    oracle = Oracle(net, cfg.xai_method, budget=cfg.attack.budget)
    target_expl = oracle.query(x_tgt, y_tgt).expl
    base = oracle.query(x, y)
    rng = np.random.Generator(np.random.PCG64(pair_seed))
    result = run_attack(cfg.attack, oracle, x, y, target_expl, base.probs, rng=rng)

    adv_expl = result.best_expl if result.best_expl is not None else base.expl
    adv_probs = result.best_probs if result.best_probs is not None else base.probs

    pair_dir = run_dir / f"pair_{pair_id:03d}"
    pair_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(result.trace, pair_dir / "trace.csv")
    fileio.save_tensor(result.x_adv, pair_dir / "x_adv.tnsr")
    fileio.write_ppm(result.x_adv, pair_dir / "x_adv.ppm")
    fileio.save_tensor(target_expl, pair_dir / "target_expl.tnsr")
    fileio.write_pgm(target_expl, pair_dir / "target_expl.pgm")
    fileio.save_tensor(adv_expl, pair_dir / "adv_expl.tnsr")
    fileio.write_pgm(adv_expl, pair_dir / "adv_expl.pgm")

    snapshot = asdict(cfg.attack)
    snapshot.update({"xai_method": cfg.xai_method, "deeplift_rule": "rescale"})
    record = RunRecord(
        pair_id=pair_id,
        image_index=i_img,
        target_index=i_tgt,
        xai_method=cfg.xai_method,
        config=snapshot,
        mse_expl_initial=mse(base.expl, target_expl),
        mse_expl_final=mse(adv_expl, target_expl),
        mse_input=mse(x, result.x_adv),
        pred_preserved=bool(np.argmax(adv_probs) == np.argmax(base.probs)),
        queries_used=result.queries_used,
        trace_path=str(Path(pair_dir.name) / "trace.csv"),
    )
    (pair_dir / "record.json").write_text(json.dumps(asdict(record), sort_keys=True, indent=2) + "\n")
    return record


def run_experiment(cfg: ExperimentConfig):
    """Execute ``n_pairs`` seeded attacks and write records plus a summary.

    Returns the list of per-pair records in pair order. Pair selection,
    per-pair RNG streams, and all written artifacts depend only on the
    configuration, not on the worker count.
    """
    try:
        dataset = load_dataset(cfg.dataset_dir)
        net = fileio.load_model(cfg.model_path)
    except Exception as exc:
        raise ConfigError(f"could not load experiment inputs: {exc}") from exc
    if cfg.xai_method not in ("gradient", "gxi", "gbp", "lrp", "deeplift"):
        raise ConfigError(f"unknown xai method {cfg.xai_method!r}")

    master = np.random.SeedSequence(cfg.attack.seed)
    children = master.spawn(cfg.n_pairs + 1)
    sel_rng = np.random.Generator(np.random.PCG64(children[0]))
    pairs = _choose_pairs(cfg, dataset.labels, sel_rng)

    run_dir = Path(cfg.out_dir) / f"seed{cfg.attack.seed}-{cfg.xai_method}"
    run_dir.mkdir(parents=True, exist_ok=True)

    def task(k):
        return _run_pair(cfg, net, dataset, k, pairs[k], children[k + 1], run_dir)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(task, range(cfg.n_pairs)))
    else:
        records = [task(k) for k in range(cfg.n_pairs)]

    write_summary(summarize(records), run_dir / "summary.json")
    return records


def _stats(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "median": float(np.median(arr)),
        "mean": float(np.mean(arr)),
        "min": float(np.min(arr)),
        "max": float(np.max(arr)),
    }


def summarize(records) -> dict:
    """Aggregate per-pair records into the fixed-key summary structure."""
    records = list(records)
    if not records:
        raise ConfigError("cannot summarize zero records")
    return {
        "method": records[0].xai_method,
        "n_pairs": len(records),
        "mse_expl_final": _stats([r.mse_expl_final for r in records]),
        "mse_input": _stats([r.mse_input for r in records]),
        "pred_preserved_fraction": sum(r.pred_preserved for r in records) / len(records),
        "total_queries": int(sum(r.queries_used for r in records)),
    }


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
