import csv
import json

import numpy as np
import pytest

from foilbox import fileio
from foilbox.attack import AttackConfig
from foilbox.attribution import explain
from foilbox.errors import ConfigError, ShapeError
from foilbox.harness import ExperimentConfig, RunRecord, mse, run_experiment, summarize


def small_attack(**kw):
    base = dict(generations=3, pop_size=8, sigma0=0.1, alpha=1e3, beta=1.0,
                lr_v=0.05, lr_sigma=0.0, decay=0.999, sampling="iid", seed=7, budget=40)
    base.update(kw)
    return AttackConfig(**base)


def small_experiment(fixture_paths, tmp_path, **kw):
    base = dict(
        dataset_dir=str(fixture_paths["dataset"]),
        model_path=str(fixture_paths["model"]),
        xai_method="gradient",
        attack=small_attack(),
        out_dir=str(tmp_path),
        n_pairs=3,
        workers=1,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- mse ---------------------------------------------------------------------------


def test_mse_identity_and_arithmetic():
    assert mse(np.ones((3, 3)), np.ones((3, 3))) == 0.0
    assert mse(np.zeros(2), np.ones(2)) == 1.0


def test_mse_matches_double_loop_oracle(rng):
    a = rng.standard_normal((5, 7))
    b = rng.standard_normal((5, 7))
    acc = 0.0
    for i in range(5):
        for j in range(7):
            acc += (a[i, j] - b[i, j]) ** 2
    assert abs(mse(a, b) - acc / 35.0) <= 1e-12


def test_mse_shape_error():
    with pytest.raises(ShapeError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))


# -- run_experiment ------------------------------------------------------------------


def test_three_pairs_three_records_three_traces(fixture_paths, tmp_path):
    records = run_experiment(small_experiment(fixture_paths, tmp_path))
    assert len(records) == 3
    run_dir = tmp_path / "seed7-gradient"
    traces = sorted(run_dir.glob("pair_*/trace.csv"))
    assert len(traces) == 3
    assert (run_dir / "summary.json").exists()
    for r in records:
        assert r.image_index != r.target_index
        assert r.mse_expl_initial >= 0 and r.mse_expl_final >= 0 and r.mse_input >= 0


def test_same_seed_twice_byte_identical_outputs(fixture_paths, tmp_path):
    run_experiment(small_experiment(fixture_paths, tmp_path / "r1"))
    run_experiment(small_experiment(fixture_paths, tmp_path / "r2"))
    d1, d2 = tmp_path / "r1/seed7-gradient", tmp_path / "r2/seed7-gradient"
    assert (d1 / "summary.json").read_bytes() == (d2 / "summary.json").read_bytes()
    for t1 in sorted(d1.glob("pair_*/trace.csv")):
        t2 = d2 / t1.parent.name / "trace.csv"
        assert t1.read_bytes() == t2.read_bytes()


def test_worker_count_does_not_change_bytes(fixture_paths, tmp_path):
    run_experiment(small_experiment(fixture_paths, tmp_path / "w1", workers=1))
    run_experiment(small_experiment(fixture_paths, tmp_path / "w4", workers=4))
    d1, d2 = tmp_path / "w1/seed7-gradient", tmp_path / "w4/seed7-gradient"
    assert (d1 / "summary.json").read_bytes() == (d2 / "summary.json").read_bytes()
    for t1 in sorted(d1.glob("pair_*/trace.csv")):
        assert t1.read_bytes() == (d2 / t1.parent.name / "trace.csv").read_bytes()


def test_budget_accounting_from_traces(fixture_paths, tmp_path):
    cfg = small_experiment(fixture_paths, tmp_path)
    records = run_experiment(cfg)
    lam = cfg.attack.pop_size
    for r in records:
        trace_file = tmp_path / "seed7-gradient" / r.trace_path
        rows = list(csv.DictReader(trace_file.open()))
        gens = len(rows)
        assert r.queries_used == 2 + lam * gens <= cfg.attack.budget
        assert int(rows[-1]["queries_used"]) == r.queries_used


def test_records_round_trip_against_persisted_artifacts(fixture_paths, tmp_path, loaded_net):
    cfg = small_experiment(fixture_paths, tmp_path, attack=small_attack(budget=200, generations=4))
    records = run_experiment(cfg)
    dataset = None
    for r in records:
        pair_dir = tmp_path / "seed7-gradient" / f"pair_{r.pair_id:03d}"
        x_adv = fileio.load_tensor(pair_dir / "x_adv.tnsr")
        target = fileio.load_tensor(pair_dir / "target_expl.tnsr")
        if dataset is None:
            from foilbox.fixtures import load_dataset

            dataset = load_dataset(cfg.dataset_dir)
        y = int(dataset.labels[r.image_index])
        recomputed = explain(loaded_net, x_adv, y, "gradient")
        assert abs(mse(recomputed, target) - r.mse_expl_final) <= 1e-6 * max(1.0, r.mse_expl_final)
        # the stored record file matches the returned record
        stored = json.loads((pair_dir / "record.json").read_text())
        assert stored["queries_used"] == r.queries_used
        assert stored["pred_preserved"] == r.pred_preserved


def test_different_class_pairs_flag(fixture_paths, tmp_path):
    cfg = small_experiment(fixture_paths, tmp_path, different_class_only=True, n_pairs=6)
    records = run_experiment(cfg)
    from foilbox.fixtures import load_dataset

    dataset = load_dataset(cfg.dataset_dir)
    for r in records:
        assert dataset.labels[r.image_index] != dataset.labels[r.target_index]


def test_unloadable_inputs_give_config_error(tmp_path):
    cfg = ExperimentConfig(
        dataset_dir=str(tmp_path / "nope"),
        model_path=str(tmp_path / "missing.anet"),
        xai_method="gradient",
        attack=small_attack(),
        out_dir=str(tmp_path),
        n_pairs=1,
    )
    with pytest.raises(ConfigError):
        run_experiment(cfg)
    assert not (tmp_path / "seed7-gradient").exists()


# -- summarize -----------------------------------------------------------------------


def fake_record(**kw):
    base = dict(pair_id=0, image_index=0, target_index=1, xai_method="gradient", config={},
                mse_expl_initial=1.0, mse_expl_final=0.5, mse_input=0.01,
                pred_preserved=True, queries_used=10, trace_path="t.csv")
    base.update(kw)
    return RunRecord(**base)


def test_summarize_singleton():
    s = summarize([fake_record(mse_expl_final=0.7, mse_input=0.02)])
    assert s["n_pairs"] == 1
    for key in ("median", "mean", "min", "max"):
        assert s["mse_expl_final"][key] == 0.7
        assert s["mse_input"][key] == 0.02
    assert s["pred_preserved_fraction"] == 1.0
    assert s["total_queries"] == 10


def test_summarize_median_of_two():
    s = summarize([fake_record(mse_expl_final=1.0), fake_record(pair_id=1, mse_expl_final=3.0)])
    assert s["mse_expl_final"]["median"] == 2.0
    assert s["mse_expl_final"]["min"] == 1.0 and s["mse_expl_final"]["max"] == 3.0


def test_summarize_empty_is_config_error():
    with pytest.raises(ConfigError):
        summarize([])


def test_summary_file_matches_recomputation(fixture_paths, tmp_path):
    cfg = small_experiment(fixture_paths, tmp_path)
    records = run_experiment(cfg)
    stored = json.loads((tmp_path / "seed7-gradient/summary.json").read_text())
    assert stored == summarize(records)
    assert set(stored) == {"method", "n_pairs", "mse_expl_final", "mse_input",
                           "pred_preserved_fraction", "total_queries"}
