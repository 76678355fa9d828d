import json
from pathlib import Path

import numpy as np
import pytest

from foilbox import fileio
from foilbox.cli import PRESETS, build_parser, main

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- exit codes and usage -------------------------------------------------------------


def test_missing_required_flag_exits_one_with_usage(capsys):
    code, out, err = run(capsys, "attack", "--dataset", "d", "--image-idx", "0",
                         "--target-idx", "1", "--out-dir", "o")
    assert code == 1
    assert "usage:" in err and "--model" in err


def test_unknown_flag_rejected(capsys):
    code, _, err = run(capsys, "render", "--input", "a", "--output", "b.pgm", "--frobnicate")
    assert code == 1
    assert "usage:" in err


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "destroy")
    assert code == 1


def test_no_subcommand(capsys):
    code, _, err = run(capsys)
    assert code == 1


def test_runtime_error_exits_two(capsys, tmp_path):
    code, _, err = run(capsys, "render", "--input", str(tmp_path / "missing.tnsr"),
                       "--output", str(tmp_path / "x.pgm"))
    assert code == 2
    assert "error:" in err


def test_help_exits_zero(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    assert "COMMAND" in out


# -- golden help (every flag documents exactly one default) ----------------------------


@pytest.mark.parametrize(
    "argv,golden",
    [
        (("--help",), "help_main.txt"),
        (("train-fixture", "--help"), "help_train_fixture.txt"),
        (("explain", "--help"), "help_explain.txt"),
        (("attack", "--help"), "help_attack.txt"),
        (("experiment", "--help"), "help_experiment.txt"),
        (("render", "--help"), "help_render.txt"),
    ],
)
def test_help_matches_golden_file(capsys, argv, golden):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out == (DATA / golden).read_text()


def test_every_optional_flag_documents_one_default():
    parser = build_parser()
    subs = next(a for a in parser._actions if hasattr(a, "choices") and a.choices)
    for sp in subs.choices.values():
        for action in sp._actions:
            if action.option_strings == ["-h", "--help"] or action.required:
                continue
            assert action.help.count("default:") == 1, action.option_strings


# -- config resolution ------------------------------------------------------------------


def dump_config(capsys, *extra):
    code, out, _ = run(capsys, "attack", "--model", "m", "--dataset", "d",
                       "--image-idx", "0", "--target-idx", "1", "--out-dir", "o",
                       "--dump-config", *extra)
    assert code == 0
    return json.loads(out)


def test_protocol_constants_default(capsys):
    cfg = dump_config(capsys)
    assert cfg["budget"] == 50000
    assert cfg["decay"] == 0.999
    assert cfg["alpha"] == 1e3 and cfg["beta"] == 1.0  # desk preset
    assert cfg["sampling"] == "iid"


def test_published_presets(capsys):
    assert PRESETS["cifar"] == {"alpha": 1e7, "beta": 1e6}
    assert PRESETS["imagenet"] == {"alpha": 1e11, "beta": 1e6}
    cfg = dump_config(capsys, "--preset", "cifar")
    assert cfg["alpha"] == 1e7 and cfg["beta"] == 1e6
    cfg = dump_config(capsys, "--preset", "imagenet")
    assert cfg["alpha"] == 1e11 and cfg["beta"] == 1e6


def test_explicit_flags_override_preset(capsys):
    cfg = dump_config(capsys, "--preset", "imagenet", "--alpha", "5.0")
    assert cfg["alpha"] == 5.0 and cfg["beta"] == 1e6


def test_workers_env_fallback(capsys, monkeypatch):
    monkeypatch.setenv("FOILBOX_WORKERS", "3")
    cfg = dump_config(capsys)
    assert cfg["workers"] == 3
    cfg = dump_config(capsys, "--workers", "2")
    assert cfg["workers"] == 2


# -- subcommands end to end ---------------------------------------------------------------


def test_render_tnsr_to_pgm_and_ppm(capsys, tmp_path):
    fileio.save_tensor(np.linspace(0, 1, 12).reshape(1, 3, 4), tmp_path / "t.tnsr")
    code, _, _ = run(capsys, "render", "--input", str(tmp_path / "t.tnsr"),
                     "--output", str(tmp_path / "t.pgm"))
    assert code == 0
    assert (tmp_path / "t.pgm").read_bytes().startswith(b"P5\n4 3\n255\n")
    code, _, _ = run(capsys, "render", "--input", str(tmp_path / "t.tnsr"),
                     "--output", str(tmp_path / "t.ppm"))
    assert code == 0
    assert (tmp_path / "t.ppm").read_bytes().startswith(b"P6\n4 3\n255\n")


def test_render_rejects_other_extensions(capsys, tmp_path):
    fileio.save_tensor(np.zeros((2, 2)), tmp_path / "t.tnsr")
    code, _, err = run(capsys, "render", "--input", str(tmp_path / "t.tnsr"),
                       "--output", str(tmp_path / "t.png"))
    assert code == 1


def test_explain_writes_map(capsys, tmp_path, fixture_paths):
    code, out, _ = run(capsys, "explain", "--model", str(fixture_paths["model"]),
                       "--dataset", str(fixture_paths["dataset"]), "--image-idx", "0",
                       "--xai", "lrp", "--out-dir", str(tmp_path))
    assert code == 0
    assert (tmp_path / "map.tnsr").exists() and (tmp_path / "map.pgm").exists()
    assert fileio.load_tensor(tmp_path / "map.tnsr").shape == (16, 16)


def test_attack_cli_end_to_end(capsys, tmp_path, fixture_paths):
    code, out, _ = run(capsys, "attack", "--model", str(fixture_paths["model"]),
                       "--dataset", str(fixture_paths["dataset"]), "--image-idx", "0",
                       "--target-idx", "5", "--generations", "2", "--pop-size", "8",
                       "--budget", "20", "--out-dir", str(tmp_path))
    assert code == 0
    for name in ("trace.csv", "x_adv.tnsr", "x_adv.ppm", "result.json", "adv_expl.pgm"):
        assert (tmp_path / name).exists()
    report = json.loads((tmp_path / "result.json").read_text())
    assert report["queries_used"] == 2 + 2 * 8


def test_experiment_cli_end_to_end(capsys, tmp_path, fixture_paths):
    code, out, _ = run(capsys, "experiment", "--model", str(fixture_paths["model"]),
                       "--dataset", str(fixture_paths["dataset"]), "--n-pairs", "2",
                       "--generations", "2", "--pop-size", "8", "--budget", "20",
                       "--seed", "3", "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "seed3-gradient/summary.json").read_text())
    assert summary["n_pairs"] == 2


def test_train_fixture_cli_smoke(capsys, tmp_path):
    code, out, _ = run(capsys, "train-fixture", "--out-dir", str(tmp_path),
                       "--epochs", "1", "--train-size", "16", "--test-size", "8")
    assert code == 0
    assert (tmp_path / "model.anet").exists()
    assert (tmp_path / "train/images.tnsr").exists()
    report = json.loads((tmp_path / "train_report.json").read_text())
    assert "heldout_accuracy" in report and len(report["epoch_losses"]) == 1
