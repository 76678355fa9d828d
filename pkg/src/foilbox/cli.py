"""Command-line front door.

Subcommands: train-fixture, explain, attack, experiment, render.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import fileio
from .attack import AttackConfig, run_attack, write_trace_csv
from .errors import FoilboxError
from .fixtures import TrainConfig, evaluate_accuracy, generate_dataset, load_dataset, save_dataset, train_fixture
from .harness import ExperimentConfig, mse, run_experiment
from .oracle import Oracle

__all__ = ["main", "build_parser", "PRESETS"]

# published weightings for the two reference datasets, plus a desk-scale
# preset balanced for the 16x16 fixture stack
PRESETS = {
    "desk": {"alpha": 1e3, "beta": 1.0},
    "cifar": {"alpha": 1e7, "beta": 1e6},
    "imagenet": {"alpha": 1e11, "beta": 1e6},
}

_XAI_CHOICES = ("gradient", "gxi", "gbp", "lrp", "deeplift")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(prog):
    return argparse.HelpFormatter(prog, width=96)


def _add_attack_flags(p: _Parser):
    p.add_argument("--model", required=True, help="path to an ANET model file")
    p.add_argument("--dataset", required=True, help="directory with images.tnsr + labels.lbls")
    p.add_argument("--xai", choices=_XAI_CHOICES, default="gradient",
                   help="explanation method under attack (default: gradient)")
    p.add_argument("--generations", type=int, default=150,
                   help="maximum number of generations (default: 150)")
    p.add_argument("--pop-size", type=int, default=50,
                   help="population size per generation (default: 50)")
    p.add_argument("--sigma", type=float, default=0.1,
                   help="initial sampling standard deviation (default: 0.1)")
    p.add_argument("--alpha", type=float, default=None,
                   help="explanation-loss weight (default: from --preset)")
    p.add_argument("--beta", type=float, default=None,
                   help="prediction-loss weight (default: from --preset)")
    p.add_argument("--lr-v", type=float, default=0.05,
                   help="attack-vector learning rate (default: 0.05)")
    p.add_argument("--lr-sigma", type=float, default=0.0,
                   help="standard-deviation learning rate (default: 0.0)")
    p.add_argument("--decay", type=float, default=0.999,
                   help="per-generation decay of sigma and lr-v (default: 0.999)")
    p.add_argument("--sampling", choices=("iid", "lhs"), default="iid",
                   help="population sampling scheme (default: iid)")
    p.add_argument("--budget", type=int, default=50000,
                   help="hard query budget per attack (default: 50000)")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed (default: 0)")
    p.add_argument("--preset", choices=tuple(PRESETS), default="desk",
                   help="alpha/beta preset: desk a=1e3 b=1, cifar a=1e7 b=1e6, "
                        "imagenet a=1e11 b=1e6 (default: desk)")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel evaluation workers (default: FOILBOX_WORKERS or 1)")
    p.add_argument("--out-dir", required=True, help="directory for all outputs")
    p.add_argument("--dump-config", action="store_true",
                   help="print the resolved attack configuration as JSON and exit (default: off)")


def build_parser() -> _Parser:
    parser = _Parser(prog="foilbox", formatter_class=_fmt,
                     description="black-box explanation-map attack toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("train-fixture", formatter_class=_fmt,
                       help="generate the synthetic dataset and train the fixture model")
    p.add_argument("--out-dir", required=True, help="directory for dataset + model")
    p.add_argument("--seed", type=int, default=0, help="generator/trainer seed (default: 0)")
    p.add_argument("--arch", choices=("convnet", "mlp"), default="convnet",
                   help="fixture architecture (default: convnet)")
    p.add_argument("--epochs", type=int, default=20, help="training epochs (default: 20)")
    p.add_argument("--batch-size", type=int, default=16, help="SGD batch size (default: 16)")
    p.add_argument("--lr", type=float, default=0.1, help="SGD learning rate (default: 0.1)")
    p.add_argument("--train-size", type=int, default=512,
                   help="training images, divisible by 4 (default: 512)")
    p.add_argument("--test-size", type=int, default=128,
                   help="held-out images, divisible by 4 (default: 128)")
    p.set_defaults(func=_cmd_train_fixture)

    p = sub.add_parser("explain", formatter_class=_fmt,
                       help="compute one explanation map for one image")
    p.add_argument("--model", required=True, help="path to an ANET model file")
    p.add_argument("--dataset", required=True, help="directory with images.tnsr + labels.lbls")
    p.add_argument("--image-idx", type=int, required=True, help="image index in the dataset")
    p.add_argument("--xai", choices=_XAI_CHOICES, required=True, help="explanation method")
    p.add_argument("--class-idx", type=int, default=None,
                   help="class to explain (default: the image's label)")
    p.add_argument("--out-dir", required=True, help="directory for map.tnsr + map.pgm")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("attack", formatter_class=_fmt,
                       help="attack one image pair's explanation map")
    _add_attack_flags(p)
    p.add_argument("--image-idx", type=int, required=True, help="index of the image to perturb")
    p.add_argument("--target-idx", type=int, required=True,
                   help="index of the image providing the target map")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("experiment", formatter_class=_fmt,
                       help="run the multi-pair experiment protocol")
    _add_attack_flags(p)
    p.add_argument("--n-pairs", type=int, default=100,
                   help="number of random image pairs (default: 100)")
    p.add_argument("--different-class-only", action="store_true",
                   help="restrict pairs to images with different labels (default: off)")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("render", formatter_class=_fmt,
                       help="convert a TNSR file to PGM (2-D map) or PPM (image)")
    p.add_argument("--input", required=True, help="TNSR file to convert")
    p.add_argument("--output", required=True, help="output path ending in .pgm or .ppm")
    p.set_defaults(func=_cmd_render)

    return parser


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("FOILBOX_WORKERS", "1"))


def _resolve_attack_config(args, workers: int) -> AttackConfig:
    preset = PRESETS[args.preset]
    return AttackConfig(
        generations=args.generations,
        pop_size=args.pop_size,
        sigma0=args.sigma,
        alpha=preset["alpha"] if args.alpha is None else args.alpha,
        beta=preset["beta"] if args.beta is None else args.beta,
        lr_v=args.lr_v,
        lr_sigma=args.lr_sigma,
        decay=args.decay,
        sampling=args.sampling,
        seed=args.seed,
        budget=args.budget,
        workers=workers,
    )


def _cmd_train_fixture(args) -> int:
    out = Path(args.out_dir)
    train = generate_dataset(args.seed, args.train_size)
    heldout = generate_dataset(args.seed + 1, args.test_size)
    save_dataset(train, out / "train")
    save_dataset(heldout, out / "heldout")
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    losses: list = []
    net = train_fixture(train, args.arch, cfg, epoch_losses=losses)
    fileio.save_model(net, out / "model.anet")
    report = {
        "arch": args.arch,
        "seed": args.seed,
        "epochs": args.epochs,
        "train_accuracy": evaluate_accuracy(net, train),
        "heldout_accuracy": evaluate_accuracy(net, heldout),
        "epoch_losses": losses,
    }
    (out / "train_report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(f"model: {out / 'model.anet'}  heldout accuracy: {report['heldout_accuracy']:.4f}")
    return 0


def _cmd_explain(args) -> int:
    net = fileio.load_model(args.model)
    dataset = load_dataset(args.dataset)
    x = dataset.images[args.image_idx]
    y = int(dataset.labels[args.image_idx]) if args.class_idx is None else args.class_idx
    oracle = Oracle(net, args.xai, budget=1)
    resp = oracle.query(x, y)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fileio.save_tensor(resp.expl, out / "map.tnsr")
    fileio.write_pgm(resp.expl, out / "map.pgm")
    print(f"wrote {out / 'map.tnsr'} and {out / 'map.pgm'}")
    return 0


def _cmd_attack(args) -> int:
    cfg = _resolve_attack_config(args, _resolve_workers(args))
    if args.dump_config:
        print(json.dumps(asdict(cfg), sort_keys=True, indent=2))
        return 0
    net = fileio.load_model(args.model)
    dataset = load_dataset(args.dataset)
    x = dataset.images[args.image_idx]
    y = int(dataset.labels[args.image_idx])
    x_tgt = dataset.images[args.target_idx]
    y_tgt = int(dataset.labels[args.target_idx])

    oracle = Oracle(net, args.xai, budget=cfg.budget)
    target_expl = oracle.query(x_tgt, y_tgt).expl
    base = oracle.query(x, y)
    result = run_attack(cfg, oracle, x, y, target_expl, base.probs)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(result.trace, out / "trace.csv")
    fileio.save_tensor(result.x_adv, out / "x_adv.tnsr")
    fileio.write_ppm(result.x_adv, out / "x_adv.ppm")
    fileio.save_tensor(target_expl, out / "target_expl.tnsr")
    fileio.write_pgm(target_expl, out / "target_expl.pgm")
    adv_expl = result.best_expl if result.best_expl is not None else base.expl
    adv_probs = result.best_probs if result.best_probs is not None else base.probs
    fileio.save_tensor(adv_expl, out / "adv_expl.tnsr")
    fileio.write_pgm(adv_expl, out / "adv_expl.pgm")
    report = {
        "config": asdict(cfg),
        "xai_method": args.xai,
        "image_index": args.image_idx,
        "target_index": args.target_idx,
        "best_loss": result.best_loss,
        "final_loss": result.final_loss,
        "mse_expl_initial": mse(base.expl, target_expl),
        "mse_expl_final": mse(adv_expl, target_expl),
        "mse_input": mse(x, result.x_adv),
        "pred_preserved": bool(np.argmax(adv_probs) == np.argmax(base.probs)),
        "queries_used": result.queries_used,
    }
    (out / "result.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    print(
        f"pair ({args.image_idx},{args.target_idx}) {args.xai}: "
        f"map mse {report['mse_expl_initial']:.6g} -> {report['mse_expl_final']:.6g}, "
        f"queries {result.queries_used}"
    )
    return 0


def _cmd_experiment(args) -> int:
    attack_cfg = _resolve_attack_config(args, workers=1)
    cfg = ExperimentConfig(
        dataset_dir=args.dataset,
        model_path=args.model,
        xai_method=args.xai,
        attack=attack_cfg,
        out_dir=args.out_dir,
        n_pairs=args.n_pairs,
        workers=_resolve_workers(args),
        different_class_only=args.different_class_only,
    )
    if args.dump_config:
        dump = {"attack": asdict(attack_cfg), "n_pairs": cfg.n_pairs,
                "xai_method": cfg.xai_method, "workers": cfg.workers,
                "different_class_only": cfg.different_class_only}
        print(json.dumps(dump, sort_keys=True, indent=2))
        return 0
    records = run_experiment(cfg)
    preserved = sum(r.pred_preserved for r in records)
    print(
        f"{len(records)} pairs done; median final map mse "
        f"{float(np.median([r.mse_expl_final for r in records])):.6g}; "
        f"prediction preserved {preserved}/{len(records)}"
    )
    return 0


def _cmd_render(args) -> int:
    data = fileio.load_tensor(args.input)
    suffix = Path(args.output).suffix.lower()
    if suffix == ".pgm":
        if data.ndim == 3 and data.shape[0] == 1:
            data = data[0]
        fileio.write_pgm(data, args.output)
    elif suffix == ".ppm":
        fileio.write_ppm(data, args.output)
    else:
        print(f"error: output must end in .pgm or .ppm, got {args.output!r}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FoilboxError, OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
