"""
The multi-pair experiment protocol
==================================

Runs the seeded experiment harness on a handful of random image pairs:
per pair, two bookkeeping queries fetch the target map and the clean
probability vector, the attack spends the rest of the budget, and a
per-pair directory plus an aggregate summary land on disk.
"""

import json

from _common import ARTIFACTS, fixture_stack
from foilbox.attack import AttackConfig
from foilbox.harness import ExperimentConfig, run_experiment

fixture_stack()  # make sure the artifacts exist

cfg = ExperimentConfig(
    dataset_dir=str(ARTIFACTS / "train"),
    model_path=str(ARTIFACTS / "model.anet"),
    xai_method="gradient",
    attack=AttackConfig(
        generations=50, pop_size=50, sigma0=0.1, alpha=1e3, beta=1.0,
        lr_v=0.05, lr_sigma=0.0, decay=0.999, sampling="lhs", seed=11, budget=2_502,
    ),
    out_dir=str(ARTIFACTS / "experiment"),
    n_pairs=5,
    workers=1,
)
records = run_experiment(cfg)

print(f"{'pair':>4} {'images':>9} {'mse initial':>12} {'mse final':>10} {'pred ok':>8} {'queries':>8}")
for r in records:
    print(f"{r.pair_id:>4} {r.image_index:>4}->{r.target_index:<4} "
          f"{r.mse_expl_initial:>12.5f} {r.mse_expl_final:>10.5f} "
          f"{str(r.pred_preserved):>8} {r.queries_used:>8}")

summary = json.loads((ARTIFACTS / "experiment" / "seed11-gradient" / "summary.json").read_text())
print("\nsummary.json:")
print(json.dumps(summary, indent=2, sort_keys=True))
