"""
One black-box attack, start to finish
=====================================

Picks two images, asks the oracle for the target's explanation map and
the source's probability vector (two metered queries), then runs the
evolution-strategy search so the source image's map morphs into the
target's while the class probabilities barely move.
"""

import numpy as np

from _common import ARTIFACTS, fixture_stack
from foilbox import fileio
from foilbox.attack import AttackConfig, run_attack
from foilbox.harness import mse
from foilbox.oracle import Oracle

dataset, net = fixture_stack()
i_img, i_tgt = 0, 5  # a horizontal bar and a vertical bar
x, y = dataset.images[i_img], int(dataset.labels[i_img])
x_tgt, y_tgt = dataset.images[i_tgt], int(dataset.labels[i_tgt])

oracle = Oracle(net, "gradient", budget=5_000)
target_expl = oracle.query(x_tgt, y_tgt).expl
base = oracle.query(x, y)

cfg = AttackConfig(
    generations=99, pop_size=50, sigma0=0.1, alpha=1e3, beta=1.0,
    lr_v=0.05, lr_sigma=0.0, decay=0.999, sampling="iid", seed=0, budget=5_000,
)
result = run_attack(cfg, oracle, x, y, target_expl, base.probs)

print(f"pair ({i_img} -> {i_tgt}), method gradient, {result.queries_used} queries")
print(f"map MSE to target:  {mse(base.expl, target_expl):.5f} -> {mse(result.best_expl, target_expl):.5f}")
print(f"image MSE:          {mse(x, result.x_adv):.6f}")
print(f"max prob drift:     {np.max(np.abs(result.best_probs - base.probs)):.5f}")
print(f"argmax preserved:   {np.argmax(result.best_probs) == np.argmax(base.probs)}")

print("\nloss per 10 generations:")
for row in result.trace[::10]:
    print(f"  gen {row.generation:3d}  best {row.best_loss:10.2f}  sigma {row.sigma:.4f}")

out = ARTIFACTS / "attack"
out.mkdir(exist_ok=True)
fileio.write_ppm(x, out / "x.ppm")
fileio.write_ppm(result.x_adv, out / "x_adv.ppm")
fileio.write_pgm(base.expl, out / "map_before.pgm")
fileio.write_pgm(result.best_expl, out / "map_after.pgm")
fileio.write_pgm(target_expl, out / "map_target.pgm")
print(f"\nwrote renders under {out}/ (compare map_after.pgm with map_target.pgm)")
