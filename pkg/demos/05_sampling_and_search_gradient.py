"""
Population sampling and the search gradient
===========================================

Two small numerical studies of the optimizer's ingredients:

1. Latin hypercube vs iid sampling: LHS places each coordinate's CDF
   values in every probability interval exactly once, which shows up as
   near-zero discrepancy between interval counts.

2. The rank-shaped Monte-Carlo search gradient on the quadratic
   loss(z) = ||z - c||^2 points toward the minimum c, and the estimate
   sharpens as the population grows.
"""

import numpy as np
from scipy.special import ndtr

from foilbox.attack import estimate_gradients, rank_normalize, sample_population

rng = np.random.Generator(np.random.PCG64(0))

print("interval occupancy for 16 samples over 16 equal-probability intervals")
pop = 16
z_lhs = sample_population(rng, pop, 1.0, (1,), "lhs")
z_iid = sample_population(rng, pop, 1.0, (1,), "iid")
for name, z in (("lhs", z_lhs), ("iid", z_iid)):
    counts = np.bincount(np.floor(ndtr(z.reshape(-1)) * pop).astype(int), minlength=pop)
    print(f"  {name}: {counts.tolist()}")

print("\nalignment of the rank-shaped update direction with the descent direction")
c = rng.standard_normal(10)
for pop in (10, 30, 100, 300, 1000):
    cosines = []
    for seed in range(50):
        r = np.random.Generator(np.random.PCG64(seed))
        z = sample_population(r, pop, 0.3, (10,), "iid")
        losses = np.sum((z - c) ** 2, axis=1)
        grad_v, _ = estimate_gradients(z, rank_normalize(losses), 0.3)
        cosines.append(grad_v @ c / (np.linalg.norm(grad_v) * np.linalg.norm(c)))
    print(f"  population {pop:4d}: mean cosine {np.mean(cosines):+.3f}")
