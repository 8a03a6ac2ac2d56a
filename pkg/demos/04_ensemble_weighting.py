#!/usr/bin/env python3
"""Walkthrough: weighted-average ensembling and how the weight is chosen.

Two models, each half-blind: A nails snow but cries snow on everything, B
nails snow-free but never sees snow. Neither solo model beats 67% macro-F1;
their convex mixture is perfect. fit_weight finds that by exhaustive search
over {0.00, 0.05, ..., 1.00} on validation macro-F1.
"""

import numpy as np

from pavesnow.ensemble import WEIGHT_GRID, EnsembleConfig, ensemble_predict, fit_weight
from pavesnow.metrics import macro_f1_from_labels

labels = ["snow"] * 3 + ["snow_free"] * 3
snow_probs_a = [0.9, 0.9, 0.9, 0.8, 0.8, 0.8]  # A: everything looks snowy
snow_probs_b = [0.2, 0.2, 0.2, 0.1, 0.1, 0.1]  # B: nothing looks snowy


def as_probs(snow_probs):
    snow = np.asarray(snow_probs)
    return np.stack([1 - snow, snow], axis=1)


pa, pb = as_probs(snow_probs_a), as_probs(snow_probs_b)

print("weight_a   macro-F1   predictions")
for weight in WEIGHT_GRID[::2]:
    results = ensemble_predict(pa, pb, EnsembleConfig(weight_a=weight))
    predicted = [r.label for r in results]
    score = macro_f1_from_labels(labels, predicted)
    marks = "".join("+" if p == t else "-" for p, t in zip(predicted, labels))
    print(f"  {weight:4.2f}     {score:6.3f}    {marks}")

config = fit_weight(pa, pb, labels)
print(f"\nfitted weight_a = {config.weight_a}")

# the ensemble probability is always bracketed by the two models'
combined = ensemble_predict(pa, pb, EnsembleConfig(weight_a=0.3))
row = combined[0]
print(
    f"convexity: model A {row.probs_a[1]:.2f}, model B {row.probs_b[1]:.2f}, "
    f"ensemble {row.probs[1]:.2f} lies between"
)

# extreme weights reproduce the solo models exactly
assert [r.label for r in ensemble_predict(pa, pb, EnsembleConfig(1.0))] == [
    "snow" if p >= 0.5 else "snow_free" for p in snow_probs_a
]
print("weight 1.0 reproduces model A's labels exactly")
