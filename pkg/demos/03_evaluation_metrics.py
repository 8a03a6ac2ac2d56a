#!/usr/bin/env python3
"""Walkthrough: the evaluation metrics on a reconstructed results table.

Given only a row's FP rate (over ground-truth negatives) and FN rate (over
ground-truth positives) and a balanced 11 + 11 test set, the whole confusion
matrix follows, and with it accuracy and the macro-F1 this toolkit reports.
"""

import numpy as np

from pavesnow.ensemble import PredictionResult
from pavesnow.metrics import compute_report, error_ratios, f_beta, format_percent

ROWS = [  # (system, epoch, fp_rate_pct, fn_rate_pct)
    ("vgg19", 15, 100.0, 0.0),
    ("resnet50", 15, 18.2, 72.7),
    ("ensemble", 20, 90.9, 9.1),
    ("vgg19", 25, 9.1, 90.9),
    ("resnet50", 25, 72.7, 18.2),
]


def predictions_for(fp_pct, fn_pct, positives=11, negatives=11):
    fp = round(fp_pct / 100 * negatives)
    fn = round(fn_pct / 100 * positives)
    preds = []
    truth_pred = (
        [("snow", "snow")] * (positives - fn)
        + [("snow", "snow_free")] * fn
        + [("snow_free", "snow")] * fp
        + [("snow_free", "snow_free")] * (negatives - fp)
    )
    for truth, predicted in truth_pred:
        p = 0.9 if predicted == "snow" else 0.1
        preds.append(
            PredictionResult(label=predicted, probs=np.array([1 - p, p]), true_label=truth)
        )
    return preds


print(f"{'system':9s} {'epoch':5s} {'macro-F1':>9s} {'accuracy':>9s} {'FP/N':>7s} {'FN/P':>7s}")
for system, epoch, fp_pct, fn_pct in ROWS:
    report = compute_report(predictions_for(fp_pct, fn_pct))
    fp_ratio, fn_ratio = error_ratios(report.confusion)
    print(
        f"{system:9s} {epoch:<5d} {format_percent(report.macro_f1):>9s} "
        f"{format_percent(report.accuracy):>9s} {format_percent(fp_ratio):>7s} "
        f"{format_percent(fn_ratio):>7s}"
    )

# macro-F1 averages the snow and snow-free class F1 scores, so a classifier
# that shouts "snow" at everything scores 33.3%, not the 66.7% its
# snow-class F1 alone would suggest
report = compute_report(predictions_for(100.0, 0.0))
print(
    f"\nall-snow predictor: snow-class F1 {format_percent(report.f1_snow)}, "
    f"macro-F1 {format_percent(report.macro_f1)}"
)

# when missed snow is costlier than a false alarm, weigh recall higher
p, r = 0.5, 1.0
print(f"\nrecall-weighted scores for p={p}, r={r}:")
for beta in (1.0, 2.0):
    print(f"  F_beta(beta={beta:g}) = {f_beta(p, r, beta):.4f}")
