"""Independent oracles for the test suite.

Everything here is computed with plain loops and the textbook formulas,
deliberately sharing no code with the package under test.
"""

from __future__ import annotations

SNOW = "snow"
SNOW_FREE = "snow_free"

# Reference evaluation results frozen into the golden tests: learning rate
# 1e-4, a 22-image test set with 11 snow / 11 snow-free images. Percentages
# for F1 (macro), accuracy, the FP rate over ground-truth negatives and the
# FN rate over ground-truth positives. The epoch-15 ensemble row is
# internally inconsistent (its error ratios imply 63.6% accuracy, not the
# printed 72.7%) and is flagged here.
REFERENCE_ROWS = [
    # (epoch, system, f1_pct, acc_pct, fp_pct, fn_pct, self_consistent)
    (15, "ensemble", 71.8, 72.7, 45.5, 27.3, False),
    (15, "vgg19", 33.3, 50.0, 100.0, 0.0, True),
    (15, "resnet50", 50.9, 54.5, 18.2, 72.7, True),
    (20, "ensemble", 40.0, 50.0, 90.9, 9.1, True),
    (20, "vgg19", 31.3, 45.5, 9.1, 100.0, True),
    (20, "resnet50", 31.3, 45.5, 100.0, 9.1, True),
    (25, "ensemble", 45.5, 45.5, 54.5, 54.5, True),
    (25, "vgg19", 40.0, 50.0, 9.1, 90.9, True),
    (25, "resnet50", 50.9, 54.5, 72.7, 18.2, True),
]

TEST_POSITIVES = 11
TEST_NEGATIVES = 11


def confusion_from_ratios(fp_pct, fn_pct, positives=TEST_POSITIVES, negatives=TEST_NEGATIVES):
    """Reconstruct integer confusion counts from the printed percentages."""
    fp = round(fp_pct / 100.0 * negatives)
    fn = round(fn_pct / 100.0 * positives)
    return {"tp": positives - fn, "fp": fp, "fn": fn, "tn": negatives - fp}


def labels_from_confusion(counts):
    """Expand a confusion matrix into explicit (truth, prediction) lists."""
    y_true, y_pred = [], []
    for _ in range(counts["tp"]):
        y_true.append(SNOW)
        y_pred.append(SNOW)
    for _ in range(counts["fn"]):
        y_true.append(SNOW)
        y_pred.append(SNOW_FREE)
    for _ in range(counts["fp"]):
        y_true.append(SNOW_FREE)
        y_pred.append(SNOW)
    for _ in range(counts["tn"]):
        y_true.append(SNOW_FREE)
        y_pred.append(SNOW_FREE)
    return y_true, y_pred


def naive_confusion(y_true, y_pred):
    counts = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for truth, pred in zip(y_true, y_pred):
        if truth == SNOW and pred == SNOW:
            counts["tp"] += 1
        elif truth == SNOW and pred == SNOW_FREE:
            counts["fn"] += 1
        elif truth == SNOW_FREE and pred == SNOW:
            counts["fp"] += 1
        else:
            counts["tn"] += 1
    return counts


def _f1_from_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def naive_metrics(y_true, y_pred):
    """Accuracy, per-class F1 and macro-F1 by direct per-sample counting."""
    c = naive_confusion(y_true, y_pred)
    total = sum(c.values())
    f1_snow = _f1_from_counts(c["tp"], c["fp"], c["fn"])
    # mirrored counts: snow_free as the positive class
    f1_free = _f1_from_counts(c["tn"], c["fn"], c["fp"])
    return {
        "confusion": c,
        "accuracy": (c["tp"] + c["tn"]) / total,
        "f1_snow": f1_snow,
        "f1_snowfree": f1_free,
        "macro_f1": (f1_snow + f1_free) / 2.0,
    }


def naive_fit_weight(probs_a_snow, probs_b_snow, y_true, threshold=0.5):
    """Exhaustive 21-point grid search with the shipped tie-break rules."""
    grid = [round(0.05 * i, 2) for i in range(21)]

    def macro_at(weight):
        preds = []
        for pa, pb in zip(probs_a_snow, probs_b_snow):
            snow_prob = weight * pa + (1.0 - weight) * pb
            preds.append(SNOW if snow_prob >= threshold else SNOW_FREE)
        return naive_metrics(y_true, preds)["macro_f1"]

    scores = {w: macro_at(w) for w in grid}
    best = max(scores.values())
    tied = [w for w in grid if scores[w] == best]
    solo_a, solo_b = scores[1.0], scores[0.0]
    if solo_a > solo_b:
        prefer = lambda w: -w
    else:
        prefer = lambda w: w
    return min(tied, key=lambda w: (abs(w - 0.5), prefer(w), w)), scores
