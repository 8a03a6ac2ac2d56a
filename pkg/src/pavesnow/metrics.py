"""Binary-classification evaluation: confusion counts, per-class precision /
recall / F1, macro-F1, error ratios, and a misclassification gallery.

Conventions. "Positive" means the snow class throughout. The headline F1 of
an evaluation is the macro average of the snow and snow-free F1 scores. The
FP ratio is taken over ground-truth negatives (a false-positive rate) and the
FN ratio over ground-truth positives (a miss rate); on a balanced test set
these coincide with the ratios over the opposite class.
"""

from __future__ import annotations

import html
import json
import re
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from PIL import Image

from pavesnow.dataset import SNOW, SNOW_FREE, DatasetManifest

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from pavesnow.ensemble import PredictionResult


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with "positive" = snow."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricsError(f"confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def actual_positives(self) -> int:
        return self.tp + self.fn

    @property
    def actual_negatives(self) -> int:
        return self.fp + self.tn

    @classmethod
    def from_labels(cls, y_true: Sequence[str], y_pred: Sequence[str]) -> "ConfusionMatrix":
        if len(y_true) != len(y_pred):
            raise MetricsError(f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions")
        tp = fp = fn = tn = 0
        for truth, pred in zip(y_true, y_pred):
            if truth == SNOW:
                if pred == SNOW:
                    tp += 1
                else:
                    fn += 1
            else:
                if pred == SNOW:
                    fp += 1
                else:
                    tn += 1
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise MetricsError(f"precision and recall must lie in [0, 1], got p={p}, r={r}")
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def f_beta(p: float, r: float, beta: float) -> float:
    """Generalized F-score; beta > 1 weighs recall more heavily."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise MetricsError(f"precision and recall must lie in [0, 1], got p={p}, r={r}")
    if beta <= 0.0:
        raise MetricsError(f"beta must be positive, got {beta}")
    denom = beta * beta * p + r
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * p * r / denom


def _precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    # 2pr/(p+r) simplified to one division so exact ratios (e.g. 0.625)
    # survive as exact floats; matters when formatting hits a rounding tie
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def error_ratios(cm: ConfusionMatrix) -> tuple[float | None, float | None]:
    """(FP rate over ground-truth negatives, FN rate over ground-truth positives).

    A component is None, not 0, when its ground-truth class is empty.
    """
    fp_ratio = cm.fp / cm.actual_negatives if cm.actual_negatives > 0 else None
    fn_ratio = cm.fn / cm.actual_positives if cm.actual_positives > 0 else None
    return fp_ratio, fn_ratio


def macro_f1_from_labels(y_true: Sequence[str], y_pred: Sequence[str]) -> float:
    cm = ConfusionMatrix.from_labels(y_true, y_pred)
    return _macro_f1(cm)


def _macro_f1(cm: ConfusionMatrix) -> float:
    # snow_free is "positive" for the mirrored counts
    return (_f1_from_counts(cm.tp, cm.fp, cm.fn) + _f1_from_counts(cm.tn, cm.fn, cm.fp)) / 2.0


@dataclass
class RecordEval:
    record_id: str
    true_label: str
    predicted_label: str
    snow_probability: float
    snow_probability_a: float | None = None
    snow_probability_b: float | None = None

    @property
    def correct(self) -> bool:
        return self.true_label == self.predicted_label

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "true_label": self.true_label,
            "predicted_label": self.predicted_label,
            "snow_probability": self.snow_probability,
            "snow_probability_a": self.snow_probability_a,
            "snow_probability_b": self.snow_probability_b,
        }


@dataclass
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision_snow: float
    recall_snow: float
    f1_snow: float
    precision_snowfree: float
    recall_snowfree: float
    f1_snowfree: float
    macro_f1: float
    fp_ratio: float | None
    fn_ratio: float | None
    misclassified_ids: list[str]
    records: list[RecordEval] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.to_dict(),
            "accuracy": self.accuracy,
            "precision_snow": self.precision_snow,
            "recall_snow": self.recall_snow,
            "f1_snow": self.f1_snow,
            "precision_snowfree": self.precision_snowfree,
            "recall_snowfree": self.recall_snowfree,
            "f1_snowfree": self.f1_snowfree,
            "macro_f1": self.macro_f1,
            "fp_ratio": self.fp_ratio,
            "fn_ratio": self.fn_ratio,
            "misclassified_ids": self.misclassified_ids,
            "records": [r.to_dict() for r in self.records],
            "provenance": self.provenance,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path


def compute_report(predictions: Sequence["PredictionResult"]) -> MetricsReport:
    """Score a labeled prediction batch into a full metrics report."""
    if len(predictions) == 0:
        raise MetricsError("cannot evaluate an empty prediction batch")
    unlabeled = [i for i, p in enumerate(predictions) if p.true_label is None]
    if unlabeled:
        raise MetricsError(f"predictions at indices {unlabeled} carry no ground-truth label")

    records: list[RecordEval] = []
    for i, pred in enumerate(predictions):
        records.append(
            RecordEval(
                record_id=pred.record_id if pred.record_id is not None else f"sample_{i:04d}",
                true_label=pred.true_label,
                predicted_label=pred.label,
                snow_probability=float(pred.probs[1]),
                snow_probability_a=None if pred.probs_a is None else float(pred.probs_a[1]),
                snow_probability_b=None if pred.probs_b is None else float(pred.probs_b[1]),
            )
        )

    cm = ConfusionMatrix.from_labels(
        [r.true_label for r in records], [r.predicted_label for r in records]
    )
    p_snow, r_snow = _precision_recall(cm.tp, cm.fp, cm.fn)
    p_free, r_free = _precision_recall(cm.tn, cm.fn, cm.fp)
    f1_snow = _f1_from_counts(cm.tp, cm.fp, cm.fn)
    f1_free = _f1_from_counts(cm.tn, cm.fn, cm.fp)
    fp_ratio, fn_ratio = error_ratios(cm)
    return MetricsReport(
        confusion=cm,
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision_snow=p_snow,
        recall_snow=r_snow,
        f1_snow=f1_snow,
        precision_snowfree=p_free,
        recall_snowfree=r_free,
        f1_snowfree=f1_free,
        macro_f1=(f1_snow + f1_free) / 2.0,
        fp_ratio=fp_ratio,
        fn_ratio=fn_ratio,
        misclassified_ids=[r.record_id for r in records if not r.correct],
        records=records,
    )


def format_percent(value: float, decimals: int = 1) -> str:
    """Format a ratio as a percentage, rounding halves away from zero."""
    quantum = Decimal(1).scaleb(-decimals)
    rounded = (Decimal(str(value)) * 100).quantize(quantum, rounding=ROUND_HALF_UP)
    return f"{rounded}%"


_GALLERY_STYLE = """
body { font-family: sans-serif; background: #fafafa; margin: 1.5em; }
.summary { margin-bottom: 1em; }
.grid { display: flex; flex-wrap: wrap; gap: 12px; }
.tile { width: 180px; border: 2px solid #ccc; border-radius: 6px;
        background: #fff; padding: 8px; font-size: 13px; }
.tile.miss { border-color: #c62828; }
.tile.miss .verdict { color: #c62828; font-weight: bold; }
.tile img, .tile .placeholder { width: 160px; height: 160px; object-fit: cover; }
.placeholder { background: #ddd; color: #666; display: flex;
               align-items: center; justify-content: center; }
.probs { color: #444; }
"""


def _sanitize(record_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", record_id)


def render_gallery(
    report: MetricsReport,
    manifest: DatasetManifest,
    out_dir: str | Path,
    title: str = "Evaluation gallery",
) -> Path:
    """Write a static HTML page with one tile per evaluated record.

    Misclassified entries are flagged in bold with a red border. Records whose
    image file is missing, or which are unknown to the manifest, get a
    placeholder tile instead of crashing the render.
    """
    out_dir = Path(out_dir)
    thumbs_dir = out_dir / "thumbs"
    thumbs_dir.mkdir(parents=True, exist_ok=True)
    by_id = manifest.records_by_id()

    tiles: list[str] = []
    page_warnings: list[str] = []
    for entry in report.records:
        verdict = "ok" if entry.correct else "MISCLASSIFIED"
        tile_class = "tile" if entry.correct else "tile miss"
        image_html = '<div class="placeholder">no image</div>'
        record = by_id.get(entry.record_id)
        if record is None:
            page_warnings.append(f"record {entry.record_id!r} is not in the manifest")
        else:
            source = manifest.resolve(record)
            if source.exists():
                thumb_name = _sanitize(entry.record_id) + ".png"
                try:
                    with Image.open(source) as im:
                        thumb = im.convert("RGB")
                        thumb.thumbnail((160, 160))
                        thumb.save(thumbs_dir / thumb_name)
                    image_html = f'<img src="thumbs/{thumb_name}" alt="{html.escape(entry.record_id)}">'
                except OSError as exc:
                    page_warnings.append(f"could not render {entry.record_id!r}: {exc}")
            else:
                page_warnings.append(f"image file missing for {entry.record_id!r}")
        probs = [f"ensemble {entry.snow_probability:.3f}"]
        if entry.snow_probability_a is not None:
            probs.append(f"A {entry.snow_probability_a:.3f}")
        if entry.snow_probability_b is not None:
            probs.append(f"B {entry.snow_probability_b:.3f}")
        tiles.append(
            f'<div class="{tile_class}">{image_html}'
            f"<div><b>{html.escape(entry.record_id)}</b></div>"
            f"<div>truth: {html.escape(entry.true_label)} &middot; "
            f"predicted: {html.escape(entry.predicted_label)}</div>"
            f'<div class="probs">snow prob: {" / ".join(probs)}</div>'
            f'<div class="verdict">{verdict}</div></div>'
        )

    if page_warnings:
        for message in page_warnings:
            warnings.warn(message, stacklevel=2)
    warning_html = (
        "<ul>" + "".join(f"<li>{html.escape(w)}</li>" for w in page_warnings) + "</ul>"
        if page_warnings
        else ""
    )
    summary = (
        f"accuracy {format_percent(report.accuracy)} &middot; "
        f"macro-F1 {format_percent(report.macro_f1)} &middot; "
        f"{len(report.misclassified_ids)} of {len(report.records)} misclassified"
    )
    page = (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        f"<title>{html.escape(title)}</title><style>{_GALLERY_STYLE}</style></head>"
        f"<body><h1>{html.escape(title)}</h1>"
        f'<div class="summary">{summary}</div>{warning_html}'
        f'<div class="grid">{"".join(tiles)}</div></body></html>'
    )
    gallery_path = out_dir / "gallery.html"
    gallery_path.write_text(page)
    return gallery_path
