"""Weighted-average ensembling of the two models' class probabilities.

The ensemble probability is ``weight_a * probs_a + (1 - weight_a) * probs_b``
and an image is labeled snow when its ensemble snow probability reaches the
decision threshold. Exact ties go to snow: warning a pedestrian needlessly is
cheaper than missing snow.
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pavesnow import metrics
from pavesnow.dataset import CLASS_ORDER, SNOW, SNOW_FREE
from pavesnow.models import (
    ClassifierModel,
    checkpoint_meta_path,
    load_checkpoint,
    predict_proba,
    state_dict_digest,
)
from pavesnow.preprocess import PreprocessConfig, preprocess_image

WEIGHT_GRID = tuple(round(0.05 * i, 2) for i in range(21))

BUNDLE_CONFIG_NAME = "ensemble.json"
BUNDLE_MODEL_A = "model_a.ckpt"
BUNDLE_MODEL_B = "model_b.ckpt"


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    weight_a: float
    model_a_ref: str = "model_a"
    model_b_ref: str = "model_b"
    decision_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight_a <= 1.0:
            raise EnsembleError(f"weight_a must lie in [0, 1], got {self.weight_a}")
        if not 0.0 < self.decision_threshold < 1.0:
            raise EnsembleError(
                f"decision_threshold must lie in (0, 1), got {self.decision_threshold}"
            )

    def to_dict(self) -> dict:
        return {
            "weight_a": self.weight_a,
            "model_a_ref": self.model_a_ref,
            "model_b_ref": self.model_b_ref,
            "decision_threshold": self.decision_threshold,
        }


@dataclass
class PredictionResult:
    label: str
    probs: np.ndarray  # ensemble probabilities in CLASS_ORDER
    record_id: str | None = None
    true_label: str | None = None
    probs_a: np.ndarray | None = None
    probs_b: np.ndarray | None = None

    @property
    def snow_probability(self) -> float:
        return float(self.probs[1])


def decide_label(snow_probability: float, threshold: float = 0.5) -> str:
    return SNOW if snow_probability >= threshold else SNOW_FREE


def _check_probs(probs, name: str) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise EnsembleError(f"{name} must be a Bx2 array, got shape {arr.shape}")
    if not np.allclose(arr.sum(axis=1), 1.0, atol=1e-4):
        raise EnsembleError(f"{name} rows are not normalized probability vectors")
    return arr


def ensemble_predict(
    probs_a,
    probs_b,
    config: EnsembleConfig,
    record_ids: Sequence[str] | None = None,
    true_labels: Sequence[str] | None = None,
) -> list[PredictionResult]:
    """Combine two row-normalized Bx2 probability batches into predictions."""
    pa = _check_probs(probs_a, "probs_a")
    pb = _check_probs(probs_b, "probs_b")
    if pa.shape != pb.shape:
        raise EnsembleError(f"batch size mismatch: {pa.shape} vs {pb.shape}")
    if record_ids is not None and len(record_ids) != pa.shape[0]:
        raise EnsembleError("record_ids length does not match the batch size")
    if true_labels is not None and len(true_labels) != pa.shape[0]:
        raise EnsembleError("true_labels length does not match the batch size")

    combined = config.weight_a * pa + (1.0 - config.weight_a) * pb
    results = []
    for i in range(pa.shape[0]):
        results.append(
            PredictionResult(
                label=decide_label(combined[i, 1], config.decision_threshold),
                probs=combined[i],
                record_id=None if record_ids is None else record_ids[i],
                true_label=None if true_labels is None else true_labels[i],
                probs_a=pa[i],
                probs_b=pb[i],
            )
        )
    return results


def fit_weight(
    val_probs_a,
    val_probs_b,
    val_labels: Sequence[str],
    model_a_ref: str = "model_a",
    model_b_ref: str = "model_b",
    decision_threshold: float = 0.5,
) -> EnsembleConfig:
    """Pick the ensemble weight maximizing validation macro-F1.

    Exhaustive search over the 21-point grid {0.00, 0.05, ..., 1.00}. Ties
    break toward equal weighting (closest to 0.5), then toward more weight on
    the model with the higher solo macro-F1, then toward the smaller weight.
    """
    pa = _check_probs(val_probs_a, "val_probs_a")
    pb = _check_probs(val_probs_b, "val_probs_b")
    if pa.shape != pb.shape:
        raise EnsembleError(f"batch size mismatch: {pa.shape} vs {pb.shape}")
    if pa.shape[0] == 0:
        raise EnsembleError("cannot fit an ensemble weight on an empty validation set")
    labels = list(val_labels)
    if len(labels) != pa.shape[0]:
        raise EnsembleError("val_labels length does not match the batch size")

    def score(weight: float) -> float:
        snow_probs = weight * pa[:, 1] + (1.0 - weight) * pb[:, 1]
        predicted = [decide_label(p, decision_threshold) for p in snow_probs]
        return metrics.macro_f1_from_labels(labels, predicted)

    scores = {w: score(w) for w in WEIGHT_GRID}
    best_score = max(scores.values())
    solo_a, solo_b = scores[1.0], scores[0.0]
    if solo_a > solo_b:
        prefer = lambda w: -w  # more weight on A
    elif solo_b > solo_a:
        prefer = lambda w: w
    else:
        prefer = lambda w: w
    tied = [w for w, s in scores.items() if s == best_score]
    best = min(tied, key=lambda w: (abs(w - 0.5), prefer(w), w))
    return EnsembleConfig(
        weight_a=best,
        model_a_ref=model_a_ref,
        model_b_ref=model_b_ref,
        decision_threshold=decision_threshold,
    )


class Bundle:
    """Two loaded models plus the fitted weight and preprocessing constants."""

    def __init__(
        self,
        config: EnsembleConfig,
        model_a: ClassifierModel,
        model_b: ClassifierModel,
        preprocess_config: PreprocessConfig,
        info: dict,
    ):
        self.config = config
        self.model_a = model_a
        self.model_b = model_b
        self.preprocess_config = preprocess_config
        self.info = info

    @property
    def digest(self) -> str:
        return self.info["digest"]

    def predict_batch(
        self,
        batch: np.ndarray,
        record_ids: Sequence[str] | None = None,
        true_labels: Sequence[str] | None = None,
    ) -> list[PredictionResult]:
        """Predict on an already-preprocessed Bx3xHxW batch."""
        pa = predict_proba(self.model_a, batch)
        pb = predict_proba(self.model_b, batch)
        return ensemble_predict(pa, pb, self.config, record_ids, true_labels)

    def predict_image(self, image: np.ndarray) -> PredictionResult:
        """Preprocess one raw 8-bit RGB image and predict."""
        batch = preprocess_image(image, self.preprocess_config)[np.newaxis]
        return self.predict_batch(batch)[0]

    def per_model_snow_probability(self, result: PredictionResult) -> dict[str, float]:
        return {
            self.model_a.spec.arch: float(result.probs_a[1]),
            self.model_b.spec.arch: float(result.probs_b[1]),
        }


def _bundle_digest(config_doc: dict, model_a: ClassifierModel, model_b: ClassifierModel) -> str:
    doc = {k: v for k, v in config_doc.items() if k != "digest"}
    digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode())
    digest.update(state_dict_digest(model_a.module).encode())
    digest.update(state_dict_digest(model_b.module).encode())
    return digest.hexdigest()


def save_bundle(
    bundle_dir: str | Path,
    checkpoint_a: str | Path,
    checkpoint_b: str | Path,
    config: EnsembleConfig,
    extras: dict | None = None,
) -> Path:
    """Copy the two checkpoints and the ensemble config into one directory.

    The two checkpoints must agree on class order and preprocessing constants;
    the bundle is self-contained and is what the eval, export and serve paths
    consume.
    """
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)

    metas = []
    for src in (checkpoint_a, checkpoint_b):
        meta_path = checkpoint_meta_path(src)
        if not Path(src).exists() or not meta_path.exists():
            raise EnsembleError(f"checkpoint {src} (or its .meta sidecar) does not exist")
        metas.append(json.loads(meta_path.read_text()))
    if metas[0]["class_order"] != metas[1]["class_order"]:
        raise EnsembleError("checkpoints disagree on class order")
    if metas[0].get("preprocess_hash") != metas[1].get("preprocess_hash"):
        raise EnsembleError("checkpoints disagree on preprocessing constants")

    for src, dest in ((checkpoint_a, BUNDLE_MODEL_A), (checkpoint_b, BUNDLE_MODEL_B)):
        shutil.copy2(src, bundle_dir / dest)
        shutil.copy2(checkpoint_meta_path(src), checkpoint_meta_path(bundle_dir / dest))

    model_a, _ = load_checkpoint(bundle_dir / BUNDLE_MODEL_A)
    model_b, _ = load_checkpoint(bundle_dir / BUNDLE_MODEL_B)
    doc = {
        **config.to_dict(),
        "archs": {"model_a": model_a.spec.arch, "model_b": model_b.spec.arch},
        "class_order": metas[0]["class_order"],
        "preprocess": metas[0]["preprocess"],
        **(extras or {}),
    }
    doc["digest"] = _bundle_digest(doc, model_a, model_b)
    (bundle_dir / BUNDLE_CONFIG_NAME).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return bundle_dir


def load_bundle(bundle_dir: str | Path) -> Bundle:
    bundle_dir = Path(bundle_dir)
    config_path = bundle_dir / BUNDLE_CONFIG_NAME
    if not config_path.exists():
        raise EnsembleError(f"{bundle_dir} is not an ensemble bundle ({BUNDLE_CONFIG_NAME} missing)")
    doc = json.loads(config_path.read_text())
    if tuple(doc["class_order"]) != CLASS_ORDER:
        raise EnsembleError(f"bundle class order {doc['class_order']} is not {list(CLASS_ORDER)}")
    config = EnsembleConfig(
        weight_a=doc["weight_a"],
        model_a_ref=doc["model_a_ref"],
        model_b_ref=doc["model_b_ref"],
        decision_threshold=doc["decision_threshold"],
    )
    model_a, _ = load_checkpoint(bundle_dir / BUNDLE_MODEL_A)
    model_b, _ = load_checkpoint(bundle_dir / BUNDLE_MODEL_B)
    return Bundle(
        config=config,
        model_a=model_a,
        model_b=model_b,
        preprocess_config=PreprocessConfig.from_dict(doc["preprocess"]),
        info=doc,
    )
