"""Fine-tuning of the replaced classification head with Adam.

The backbone is frozen and runs in inference mode, so its penultimate
features are computed once per image and cached; each epoch then optimizes
the head on cached features in shuffled mini-batches. This is numerically
identical to pushing every batch through the full network and dramatically
cheaper. Validation metrics at checkpoint epochs go through the full-model
predict path, so reloading a checkpoint and predicting on the validation set
reproduces the stored numbers exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from pavesnow import metrics
from pavesnow.dataset import SNOW, DatasetManifest, ImageRecord
from pavesnow.ensemble import decide_label
from pavesnow.models import (
    ARCHS,
    BackboneSpec,
    ClassifierModel,
    build_model,
    extract_features,
    predict_proba,
    reinit_head,
    save_checkpoint,
)
from pavesnow.preprocess import PreprocessConfig, load_and_preprocess

LR_GRID = (0.0001, 0.001, 0.01, 0.1)
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
FEATURE_BATCH = 8


class TrainerError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """The loss became non-finite; carries the offending batch for diagnosis."""

    def __init__(self, epoch: int, step: int, record_ids: list[str]):
        self.epoch = epoch
        self.step = step
        self.record_ids = record_ids
        super().__init__(
            f"non-finite loss at epoch {epoch}, step {step}; batch records: {record_ids}"
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    max_epochs: int = 25
    eval_epochs: tuple[int, ...] = (15, 20, 25)
    checkpoint_interval: int = 5
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise TrainerError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise TrainerError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.checkpoint_interval < 1:
            raise TrainerError(
                f"checkpoint_interval must be at least 1, got {self.checkpoint_interval}"
            )
        if self.max_epochs % self.checkpoint_interval != 0:
            raise TrainerError(
                f"checkpoint_interval {self.checkpoint_interval} does not divide "
                f"max_epochs {self.max_epochs}"
            )
        allowed = set(range(self.checkpoint_interval, self.max_epochs + 1, self.checkpoint_interval))
        stray = set(self.eval_epochs) - allowed
        if stray:
            raise TrainerError(f"eval_epochs {sorted(stray)} are not checkpoint epochs")
        if self.batch_size < 1:
            raise TrainerError(f"batch_size must be at least 1, got {self.batch_size}")

    def checkpoint_epochs(self) -> list[int]:
        return list(range(self.checkpoint_interval, self.max_epochs + 1, self.checkpoint_interval))


@dataclass
class CheckpointMeta:
    run_id: str
    arch: str
    epoch: int
    learning_rate: float
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    manifest_hash: str
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float


@dataclass
class TrainResult:
    run_id: str
    checkpoints: list[tuple[CheckpointMeta, Path]]
    history: list[EpochStats]
    steps_per_epoch: int
    # validation probabilities captured at checkpoint epochs, for sweeps
    val_probs_by_epoch: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class SplitArrays:
    x_train: np.ndarray
    y_train: np.ndarray
    train_ids: list[str]
    x_val: np.ndarray
    y_val: np.ndarray
    val_ids: list[str]
    val_labels: list[str]


def _labels_to_indices(records: Sequence[ImageRecord]) -> np.ndarray:
    return np.array([1 if r.label == SNOW else 0 for r in records], dtype=np.int64)


def load_split_arrays(
    manifest: DatasetManifest, preprocess_config: PreprocessConfig | None = None
) -> SplitArrays:
    """Decode and preprocess the manifest's train and val records."""
    train_records = manifest.records_in_split("train")
    val_records = manifest.records_in_split("val")
    if not train_records or not val_records:
        raise TrainerError(
            f"both splits must be non-empty, got {len(train_records)} train / "
            f"{len(val_records)} val records"
        )
    x_train = load_and_preprocess([manifest.resolve(r) for r in train_records], preprocess_config)
    x_val = load_and_preprocess([manifest.resolve(r) for r in val_records], preprocess_config)
    return SplitArrays(
        x_train=x_train,
        y_train=_labels_to_indices(train_records),
        train_ids=[r.id for r in train_records],
        x_val=x_val,
        y_val=_labels_to_indices(val_records),
        val_ids=[r.id for r in val_records],
        val_labels=[r.label for r in val_records],
    )


def _evaluate(model: ClassifierModel, x: np.ndarray, y: np.ndarray) -> tuple[float, float, np.ndarray]:
    """(cross-entropy loss, accuracy, probabilities) via the full-model path."""
    probs = predict_proba(model, x)
    true_probs = np.clip(probs[np.arange(len(y)), y], 1e-12, 1.0)
    loss = float(np.mean(-np.log(true_probs)))
    predicted = (probs[:, 1] >= 0.5).astype(np.int64)
    accuracy = float(np.mean(predicted == y))
    return loss, accuracy, probs


def _fit(
    model: ClassifierModel,
    features: torch.Tensor,
    data: SplitArrays,
    config: TrainConfig,
    out_dir: Path,
    run_id: str,
    manifest_hash: str,
    preprocess_config: PreprocessConfig,
) -> TrainResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    y_train = torch.from_numpy(data.y_train)
    n = features.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)

    optimizer = torch.optim.Adam(
        model.head_parameters(),
        lr=config.learning_rate,
        betas=ADAM_BETAS,
        eps=ADAM_EPS,
        weight_decay=0.0,
    )
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(config.seed)

    history: list[EpochStats] = []
    checkpoints: list[tuple[CheckpointMeta, Path]] = []
    val_probs_by_epoch: dict[int, np.ndarray] = {}
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            logits = model.head(features[idx])
            loss = loss_fn(logits, y_train[idx])
            if not torch.isfinite(loss):
                raise TrainingDiverged(epoch, step, [data.train_ids[i] for i in idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(idx)
            correct += int((logits.argmax(dim=1) == y_train[idx]).sum())
        history.append(EpochStats(epoch, loss_sum / n, correct / n))

        if epoch % config.checkpoint_interval == 0:
            val_loss, val_accuracy, val_probs = _evaluate(model, data.x_val, data.y_val)
            val_probs_by_epoch[epoch] = val_probs
            meta = CheckpointMeta(
                run_id=run_id,
                arch=model.spec.arch,
                epoch=epoch,
                learning_rate=config.learning_rate,
                train_loss=history[-1].train_loss,
                train_accuracy=history[-1].train_accuracy,
                val_loss=val_loss,
                val_accuracy=val_accuracy,
                manifest_hash=manifest_hash,
                seed=config.seed,
            )
            path = out_dir / f"epoch_{epoch}.ckpt"
            sidecar = meta.to_dict()
            sidecar["preprocess"] = preprocess_config.to_dict()
            sidecar["preprocess_hash"] = preprocess_config.config_hash()
            save_checkpoint(model, path, sidecar)
            checkpoints.append((meta, path))

    (out_dir / "history.json").write_text(
        json.dumps([asdict(h) for h in history], indent=2) + "\n"
    )
    return TrainResult(
        run_id=run_id,
        checkpoints=checkpoints,
        history=history,
        steps_per_epoch=steps_per_epoch,
        val_probs_by_epoch=val_probs_by_epoch,
    )


def train(
    model: ClassifierModel,
    train_records: Sequence[ImageRecord],
    val_records: Sequence[ImageRecord],
    config: TrainConfig,
    *,
    image_root: Path,
    out_dir: str | Path,
    preprocess_config: PreprocessConfig | None = None,
    manifest_hash: str = "",
    run_id: str | None = None,
) -> TrainResult:
    """Run ``config.max_epochs`` of mini-batch training on the model's head.

    Checkpoints (weights + metadata sidecar) are written atomically every
    ``checkpoint_interval`` epochs under ``out_dir``, and the per-epoch
    training history is saved alongside them.
    """
    if not train_records or not val_records:
        raise TrainerError(
            f"both splits must be non-empty, got {len(train_records)} train / "
            f"{len(val_records)} val records"
        )
    preprocess_config = preprocess_config or PreprocessConfig()
    data = SplitArrays(
        x_train=load_and_preprocess([Path(image_root) / r.path for r in train_records], preprocess_config),
        y_train=_labels_to_indices(train_records),
        train_ids=[r.id for r in train_records],
        x_val=load_and_preprocess([Path(image_root) / r.path for r in val_records], preprocess_config),
        y_val=_labels_to_indices(val_records),
        val_ids=[r.id for r in val_records],
        val_labels=[r.label for r in val_records],
    )
    features = extract_features(model, data.x_train)
    run_id = run_id or f"{model.spec.arch}-lr{config.learning_rate:g}-seed{config.seed}"
    return _fit(
        model,
        features,
        data,
        config,
        Path(out_dir),
        run_id,
        manifest_hash,
        preprocess_config,
    )


@dataclass
class LeaderboardRow:
    arch: str
    learning_rate: float
    epoch: int
    val_macro_f1: float
    val_accuracy: float
    checkpoint: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SweepFailure:
    arch: str
    learning_rate: float
    error: str


@dataclass
class Leaderboard:
    rows: list[LeaderboardRow]
    failures: list[SweepFailure] = field(default_factory=list)

    def best_per_arch(self) -> dict[str, LeaderboardRow]:
        best: dict[str, LeaderboardRow] = {}
        for row in self.rows:
            if row.arch not in best:
                best[row.arch] = row
        return best

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "failures": [asdict(f) for f in self.failures],
            "best_per_arch": {a: r.to_dict() for a, r in sorted(self.best_per_arch().items())},
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")
        return path


def sweep(
    manifest: DatasetManifest,
    grid: Iterable[TrainConfig],
    archs: Sequence[str] = ARCHS,
    *,
    out_root: str | Path,
    weights: str = "imagenet",
    preprocess_config: PreprocessConfig | None = None,
) -> Leaderboard:
    """Train every (arch, learning rate) cell and rank checkpoints by val macro-F1.

    One 25-epoch run per cell, evaluated at its ``eval_epochs`` checkpoints.
    The backbone is built once per arch (features are cached and reused across
    learning rates); only the head is re-initialized per cell. A failing cell
    is recorded and does not abort the sweep.
    """
    grid = list(grid)
    if not grid:
        raise TrainerError("sweep grid is empty")
    for arch in archs:
        if arch not in ARCHS:
            raise TrainerError(f"unsupported arch {arch!r}; supported: {ARCHS}")
    out_root = Path(out_root)
    preprocess_config = preprocess_config or PreprocessConfig()
    data = load_split_arrays(manifest, preprocess_config)
    manifest_hash = manifest.content_hash()

    rows: list[LeaderboardRow] = []
    failures: list[SweepFailure] = []
    for arch in archs:
        try:
            model = build_model(BackboneSpec(arch=arch, weights=weights), seed=grid[0].seed)
            features = extract_features(model, data.x_train)
        except Exception as exc:
            failures.extend(
                SweepFailure(arch, c.learning_rate, f"{type(exc).__name__}: {exc}") for c in grid
            )
            continue
        for config in grid:
            run_id = f"lr{config.learning_rate:g}-seed{config.seed}"
            out_dir = out_root / run_id / arch
            try:
                reinit_head(model, config.seed)
                result = _fit(
                    model,
                    features,
                    data,
                    config,
                    out_dir,
                    run_id,
                    manifest_hash,
                    preprocess_config,
                )
            except Exception as exc:
                failures.append(SweepFailure(arch, config.learning_rate, f"{type(exc).__name__}: {exc}"))
                continue
            for epoch in sorted(config.eval_epochs):
                probs = result.val_probs_by_epoch[epoch]
                predicted = [decide_label(p) for p in probs[:, 1]]
                rows.append(
                    LeaderboardRow(
                        arch=arch,
                        learning_rate=config.learning_rate,
                        epoch=epoch,
                        val_macro_f1=metrics.macro_f1_from_labels(data.val_labels, predicted),
                        val_accuracy=float(
                            np.mean((probs[:, 1] >= 0.5).astype(np.int64) == data.y_val)
                        ),
                        checkpoint=(out_dir / f"epoch_{epoch}.ckpt").relative_to(out_root).as_posix(),
                    )
                )

    rows.sort(
        key=lambda r: (-r.val_macro_f1, -r.val_accuracy, r.arch, r.learning_rate, r.epoch)
    )
    return Leaderboard(rows=rows, failures=failures)
