"""End-to-end recipes: ingest -> split -> sweep -> fit weight -> eval -> export.

A recipe is a plain JSON config plus one seed. Every stage is deterministic
given identical inputs and seed, so re-running a recipe reproduces the
metrics report byte for byte. Artifacts land under one output root:

    out_root/
      data/              demo dataset (when the recipe generates one)
      manifest.jsonl     ingested, paired, split manifest
      rejects.json       undecodable files from ingest
      runs/<run_id>/<arch>/epoch_<k>.ckpt|.meta + history.json
      sweep_summary.json leaderboard over all sweep cells
      bundle/            two best checkpoints + fitted ensemble weight
      report/            metrics report JSON + misclassification gallery
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import pavesnow
from pavesnow import dataset as ds
from pavesnow import demo_data, ensemble, metrics, trainer
from pavesnow.models import export_torchscript, load_checkpoint, predict_proba
from pavesnow.preprocess import PreprocessConfig, load_and_preprocess

LOCK_NAME = ".lock"
FAILED_MARKER = "FAILED"


class RecipeError(ValueError):
    pass


@dataclass
class RunRecipe:
    out_root: Path
    seed: int = 42
    image_root: Path | None = None  # existing dataset; exclusive with demo
    demo: dict | None = None  # {"n_pairs": .., "n_test_per_class": ..}
    train_fraction: float = 0.8
    archs: tuple[str, ...] = ("vgg19", "resnet50")
    learning_rates: tuple[float, ...] = (1e-4,)
    max_epochs: int = 25
    eval_epochs: tuple[int, ...] = (15, 20, 25)
    checkpoint_interval: int = 5
    batch_size: int = 4
    weights: str = "imagenet"
    decision_threshold: float = 0.5
    export: bool = True
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)

    _FIELDS = {
        "out_root",
        "seed",
        "image_root",
        "demo",
        "train_fraction",
        "archs",
        "learning_rates",
        "max_epochs",
        "eval_epochs",
        "checkpoint_interval",
        "batch_size",
        "weights",
        "decision_threshold",
        "export",
        "preprocess",
    }

    def __post_init__(self) -> None:
        self.out_root = Path(self.out_root)
        if self.image_root is not None:
            self.image_root = Path(self.image_root)
        if self.image_root is None and self.demo is None:
            raise RecipeError("recipe needs a data source: set field 'image_root' or 'demo'")
        if self.image_root is not None and self.demo is not None:
            raise RecipeError("recipe fields 'image_root' and 'demo' are mutually exclusive")
        if len(self.archs) != 2:
            raise RecipeError(f"recipe field 'archs' must name two backbones, got {self.archs}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunRecipe":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise RecipeError(f"recipe {path} is not valid JSON: {exc}") from exc
        unknown = set(doc) - cls._FIELDS
        if unknown:
            raise RecipeError(f"recipe {path} has unknown fields: {sorted(unknown)}")
        if "out_root" not in doc:
            raise RecipeError(f"recipe {path} lacks the required field 'out_root'")
        kwargs = dict(doc)
        for key in ("archs", "learning_rates", "eval_epochs"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "preprocess" in kwargs:
            kwargs["preprocess"] = PreprocessConfig.from_dict(kwargs["preprocess"])
        # paths in a recipe file are relative to the file's directory
        kwargs["out_root"] = path.parent / kwargs["out_root"]
        if kwargs.get("image_root"):
            kwargs["image_root"] = path.parent / kwargs["image_root"]
        return cls(**kwargs)

    def semantic_dict(self) -> dict:
        """Recipe content without filesystem locations; what the config hash covers."""
        return {
            "seed": self.seed,
            "demo": self.demo,
            "train_fraction": self.train_fraction,
            "archs": list(self.archs),
            "learning_rates": list(self.learning_rates),
            "max_epochs": self.max_epochs,
            "eval_epochs": list(self.eval_epochs),
            "checkpoint_interval": self.checkpoint_interval,
            "batch_size": self.batch_size,
            "weights": self.weights,
            "decision_threshold": self.decision_threshold,
            "export": self.export,
            "preprocess": self.preprocess.to_dict(),
        }

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.semantic_dict(), sort_keys=True).encode()
        ).hexdigest()


def default_demo_recipe(out_root: str | Path, seed: int = 42) -> RunRecipe:
    """The reference-defaults recipe over the synthetic dataset.

    Learning rate 1e-4, 25 epochs, batch size 4, checkpoints every 5 epochs.
    Uses seeded random-init backbones so it runs on air-gapped machines; set
    ``weights="imagenet"`` for the real pre-trained behavior.
    """
    return RunRecipe(
        out_root=Path(out_root),
        seed=seed,
        demo={"n_pairs": 38, "n_test_per_class": 11},
        weights="random",
    )


@dataclass
class RecipeResult:
    out_root: Path
    manifest_path: Path
    leaderboard: trainer.Leaderboard
    bundle_dir: Path
    report_path: Path
    gallery_path: Path
    report: metrics.MetricsReport


class PipelineError(RuntimeError):
    pass


def _predict_split(bundle: ensemble.Bundle, manifest: ds.DatasetManifest, split_name: str):
    records = manifest.records_in_split(split_name)
    if not records:
        raise PipelineError(f"manifest has no records in split {split_name!r}")
    batch = load_and_preprocess([manifest.resolve(r) for r in records], bundle.preprocess_config)
    return bundle.predict_batch(
        batch,
        record_ids=[r.id for r in records],
        true_labels=[r.label for r in records],
    )


def evaluate_bundle(
    bundle: ensemble.Bundle,
    manifest: ds.DatasetManifest,
    split_name: str = "test",
    provenance: dict | None = None,
) -> metrics.MetricsReport:
    predictions = _predict_split(bundle, manifest, split_name)
    report = metrics.compute_report(predictions)
    report.provenance = dict(provenance or {})
    return report


def run_recipe(recipe: RunRecipe) -> RecipeResult:
    """Execute every stage of the recipe under an output-root lock.

    On a stage failure, partial artifacts are kept, a FAILED marker naming
    the stage is written, and the error propagates.
    """
    out_root = recipe.out_root
    out_root.mkdir(parents=True, exist_ok=True)
    lock_path = out_root / LOCK_NAME
    try:
        lock_fd = open(lock_path, "x")
    except FileExistsError:
        raise PipelineError(
            f"output root {out_root} is locked by another run (remove {lock_path} if stale)"
        )
    marker = out_root / FAILED_MARKER
    if marker.exists():
        marker.unlink()

    stage = "setup"
    try:
        with lock_fd:
            if recipe.demo is not None:
                stage = "demo-data"
                image_root = demo_data.generate_demo_dataset(
                    out_root / "data", seed=recipe.seed, **recipe.demo
                )
            else:
                image_root = recipe.image_root

            stage = "ingest"
            ingested = ds.ingest(image_root)
            (out_root / "rejects.json").write_text(
                json.dumps([vars(r) for r in ingested.rejects], sort_keys=True, indent=2) + "\n"
            )

            stage = "split"
            manifest = ds.pair_by_location(ingested.manifest)
            manifest = ds.split(manifest, recipe.train_fraction, recipe.seed)
            manifest_path = ds.save_manifest(manifest, out_root / "manifest.jsonl")
            manifest_hash = manifest.content_hash()

            stage = "sweep"
            grid = [
                trainer.TrainConfig(
                    learning_rate=lr,
                    max_epochs=recipe.max_epochs,
                    eval_epochs=recipe.eval_epochs,
                    checkpoint_interval=recipe.checkpoint_interval,
                    batch_size=recipe.batch_size,
                    seed=recipe.seed,
                )
                for lr in recipe.learning_rates
            ]
            leaderboard = trainer.sweep(
                manifest,
                grid,
                recipe.archs,
                out_root=out_root / "runs",
                weights=recipe.weights,
                preprocess_config=recipe.preprocess,
            )
            leaderboard.save(out_root / "sweep_summary.json")
            best = leaderboard.best_per_arch()
            missing = [arch for arch in recipe.archs if arch not in best]
            if missing:
                raise PipelineError(
                    f"sweep produced no usable checkpoints for {missing}; "
                    f"failures: {[vars(f) for f in leaderboard.failures]}"
                )

            stage = "fit-weight"
            arch_a, arch_b = recipe.archs
            ckpt_a = out_root / "runs" / best[arch_a].checkpoint
            ckpt_b = out_root / "runs" / best[arch_b].checkpoint
            val_records = manifest.records_in_split("val")
            x_val = load_and_preprocess(
                [manifest.resolve(r) for r in val_records], recipe.preprocess
            )
            model_a, _ = load_checkpoint(ckpt_a)
            model_b, _ = load_checkpoint(ckpt_b)
            ens_config = ensemble.fit_weight(
                predict_proba(model_a, x_val),
                predict_proba(model_b, x_val),
                [r.label for r in val_records],
                model_a_ref=best[arch_a].checkpoint,
                model_b_ref=best[arch_b].checkpoint,
                decision_threshold=recipe.decision_threshold,
            )

            stage = "bundle"
            bundle_dir = ensemble.save_bundle(
                out_root / "bundle",
                ckpt_a,
                ckpt_b,
                ens_config,
                extras={
                    "manifest_hash": manifest_hash,
                    "seed": recipe.seed,
                    "config_hash": recipe.config_hash(),
                    "code_version": pavesnow.__version__,
                },
            )
            bundle = ensemble.load_bundle(bundle_dir)

            stage = "eval"
            report = evaluate_bundle(
                bundle,
                manifest,
                "test",
                provenance={
                    "seed": recipe.seed,
                    "config_hash": recipe.config_hash(),
                    "manifest_hash": manifest_hash,
                    "code_version": pavesnow.__version__,
                    "bundle_digest": bundle.digest,
                },
            )
            report_path = report.save(out_root / "report" / "report.json")
            gallery_path = metrics.render_gallery(report, manifest, out_root / "report")

            if recipe.export:
                stage = "export"
                for name, model in (("model_a", bundle.model_a), ("model_b", bundle.model_b)):
                    export_torchscript(
                        model,
                        bundle_dir / f"{name}.torchscript.pt",
                        image_size=recipe.preprocess.target_size,
                    )
    except Exception as exc:
        marker.write_text(f"stage: {stage}\nerror: {type(exc).__name__}: {exc}\n")
        raise
    finally:
        lock_path.unlink(missing_ok=True)

    return RecipeResult(
        out_root=out_root,
        manifest_path=manifest_path,
        leaderboard=leaderboard,
        bundle_dir=bundle_dir,
        report_path=report_path,
        gallery_path=gallery_path,
        report=report,
    )
