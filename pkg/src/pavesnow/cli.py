"""Command-line entry point wiring the library into reproducible invocations."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pavesnow import dataset as ds
from pavesnow import demo_data, ensemble, metrics, pipeline, trainer
from pavesnow.models import BackboneSpec, build_model, load_checkpoint, predict_proba
from pavesnow.preprocess import PreprocessConfig, load_and_preprocess


def _cmd_demo_data(args) -> int:
    root = demo_data.generate_demo_dataset(
        args.out, seed=args.seed, n_pairs=args.pairs, n_test_per_class=args.test_per_class
    )
    print(f"wrote synthetic dataset to {root}")
    return 0


def _cmd_ingest(args) -> int:
    result = ds.ingest(args.root)
    manifest_path = ds.save_manifest(result.manifest, args.out)
    rejects_path = Path(args.rejects or Path(args.out).with_name("rejects.json"))
    rejects_path.write_text(
        json.dumps([vars(r) for r in result.rejects], sort_keys=True, indent=2) + "\n"
    )
    print(
        f"ingested {len(result.manifest.records)} records "
        f"({len(result.rejects)} rejects) -> {manifest_path}"
    )
    return 0


def _cmd_split(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    manifest = ds.pair_by_location(manifest)
    manifest = ds.split(manifest, args.train_fraction, args.seed)
    out = args.out or args.manifest
    ds.save_manifest(manifest, out)
    counts = {s: len(manifest.records_in_split(s)) for s in ("train", "val", "test")}
    print(f"split {len(manifest.pairs)} pairs -> {counts} ({out})")
    return 0


def _eval_epochs_for(epochs: int, interval: int) -> tuple[int, ...]:
    """The stock evaluation epochs, clipped to the requested budget."""
    fitting = tuple(e for e in (15, 20, 25) if e <= epochs and e % interval == 0)
    return fitting or (epochs,)


def _cmd_train(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    model = build_model(BackboneSpec(arch=args.arch, weights=args.weights), seed=args.seed)
    config = trainer.TrainConfig(
        learning_rate=args.lr,
        max_epochs=args.epochs,
        eval_epochs=_eval_epochs_for(args.epochs, args.checkpoint_interval),
        checkpoint_interval=args.checkpoint_interval,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    run_id = f"lr{args.lr:g}-seed{args.seed}"
    result = trainer.train(
        model,
        manifest.records_in_split("train"),
        manifest.records_in_split("val"),
        config,
        image_root=manifest.image_root,
        out_dir=Path(args.out) / "runs" / run_id / args.arch,
        manifest_hash=manifest.content_hash(),
        run_id=run_id,
    )
    for meta, path in result.checkpoints:
        print(
            f"epoch {meta.epoch:3d}  train_loss {meta.train_loss:.4f}  "
            f"val_acc {meta.val_accuracy:.3f}  -> {path}"
        )
    return 0


def _parse_grid(value: str) -> tuple[float, ...]:
    if value == "default":
        return trainer.LR_GRID
    return tuple(float(x) for x in value.split(","))


def _cmd_sweep(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    grid = [
        trainer.TrainConfig(
            learning_rate=lr,
            max_epochs=args.epochs,
            eval_epochs=_eval_epochs_for(args.epochs, 5),
            batch_size=args.batch_size,
            seed=args.seed,
        )
        for lr in _parse_grid(args.grid)
    ]
    leaderboard = trainer.sweep(
        manifest,
        grid,
        tuple(args.archs.split(",")),
        out_root=Path(args.out) / "runs",
        weights=args.weights,
    )
    leaderboard.save(Path(args.out) / "sweep_summary.json")
    for row in leaderboard.rows[:10]:
        print(
            f"{row.arch:9s} lr={row.learning_rate:<8g} epoch={row.epoch:<3d} "
            f"val_macro_f1={row.val_macro_f1:.3f} val_acc={row.val_accuracy:.3f}"
        )
    for failure in leaderboard.failures:
        print(f"FAILED {failure.arch} lr={failure.learning_rate}: {failure.error}", file=sys.stderr)
    return 0


def _cmd_ensemble_fit(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    val_records = manifest.records_in_split("val")
    if not val_records:
        raise ensemble.EnsembleError("manifest has no validation records")
    model_a, meta_a = load_checkpoint(args.ckpt_a)
    model_b, meta_b = load_checkpoint(args.ckpt_b)
    x_val = load_and_preprocess(
        [manifest.resolve(r) for r in val_records],
        PreprocessConfig.from_dict(meta_a["preprocess"]),
    )
    config = ensemble.fit_weight(
        predict_proba(model_a, x_val),
        predict_proba(model_b, x_val),
        [r.label for r in val_records],
        model_a_ref=str(args.ckpt_a),
        model_b_ref=str(args.ckpt_b),
        decision_threshold=args.threshold,
    )
    ensemble.save_bundle(
        args.out,
        args.ckpt_a,
        args.ckpt_b,
        config,
        extras={"manifest_hash": manifest.content_hash()},
    )
    print(f"fitted weight_a={config.weight_a} -> bundle at {args.out}")
    return 0


def _cmd_eval(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    bundle = ensemble.load_bundle(args.bundle)
    report = pipeline.evaluate_bundle(
        bundle, manifest, args.split, provenance={"bundle_digest": bundle.digest}
    )
    report_path = report.save(Path(args.out) / "report.json")
    gallery_path = metrics.render_gallery(report, manifest, args.out)
    print(
        f"accuracy {metrics.format_percent(report.accuracy)}  "
        f"macro-F1 {metrics.format_percent(report.macro_f1)}  "
        f"({len(report.misclassified_ids)} misclassified)"
    )
    print(f"report: {report_path}\ngallery: {gallery_path}")
    return 0


def _cmd_export(args) -> int:
    from pavesnow.models import export_torchscript

    bundle = ensemble.load_bundle(args.bundle)
    out = Path(args.out)
    for name, model in (("model_a", bundle.model_a), ("model_b", bundle.model_b)):
        path = export_torchscript(model, out / f"{name}.torchscript.pt")
        print(f"{model.spec.arch} -> {path}")
    return 0


def _cmd_serve(args) -> int:  # pragma: no cover - long-running server
    from pavesnow.serve import run_server

    run_server(
        args.bundle,
        host=args.host,
        port=args.port,
        max_body_mb=args.max_body_mb,
        cors_origins=tuple(args.cors_origin),
    )
    return 0


def _cmd_run(args) -> int:
    recipe_file = args.recipe or args.config
    if recipe_file:
        recipe = pipeline.RunRecipe.from_file(recipe_file)
        # command-line flags override file values
        if args.seed is not None:
            recipe.seed = args.seed
        if args.out:
            recipe.out_root = Path(args.out)
    else:
        recipe = pipeline.default_demo_recipe(args.out, seed=args.seed if args.seed is not None else 42)
    result = pipeline.run_recipe(recipe)
    print(f"report: {result.report_path}")
    print(f"gallery: {result.gallery_path}")
    print(f"bundle: {result.bundle_dir}")
    print(
        f"test accuracy {metrics.format_percent(result.report.accuracy)}  "
        f"macro-F1 {metrics.format_percent(result.report.macro_f1)}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pavesnow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo-data", help="generate the synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--pairs", type=int, default=38)
    p.add_argument("--test-per-class", type=int, default=11)
    p.set_defaults(func=_cmd_demo_data)

    p = sub.add_parser("ingest", help="scan an image directory into a manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", help="pair by location and assign train/val splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="fine-tune one backbone's classification head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arch", required=True, choices=("vgg19", "resnet50"))
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--checkpoint-interval", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--weights", default="imagenet")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="train the learning-rate grid for both backbones")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", default="default", help='"default" or comma-separated rates')
    p.add_argument("--archs", default="vgg19,resnet50")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--weights", default="imagenet")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("ensemble-fit", help="fit the ensemble weight on validation data")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt-a", required=True)
    p.add_argument("--ckpt-b", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ensemble_fit)

    p = sub.add_parser("eval", help="evaluate a bundle on a manifest split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export", help="export bundle models to TorchScript")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", default="torchscript", choices=("torchscript",))
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--bundle", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-body-mb", type=float, default=16)
    p.add_argument("--cors-origin", action="append", default=["*"])
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("run", help="execute a full recipe (or the demo default)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--recipe", help="path to a recipe JSON file")
    group.add_argument("--demo", action="store_true", help="run the synthetic demo recipe")
    p.add_argument("--out", help="output root (demo mode)")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.demo and not args.out:
        parser.error("--out is required with --demo")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
