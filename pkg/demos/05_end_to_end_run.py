#!/usr/bin/env python3
"""Walkthrough: the full recipe, scaled down so it finishes in ~30 seconds.

Generates a small synthetic paired dataset, fine-tunes both backbones'
heads, fits the ensemble weight on validation data, evaluates on the
held-out test locations, and leaves behind a browsable artifact tree.

The full-size reference run is one command:
    pavesnow run --demo --out runs/demo --seed 42
"""

import json
import tempfile
from pathlib import Path

from pavesnow import pipeline

out_root = Path(tempfile.mkdtemp(prefix="pavesnow_e2e_")) / "run"
recipe = pipeline.RunRecipe(
    out_root=out_root,
    seed=42,
    demo={"n_pairs": 8, "n_test_per_class": 3},
    learning_rates=(1e-3,),  # converges fast enough for a quick demo
    max_epochs=15,
    eval_epochs=(15,),
    checkpoint_interval=5,
    weights="random",  # seeded random backbones; no downloads needed
)
print("running:", json.dumps(recipe.semantic_dict(), indent=2), "\n")

result = pipeline.run_recipe(recipe)

print("artifact tree:")
for path in sorted(out_root.rglob("*")):
    if path.is_file():
        print("  ", path.relative_to(out_root))

doc = json.loads(result.report_path.read_text())
print(f"\ntest accuracy {doc['accuracy']:.3f}, macro-F1 {doc['macro_f1']:.3f}")
print(f"misclassified: {doc['misclassified_ids'] or 'none'}")
weight = json.loads((result.bundle_dir / "ensemble.json").read_text())["weight_a"]
print(f"fitted ensemble weight_a = {weight}")
print(f"\nopen {result.gallery_path} for the image gallery")
print(f"serve it:  pavesnow serve --bundle {result.bundle_dir} --port 8000")
