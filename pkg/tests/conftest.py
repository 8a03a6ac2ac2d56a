import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from pavesnow import pipeline


def write_image(path: Path, size=(16, 16), value=(120, 120, 120)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.full((size[0], size[1], 3), value, dtype=np.uint8)
    Image.fromarray(arr).save(path)
    return path


def write_paired_dataset(root: Path, n_pairs: int, n_test_per_class: int = 0) -> Path:
    """Tiny solid-color dataset with the standard layout and sidecar."""
    metadata = []
    for i in range(n_pairs):
        location = f"loc{i + 1:03d}"
        for label, value in (("snow", 220), ("snow_free", 60)):
            rel = f"{label}/{location}_{label}.png"
            write_image(root / rel, value=(value, value, value))
            metadata.append({"file": rel, "location_id": location, "split": "unassigned"})
    for j in range(2 * n_test_per_class):
        location = f"tloc{j + 1:03d}"
        label = "snow" if j % 2 == 0 else "snow_free"
        value = 220 if label == "snow" else 60
        rel = f"{label}/{location}_{label}.png"
        write_image(root / rel, value=(value, value, value))
        metadata.append({"file": rel, "location_id": location, "split": "test"})
    (root / "metadata.jsonl").write_text(
        "\n".join(json.dumps(m) for m in metadata) + "\n"
    )
    return root


@pytest.fixture(scope="session")
def tiny_recipe_result(tmp_path_factory):
    """One small but complete recipe run shared by the serve/pipeline tests."""
    out_root = tmp_path_factory.mktemp("tiny_run")
    recipe = pipeline.RunRecipe(
        out_root=out_root,
        seed=7,
        demo={"n_pairs": 6, "n_test_per_class": 3},
        max_epochs=25,
        eval_epochs=(25,),
        checkpoint_interval=5,
        learning_rates=(1e-3,),
        weights="random",
    )
    return pipeline.run_recipe(recipe)
