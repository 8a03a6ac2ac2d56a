"""Synthetic pavement-like demo dataset.

Generates paired bright-textured (snow) and dark-textured (snow-free) images
at shared locations, plus a held-out test set at distinct locations, all
deterministically from one seed. Each location has its own coarse texture and
crack layout so the pair really looks like two shots of the same spot.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from pavesnow.dataset import METADATA_FILENAME, SNOW, SNOW_FREE

IMAGE_SIZE = 256


def _location_texture(rng: np.random.Generator, size: int) -> tuple[np.ndarray, list[int]]:
    coarse = rng.normal(0.0, 1.0, (size // 8, size // 8))
    texture = np.kron(coarse, np.ones((8, 8)))
    cracks = sorted(rng.integers(4, size - 4, size=int(rng.integers(2, 5))).tolist())
    return texture, cracks


def _render(
    rng: np.random.Generator, texture: np.ndarray, cracks: list[int], snowy: bool, size: int
) -> np.ndarray:
    if snowy:
        base = rng.uniform(190.0, 230.0)
        img = base + 6.0 * texture + rng.normal(0.0, 10.0, (size, size))
        sparkle = rng.random((size, size)) < 0.02
        img[sparkle] = 255.0
        for row in cracks:  # snow cover mutes the cracks
            img[row : row + 2, :] -= rng.uniform(5.0, 15.0)
        tint = (1.0, rng.uniform(0.97, 1.0), rng.uniform(0.96, 1.0))
    else:
        base = rng.uniform(45.0, 95.0)
        img = base + 10.0 * texture + rng.normal(0.0, 8.0, (size, size))
        for row in cracks:
            img[row : row + 2, :] *= 0.45
        tint = (1.0, rng.uniform(0.95, 1.0), rng.uniform(0.9, 0.98))
    img = np.clip(img, 0.0, 255.0)
    rgb = np.stack([img * t for t in tint], axis=-1)
    return np.clip(rgb, 0.0, 255.0).astype(np.uint8)


def generate_demo_dataset(
    root: str | Path,
    seed: int = 0,
    n_pairs: int = 38,
    n_test_per_class: int = 11,
    image_size: int = IMAGE_SIZE,
) -> Path:
    """Write the synthetic dataset under ``root`` and return it.

    Layout: ``snow/`` and ``snow_free/`` image directories plus a
    ``metadata.jsonl`` sidecar carrying location ids, capture timestamps, and
    the test-split markers. Pair locations are ``loc001..`` and test locations
    ``tloc001..``; test images are unpaired, one per location.
    """
    root = Path(root)
    (root / SNOW).mkdir(parents=True, exist_ok=True)
    (root / SNOW_FREE).mkdir(parents=True, exist_ok=True)

    seed_seq = np.random.SeedSequence(seed)
    children = seed_seq.spawn(n_pairs + 2 * n_test_per_class)
    metadata: list[dict] = []

    for i in range(n_pairs):
        rng = np.random.default_rng(children[i])
        location = f"loc{i + 1:03d}"
        texture, cracks = _location_texture(rng, image_size)
        for label in (SNOW, SNOW_FREE):
            rel = f"{label}/{location}_{label}.png"
            img = _render(rng, texture, cracks, label == SNOW, image_size)
            Image.fromarray(img).save(root / rel)
            metadata.append(
                {
                    "file": rel,
                    "location_id": location,
                    "captured_at": f"2024-01-{(i % 28) + 1:02d}T09:{i % 60:02d}:00+00:00",
                    "split": "unassigned",
                }
            )

    for j in range(2 * n_test_per_class):
        rng = np.random.default_rng(children[n_pairs + j])
        location = f"tloc{j + 1:03d}"
        label = SNOW if j % 2 == 0 else SNOW_FREE
        texture, cracks = _location_texture(rng, image_size)
        rel = f"{label}/{location}_{label}.png"
        img = _render(rng, texture, cracks, label == SNOW, image_size)
        Image.fromarray(img).save(root / rel)
        metadata.append(
            {
                "file": rel,
                "location_id": location,
                "captured_at": f"2024-02-{(j % 28) + 1:02d}T10:{j % 60:02d}:00+00:00",
                "split": "test",
            }
        )

    sidecar = root / METADATA_FILENAME
    sidecar.write_text("\n".join(json.dumps(m, sort_keys=True) for m in metadata) + "\n")
    return root
