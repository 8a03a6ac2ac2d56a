"""Pavement snow detection toolkit.

Library layout:
    dataset     location-paired image manifests, pairing and split rules
    preprocess  resize + ImageNet-style normalization
    models      frozen VGG-19 / ResNet-50 backbones with a fresh 2-class head
    trainer     Adam fine-tuning, checkpointing, learning-rate sweeps
    ensemble    weighted-average ensembling and bundle packaging
    metrics     confusion counts, F1/accuracy/error-ratio reports, gallery
    pipeline    end-to-end reproducible recipes
    serve       HTTP inference service
    cli         command-line entry point
"""

__version__ = "0.1.0"

from pavesnow.dataset import (  # noqa: F401
    CLASS_ORDER,
    SNOW,
    SNOW_FREE,
    DatasetManifest,
    ImageRecord,
    LocationPair,
    ingest,
    load_manifest,
    pair_by_location,
    save_manifest,
    split,
)
from pavesnow.preprocess import PreprocessConfig, preprocess_image  # noqa: F401
