"""Image preprocessing: resize to a fixed resolution, scale to [0,1], then
normalize with the backbone pre-training channel statistics.

Non-square inputs are center-cropped to a square before resizing so arbitrary
phone photos are not aspect-distorted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_RESAMPLING = {
    "bilinear": Image.Resampling.BILINEAR,
    "nearest": Image.Resampling.NEAREST,
    "bicubic": Image.Resampling.BICUBIC,
}


class PreprocessError(ValueError):
    pass


class ImageDecodeError(PreprocessError):
    """The byte stream or file could not be decoded as an image."""


@dataclass(frozen=True)
class PreprocessConfig:
    target_size: tuple[int, int] = (128, 128)  # (height, width)
    channel_mean: tuple[float, float, float] = IMAGENET_MEAN
    channel_std: tuple[float, float, float] = IMAGENET_STD
    interpolation: str = "bilinear"

    def __post_init__(self) -> None:
        h, w = self.target_size
        if h <= 0 or w <= 0:
            raise PreprocessError(f"target_size must be positive, got {self.target_size}")
        if any(s <= 0 for s in self.channel_std):
            raise PreprocessError(f"channel_std must be positive, got {self.channel_std}")
        if self.interpolation not in _RESAMPLING:
            raise PreprocessError(
                f"interpolation must be one of {sorted(_RESAMPLING)}, got {self.interpolation!r}"
            )

    def to_dict(self) -> dict:
        return {
            "target_size": list(self.target_size),
            "channel_mean": list(self.channel_mean),
            "channel_std": list(self.channel_std),
            "interpolation": self.interpolation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(
            target_size=tuple(d["target_size"]),
            channel_mean=tuple(d["channel_mean"]),
            channel_std=tuple(d["channel_std"]),
            interpolation=d.get("interpolation", "bilinear"),
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def decode_image(source: str | Path | bytes) -> np.ndarray:
    """Decode a JPEG/PNG/... file or byte buffer into an 8-bit RGB array.

    Alpha channels are dropped and grayscale images are replicated to three
    channels.
    """
    try:
        if isinstance(source, bytes):
            import io

            with Image.open(io.BytesIO(source)) as im:
                return np.asarray(im.convert("RGB"))
        with Image.open(source) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from exc


def _to_rgb_uint8(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise PreprocessError(f"expected 8-bit channels, got dtype {image.dtype}")
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    elif image.ndim == 3 and image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    elif image.ndim == 3 and image.shape[2] == 4:
        image = image[:, :, :3]
    elif image.ndim != 3 or image.shape[2] != 3:
        raise PreprocessError(f"expected an HxWx3 image, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise PreprocessError(f"image has a zero dimension: shape {image.shape}")
    return image


def _center_crop_square(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    if h == w:
        return image
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return image[top : top + side, left : left + side]


def preprocess_image(image: np.ndarray, config: PreprocessConfig | None = None) -> np.ndarray:
    """Convert an 8-bit RGB array into a normalized 3xHxW float32 array.

    Resizing happens before normalization: the (center-cropped) image is
    resized to ``config.target_size``, scaled to [0,1], then per channel
    shifted by the mean and divided by the std.
    """
    if config is None:
        config = PreprocessConfig()
    image = _center_crop_square(_to_rgb_uint8(image))
    h, w = config.target_size
    resampling = _RESAMPLING[config.interpolation]
    resized = Image.fromarray(image).resize((w, h), resampling)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    mean = np.asarray(config.channel_mean, dtype=np.float32)
    std = np.asarray(config.channel_std, dtype=np.float32)
    arr = (arr - mean) / std
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def preprocess_batch(images, config: PreprocessConfig | None = None) -> np.ndarray:
    return np.stack([preprocess_image(img, config) for img in images])


def load_and_preprocess(paths, config: PreprocessConfig | None = None) -> np.ndarray:
    """Decode and preprocess a list of image files into a Bx3xHxW batch."""
    return np.stack([preprocess_image(decode_image(p), config) for p in paths])
