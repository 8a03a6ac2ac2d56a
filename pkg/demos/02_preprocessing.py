#!/usr/bin/env python3
"""Walkthrough: what the preprocessing stage does to a photo.

Resize to 128x128, scale to [0,1], then normalize each channel with the
backbone pre-training statistics. Non-square photos are center-cropped to a
square first so nothing gets aspect-distorted.
"""

import numpy as np

from pavesnow.preprocess import PreprocessConfig, preprocess_image

config = PreprocessConfig()
print("defaults:", config.to_dict())
print("config hash (stored next to every checkpoint):", config.config_hash()[:16], "\n")

# a mid-gray pavement-ish constant image
image = np.full((640, 640, 3), (124, 116, 104), dtype=np.uint8)
out = preprocess_image(image, config)
print(f"input  {image.shape} uint8  ->  output {out.shape} float32")
print(f"(124,116,104) is 255*mean, so the output is ~zero: max |value| = {np.abs(out).max():.4f}\n")

# the extreme values map to fixed per-channel constants
white = preprocess_image(np.full((64, 64, 3), 255, dtype=np.uint8))
black = preprocess_image(np.zeros((64, 64, 3), dtype=np.uint8))
print("all-white constants per channel:", [round(float(white[c, 0, 0]), 4) for c in range(3)])
print("all-black constants per channel:", [round(float(black[c, 0, 0]), 4) for c in range(3)])

# arbitrary phone-photo sizes all land on 3x128x128
for shape in ((3024, 3024, 3), (1080, 1920, 3), (77, 33, 3)):
    processed = preprocess_image(np.zeros(shape, dtype=np.uint8))
    print(f"{str(shape):18s} -> {processed.shape}")

# grayscale and RGBA inputs are converted, not rejected
gray = np.full((50, 50), 90, dtype=np.uint8)
rgba = np.zeros((50, 50, 4), dtype=np.uint8)
print("\ngrayscale in ->", preprocess_image(gray).shape, " rgba in ->", preprocess_image(rgba).shape)
