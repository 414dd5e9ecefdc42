"""Synthetic labeled scenes for demos, calibration tests and desk-scale training.

Each class gets a smooth spectral signature (a Gaussian bump over the band
axis at a class-specific center); pixels carry their class signature plus
white noise. Classes are laid out in vertical stripes so patches are
spatially coherent, and a seeded fraction of pixels is left unlabeled.
"""

from __future__ import annotations

import numpy as np

from .hsi_io import HsiCube, LabelMap


def class_signatures(n_classes: int, bands: int, amplitude: float = 1.0) -> np.ndarray:
    """(n_classes, bands) array of Gaussian-bump spectra."""
    centers = np.linspace(0.15, 0.85, n_classes) * (bands - 1)
    sigma = bands / (2.5 * n_classes)
    band_axis = np.arange(bands)
    sig = np.exp(-((band_axis[None, :] - centers[:, None]) ** 2) / (2 * sigma**2))
    return (0.2 + amplitude * sig).astype(np.float64)


def make_synthetic_scene(
    width: int,
    height: int,
    bands: int,
    n_classes: int,
    noise: float = 0.05,
    seed: int = 0,
    unlabeled_frac: float = 0.1,
) -> tuple[HsiCube, LabelMap]:
    rng = np.random.default_rng(seed)
    sigs = class_signatures(n_classes, bands)

    xs = np.arange(width)
    stripe = 1 + (xs * n_classes) // width  # class per column, 1..n_classes
    labels = np.broadcast_to(stripe[None, :], (height, width)).astype(np.uint16).copy()
    if unlabeled_frac > 0:
        drop = rng.random((height, width)) < unlabeled_frac
        labels[drop] = 0

    data = sigs[np.broadcast_to(stripe[None, :], (height, width)) - 1].astype(np.float64)
    data = data + noise * rng.standard_normal((height, width, bands))
    cube = HsiCube(width, height, bands, np.abs(data).astype(np.float32))
    return cube, LabelMap(width, height, labels)
