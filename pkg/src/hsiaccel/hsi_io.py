"""Hyperspectral scene I/O, patch extraction and dataset splitting.

Scenes travel in two purpose-built little-endian containers so every
implementation parses them identically:

* ``HSIC`` cube:   magic ``HSIC``, u32 version=1, u32 width, u32 height,
  u32 bands, u8 dtype (1 = float32), then width*height*bands float32 values
  stored band-sequential row-major (band outermost, then rows, then columns).
* ``HSIL`` labels: magic ``HSIL``, u32 version=1, u32 width, u32 height,
  then one u16 per pixel row-major; 0 means unlabeled.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    EmptyDatasetError,
    FormatError,
    TruncationError,
    UnlabeledError,
)

CUBE_MAGIC = b"HSIC"
LABEL_MAGIC = b"HSIL"
CONTAINER_VERSION = 1
DTYPE_FLOAT32 = 1


@dataclass(frozen=True)
class HsiCube:
    """A width x height scene with ``bands`` spectral channels per pixel.

    ``data`` is float32 with shape (height, width, bands); index order is
    data[y, x, band].
    """

    width: int
    height: int
    bands: int
    data: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.bands < 1:
            raise DataError("cube dimensions must be >= 1")
        expected = (self.height, self.width, self.bands)
        if tuple(self.data.shape) != expected:
            raise DataError(f"cube data shape {self.data.shape} != {expected}")
        if not np.isfinite(self.data).all():
            raise DataError("cube contains non-finite values")


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class ids; 0 = unlabeled, 1..C = classes. labels[y, x]."""

    width: int
    height: int
    labels: np.ndarray

    def __post_init__(self):
        if tuple(self.labels.shape) != (self.height, self.width):
            raise DataError(
                f"label shape {self.labels.shape} != {(self.height, self.width)}"
            )

    @property
    def n_classes(self) -> int:
        return int(self.labels.max(initial=0))

    def matches(self, cube: HsiCube) -> bool:
        return self.width == cube.width and self.height == cube.height


@dataclass(frozen=True)
class Patch:
    """p x p x bands neighborhood labeled by its central pixel."""

    p: int
    bands: int
    data: np.ndarray
    center: tuple[int, int]
    label: int

    def __post_init__(self):
        if tuple(self.data.shape) != (self.p, self.p, self.bands):
            raise DataError(
                f"patch data shape {self.data.shape} != {(self.p, self.p, self.bands)}"
            )


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test pixel coordinate lists, (x, y) pairs."""

    train: tuple[tuple[int, int], ...]
    val: tuple[tuple[int, int], ...]
    test: tuple[tuple[int, int], ...]
    seed: int


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise TruncationError(f"file ends inside {what} ({len(buf)}/{n} bytes)")
    return buf


def load_cube(path) -> HsiCube:
    """Read an HSIC container."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CUBE_MAGIC:
            raise FormatError(f"bad cube magic {magic!r}")
        version, width, height, bands = struct.unpack("<IIII", _read_exact(fh, 16, "header"))
        if version != CONTAINER_VERSION:
            raise FormatError(f"unsupported cube version {version}")
        if width < 1 or height < 1 or bands < 1:
            raise FormatError("cube header dimensions must be positive")
        (dtype,) = struct.unpack("<B", _read_exact(fh, 1, "dtype"))
        if dtype != DTYPE_FLOAT32:
            raise FormatError(f"unsupported dtype code {dtype}")
        count = width * height * bands
        payload = _read_exact(fh, 4 * count, "payload")
        if fh.read(1):
            raise FormatError("trailing bytes after cube payload")
    flat = np.frombuffer(payload, dtype="<f4", count=count)
    if not np.isfinite(flat).all():
        raise DataError("cube payload contains non-finite values")
    data = flat.reshape(bands, height, width).transpose(1, 2, 0)
    return HsiCube(width, height, bands, np.ascontiguousarray(data, dtype=np.float32))


def write_cube(cube: HsiCube, path) -> None:
    """Write an HSIC container; inverse of load_cube."""
    header = CUBE_MAGIC + struct.pack(
        "<IIIIB", CONTAINER_VERSION, cube.width, cube.height, cube.bands, DTYPE_FLOAT32
    )
    payload = np.ascontiguousarray(cube.data.transpose(2, 0, 1), dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_labels(path) -> LabelMap:
    """Read an HSIL container."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != LABEL_MAGIC:
            raise FormatError(f"bad label magic {magic!r}")
        version, width, height = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != CONTAINER_VERSION:
            raise FormatError(f"unsupported label version {version}")
        if width < 1 or height < 1:
            raise FormatError("label header dimensions must be positive")
        payload = _read_exact(fh, 2 * width * height, "payload")
        if fh.read(1):
            raise FormatError("trailing bytes after label payload")
    labels = np.frombuffer(payload, dtype="<u2").reshape(height, width)
    return LabelMap(width, height, np.ascontiguousarray(labels, dtype=np.uint16))


def write_labels(labels: LabelMap, path) -> None:
    header = LABEL_MAGIC + struct.pack("<III", CONTAINER_VERSION, labels.width, labels.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(labels.labels, dtype="<u2").tobytes())


def extract_patch(
    cube: HsiCube,
    labels: LabelMap | None,
    x: int,
    y: int,
    p: int,
    labeled_only: bool = False,
) -> Patch:
    """Cut the p x p x bands window centered at (x, y), zero-padded at borders.

    The label is taken from the central pixel. With ``labeled_only`` an
    unlabeled center (0) raises UnlabeledError instead of returning a patch.
    """
    if p % 2 != 1 or p < 1:
        raise ValueError(f"patch size must be odd and positive, got {p}")
    if not (0 <= x < cube.width and 0 <= y < cube.height):
        raise ValueError(f"center ({x}, {y}) outside {cube.width}x{cube.height} cube")
    label = 0
    if labels is not None:
        if not labels.matches(cube):
            raise DataError("label map dimensions do not match cube")
        label = int(labels.labels[y, x])
    if labeled_only and label == 0:
        raise UnlabeledError(f"pixel ({x}, {y}) is unlabeled")

    half = p // 2
    data = np.zeros((p, p, cube.bands), dtype=np.float32)
    y0, y1 = max(0, y - half), min(cube.height, y + half + 1)
    x0, x1 = max(0, x - half), min(cube.width, x + half + 1)
    data[y0 - y + half : y1 - y + half, x0 - x + half : x1 - x + half, :] = cube.data[
        y0:y1, x0:x1, :
    ]
    return Patch(p, cube.bands, data, (x, y), label)


def patch_in_bounds(cube: HsiCube, x: int, y: int, p: int) -> bool:
    """True when the whole window lies inside the image (strict border mode)."""
    half = p // 2
    return half <= x < cube.width - half and half <= y < cube.height - half


def labeled_coords(labels: LabelMap) -> list[tuple[int, int]]:
    """All labeled pixel coordinates as (x, y), row-major order."""
    ys, xs = np.nonzero(labels.labels)
    return [(int(x), int(y)) for y, x in zip(ys, xs)]


def split_dataset(
    labels: LabelMap,
    ratios: tuple[float, float],
    seed: int,
    min_samples: int = 20,
) -> DatasetSplit:
    """Stratified per-class split into train/val/test.

    Classes with fewer than ``min_samples`` labeled pixels are dropped
    entirely. Within each class the pixels are shuffled with the seeded
    generator; the first round(n*train) go to train, the next round(n*val)
    to val, the remainder to test.
    """
    train_ratio, val_ratio = ratios
    if train_ratio <= 0 or val_ratio <= 0 or train_ratio + val_ratio >= 1:
        raise ValueError(f"ratios must be positive with train+val < 1, got {ratios}")

    rng = np.random.default_rng(seed)
    train: list[tuple[int, int]] = []
    val: list[tuple[int, int]] = []
    test: list[tuple[int, int]] = []
    survivors = 0
    for cls in range(1, labels.n_classes + 1):
        ys, xs = np.nonzero(labels.labels == cls)
        n = len(ys)
        if n == 0:
            continue
        if n < min_samples:
            continue
        survivors += 1
        order = rng.permutation(n)
        coords = [(int(xs[i]), int(ys[i])) for i in order]
        n_train = int(np.floor(n * train_ratio + 0.5))
        n_val = int(np.floor(n * val_ratio + 0.5))
        train.extend(coords[:n_train])
        val.extend(coords[n_train : n_train + n_val])
        test.extend(coords[n_train + n_val :])
    if survivors == 0:
        raise EmptyDatasetError(
            f"no class has at least {min_samples} labeled pixels"
        )
    return DatasetSplit(tuple(train), tuple(val), tuple(test), seed)


def normalize(cube: HsiCube, mode: str = "minmax") -> HsiCube:
    """Radiometric scaling: 'none' (identity), 'minmax' (global min to 0,
    max to 1) or 'standardize' (per-band mean/stddev).

    A zero global range or a zero-stddev band maps the affected values to
    zero and emits a warning.
    """
    if mode == "none":
        return cube
    data = cube.data.astype(np.float64)
    if mode == "minmax":
        lo, hi = float(data.min()), float(data.max())
        if hi == lo:
            warnings.warn("constant cube: minmax normalization maps all values to 0")
            out = np.zeros_like(data)
        else:
            out = (data - lo) / (hi - lo)
    elif mode == "standardize":
        mean = data.mean(axis=(0, 1))
        std = data.std(axis=(0, 1))
        dead = std == 0
        if dead.any():
            warnings.warn(
                f"{int(dead.sum())} constant band(s) mapped to zeros during standardize"
            )
        safe_std = np.where(dead, 1.0, std)
        out = (data - mean) / safe_std
        out[:, :, dead] = 0.0
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return HsiCube(cube.width, cube.height, cube.bands, out.astype(np.float32))
