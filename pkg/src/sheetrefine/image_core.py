"""Raster loading, grayscale conversion, resizing, quantization, histograms.

Everything here is a pure function over immutable value types. Pixel data is
held in read-only numpy arrays so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import ImageLoadError, InvalidParameterError

# Rec. 601 luma weights.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """An RGB raster: ``pixels`` is (height, width, 3) uint8, row-major."""

    pixels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidParameterError(
                f"pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidParameterError("image must be at least 1x1")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """A single-channel intensity raster: (height, width) uint8."""

    intensities: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.intensities)
        if arr.ndim != 2:
            raise InvalidParameterError(
                f"intensities must have shape (h, w), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidParameterError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "intensities", _frozen(arr))

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True, eq=False)
class BinnedImage:
    """Per-pixel bin indices in [0, bin_count): (height, width) int32."""

    bins: np.ndarray
    bin_count: int

    def __post_init__(self):
        arr = np.asarray(self.bins)
        if arr.ndim != 2:
            raise InvalidParameterError(
                f"bins must have shape (h, w), got {arr.shape}")
        if not 2 <= self.bin_count <= 256:
            raise InvalidParameterError(
                f"bin_count must be in [2, 256], got {self.bin_count}")
        if arr.dtype != np.int32:
            arr = arr.astype(np.int32)
        if arr.size and (arr.min() < 0 or arr.max() >= self.bin_count):
            raise InvalidParameterError("bin index out of range")
        object.__setattr__(self, "bins", _frozen(arr))

    @property
    def width(self) -> int:
        return self.bins.shape[1]

    @property
    def height(self) -> int:
        return self.bins.shape[0]


@dataclass(frozen=True, eq=False)
class Histogram:
    """Bin occupancy counts for one image."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 1:
            raise InvalidParameterError("histogram counts must be 1-D")
        if arr.size and arr.min() < 0:
            raise InvalidParameterError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", _frozen(arr.astype(np.int64)))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_count(self) -> int:
        return self.counts.shape[0]


@dataclass(frozen=True, eq=False)
class JointHistogram:
    """Co-occurrence counts: ``counts[i, j]`` pairs (first-image bin i, second-image bin j)."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidParameterError("joint histogram counts must be square")
        if arr.size and arr.min() < 0:
            raise InvalidParameterError("joint histogram counts must be non-negative")
        object.__setattr__(self, "counts", _frozen(arr.astype(np.int64)))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def bin_count(self) -> int:
        return self.counts.shape[0]


def load_image(path: str | Path) -> Image:
    """Decode a PNG or JPEG file into an Image. Alpha channels are dropped."""
    p = Path(path)
    if not p.exists():
        raise ImageLoadError(f"file not found: {p}")
    try:
        with PILImage.open(p) as im:
            rgb = im.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageLoadError(f"corrupt or unsupported image file: {p}") from exc
    except OSError as exc:
        raise ImageLoadError(f"unreadable image file: {p} ({exc})") from exc
    return Image(pixels=pixels, source_id=str(path))


def save_image(img: Image, path: str | Path) -> None:
    """Encode an Image as PNG (or whatever the file extension selects)."""
    PILImage.fromarray(np.asarray(img.pixels)).save(Path(path))


def to_grayscale(img: Image) -> GrayImage:
    """Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B, rounded to nearest."""
    px = img.pixels.astype(np.float64)
    luma = px[:, :, 0] * _LUMA_R + px[:, :, 1] * _LUMA_G + px[:, :, 2] * _LUMA_B
    return GrayImage(np.clip(np.rint(luma), 0, 255).astype(np.uint8))


def _bilinear(src: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers and edge clamping."""
    src_h, src_w = src.shape
    x = (np.arange(width, dtype=np.float64) + 0.5) * (src_w / width) - 0.5
    y = (np.arange(height, dtype=np.float64) + 0.5) * (src_h / height) - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = x - x0f
    fy = y - y0f
    x0 = np.clip(x0f.astype(np.int64), 0, src_w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, src_w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, src_h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, src_h - 1)
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1.0 - fy)[:, None] + bottom * fy[:, None]


def resize(img: GrayImage, width: int, height: int) -> GrayImage:
    """Resize to exactly (width, height) with bilinear interpolation.

    Resizing to the source dimensions reproduces the input intensities exactly.
    """
    if width < 1 or height < 1:
        raise InvalidParameterError(
            f"target dimensions must be positive, got {width}x{height}")
    out = _bilinear(img.intensities.astype(np.float64), width, height)
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def quantize(img: GrayImage, bin_count: int) -> BinnedImage:
    """Map intensity v to bin floor(v * bin_count / 256), clamped to bin_count - 1."""
    if not 2 <= bin_count <= 256:
        raise InvalidParameterError(
            f"bin_count must be in [2, 256], got {bin_count}")
    bins = (img.intensities.astype(np.int32) * bin_count) // 256
    bins = np.minimum(bins, bin_count - 1)
    return BinnedImage(bins=bins, bin_count=bin_count)


def histogram(img: BinnedImage) -> Histogram:
    """Occupancy count per bin; total equals the pixel count."""
    counts = np.bincount(img.bins.ravel(), minlength=img.bin_count)
    return Histogram(counts=counts)


def joint_histogram(a: BinnedImage, b: BinnedImage) -> JointHistogram:
    """Co-occurrence counts over aligned pixel positions of two binned images."""
    if (a.width, a.height) != (b.width, b.height):
        raise InvalidParameterError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")
    if a.bin_count != b.bin_count:
        raise InvalidParameterError(
            f"bin-count mismatch: {a.bin_count} vs {b.bin_count}")
    n = a.bin_count
    flat = a.bins.ravel() * np.int32(n) + b.bins.ravel()
    counts = np.bincount(flat, minlength=n * n).reshape(n, n)
    return JointHistogram(counts=counts)
