"""Entropy and mutual information from binned histograms, in bits.

All quantities use log base 2. Summation over histogram cells happens in a
fixed row-major order, so results are bit-identical regardless of how callers
parallelize the surrounding work.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InternalError, InvalidParameterError
from .image_core import (
    BinnedImage,
    GrayImage,
    Histogram,
    JointHistogram,
    histogram,
    joint_histogram,
    quantize,
    resize,
)

# Negative mutual information beyond this magnitude is a bug, not rounding.
_MI_NEGATIVE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AnalysisConfig:
    """Preprocessing knobs for image-to-image comparison.

    Images are resized to a square ``resolution`` and quantized into ``bins``
    intensity bins before any histogram is built.
    """

    bins: int = 64
    resolution: int = 256

    def __post_init__(self):
        if not 2 <= self.bins <= 256:
            raise InvalidParameterError(f"bins must be in [2, 256], got {self.bins}")
        if self.resolution < 1:
            raise InvalidParameterError(
                f"resolution must be positive, got {self.resolution}")


@dataclass(frozen=True, eq=False)
class MiMatrix:
    """Symmetric matrix of pairwise mutual information in bits.

    The diagonal holds each part's own entropy; off-diagonal entries are
    mirrored from a single computation per unordered pair.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidParameterError("MI matrix must be square")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _entropy_bits(counts: np.ndarray, total: int) -> float:
    """-sum(p log2 p) over non-zero cells, visited in row-major order."""
    flat = counts.reshape(-1)
    p = flat[flat > 0] / float(total)
    return float(-(p * np.log2(p)).sum() + 0.0)


def entropy(h: Histogram) -> float:
    """Entropy of one histogram in bits, with the 0 log 0 = 0 convention."""
    total = h.total
    if total < 1:
        raise InvalidParameterError("histogram is empty")
    return _entropy_bits(h.counts, total)


def joint_entropy(j: JointHistogram) -> float:
    """Entropy of the joint distribution in bits."""
    total = j.total
    if total < 1:
        raise InvalidParameterError("joint histogram is empty")
    return _entropy_bits(j.counts, total)


def conditional_entropy(j: JointHistogram) -> float:
    """Uncertainty left in the second variable once the first is known.

    Computed as H(joint) minus the entropy of the row (first-image) marginal.
    """
    total = j.total
    if total < 1:
        raise InvalidParameterError("joint histogram is empty")
    row_marginal = j.counts.sum(axis=1)
    return _entropy_bits(j.counts, total) - _entropy_bits(row_marginal, total)


def mutual_information(j: JointHistogram) -> float:
    """I = H(first) + H(second) - H(joint), in bits, clamped at zero.

    Negative values within rounding noise are clamped to 0; anything more
    negative raises InternalError because the estimator can never produce it.
    """
    total = j.total
    if total < 1:
        raise InvalidParameterError("joint histogram is empty")
    h_first = _entropy_bits(j.counts.sum(axis=1), total)
    h_second = _entropy_bits(j.counts.sum(axis=0), total)
    h_joint = _entropy_bits(j.counts, total)
    value = h_first + h_second - h_joint
    if value < 0.0:
        if value < -_MI_NEGATIVE_TOLERANCE:
            raise InternalError(
                f"mutual information {value!r} fell below -{_MI_NEGATIVE_TOLERANCE}")
        value = 0.0
    return value


def _prepare(image: GrayImage, cfg: AnalysisConfig) -> BinnedImage:
    return quantize(resize(image, cfg.resolution, cfg.resolution), cfg.bins)


def mi_between_images(a: GrayImage, b: GrayImage,
                      cfg: AnalysisConfig = AnalysisConfig()) -> float:
    """Mutual information between two images after shared preprocessing."""
    return mutual_information(joint_histogram(_prepare(a, cfg), _prepare(b, cfg)))


def pairwise_mi_matrix(parts: Sequence[GrayImage],
                       cfg: AnalysisConfig = AnalysisConfig(),
                       threads: int = 1) -> MiMatrix:
    """All-pairs mutual information over a set of images.

    Each part is preprocessed once. Distinct pairs may be computed on a thread
    pool; values land at fixed indices, so the result does not depend on the
    thread count.
    """
    parts = list(parts)
    n = len(parts)
    if n < 2:
        raise InvalidParameterError(f"need at least 2 parts, got {n}")
    prepared = [_prepare(g, cfg) for g in parts]
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        values[i, i] = entropy(histogram(prepared[i]))

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]

    def compute(pair: tuple[int, int]) -> float:
        i, j = pair
        return mutual_information(joint_histogram(prepared[i], prepared[j]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(compute, pairs))
    else:
        results = [compute(p) for p in pairs]
    for (i, j), value in zip(pairs, results):
        values[i, j] = value
        values[j, i] = value
    return MiMatrix(values=values)
