"""Consistency scoring and statistical outlier elimination for part sets.

Each part gets a consistency score: its average pairwise mutual information
against the rest of the set. Parts scoring below mean - strictness * stddev
are dropped. Smaller strictness means a harsher filter; the top scorer always
survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError
from .grid_slicer import PartSet
from .image_core import to_grayscale
from .mutual_info import AnalysisConfig, MiMatrix, pairwise_mi_matrix


@dataclass(frozen=True)
class RefineConfig:
    """Filter settings.

    ``strictness`` scales the stddev term of the threshold (0 = harshest).
    ``include_self_pairs`` folds each part's own entropy into its score
    instead of averaging only over the other parts. ``iterative`` re-runs the
    filter on survivors until stable. ``min_kept`` is a hard floor on how many
    parts survive.
    """

    strictness: float = 1.0
    include_self_pairs: bool = False
    iterative: bool = False
    min_kept: int = 2
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def __post_init__(self):
        if self.strictness < 0:
            raise InvalidParameterError(
                f"strictness must be >= 0, got {self.strictness}")
        if self.min_kept < 2:
            raise InvalidParameterError(
                f"min_kept must be >= 2, got {self.min_kept}")


@dataclass(frozen=True)
class RoundRecord:
    """One filter pass: who was scored, the stats, and who was removed."""

    indices: tuple[int, ...]
    scores: tuple[float, ...]
    mean: float
    stddev: float
    threshold: float
    removed: tuple[int, ...]


@dataclass(frozen=True)
class RefineReport:
    """Outcome of refining one part set.

    Top-level scores and statistics describe the first pass over all parts;
    ``round_details`` records every pass when iterative filtering is on.
    ``kept`` and ``removed`` partition the original part indices.
    """

    scores: tuple[float, ...]
    mean: float
    stddev: float
    threshold: float
    kept: tuple[int, ...]
    removed: tuple[int, ...]
    rounds: int
    round_details: tuple[RoundRecord, ...]
    config: RefineConfig

    def to_dict(self) -> dict:
        return {
            "scores": list(self.scores),
            "mean": self.mean,
            "stddev": self.stddev,
            "threshold": self.threshold,
            "kept": list(self.kept),
            "removed": list(self.removed),
            "rounds": self.rounds,
            "round_details": [
                {
                    "indices": list(r.indices),
                    "scores": list(r.scores),
                    "mean": r.mean,
                    "stddev": r.stddev,
                    "threshold": r.threshold,
                    "removed": list(r.removed),
                }
                for r in self.round_details
            ],
            "config": {
                "strictness": self.config.strictness,
                "include_self_pairs": self.config.include_self_pairs,
                "iterative": self.config.iterative,
                "min_kept": self.config.min_kept,
                "bins": self.config.analysis.bins,
                "resolution": self.config.analysis.resolution,
            },
        }


def consistency_scores(matrix: MiMatrix, include_self: bool = False) -> list[float]:
    """Average pairwise MI per part.

    With ``include_self`` the average runs over all entries of the part's row
    (folding in its diagonal entropy); otherwise the self pair is excluded.
    """
    n = matrix.size
    if n < 2:
        raise InvalidParameterError(f"matrix must be at least 2x2, got {n}x{n}")
    v = matrix.values
    if include_self:
        scores = v.sum(axis=1) / n
    else:
        scores = (v.sum(axis=1) - v.diagonal()) / (n - 1)
    return [float(s) for s in scores]


def threshold_stats(scores: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation of the scores."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size < 2:
        raise InvalidParameterError(f"need at least 2 scores, got {arr.size}")
    return float(arr.mean()), float(arr.std())


def filter_outliers(scores: Sequence[float], strictness: float) -> list[bool]:
    """Keep flags: score >= mean - strictness * stddev, comparison inclusive.

    The top score always passes; if floating-point drift in the statistics
    ever pushes the threshold above every score (possible only in degenerate
    all-equal inputs), the maximum is kept explicitly.
    """
    if strictness < 0:
        raise InvalidParameterError(f"strictness must be >= 0, got {strictness}")
    arr = np.asarray(scores, dtype=np.float64)
    mean, stddev = threshold_stats(arr)
    threshold = mean - strictness * stddev
    flags = arr >= threshold
    if not flags.any():
        flags = arr == arr.max()
    return [bool(f) for f in flags]


def _clamp_to_floor(failed: list[int], scores: list[float], active: list[int],
                    min_kept: int) -> list[int]:
    """Trim the removal list so at least min_kept parts survive.

    Lowest scores go first; on ties the higher original index is removed, so
    the lower index survives.
    """
    allowed = len(active) - min_kept
    if len(failed) <= allowed:
        return failed
    if allowed <= 0:
        return []
    order = sorted(failed, key=lambda pos: (scores[pos], -active[pos]))
    return order[:allowed]


def refine_set(parts: PartSet, config: RefineConfig = RefineConfig(),
               threads: int = 1) -> RefineReport:
    """Score a part set and drop outliers; optionally repeat until stable.

    Every pass recomputes the MI matrix over the surviving parts. Filtering
    never drops the set below ``config.min_kept`` members.
    """
    n = len(parts)
    if n < 2:
        raise InvalidParameterError(f"need at least 2 parts to refine, got {n}")
    grays = [to_grayscale(p) for p in parts.parts]

    active = list(range(n))
    records: list[RoundRecord] = []
    removed_all: list[int] = []
    while True:
        matrix = pairwise_mi_matrix([grays[i] for i in active],
                                    config.analysis, threads=threads)
        scores = consistency_scores(matrix, config.include_self_pairs)
        mean, stddev = threshold_stats(scores)
        threshold = mean - config.strictness * stddev
        flags = filter_outliers(scores, config.strictness)
        failed = [pos for pos, ok in enumerate(flags) if not ok]
        failed = _clamp_to_floor(failed, scores, active, config.min_kept)
        removed_round = tuple(sorted(active[pos] for pos in failed))
        records.append(RoundRecord(
            indices=tuple(active), scores=tuple(scores),
            mean=mean, stddev=stddev, threshold=threshold,
            removed=removed_round,
        ))
        removed_all.extend(removed_round)
        dropped = set(removed_round)
        active = [i for i in active if i not in dropped]
        if not config.iterative or not removed_round or len(active) <= config.min_kept:
            break

    first = records[0]
    return RefineReport(
        scores=first.scores,
        mean=first.mean,
        stddev=first.stddev,
        threshold=first.threshold,
        kept=tuple(active),
        removed=tuple(sorted(removed_all)),
        rounds=len(records),
        round_details=tuple(records),
        config=config,
    )
