"""Cosine-similarity metrics over externally computed embedding vectors.

Two set-level metrics: mean image-to-prompt similarity, and identity
consistency (mean similarity over all unordered image pairs). Vectors are
normalized here, so it makes no difference whether the producing toolchain
normalized them already.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmbeddingError, InvalidParameterError


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A real-valued vector with an opaque identifier."""

    values: np.ndarray
    id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidParameterError(
                f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class EvalReport:
    """Set-level similarity metrics; both lie in [-1, 1]."""

    prompt_similarity: float
    identity_consistency: float
    n_images: int
    n_pairs: int

    def to_dict(self) -> dict:
        return {
            "prompt_similarity": self.prompt_similarity,
            "identity_consistency": self.identity_consistency,
            "n_images": self.n_images,
            "n_pairs": self.n_pairs,
        }


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|), clamped to [-1, 1].

    The denominator is sqrt(dot(a,a) * dot(b,b)), which makes the self
    similarity exactly 1.0 instead of drifting by an ulp.
    """
    if a.dim != b.dim:
        raise InvalidParameterError(
            f"dimension mismatch: {a.dim} vs {b.dim}")
    norm_sq_a = float(np.dot(a.values, a.values))
    norm_sq_b = float(np.dot(b.values, b.values))
    if norm_sq_a == 0.0 or norm_sq_b == 0.0:
        raise InvalidParameterError("cosine similarity undefined for a zero vector")
    value = float(np.dot(a.values, b.values)) / math.sqrt(norm_sq_a * norm_sq_b)
    return min(1.0, max(-1.0, value))


def prompt_similarity(images: Sequence[EmbeddingVector],
                      text: EmbeddingVector) -> float:
    """Mean cosine similarity between each image embedding and the text embedding."""
    if not images:
        raise InvalidParameterError("need at least 1 image embedding")
    sims = [cosine_similarity(img, text) for img in images]
    return float(np.mean(sims))


def identity_consistency(images: Sequence[EmbeddingVector]) -> float:
    """Mean cosine similarity over all unordered pairs of image embeddings."""
    n = len(images)
    if n < 2:
        raise InvalidParameterError(
            f"need at least 2 image embeddings, got {n}")
    sims = [cosine_similarity(images[i], images[j])
            for i in range(n) for j in range(i + 1, n)]
    return float(np.mean(sims))


def evaluate_set(images: Sequence[EmbeddingVector],
                 text: EmbeddingVector) -> EvalReport:
    """Both metrics for one image set against one prompt embedding."""
    n = len(images)
    return EvalReport(
        prompt_similarity=prompt_similarity(images, text),
        identity_consistency=identity_consistency(images),
        n_images=n,
        n_pairs=n * (n - 1) // 2,
    )


def load_embeddings(path: str | Path) -> list[EmbeddingVector]:
    """Read embeddings from JSON: a list of {"id", "values"} or one such object."""
    p = Path(path)
    if not p.exists():
        raise EmbeddingError(f"embedding file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise EmbeddingError(f"malformed embedding JSON in {p}: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise EmbeddingError(f"embedding file must hold a non-empty array: {p}")
    vectors = []
    for idx, entry in enumerate(data):
        if not isinstance(entry, dict) or "values" not in entry:
            raise EmbeddingError(
                f"entry {idx} in {p} must be an object with a values array")
        values = entry["values"]
        if (not isinstance(values, list) or not values
                or not all(isinstance(v, (int, float)) for v in values)):
            raise EmbeddingError(
                f"entry {idx} in {p} has a non-numeric or empty values array")
        entry_id = entry.get("id", str(idx))
        if not isinstance(entry_id, str):
            raise EmbeddingError(f"entry {idx} in {p} has a non-string id")
        vectors.append(EmbeddingVector(values=np.asarray(values, dtype=np.float64),
                                       id=entry_id))
    return vectors
