"""Grid prompt assembly, generation-service client, and synthetic sheets.

Real candidate sheets come from an external text-to-image HTTP service; the
synthetic generator produces deterministic sheets with known outliers so the
refinement pipeline can be exercised and benchmarked without any service.

All synthetic randomness is SplitMix64 (Steele, Lea & Flood), run either as a
sequential stream or in counter mode for bulk noise, so output is
bit-identical across platforms and runs.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import math
from dataclasses import dataclass

import numpy as np
import requests
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import GenerationError, InvalidParameterError
from .image_core import Image

DEFAULT_GRID_PHRASE = "from multiple angles"

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Stream labels for deriving independent generator seeds from one spec seed.
_SALT_BASE = 0x01
_SALT_OUTLIER = 0x02
_SALT_NOISE = 0x03
_SALT_JITTER = 0x04


@dataclass(frozen=True)
class GridPrompt:
    """A structured sheet prompt and its rendered string form."""

    character_description: str
    style_description: str
    grid_phrase: str
    rendered: str


@dataclass(frozen=True)
class GenRequest:
    """Parameters forwarded verbatim to the generation service."""

    prompt: str
    seed: int = 0
    width: int = 1024
    height: int = 1024
    steps: int = 30
    guidance: float = 7.5

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise InvalidParameterError(
                f"width and height must be >= 64, got {self.width}x{self.height}")
        if self.steps < 1:
            raise InvalidParameterError(f"steps must be >= 1, got {self.steps}")
        if self.guidance < 1:
            raise InvalidParameterError(
                f"guidance must be >= 1, got {self.guidance}")


@dataclass(frozen=True)
class SynthSheetSpec:
    """Recipe for a deterministic synthetic sheet with labeled outliers."""

    seed: int
    rows: int = 2
    cols: int = 3
    outlier_positions: frozenset[int] = frozenset()
    noise_amplitude: int = 0
    jitter: int = 0
    cell_width: int = 256
    cell_height: int = 256

    def __post_init__(self):
        object.__setattr__(self, "outlier_positions",
                           frozenset(self.outlier_positions))
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError(
                f"grid shape must be >= 1x1, got {self.rows}x{self.cols}")
        if self.cell_width < 8 or self.cell_height < 8:
            raise InvalidParameterError("cells must be at least 8x8")
        if not 0 <= self.noise_amplitude <= 128:
            raise InvalidParameterError(
                f"noise_amplitude must be in [0, 128], got {self.noise_amplitude}")
        if self.jitter < 0:
            raise InvalidParameterError(f"jitter must be >= 0, got {self.jitter}")
        n_cells = self.rows * self.cols
        bad = [i for i in self.outlier_positions
               if not isinstance(i, int) or not 0 <= i < n_cells]
        if bad:
            raise InvalidParameterError(
                f"outlier positions {sorted(bad)} outside cell range 0..{n_cells - 1}")


def build_grid_prompt(character: str, style: str = "",
                      grid_phrase: str = DEFAULT_GRID_PHRASE) -> GridPrompt:
    """Assemble "<character>, <grid phrase>, <style>"; empty segments drop out."""
    if not character or not character.strip():
        raise InvalidParameterError("character description must be non-empty")
    segments = [character]
    if grid_phrase:
        segments.append(grid_phrase)
    if style:
        segments.append(style)
    return GridPrompt(
        character_description=character,
        style_description=style,
        grid_phrase=grid_phrase,
        rendered=", ".join(segments),
    )


def request_grid(endpoint: str, request: GenRequest, timeout: float = 120.0,
                 retries: int = 0) -> Image:
    """POST a generation request and decode the returned sheet image.

    The service receives JSON {prompt, seed, width, height, steps, guidance}
    and must answer with PNG bytes or JSON {"image_b64": ...}. Network and
    status failures are retried up to ``retries`` extra times; malformed
    payloads are not, since resending would not change them.
    """
    payload = {
        "prompt": request.prompt,
        "seed": request.seed,
        "width": request.width,
        "height": request.height,
        "steps": request.steps,
        "guidance": request.guidance,
    }
    failure: GenerationError | None = None
    for _ in range(max(0, retries) + 1):
        try:
            response = requests.post(endpoint, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            failure = GenerationError(
                "network", f"request to {endpoint} failed: {exc}")
            continue
        if not 200 <= response.status_code < 300:
            excerpt = response.text[:200]
            failure = GenerationError(
                "status",
                f"generation service returned {response.status_code}: {excerpt}",
                status=response.status_code, detail=excerpt)
            continue
        return _decode_payload(response.content,
                               response.headers.get("Content-Type", ""),
                               source_id=f"generated:seed={request.seed}")
    assert failure is not None
    raise failure


def _decode_payload(content: bytes, content_type: str, source_id: str) -> Image:
    if content_type.split(";")[0].strip().lower().startswith("image/") \
            or content.startswith(b"\x89PNG"):
        data = content
    else:
        try:
            body = json.loads(content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GenerationError(
                "decode", f"response is neither an image nor JSON: {exc}") from exc
        if not isinstance(body, dict) or "image_b64" not in body:
            raise GenerationError(
                "decode", "JSON response is missing the image_b64 field")
        try:
            data = base64.b64decode(body["image_b64"], validate=True)
        except (binascii.Error, TypeError) as exc:
            raise GenerationError(
                "decode", f"image_b64 is not valid base64: {exc}") from exc
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise GenerationError(
            "decode", f"payload did not decode as an image: {exc}") from exc
    return Image(pixels=pixels, source_id=source_id)


def _mix64(x: int) -> int:
    """SplitMix64 finalizer."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _derive_seed(seed: int, *salts: int) -> int:
    """Fold salts into a seed to get an independent stream seed."""
    h = seed & _MASK64
    for salt in salts:
        h = _mix64((h + _GOLDEN + (salt & _MASK64)) & _MASK64)
    return h


class _SplitMix64:
    """Sequential SplitMix64 stream for scalar draws."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def below(self, n: int) -> int:
        return self.next_u64() % n

    def unit(self) -> float:
        return self.next_u64() / 2.0 ** 64


def _noise_words(seed: int, count: int) -> np.ndarray:
    """Counter-mode SplitMix64: word i is mix(seed + (i + 1) * golden)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = np.uint64(seed & _MASK64) + idx * np.uint64(_GOLDEN)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return x


def _pattern(seed: int, width: int, height: int) -> np.ndarray:
    """Procedural RGB pattern: an oriented gradient overlaid with filled shapes."""
    rng = _SplitMix64(seed)
    yy, xx = np.indices((height, width), dtype=np.float64)

    theta = rng.unit() * 2.0 * math.pi
    projection = xx * math.cos(theta) + yy * math.sin(theta)
    lo, hi = float(projection.min()), float(projection.max())
    t = (projection - lo) / (hi - lo) if hi > lo else np.zeros_like(projection)
    c0 = np.array([rng.below(256) for _ in range(3)], dtype=np.float64)
    c1 = np.array([rng.below(256) for _ in range(3)], dtype=np.float64)
    canvas = c0 + t[:, :, None] * (c1 - c0)

    for _ in range(4 + rng.below(3)):
        color = np.array([rng.below(256) for _ in range(3)], dtype=np.float64)
        cx = rng.unit() * width
        cy = rng.unit() * height
        if rng.below(2) == 0:
            radius = (0.08 + 0.22 * rng.unit()) * min(width, height)
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius
        else:
            half_w = (0.06 + 0.18 * rng.unit()) * width
            half_h = (0.06 + 0.18 * rng.unit()) * height
            mask = (np.abs(xx - cx) <= half_w) & (np.abs(yy - cy) <= half_h)
        canvas[mask] = color
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def synth_sheet(spec: SynthSheetSpec) -> tuple[Image, list[bool]]:
    """Build a sheet of noisy base-pattern cells plus labeled outlier cells.

    Non-outlier cells share one base pattern, each with its own translation
    jitter and additive noise; outlier cells get patterns from derived seeds.
    Returns the assembled sheet and per-cell outlier flags in row-major order.
    """
    pad_w = spec.cell_width + 2 * spec.jitter
    pad_h = spec.cell_height + 2 * spec.jitter
    base = _pattern(_derive_seed(spec.seed, _SALT_BASE), pad_w, pad_h)

    sheet = np.zeros((spec.rows * spec.cell_height,
                      spec.cols * spec.cell_width, 3), dtype=np.uint8)
    flags: list[bool] = []
    for idx in range(spec.rows * spec.cols):
        is_outlier = idx in spec.outlier_positions
        if is_outlier:
            pattern = _pattern(_derive_seed(spec.seed, _SALT_OUTLIER, idx),
                               pad_w, pad_h)
        else:
            pattern = base

        offset_rng = _SplitMix64(_derive_seed(spec.seed, _SALT_JITTER, idx))
        span = 2 * spec.jitter + 1
        dx = offset_rng.below(span)
        dy = offset_rng.below(span)
        window = pattern[dy:dy + spec.cell_height,
                         dx:dx + spec.cell_width].astype(np.int16)

        if spec.noise_amplitude > 0:
            words = _noise_words(_derive_seed(spec.seed, _SALT_NOISE, idx),
                                 spec.cell_height * spec.cell_width * 3)
            amplitude = spec.noise_amplitude
            noise = (words % np.uint64(2 * amplitude + 1)).astype(np.int16)
            noise -= np.int16(amplitude)
            window = window + noise.reshape(spec.cell_height, spec.cell_width, 3)

        cell = np.clip(window, 0, 255).astype(np.uint8)
        r, c = divmod(idx, spec.cols)
        sheet[r * spec.cell_height:(r + 1) * spec.cell_height,
              c * spec.cell_width:(c + 1) * spec.cell_width] = cell
        flags.append(is_outlier)

    return Image(pixels=sheet, source_id=f"synth:{spec.seed}"), flags
