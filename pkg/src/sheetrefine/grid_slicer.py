"""Split a character-sheet image into candidate parts.

Two slicing modes: a uniform rows-by-columns grid, or explicit crop
rectangles read from a JSON spec file. Part order is the spec order and is
the index used by every downstream report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import CropSpecError
from .image_core import Image

MODE_UNIFORM = "uniform"
MODE_EXPLICIT = "explicit"


@dataclass(frozen=True)
class CropRect:
    """A crop window in source-pixel coordinates."""

    x: int
    y: int
    width: int
    height: int
    label: str | None = None

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise CropSpecError(f"rectangle origin must be non-negative: {self}")
        if self.width < 1 or self.height < 1:
            raise CropSpecError(f"rectangle must be at least 1x1: {self}")


@dataclass(frozen=True)
class CropSpec:
    """Either a uniform rows x cols grid or an explicit rectangle list."""

    mode: str
    rows: int | None = None
    cols: int | None = None
    rects: tuple[CropRect, ...] | None = None

    def __post_init__(self):
        if self.mode == MODE_UNIFORM:
            if self.rows is None or self.cols is None:
                raise CropSpecError("uniform spec requires rows and cols")
            if self.rows < 1 or self.cols < 1:
                raise CropSpecError(
                    f"rows and cols must be >= 1, got {self.rows}x{self.cols}")
        elif self.mode == MODE_EXPLICIT:
            if not self.rects:
                raise CropSpecError("explicit spec requires at least one rectangle")
        else:
            raise CropSpecError(f"unknown crop-spec mode: {self.mode!r}")

    @classmethod
    def uniform(cls, rows: int, cols: int) -> "CropSpec":
        return cls(mode=MODE_UNIFORM, rows=rows, cols=cols)

    @classmethod
    def explicit(cls, rects: list[CropRect] | tuple[CropRect, ...]) -> "CropSpec":
        return cls(mode=MODE_EXPLICIT, rects=tuple(rects))


@dataclass(frozen=True)
class PartSet:
    """Ordered candidate parts plus where each one came from."""

    parts: tuple[Image, ...]
    source_id: str
    rects: tuple[CropRect, ...]

    def __post_init__(self):
        if len(self.parts) != len(self.rects):
            raise CropSpecError("parts and rects must align one-to-one")

    def __len__(self) -> int:
        return len(self.parts)


def parse_crop_spec(path: str | Path) -> CropSpec:
    """Read and validate a crop-spec JSON file.

    Schema: {"mode": "uniform", "rows": R, "cols": C} or
    {"mode": "explicit", "rects": [{"x", "y", "w", "h", optional "label"}]}.
    Whether rectangles fit a particular image is checked at slice time.
    """
    p = Path(path)
    if not p.exists():
        raise CropSpecError(f"crop-spec file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CropSpecError(f"malformed crop-spec JSON in {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise CropSpecError(f"crop spec must be a JSON object: {p}")
    mode = data.get("mode")
    if mode == MODE_UNIFORM:
        rows, cols = data.get("rows"), data.get("cols")
        if not isinstance(rows, int) or not isinstance(cols, int):
            raise CropSpecError(f"uniform spec needs integer rows and cols: {p}")
        if rows < 1 or cols < 1:
            raise CropSpecError(
                f"rows and cols must be >= 1, got {rows}x{cols}: {p}")
        return CropSpec.uniform(rows, cols)
    if mode == MODE_EXPLICIT:
        raw = data.get("rects")
        if not isinstance(raw, list) or not raw:
            raise CropSpecError(f"explicit spec needs a non-empty rects array: {p}")
        rects = []
        for idx, entry in enumerate(raw):
            if not isinstance(entry, dict):
                raise CropSpecError(f"rect {idx} must be an object: {p}")
            try:
                x, y, w, h = (entry[k] for k in ("x", "y", "w", "h"))
            except KeyError as exc:
                raise CropSpecError(
                    f"rect {idx} is missing field {exc.args[0]!r}: {p}") from exc
            if not all(isinstance(v, int) for v in (x, y, w, h)):
                raise CropSpecError(f"rect {idx} fields must be integers: {p}")
            label = entry.get("label")
            if label is not None and not isinstance(label, str):
                raise CropSpecError(f"rect {idx} label must be a string: {p}")
            try:
                rects.append(CropRect(x=x, y=y, width=w, height=h, label=label))
            except CropSpecError as exc:
                raise CropSpecError(f"rect {idx} invalid: {exc}") from exc
        return CropSpec.explicit(rects)
    raise CropSpecError(f"mode must be 'uniform' or 'explicit', got {mode!r}: {p}")


def _axis_edges(extent: int, cells: int) -> list[int]:
    """Cell boundaries along one axis; the remainder goes to the last cell."""
    base = extent // cells
    edges = [i * base for i in range(cells)]
    edges.append(extent)
    return edges


def slice_uniform(img: Image, rows: int, cols: int) -> PartSet:
    """Cut the image into a rows x cols grid, row-major part order.

    When a dimension does not divide evenly, the leftover pixels extend the
    last cell along that axis, so the parts tile the source exactly.
    """
    if rows < 1 or cols < 1:
        raise CropSpecError(f"rows and cols must be >= 1, got {rows}x{cols}")
    if rows > img.height or cols > img.width:
        raise CropSpecError(
            f"grid {rows}x{cols} exceeds image dimensions "
            f"{img.width}x{img.height}")
    x_edges = _axis_edges(img.width, cols)
    y_edges = _axis_edges(img.height, rows)
    rects = []
    for r in range(rows):
        for c in range(cols):
            rects.append(CropRect(
                x=x_edges[c], y=y_edges[r],
                width=x_edges[c + 1] - x_edges[c],
                height=y_edges[r + 1] - y_edges[r],
            ))
    return _cut(img, tuple(rects))


def slice_crops(img: Image, spec: CropSpec) -> PartSet:
    """Cut out the spec's explicit rectangles, in spec order."""
    if spec.mode != MODE_EXPLICIT:
        raise CropSpecError("slice_crops requires an explicit crop spec")
    for idx, rect in enumerate(spec.rects):
        if rect.x + rect.width > img.width or rect.y + rect.height > img.height:
            raise CropSpecError(
                f"rect {idx} ({rect.x},{rect.y},{rect.width}x{rect.height}) "
                f"extends outside the {img.width}x{img.height} image")
    return _cut(img, spec.rects)


def _cut(img: Image, rects: tuple[CropRect, ...]) -> PartSet:
    parts = []
    for rect in rects:
        window = img.pixels[rect.y:rect.y + rect.height,
                            rect.x:rect.x + rect.width].copy()
        parts.append(Image(pixels=window, source_id=img.source_id))
    return PartSet(parts=tuple(parts), source_id=img.source_id, rects=rects)
