"""Exception types shared across the package."""

from __future__ import annotations


class SheetRefineError(Exception):
    """Base class for user-facing errors: bad inputs, bad files, bad config."""


class InvalidParameterError(SheetRefineError, ValueError):
    """An argument violates a documented precondition."""


class ImageLoadError(SheetRefineError):
    """An image file could not be found, read, or decoded."""


class CropSpecError(SheetRefineError):
    """A crop specification is malformed or does not fit the source image."""


class GenerationError(SheetRefineError):
    """The text-to-image service call failed.

    ``kind`` distinguishes the failure: "network" (request never completed),
    "status" (non-2xx response, see ``status`` and ``detail``), or
    "decode" (2xx response whose payload is not a usable image).
    """

    def __init__(self, kind: str, message: str, status: int | None = None,
                 detail: str | None = None):
        super().__init__(message)
        self.kind = kind
        self.status = status
        self.detail = detail


class EmbeddingError(SheetRefineError):
    """An embedding file is malformed or inconsistent."""


class InternalError(Exception):
    """An internal invariant was violated. Indicates a bug, not bad input."""
