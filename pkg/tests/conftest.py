import sys
from pathlib import Path

import numpy as np
import pytest

# Allow running the suite straight from a checkout without installing.
_SRC = Path(__file__).resolve().parent.parent / "src"
if str(_SRC) not in sys.path:
    sys.path.insert(0, str(_SRC))

from sheetrefine import GrayImage, Image  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def gray(rows) -> GrayImage:
    return GrayImage(np.asarray(rows, dtype=np.uint8))


def rgb(rows) -> Image:
    return Image(np.asarray(rows, dtype=np.uint8))


def random_gray(rng: np.random.Generator, width: int, height: int) -> GrayImage:
    return GrayImage(rng.integers(0, 256, size=(height, width), dtype=np.uint8))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
