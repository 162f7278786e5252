"""Refine character-sheet image grids into a consistent subset.

The pipeline slices a generated sheet into candidate parts, scores every part
by its average pairwise mutual information against the rest, drops statistical
outliers, and emits a training manifest for an external personalization
trainer. Embedding-based evaluation metrics operate on externally supplied
vectors.
"""

__version__ = "0.1.0"

from .errors import (
    CropSpecError,
    EmbeddingError,
    GenerationError,
    ImageLoadError,
    InternalError,
    InvalidParameterError,
    SheetRefineError,
)
from .eval_metrics import (
    EmbeddingVector,
    EvalReport,
    cosine_similarity,
    evaluate_set,
    identity_consistency,
    load_embeddings,
    prompt_similarity,
)
from .generation import (
    DEFAULT_GRID_PHRASE,
    GenRequest,
    GridPrompt,
    SynthSheetSpec,
    build_grid_prompt,
    request_grid,
    synth_sheet,
)
from .grid_slicer import (
    CropRect,
    CropSpec,
    PartSet,
    parse_crop_spec,
    slice_crops,
    slice_uniform,
)
from .image_core import (
    BinnedImage,
    GrayImage,
    Histogram,
    Image,
    JointHistogram,
    histogram,
    joint_histogram,
    load_image,
    quantize,
    resize,
    save_image,
    to_grayscale,
)
from .mutual_info import (
    AnalysisConfig,
    MiMatrix,
    conditional_entropy,
    entropy,
    joint_entropy,
    mi_between_images,
    mutual_information,
    pairwise_mi_matrix,
)
from .refine import (
    RefineConfig,
    RefineReport,
    RoundRecord,
    consistency_scores,
    filter_outliers,
    refine_set,
    threshold_stats,
)

__all__ = [
    "__version__",
    "AnalysisConfig", "BinnedImage", "CropRect", "CropSpec", "CropSpecError",
    "DEFAULT_GRID_PHRASE", "EmbeddingError", "EmbeddingVector", "EvalReport",
    "GenRequest", "GenerationError", "GrayImage", "GridPrompt", "Histogram",
    "Image", "ImageLoadError", "InternalError", "InvalidParameterError",
    "JointHistogram", "MiMatrix", "PartSet", "RefineConfig", "RefineReport",
    "RoundRecord", "SheetRefineError", "SynthSheetSpec",
    "build_grid_prompt", "conditional_entropy", "consistency_scores",
    "cosine_similarity", "entropy", "evaluate_set", "filter_outliers",
    "histogram", "identity_consistency", "joint_entropy", "joint_histogram",
    "load_embeddings", "load_image", "mi_between_images", "mutual_information",
    "pairwise_mi_matrix", "parse_crop_spec", "prompt_similarity", "quantize",
    "refine_set", "request_grid", "resize", "save_image", "slice_crops",
    "slice_uniform", "synth_sheet", "threshold_stats", "to_grayscale",
]
