"""Image feature extraction into the GIQF interchange format."""

from .extract import (
    FEATURE_DIM,
    MODEL_DIMS,
    PREPROCESSING_NOTE,
    ExtractionJob,
    build_model,
    build_preprocess,
    extract,
)
from .writer import write_giqf

__version__ = "0.1.0"

__all__ = [
    "ExtractionJob",
    "FEATURE_DIM",
    "MODEL_DIMS",
    "PREPROCESSING_NOTE",
    "build_model",
    "build_preprocess",
    "extract",
    "write_giqf",
    "__version__",
]
