"""Differentially private histogram exploration over a keyed noise synopsis."""

from .engine import Dataset, RangeStats, TrueHeatmap, TrueHistogram, load_csv, load_schema
from .errors import (
    AccessDeniedError,
    InvalidParameterError,
    NotFoundError,
    PolicyError,
    PrivhistError,
    PublishConflictError,
)
from .policy import (
    ColumnPolicy,
    ColumnSetPolicy,
    CountReleasePolicy,
    NumericQuantization,
    StringQuantization,
    TablePolicy,
    bucket_to_quantum_ranges,
    quantize_numeric,
    quantize_string,
)
from .synopsis import (
    NoiseSample,
    QuantumRange,
    SecretKey,
    SynopsisParams,
    TreeNode,
    b_adic_decomposition,
    confidence_interval,
    laplace_from_uniform,
    laplace_scale,
    min_epsilon_subpixel,
    node_noise,
    noisy_range_count,
    prf_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "AccessDeniedError",
    "ColumnPolicy",
    "ColumnSetPolicy",
    "CountReleasePolicy",
    "Dataset",
    "InvalidParameterError",
    "NoiseSample",
    "NotFoundError",
    "NumericQuantization",
    "PolicyError",
    "PrivhistError",
    "PublishConflictError",
    "QuantumRange",
    "RangeStats",
    "SecretKey",
    "StringQuantization",
    "SynopsisParams",
    "TablePolicy",
    "TreeNode",
    "TrueHeatmap",
    "TrueHistogram",
    "b_adic_decomposition",
    "bucket_to_quantum_ranges",
    "confidence_interval",
    "laplace_from_uniform",
    "laplace_scale",
    "load_csv",
    "load_schema",
    "min_epsilon_subpixel",
    "node_noise",
    "noisy_range_count",
    "prf_uniform",
    "quantize_numeric",
    "quantize_string",
]
