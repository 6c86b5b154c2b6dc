"""Unsupervised, self-explaining clustering of mixed-type tabular data.

The pipeline encodes every column into a shared sparse binary space,
senses per-feature weights through leave-one-feature-out dependency
models, clusters each weighted view with weighted k-FreqItems, fuses the
rounds in a consensus stage, and derives cluster- and instance-level
feature explanations that agree by construction.
"""

from .bep import BepConfig, encode_table, jaccard_distance, quantization_bounds
from .data_model import ColumnSchema, MixedTable, load_table
from .errors import ConfigError, DataError, InvariantError
from .pipeline import PipelineConfig, WiseResult, run_wise

__version__ = "0.1.0"

__all__ = [
    "BepConfig",
    "ColumnSchema",
    "ConfigError",
    "DataError",
    "InvariantError",
    "MixedTable",
    "PipelineConfig",
    "WiseResult",
    "encode_table",
    "jaccard_distance",
    "load_table",
    "quantization_bounds",
    "run_wise",
    "__version__",
]
