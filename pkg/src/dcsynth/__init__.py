"""Profile-guided synthetic tabular data generation and benchmarking."""

__version__ = "0.1.0"

from dcsynth.data import (
    ColumnSchema,
    Dataset,
    NoiseInjection,
    SplitPair,
    inject_label_noise,
    load_csv,
    simulate_dataset,
    split_stratified,
)

__all__ = [
    "ColumnSchema",
    "Dataset",
    "NoiseInjection",
    "SplitPair",
    "inject_label_noise",
    "load_csv",
    "simulate_dataset",
    "split_stratified",
    "__version__",
]
