"""Built-in problem families."""

from .datasets import load_dataset, resolve_data_path, write_idx
from .hypercleaning import (
    HypercleaningProblem,
    corrupt_labels,
    hypercleaning_oracles,
    make_synthetic_hypercleaning,
    nobo_baseline_run,
)
from .quadratic import (
    ProblemAnalytics,
    QuadraticBilevel,
    builtin_zoo,
    make_quadratic,
)

__all__ = [
    "HypercleaningProblem",
    "ProblemAnalytics",
    "QuadraticBilevel",
    "builtin_zoo",
    "corrupt_labels",
    "hypercleaning_oracles",
    "load_dataset",
    "make_quadratic",
    "make_synthetic_hypercleaning",
    "nobo_baseline_run",
    "resolve_data_path",
    "write_idx",
]
