"""Volunteer engagement prediction pipeline (C++ core behind pybind11)."""

from ._engage import (
    auc,
    build_dataset_csv,
    evaluate_json,
    generate_log_csv,
    gradcheck,
    log_stats,
    session_sizes,
    version,
)

__version__ = version()

__all__ = [
    "auc",
    "build_dataset_csv",
    "evaluate_json",
    "generate_log_csv",
    "gradcheck",
    "log_stats",
    "session_sizes",
    "version",
    "__version__",
]
