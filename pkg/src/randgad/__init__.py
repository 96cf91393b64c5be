"""Unsupervised graph anomaly detection with bandit-driven neighborhood selection."""

import subprocess
from pathlib import Path

from .graph import Graph, load_graph, normalized_adjacency, save_graph, spmm_power
from .inject import InjectionConfig, inject
from .trainer import ScoreReport, TrainConfig, ap, auc, evaluate, fit, train

__version__ = "0.1.0"


def version_string():
    """Package version with the short commit hash appended when run from a checkout."""
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    if rev.returncode == 0 and rev.stdout.strip():
        return f"{__version__}+g{rev.stdout.strip()}"
    return __version__


__all__ = [
    "Graph", "load_graph", "save_graph", "normalized_adjacency", "spmm_power",
    "InjectionConfig", "inject",
    "TrainConfig", "ScoreReport", "train", "evaluate", "fit", "auc", "ap",
    "version_string",
]
