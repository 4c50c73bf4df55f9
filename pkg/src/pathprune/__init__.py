"""Learned search-space pruning for grid path planners, plus generalization
and incremental-learning benchmarks."""

__version__ = "0.1.0"
