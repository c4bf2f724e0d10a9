"""Collaborative indoor SLAM with building and human anchors, plus a simulator to test it."""

from . import encounter, slam
from .config import ConfigError, ExperimentSpec, SimConfig, load_config
from .metrics import MetricsSummary, compute_metrics

__all__ = ["ConfigError", "ExperimentSpec", "MetricsSummary", "SimConfig", "compute_metrics",
           "encounter", "load_config", "slam"]
