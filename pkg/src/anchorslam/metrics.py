"""Accuracy and cost summaries of a simulated run."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

PERCENTILES = (25, 50, 75, 90)


class MetricsError(ValueError):
    pass


def nearest_rank(values, q: float) -> float:
    """Smallest value with at least q% of the data at or below it."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise MetricsError("no values")
    if not 0 < q <= 100:
        raise ValueError(f"percentile must lie in (0, 100], got {q}")
    rank = max(1, math.ceil(q / 100 * v.size))
    return float(v[rank - 1])


@dataclass(frozen=True)
class MetricsSummary:
    p25: float
    p50: float
    p75: float
    p90: float
    max: float
    ms_per_step: float
    encounters: int
    anchor_hits: int
    n_records: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsSummary":
        kinds = {f.name: f.type for f in fields(cls)}
        return cls(**{k: (int(data[k]) if kinds[k] in (int, "int") else float(data[k])) for k in kinds})

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> "MetricsSummary":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        return cls.from_dict(kv)


def compute_metrics(log, warmup: int = 50, ms_per_step: float = float("nan")) -> MetricsSummary:
    """Percentiles of the pooled (agent, step) errors after ``warmup`` steps."""
    keep = log.step > warmup
    if not np.any(keep):
        raise MetricsError(f"no records left after a warmup of {warmup} steps")
    err = log.error[keep]
    p = [nearest_rank(err, q) for q in PERCENTILES]
    tags = [t for t, k in zip(log.tags, keep) if k]
    enc = sum("encounter" in t for t in tags)
    hits = sum("anchor" in t for t in tags)
    return MetricsSummary(*p, float(err.max()), float(ms_per_step), enc, hits, int(err.size))


def summarize(result) -> MetricsSummary:
    return compute_metrics(result.log, result.config.warmup, result.ms_per_step)
