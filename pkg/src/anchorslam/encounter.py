"""Radio encounter models: detecting nearby users and estimating their distance.

Two observation sources are supported. Bluetooth gives a direct RSS between two
phones which a quadratic fit maps to meters. WiFi compares the access-point
scans of two users; the similarity score is a distance in RSS space, so smaller
values mean closer users, and a logarithmic fit maps it to meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

RSS_MIN = -120.0
RSS_MAX = 0.0
DEFAULT_TOP_N = 5

BLUETOOTH = "bluetooth"
WIFI = "wifi"


class EncounterModelError(ValueError):
    """Invalid input to an encounter model."""


class FitError(EncounterModelError):
    """Calibration data cannot determine the model coefficients."""


class _NoOverlap:
    """Marker returned when two scans share no access point."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_OVERLAP"

    def __bool__(self) -> bool:
        return False


NO_OVERLAP = _NoOverlap()


@dataclass(frozen=True)
class RssSample:
    rss: float
    source_id: str

    def __post_init__(self):
        if not RSS_MIN <= self.rss <= RSS_MAX:
            raise EncounterModelError(f"rss {self.rss} outside [{RSS_MIN}, {RSS_MAX}] dBm")


@dataclass(frozen=True)
class WifiScan:
    """RSS readings (dBm) keyed by access point id, taken at one step."""

    readings: Mapping[str, float]
    timestamp: int = 0

    def __post_init__(self):
        for ap, rss in self.readings.items():
            if not RSS_MIN <= rss <= RSS_MAX:
                raise EncounterModelError(f"AP {ap!r}: rss {rss} outside [{RSS_MIN}, {RSS_MAX}] dBm")

    def strongest(self, top_n: int) -> dict[str, float]:
        # ties broken by AP id so the restriction is deterministic
        ranked = sorted(self.readings.items(), key=lambda kv: (-kv[1], kv[0]))
        return dict(ranked[:top_n])


@dataclass(frozen=True)
class QuadraticRssModel:
    """Bluetooth distance model ``d = a*rss**2 + b*rss + c`` (meters)."""

    a: float
    b: float
    c: float
    rmse: float = float("nan")

    kind = BLUETOOTH

    def __call__(self, rss):
        return bluetooth_distance(rss, self)


@dataclass(frozen=True)
class LogWifiModel:
    """WiFi distance model ``d = alpha + beta*ln(sim)`` (meters)."""

    alpha: float
    beta: float
    rmse: float = float("nan")

    kind = WIFI

    def __call__(self, sim):
        return wifi_distance(sim, self)


@dataclass(frozen=True)
class EncounterObservation:
    """A relative-distance measurement between two users."""

    user_a: int
    user_b: int
    z: float
    r_var: float
    source: str = WIFI
    timestamp: int = 0

    def __post_init__(self):
        if self.user_a == self.user_b:
            raise EncounterModelError("an encounter needs two distinct users")
        if not self.z >= 0:
            raise EncounterModelError(f"relative distance must be >= 0, got {self.z}")
        if not self.r_var > 0:
            raise EncounterModelError(f"measurement variance must be > 0, got {self.r_var}")
        if self.source not in (BLUETOOTH, WIFI):
            raise EncounterModelError(f"unknown encounter source {self.source!r}")


def wifi_similarity(scan_a: WifiScan, scan_b: WifiScan, top_n: int = DEFAULT_TOP_N):
    """RSS-space distance between two scans over their commonly heard APs.

    Each scan is first cut down to its ``top_n`` strongest APs. The Euclidean
    norm of the RSS differences over the APs common to both is divided by the
    number of common APs. Returns ``NO_OVERLAP`` when nothing is shared.
    """
    if top_n < 1:
        raise EncounterModelError(f"top_n must be >= 1, got {top_n}")
    a = scan_a.strongest(top_n)
    b = scan_b.strongest(top_n)
    common = sorted(a.keys() & b.keys())
    if not common:
        return NO_OVERLAP
    diff = np.array([a[k] - b[k] for k in common])
    return float(np.linalg.norm(diff)) / len(common)


def pairwise_wifi_similarity(rss: np.ndarray, top_n: int = DEFAULT_TOP_N) -> np.ndarray:
    """Similarity between every pair of scans held as a dense matrix.

    ``rss`` has shape (users, aps) with NaN for unheard APs. The result is a
    symmetric (users, users) matrix with NaN where two scans share no AP in
    their top-n sets. Matches :func:`wifi_similarity` entry by entry.
    """
    rss = np.asarray(rss, dtype=float)
    n_users, n_aps = rss.shape
    heard = ~np.isnan(rss)
    # rank APs per user by strength; stable argsort on AP index reproduces the id tie-break
    key = np.where(heard, -rss, np.inf)
    order = np.argsort(key, axis=1, kind="stable")
    keep = np.zeros_like(heard)
    rows = np.arange(n_users)[:, None]
    keep[rows, order[:, :top_n]] = True
    keep &= heard
    filled = np.where(keep, rss, 0.0)
    common = keep[:, None, :] & keep[None, :, :]
    diff = np.where(common, filled[:, None, :] - filled[None, :, :], 0.0)
    n_common = common.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.sqrt((diff**2).sum(axis=2)) / n_common
    sim[n_common == 0] = np.nan
    return sim


def paired_wifi_similarity(rss_a: np.ndarray, rss_b: np.ndarray, top_n: int = DEFAULT_TOP_N) -> np.ndarray:
    """Row-wise similarity of two equally shaped (pairs, aps) RSS arrays; NaN = no overlap."""
    rss_a = np.asarray(rss_a, dtype=float)
    rss_b = np.asarray(rss_b, dtype=float)
    stacked = np.stack([rss_a, rss_b], axis=1)
    heard = ~np.isnan(stacked)
    order = np.argsort(np.where(heard, -stacked, np.inf), axis=2, kind="stable")
    keep = np.zeros_like(heard)
    np.put_along_axis(keep, order[:, :, :top_n], True, axis=2)
    keep &= heard
    common = keep[:, 0] & keep[:, 1]
    diff = np.where(common, np.nan_to_num(rss_a) - np.nan_to_num(rss_b), 0.0)
    n_common = common.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.sqrt((diff**2).sum(axis=1)) / n_common
    sim[n_common == 0] = np.nan
    return sim


def detect_encounter_wifi(sim, threshold: float) -> bool:
    """WiFi encounter test: the scans must be at most ``threshold`` apart."""
    if not threshold > 0:
        raise EncounterModelError(f"WiFi threshold must be > 0, got {threshold}")
    if sim is NO_OVERLAP or sim is None:
        return False
    sim = float(sim)
    if math.isnan(sim):
        return False
    return sim <= threshold


def detect_encounter_bluetooth(rss: float, threshold: float) -> bool:
    if not RSS_MIN <= threshold <= RSS_MAX:
        raise EncounterModelError(f"Bluetooth threshold {threshold} outside [{RSS_MIN}, {RSS_MAX}] dBm")
    return rss >= threshold


def bluetooth_distance(rss, model: QuadraticRssModel):
    rss = np.asarray(rss, dtype=float)
    d = np.maximum(0.0, model.a * rss**2 + model.b * rss + model.c)
    return float(d) if d.ndim == 0 else d


def wifi_distance(sim, model: LogWifiModel):
    sim = np.asarray(sim, dtype=float)
    if np.any(~(sim > 0)):
        raise EncounterModelError("WiFi similarity must be > 0 for the log model")
    d = np.maximum(0.0, model.alpha + model.beta * np.log(sim))
    return float(d) if d.ndim == 0 else d


def _lstsq(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise FitError(f"rank-deficient calibration set (rank {rank} < {design.shape[1]})")
    return coef


def _rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    return float(np.sqrt(np.mean((pred - np.asarray(truth, dtype=float)) ** 2)))


def fit_quadratic_model(samples: Iterable[Sequence[float]]) -> QuadraticRssModel:
    """Least-squares quadratic fit of distance against Bluetooth RSS.

    ``samples`` are ``(rss, true_distance)`` pairs. The returned model carries
    the in-sample RMSE; use :func:`model_rmse` on held-out data for ``r_var``.
    """
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    rss, dist = data[:, 0], data[:, 1]
    if len(np.unique(rss)) < 3:
        raise FitError("need at least 3 distinct rss values for a quadratic fit")
    design = np.column_stack([rss**2, rss, np.ones_like(rss)])
    a, b, c = _lstsq(design, dist)
    model = QuadraticRssModel(float(a), float(b), float(c))
    return QuadraticRssModel(model.a, model.b, model.c, rmse=_rmse(bluetooth_distance(rss, model), dist))


def fit_log_model(samples: Iterable[Sequence[float]]) -> LogWifiModel:
    """Least-squares fit of ``d = alpha + beta*ln(sim)``."""
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    sim, dist = data[:, 0], data[:, 1]
    if len(sim) < 2:
        raise FitError("need at least 2 samples for the log model")
    if np.any(~(sim > 0)):
        raise EncounterModelError("WiFi similarity must be > 0 for the log model")
    design = np.column_stack([np.ones_like(sim), np.log(sim)])
    alpha, beta = _lstsq(design, dist)
    model = LogWifiModel(float(alpha), float(beta))
    return LogWifiModel(model.alpha, model.beta, rmse=_rmse(wifi_distance(sim, model), dist))


def model_rmse(model, samples: Iterable[Sequence[float]]) -> float:
    """RMSE of a fitted model on ``(measurement, true_distance)`` pairs."""
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    return _rmse(model(data[:, 0]), data[:, 1])


def with_rmse(model, rmse: float):
    """Copy of ``model`` carrying a (held-out) RMSE."""
    if isinstance(model, QuadraticRssModel):
        return QuadraticRssModel(model.a, model.b, model.c, rmse=float(rmse))
    return LogWifiModel(model.alpha, model.beta, rmse=float(rmse))


# -- text formats ------------------------------------------------------------

def write_calibration(path, samples: Iterable[Sequence[float]]) -> None:
    """One ``measurement,true_distance_m`` record per line."""
    lines = [f"{float(m)!r},{float(d)!r}" for m, d in samples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_calibration(path) -> list[tuple[float, float]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise EncounterModelError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            out.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise EncounterModelError(f"{path}:{lineno}: {exc}") from None
    return out


def dump_model(model) -> str:
    if isinstance(model, QuadraticRssModel):
        fields = {"model_type": "quadratic", "a": model.a, "b": model.b, "c": model.c}
    elif isinstance(model, LogWifiModel):
        fields = {"model_type": "log", "alpha": model.alpha, "beta": model.beta}
    else:
        raise TypeError(f"not an encounter model: {model!r}")
    fields["rmse"] = model.rmse
    return "".join(f"{k}={v!r}\n" if not isinstance(v, str) else f"{k}={v}\n" for k, v in fields.items())


def load_model(text: str):
    kv = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
    kind = kv.pop("model_type", None)
    try:
        values = {k: float(v) for k, v in kv.items()}
        if kind == "quadratic":
            return QuadraticRssModel(values["a"], values["b"], values["c"], values.get("rmse", float("nan")))
        if kind == "log":
            return LogWifiModel(values["alpha"], values["beta"], values.get("rmse", float("nan")))
    except KeyError as exc:
        raise EncounterModelError(f"missing coefficient {exc}") from None
    raise EncounterModelError(f"unknown model_type {kind!r}")
