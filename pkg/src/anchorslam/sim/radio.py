"""Log-distance path-loss channel and encounter-model calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import SimConfig
from ..encounter import (BLUETOOTH, RSS_MAX, RSS_MIN, WifiScan, fit_log_model,
                         fit_quadratic_model, model_rmse, paired_wifi_similarity,
                         with_rmse)
from .environment import Environment

HEARING_FLOOR = -100.0
WIFI_NEAR_FIELD = 0.5
BT_NEAR_FIELD = 0.1
MIN_SIMILARITY = 1e-3


@dataclass(frozen=True)
class BluetoothChannel:
    tx_power: float = -52.0
    gamma: float = 3.0
    noise: float = 4.0

    @classmethod
    def from_config(cls, config: SimConfig) -> "BluetoothChannel":
        return cls(config.bt_tx_power, config.bt_gamma, config.bt_rss_noise)


def wifi_rss_matrix(env: Environment, positions, rng: np.random.Generator) -> np.ndarray:
    """RSS of every AP at every position, (n, A); NaN where the AP is not heard."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    d = np.linalg.norm(positions[:, None, :] - env.ap_pos[None, :, :], axis=2)
    rss = env.ap_tx - 10.0 * env.ap_gamma * np.log10(np.maximum(d, WIFI_NEAR_FIELD))
    rss = rss + rng.normal(0.0, env.rss_noise, size=rss.shape)
    rss = np.clip(rss, RSS_MIN, RSS_MAX)
    rss[rss < HEARING_FLOOR] = np.nan
    return rss


def synthesize_wifi_scan(env: Environment, true_position, rng: np.random.Generator,
                         timestamp: int = 0) -> WifiScan:
    row = wifi_rss_matrix(env, true_position, rng)[0]
    ids = env.ap_ids
    return WifiScan({ids[i]: float(row[i]) for i in np.flatnonzero(~np.isnan(row))}, timestamp)


def synthesize_bluetooth_rss(distance, channel: BluetoothChannel, rng: np.random.Generator):
    distance = np.asarray(distance, dtype=float)
    if np.any(distance < 0):
        raise ValueError("distance must be >= 0")
    rss = channel.tx_power - 10.0 * channel.gamma * np.log10(np.maximum(distance, BT_NEAR_FIELD))
    rss = np.clip(rss + rng.normal(0.0, channel.noise, size=distance.shape), RSS_MIN, RSS_MAX)
    return float(rss) if rss.ndim == 0 else rss


def bluetooth_rss_matrix(positions, channel: BluetoothChannel, rng: np.random.Generator) -> np.ndarray:
    """Symmetric pairwise RSS; one draw per unordered pair, diagonal NaN."""
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    iu = np.triu_indices(n, k=1)
    d = np.linalg.norm(positions[iu[0]] - positions[iu[1]], axis=1)
    out = np.full((n, n), np.nan)
    vals = synthesize_bluetooth_rss(d, channel, rng)
    out[iu] = vals
    out[iu[1], iu[0]] = vals
    return out


# -- calibration -----------------------------------------------------------------

@dataclass(frozen=True)
class Calibration:
    model: object
    r_var: float
    n_train: int
    n_test: int


def calibration_samples(config: SimConfig, env: Environment, rng: np.random.Generator,
                        kind: str | None = None, max_distance: float = 25.0) -> np.ndarray:
    """(measurement, true distance) pairs for detectable encounters.

    Distances have density proportional to d on [0, max_distance], the pair
    distance law of users spread uniformly over an area, so the held-out error
    reflects the mix of encounters seen in a run. Only pairs that pass the
    configured detection threshold are kept.
    """
    kind = kind or config.encounter_model
    n = config.calibration_samples
    d = max_distance * np.sqrt(rng.uniform(size=n))
    if kind == BLUETOOTH:
        rss = synthesize_bluetooth_rss(d, BluetoothChannel.from_config(config), rng)
        keep = rss >= config.bluetooth_threshold
        return np.column_stack([rss[keep], d[keep]])
    a = rng.uniform((0.0, 0.0), (env.width, env.height), size=(n, 2))
    theta = rng.uniform(-np.pi, np.pi, size=n)
    b = a + d[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    inside = env.contains(b)
    a, b, d = a[inside], b[inside], d[inside]
    ra = wifi_rss_matrix(env, a, rng)
    rb = wifi_rss_matrix(env, b, rng)
    sim = paired_wifi_similarity(ra, rb, config.top_n)
    keep = ~np.isnan(sim) & (sim <= config.wifi_threshold)
    return np.column_stack([np.maximum(sim[keep], MIN_SIMILARITY), d[keep]])


def calibrate(config: SimConfig, env: Environment, rng: np.random.Generator,
              kind: str | None = None) -> Calibration:
    """Fit the encounter model on half the samples; r_var is the held-out MSE."""
    kind = kind or config.encounter_model
    data = calibration_samples(config, env, rng, kind)
    half = len(data) // 2
    train, test = data[:half], data[half:]
    fit = fit_quadratic_model if kind == BLUETOOTH else fit_log_model
    model = fit(train)
    rmse = model_rmse(model, test)
    return Calibration(with_rmse(model, rmse), max(rmse**2, 1e-6), len(train), len(test))
