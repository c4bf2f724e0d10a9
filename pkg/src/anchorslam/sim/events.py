"""Observation events: building-anchor hits and user-to-user encounters."""

from __future__ import annotations

import numpy as np

from ..config import SimConfig
from ..encounter import BLUETOOTH, EncounterObservation, pairwise_wifi_similarity
from ..slam import AnchorObservation, ConfusionMatrix, MeasurementMode
from .environment import Environment
from .radio import MIN_SIMILARITY, BluetoothChannel, Calibration, bluetooth_rss_matrix, wifi_rss_matrix


def detect_building_anchor_event(env: Environment, true_position, confusion: ConfusionMatrix,
                                 trigger_radius: float, rng: np.random.Generator,
                                 noise_std: float = 0.0, mode=MeasurementMode.RANGE):
    """Nearest anchor within ``trigger_radius`` produces one noisy observation, or None.

    The detected type is drawn from the confusion row of the true type.
    """
    if not trigger_radius > 0:
        raise ValueError("trigger_radius must be > 0")
    if env.n_anchors == 0:
        return None
    pos = np.asarray(true_position, dtype=float)
    d = np.linalg.norm(env.anchor_pos - pos, axis=1)
    i = int(np.argmin(d))
    if d[i] > trigger_radius:
        return None
    true_type = env.anchor_types[i]
    row = confusion.probs[confusion.index(true_type)]
    f_hat = confusion.types[int(rng.choice(len(row), p=row))]
    mode = MeasurementMode(mode)
    if mode is MeasurementMode.RANGE:
        z = np.array([d[i]]) + rng.normal(0.0, noise_std, size=1)
        z = np.abs(z)
    else:
        z = env.anchor_pos[i] - pos + rng.normal(0.0, noise_std, size=2)
    return AnchorObservation(z, f_hat, anchor_id=i)


def encounter_candidates(config: SimConfig, env: Environment, positions, rng: np.random.Generator):
    """Symmetric candidate matrix plus the raw measurement for each pair.

    The measurement is the Bluetooth RSS or the WiFi similarity, depending on
    ``config.encounter_model``.
    """
    positions = np.asarray(positions, dtype=float)
    if config.encounter_model == BLUETOOTH:
        meas = bluetooth_rss_matrix(positions, BluetoothChannel.from_config(config), rng)
        cand = meas >= config.bluetooth_threshold
    else:
        meas = pairwise_wifi_similarity(wifi_rss_matrix(env, positions, rng), config.top_n)
        cand = meas <= config.wifi_threshold
    cand &= ~np.isnan(meas)
    np.fill_diagonal(cand, False)
    return cand, meas


def select_partners(cand: np.ndarray, traces, active=None) -> list:
    """Per agent, the candidate with the smallest published covariance trace.

    Ties go to the lower agent id. ``active`` masks agents that may take part
    this step. Returns a list with a partner index or None per agent.
    """
    cand = np.array(cand, dtype=bool)
    if active is not None:
        active = np.asarray(active, dtype=bool)
        cand &= active[:, None] & active[None, :]
    traces = np.asarray(traces, dtype=float)
    out = []
    for i in range(len(cand)):
        js = np.flatnonzero(cand[i])
        out.append(int(js[np.argmin(traces[js])]) if js.size else None)
    return out


def detect_encounters(config: SimConfig, env: Environment, positions, published, calibration: Calibration,
                      rng: np.random.Generator, step: int = 0, active=None,
                      blocked=None) -> list[EncounterObservation]:
    """Encounter observations for this step, at most one per agent.

    ``published`` is the list of PublishedEstimate snapshots; it decides the
    partner. ``z`` comes from the calibrated model and ``r_var`` from its
    held-out error unless the config fixes it. ``blocked`` is a boolean pair
    matrix of pairs that may not meet this step (cooldown).
    """
    cand, meas = encounter_candidates(config, env, positions, rng)
    if blocked is not None:
        cand &= ~np.asarray(blocked, dtype=bool)
    partners = select_partners(cand, [p.confidence_trace for p in published], active)
    r_var = config.r_var if config.r_var is not None else calibration.r_var
    out = []
    for a, b in enumerate(partners):
        if b is None:
            continue
        m = meas[a, b]
        if config.encounter_model != BLUETOOTH:
            m = max(m, MIN_SIMILARITY)
        z = float(calibration.model(m))
        out.append(EncounterObservation(a, b, z, r_var, config.encounter_model, step))
    return out
