"""One simulated trial: truth, radio, and a filter per agent, stepped together."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import SimConfig
from ..slam import SlamState, observe, predict
from .agents import advance_agents, enter, spawn_agents
from .environment import Environment, generate_environment
from .events import detect_building_anchor_event, detect_encounters
from .radio import Calibration, calibrate

LOG_COLUMNS = ("step", "agent_id", "true_x", "true_y", "est_x", "est_y", "error_m", "event_tag")
KNOWN_ANCHOR_VAR = 1e-4


class SimulationError(RuntimeError):
    pass


@dataclass
class EventLog:
    """One record per (step, agent)."""

    step: np.ndarray
    agent_id: np.ndarray
    true_xy: np.ndarray
    est_xy: np.ndarray
    tags: list

    @property
    def error(self) -> np.ndarray:
        return np.linalg.norm(self.true_xy - self.est_xy, axis=1)

    def __len__(self) -> int:
        return len(self.step)

    def to_text(self) -> str:
        err = self.error
        lines = [",".join(LOG_COLUMNS)]
        for k in range(len(self)):
            lines.append(f"{self.step[k]},{self.agent_id[k]},{self.true_xy[k, 0]:.6f},{self.true_xy[k, 1]:.6f},"
                         f"{self.est_xy[k, 0]:.6f},{self.est_xy[k, 1]:.6f},{err[k]:.6f},{self.tags[k]}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "EventLog":
        rows = Path(path).read_text().splitlines()
        if not rows or rows[0].split(",") != list(LOG_COLUMNS):
            raise ValueError(f"{path}: not an event log")
        parts = [r.split(",") for r in rows[1:] if r]
        step = np.array([int(p[0]) for p in parts], dtype=int)
        agent = np.array([int(p[1]) for p in parts], dtype=int)
        num = np.array([[float(x) for x in p[2:6]] for p in parts]).reshape(-1, 4)
        return cls(step, agent, num[:, :2], num[:, 2:], [p[7] for p in parts])


@dataclass
class SimResult:
    config: SimConfig
    log: EventLog
    env: Environment
    calibration: Calibration | None
    slam_seconds: float
    slam_calls: int
    encounters: int
    anchor_hits: int
    states: list = field(repr=False, default_factory=list)

    @property
    def ms_per_step(self) -> float:
        return 1e3 * self.slam_seconds / max(self.slam_calls, 1)


def rng_streams(seed: int, n_agents: int) -> dict:
    """Independent generators so that changing one knob leaves the others' draws alone."""
    root = np.random.SeedSequence(seed)
    env, walk, radio, events, calib, filt = root.spawn(6)
    return {
        "env": np.random.default_rng(env),
        "walk": np.random.default_rng(walk),
        "radio": np.random.default_rng(radio),
        "events": np.random.default_rng(events),
        "calibration": np.random.default_rng(calib),
        "filters": [np.random.default_rng(s) for s in filt.spawn(n_agents)],
    }


def _fresh_state(agent, config: SimConfig, env: Environment, types) -> SlamState:
    st = SlamState.initial(agent.id, agent.pose, config.n_particles, types)
    for k in range(config.n_known_anchors):
        st.add_known_anchor(env.anchor_pos[k], KNOWN_ANCHOR_VAR, env.anchor_types[k])
    return st


def run_simulation(config: SimConfig, keep_states: bool = False) -> SimResult:
    """Run ``config.steps`` steps of every agent and log truth against estimates.

    Within a step all agents move and run their motion update first, then the
    published estimates are snapshotted, then observations are applied in
    ascending agent id. A building-anchor hit takes precedence over an
    encounter for the same agent.
    """
    n = config.n_agents
    streams = rng_streams(config.seed, n)
    env = generate_environment(config, streams["env"])
    agents = spawn_agents(env, n, config.step_length, streams["walk"], config.entrance)
    fcfg = config.filter_config()
    confusion = fcfg.confusion
    types = confusion.types
    states = [_fresh_state(agent, config, env, types) for agent in agents]
    calibration = calibrate(config, env, streams["calibration"]) if config.use_encounters else None

    total = config.steps * n
    step_col = np.repeat(np.arange(1, config.steps + 1), n)
    agent_col = np.tile(np.arange(n), config.steps)
    true_xy = np.empty((total, 2))
    est_xy = np.empty((total, 2))
    tags = []
    last_met = np.full((n, n), -np.inf)
    slam_seconds = 0.0
    encounters = anchor_hits = 0
    radio_rng, event_rng = streams["radio"], streams["events"]

    for t in range(1, config.steps + 1):
        if config.session_steps:
            # staggered sessions: agent i leaves and walks back in through the door
            for i in range(n):
                if (t + i * config.session_steps // n) % config.session_steps == 0:
                    agents[i] = enter(env, i, config.step_length, streams["walk"], config.entrance)
                    states[i] = _fresh_state(agents[i], config, env, types)
        _, controls = advance_agents(env, agents, streams["walk"], config.sigma_l, config.sigma_phi,
                                     config.wander)
        tick = np.zeros(n)
        for i in range(n):
            t0 = time.perf_counter()
            try:
                predict(states[i], controls[i], fcfg.noise, streams["filters"][i])
            except Exception as exc:
                raise SimulationError(f"step {t}, agent {i}: motion update failed: {exc}") from exc
            tick[i] += time.perf_counter() - t0
        positions = np.array([a.pose.xy for a in agents])
        published = [s.published_estimate() for s in states]

        hits = [detect_building_anchor_event(env, positions[i], confusion, config.trigger_radius, event_rng,
                                             config.anchor_noise, fcfg.mode) for i in range(n)]
        enc = {}
        if config.use_encounters and n > 1:
            active = radio_rng.uniform(size=n) < config.scan_prob
            blocked = (t - last_met) < config.encounter_cooldown
            for obs in detect_encounters(config, env, positions, published, calibration, radio_rng,
                                         step=t, active=active, blocked=blocked):
                enc[obs.user_a] = obs

        for i in range(n):
            tag = []
            obs = hits[i] if hits[i] is not None else enc.get(i)
            partner = None
            if obs is hits[i] and obs is not None:
                tag = ["anchor", "resample"]
                anchor_hits += 1
            elif obs is not None:
                partner = published[obs.user_b]
                tag = ["encounter"]
                encounters += 1
                last_met[obs.user_a, obs.user_b] = last_met[obs.user_b, obs.user_a] = t
            t0 = time.perf_counter()
            try:
                observe(states[i], obs, partner, fcfg, streams["filters"][i])
            except Exception as exc:
                raise SimulationError(f"step {t}, agent {i}: observation update failed: {exc}") from exc
            tick[i] += time.perf_counter() - t0
            row = (t - 1) * n + i
            true_xy[row] = positions[i]
            est_xy[row] = states[i].poses[states[i].best, :2]
            tags.append("|".join(tag) if tag else "none")
        slam_seconds += tick.sum()

    log = EventLog(step_col, agent_col, true_xy, est_xy, tags)
    return SimResult(config, log, env, calibration, slam_seconds, total, encounters, anchor_hits,
                     states if keep_states else [])
