"""Ground-truth walkers: random waypoints, fixed step length, wall reflection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..slam import ControlInput, Pose, wrap_angle
from .environment import Environment


@dataclass
class AgentTruth:
    id: int
    pose: Pose
    waypoint: np.ndarray
    speed: float = 0.7
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.waypoint = np.asarray(self.waypoint, dtype=float)
        if not self.trace:
            self.trace.append(self.pose)


def spawn_agents(env: Environment, n: int, speed: float, rng: np.random.Generator,
                 entrance=None) -> list[AgentTruth]:
    """Agents at the entrance facing into the building, or uniform if no entrance."""
    return [enter(env, i, speed, rng, entrance) for i in range(n)]


def enter(env: Environment, agent_id: int, speed: float, rng: np.random.Generator,
          entrance=None) -> AgentTruth:
    if entrance is None:
        xy = rng.uniform((0.0, 0.0), (env.width, env.height))
        phi = rng.uniform(-np.pi, np.pi)
    else:
        xy = np.asarray(entrance, dtype=float)
        phi = float(np.arctan2(env.height / 2 - xy[1], env.width / 2 - xy[0]))
    wp = rng.uniform((0.0, 0.0), (env.width, env.height))
    return AgentTruth(agent_id, Pose(xy[0], xy[1], phi), wp, speed)


def _reflect(xy, heading: float, step: float, env: Environment) -> float:
    """Heading after specular reflection off any wall the step would cross."""
    dx, dy = np.cos(heading), np.sin(heading)
    nx, ny = xy[0] + step * dx, xy[1] + step * dy
    if nx < 0 or nx > env.width:
        dx = -dx
    if ny < 0 or ny > env.height:
        dy = -dy
    return float(np.arctan2(dy, dx))


def advance_agents(env: Environment, agents: list[AgentTruth], rng: np.random.Generator,
                   sigma_l: float = 0.0, sigma_phi: float = 0.0, wander: float = 0.0):
    """Move every agent one step toward its waypoint.

    Returns ``(true_controls, observed_controls)``, lists of ControlInput. The
    observed control adds N(0, sigma_l) and N(0, sigma_phi) to the true one
    (displacement clipped at 0). ``wander`` is heading jitter (rad) around the
    waypoint bearing.
    """
    true_u, obs_u = [], []
    for agent in agents:
        xy = agent.pose.xy
        to_wp = agent.waypoint - xy
        if np.hypot(*to_wp) < agent.speed:
            agent.waypoint = rng.uniform((0.0, 0.0), (env.width, env.height))
            to_wp = agent.waypoint - xy
        heading = float(np.arctan2(to_wp[1], to_wp[0])) + (rng.normal(0.0, wander) if wander > 0 else 0.0)
        heading = _reflect(xy, heading, agent.speed, env)
        new_xy = xy + agent.speed * np.array([np.cos(heading), np.sin(heading)])
        # corner case safety: never leave the rectangle
        new_xy = np.clip(new_xy, (0.0, 0.0), (env.width, env.height))
        dphi = wrap_angle(heading - agent.pose.phi)
        agent.pose = Pose(new_xy[0], new_xy[1], heading)
        agent.trace.append(agent.pose)
        true_u.append(ControlInput(agent.speed, dphi))
        l_obs = agent.speed + (rng.normal(0.0, sigma_l) if sigma_l > 0 else 0.0)
        p_obs = dphi + (rng.normal(0.0, sigma_phi) if sigma_phi > 0 else 0.0)
        obs_u.append(ControlInput(max(l_obs, 0.0), p_obs))
    return true_u, obs_u
