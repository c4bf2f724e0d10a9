"""Per-user particle filter with private anchor maps.

A :class:`SlamState` stores its particles column-wise (poses, covariances,
weights and padded anchor arrays) so each filter operation touches all
particles of a user at once. :meth:`SlamState.particles` and
:meth:`SlamState.from_particles` convert to and from :class:`Particle` objects.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..encounter import EncounterObservation
from .measurement import (batch_jacobians, batch_predict, batch_proposal,
                          inv_regularized, sample_gaussian)
from .types import (AnchorEstimate, AssociationResult, ConfusionMatrix,
                    ControlInput, MeasurementMode, NoiseParams, Particle, Pose,
                    wrap_angle)

ONE_SHOT = "one_shot"
ITERATIVE = "iterative"


@dataclass(frozen=True)
class AnchorObservation:
    """A building anchor detection: measurement ``z`` and detected type."""

    z: np.ndarray | float
    f_hat: str
    anchor_id: int | None = None


@dataclass(frozen=True)
class PublishedEstimate:
    """What a user exposes to others: position mean and 2x2 covariance."""

    mean: np.ndarray
    cov: np.ndarray
    user_id: int | None = None

    @property
    def confidence_trace(self) -> float:
        return float(np.trace(self.cov))


@dataclass
class FilterConfig:
    noise: NoiseParams = field(default_factory=NoiseParams)
    mode: MeasurementMode = MeasurementMode.RANGE
    sampling: str = ITERATIVE
    beta: float = 0.1
    max_iters: int = 10
    p0: float = 0.1
    confusion: ConfusionMatrix = field(
        default_factory=lambda: ConfusionMatrix.symmetric(("elevator", "stairs", "turn", "organic"), 0.85))
    building_R: np.ndarray | float = 0.25

    def __post_init__(self):
        self.mode = MeasurementMode(self.mode)
        if self.sampling not in (ONE_SHOT, ITERATIVE):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.p0 > 0:
            raise ValueError("p0 must be > 0")


def _new_diagnostics() -> dict:
    return {"regularized": 0, "degenerate": 0, "degeneracy_resets": 0, "resamples": 0,
            "refine_iterations": 0, "human_updates": 0, "building_updates": 0, "new_anchors": 0}


class SlamState:
    """All particles of one user."""

    def __init__(self, user_id, poses, cov, weights, anc_mu, anc_sigma, anc_type, n_anchors,
                 types: Sequence[str], best: int = 0, diagnostics: dict | None = None,
                 step_cov=None):
        self.user_id = user_id
        self.poses = np.asarray(poses, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.anc_mu = anc_mu
        self.anc_sigma = anc_sigma
        self.anc_type = anc_type
        self.n_anchors = np.asarray(n_anchors, dtype=int)
        self.types = tuple(types)
        self.best = int(best)
        self.diagnostics = diagnostics if diagnostics is not None else _new_diagnostics()
        # position covariance injected by the latest motion update alone
        self.step_cov = np.zeros((self.M, 2, 2)) if step_cov is None else np.asarray(step_cov, dtype=float)

    @classmethod
    def initial(cls, user_id, pose: Pose, n_particles: int, types: Sequence[str] = ("organic",),
                pose_cov=None, capacity: int = 8) -> "SlamState":
        """All particles at ``pose`` with equal weight and an empty map."""
        if n_particles < 1:
            raise ValueError("need at least one particle")
        M = n_particles
        cov = np.zeros((M, 3, 3)) if pose_cov is None else np.broadcast_to(pose_cov, (M, 3, 3)).copy()
        return cls(user_id, np.tile(pose.as_array(), (M, 1)), cov, np.full(M, 1.0 / M),
                   np.zeros((M, capacity, 2)), np.zeros((M, capacity, 2, 2)),
                   np.zeros((M, capacity), dtype=int), np.zeros(M, dtype=int), types)

    @property
    def M(self) -> int:
        return self.poses.shape[0]

    @property
    def capacity(self) -> int:
        return self.anc_mu.shape[1]

    def copy(self) -> "SlamState":
        return SlamState(self.user_id, self.poses.copy(), self.cov.copy(), self.weights.copy(),
                         self.anc_mu.copy(), self.anc_sigma.copy(), self.anc_type.copy(),
                         self.n_anchors.copy(), self.types, self.best, copy.deepcopy(self.diagnostics),
                         self.step_cov.copy())

    def published_estimate(self) -> PublishedEstimate:
        i = self.best
        return PublishedEstimate(self.poses[i, :2].copy(), self.cov[i, :2, :2].copy(), self.user_id)

    @property
    def published_pose(self) -> Pose:
        return Pose.from_array(self.poses[self.best])

    def type_index(self, ftype: str) -> int:
        try:
            return self.types.index(ftype)
        except ValueError:
            raise ValueError(f"unknown anchor type {ftype!r}") from None

    def add_known_anchor(self, mu, sigma, ftype: str) -> None:
        """Seed every particle's map with an anchor whose location is known."""
        self._ensure_capacity(int(self.n_anchors.max()) + 1)
        rows = np.arange(self.M)
        slot = self.n_anchors
        self.anc_mu[rows, slot] = mu
        self.anc_sigma[rows, slot] = np.asarray(sigma, dtype=float) * (np.eye(2) if np.ndim(sigma) == 0 else 1)
        self.anc_type[rows, slot] = self.type_index(ftype)
        self.n_anchors += 1

    def _ensure_capacity(self, needed: int) -> None:
        if needed <= self.capacity:
            return
        new_cap = max(needed, 2 * self.capacity)
        pad = new_cap - self.capacity
        self.anc_mu = np.concatenate([self.anc_mu, np.zeros((self.M, pad, 2))], axis=1)
        self.anc_sigma = np.concatenate([self.anc_sigma, np.zeros((self.M, pad, 2, 2))], axis=1)
        self.anc_type = np.concatenate([self.anc_type, np.zeros((self.M, pad), dtype=int)], axis=1)

    # -- conversion --------------------------------------------------------

    def particle(self, m: int) -> Particle:
        anchors = [AnchorEstimate(self.anc_mu[m, n].copy(), self.anc_sigma[m, n].copy(),
                                  self.types[self.anc_type[m, n]])
                   for n in range(self.n_anchors[m])]
        return Particle(Pose.from_array(self.poses[m]), float(self.weights[m]), anchors, self.cov[m].copy())

    def particles(self) -> list[Particle]:
        return [self.particle(m) for m in range(self.M)]

    @classmethod
    def from_particles(cls, user_id, particles: Sequence[Particle], types: Sequence[str],
                       best: int | None = None) -> "SlamState":
        M = len(particles)
        if M == 0:
            raise ValueError("need at least one particle")
        types = tuple(types)
        cap = max(8, max(p.n_anchors for p in particles))
        state = cls.initial(user_id, particles[0].pose, M, types, capacity=cap)
        for m, p in enumerate(particles):
            state.poses[m] = p.pose.as_array()
            state.cov[m] = p.cov
            state.weights[m] = p.weight
            state.n_anchors[m] = p.n_anchors
            for n, a in enumerate(p.anchors):
                state.anc_mu[m, n] = a.mu
                state.anc_sigma[m, n] = a.sigma
                state.anc_type[m, n] = types.index(a.ftype)
        state.best = int(np.argmax(state.weights)) if best is None else best
        return state

    # -- snapshots ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "types": list(self.types),
            "best": self.best,
            "diagnostics": dict(self.diagnostics),
            "particles": [
                {
                    "pose": self.poses[m].tolist(),
                    "weight": float(self.weights[m]),
                    "cov": self.cov[m].tolist(),
                    "anchors": [
                        {"mu": self.anc_mu[m, n].tolist(), "sigma": self.anc_sigma[m, n].tolist(),
                         "ftype": self.types[self.anc_type[m, n]]}
                        for n in range(self.n_anchors[m])
                    ],
                }
                for m in range(self.M)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SlamState":
        particles = [
            Particle(Pose.from_array(p["pose"]), p["weight"],
                     [AnchorEstimate(a["mu"], a["sigma"], a["ftype"]) for a in p["anchors"]],
                     np.array(p["cov"]))
            for p in data["particles"]
        ]
        state = cls.from_particles(data["user_id"], particles, data["types"], best=data["best"])
        state.diagnostics.update(data.get("diagnostics", {}))
        return state


# -- motion --------------------------------------------------------------------

def _motion_batch(poses, cov, u: ControlInput, noise: NoiseParams, rng):
    M = poses.shape[0]
    L = u.l_hat + noise.sigma_l * rng.standard_normal(M)
    dphi = u.phi_hat + noise.sigma_phi * rng.standard_normal(M)
    phi = wrap_angle(poses[:, 2] + dphi)
    c, s = np.cos(phi), np.sin(phi)
    out = np.column_stack([poses[:, 0] + L * c, poses[:, 1] + L * s, phi])

    # first-order covariance propagation around the control estimate
    l = u.l_hat
    F = np.broadcast_to(np.eye(3), (M, 3, 3)).copy()
    F[:, 0, 2] = -l * s
    F[:, 1, 2] = l * c
    G = np.zeros((M, 3, 2))
    G[:, 0, 0], G[:, 1, 0] = c, s
    G[:, 0, 1], G[:, 1, 1], G[:, 2, 1] = -l * s, l * c, 1.0
    W = np.diag([noise.sigma_l**2, noise.sigma_phi**2])
    step = G @ W @ np.swapaxes(G, 1, 2)
    new_cov = F @ cov @ np.swapaxes(F, 1, 2) + step
    return out, 0.5 * (new_cov + np.swapaxes(new_cov, 1, 2)), step[:, :2, :2]


def motion_update(particle: Particle, u: ControlInput, noise: NoiseParams,
                  rng: np.random.Generator) -> Particle:
    """Sample a new pose for one particle from the dead-reckoning model."""
    poses, cov, _ = _motion_batch(particle.pose.as_array()[None], particle.cov[None], u, noise, rng)
    return Particle(Pose.from_array(poses[0]), particle.weight, list(particle.anchors), cov[0])


def predict(state: SlamState, u: ControlInput, noise: NoiseParams, rng: np.random.Generator) -> SlamState:
    """Motion update of every particle in place."""
    state.poses, state.cov, state.step_cov = _motion_batch(state.poses, state.cov, u, noise, rng)
    return state


# -- refinement ----------------------------------------------------------------

def _refine_batch(state: SlamState, idx, anchor_mu, anchor_sigma, z, R, mode: MeasurementMode,
                  rng, max_iters: int = 1, beta: float = np.inf):
    """Refine the particles in ``idx`` against one anchor each, in place.

    With ``max_iters > 1`` the measurement is relinearized at the latest mean
    until successive means move less than ``beta`` (iterated EKF); the prior
    stays fixed so the measurement is only counted once.

    The mean and the stored covariance come from the particle's accumulated
    covariance. The spread of the sampled position comes from the same update
    applied to the latest step's motion covariance only: the cloud already
    carries the accumulated spread, so drawing from the full posterior would
    inject it a second time at every observation.
    """
    idx = np.asarray(idx)
    if idx.size == 0:
        return
    s_hat = state.poses[idx, :2]
    P = state.cov[idx, :2, :2]
    lin = s_hat
    active = np.ones(idx.size, dtype=bool)
    mu = s_hat.copy()
    sigma = P.copy()
    gain = np.broadcast_to(np.eye(2), (idx.size, 2, 2)).copy()
    degenerate = np.zeros(idx.size, dtype=bool)
    it = 0
    while it < max_iters and np.any(active):
        it += 1
        a = np.flatnonzero(active)
        m, sg, g, _, deg, n_reg = batch_proposal(
            s_hat[a], np.broadcast_to(anchor_mu, (idx.size, 2))[a],
            np.broadcast_to(anchor_sigma, (idx.size, 2, 2))[a], np.broadcast_to(z, (idx.size, mode.dim))[a],
            P[a], R, mode, lin=lin[a])
        state.diagnostics["regularized"] += n_reg
        state.diagnostics["refine_iterations"] += a.size
        step = np.linalg.norm(m - lin[a], axis=1)
        ok = ~deg
        # a degenerate relinearization point keeps the last good iterate
        if it == 1:
            degenerate[a[deg]] = True
        mu[a[ok]], sigma[a[ok]], gain[a[ok]] = m[ok], sg[ok], g[ok]
        lin = mu.copy()
        done = (step < beta) | deg
        active[a[done]] = False
    state.diagnostics["degenerate"] += int(np.count_nonzero(degenerate))
    keep = ~degenerate
    rows = idx[keep]
    k = keep.sum()
    _, spread, _, _, _, n_reg = batch_proposal(
        mu[keep], np.broadcast_to(anchor_mu, (idx.size, 2))[keep],
        np.broadcast_to(anchor_sigma, (idx.size, 2, 2))[keep],
        np.broadcast_to(z, (idx.size, mode.dim))[keep], state.step_cov[rows], R, mode)
    state.diagnostics["regularized"] += n_reg
    state.poses[rows, :2] = sample_gaussian(mu[keep], spread, rng) if k else mu[keep]
    cov = state.cov[rows]
    cov[:, :2, :2] = sigma[keep]
    cross = (gain[keep] @ cov[:, :2, 2:3])[..., 0]
    cov[:, :2, 2] = cross
    cov[:, 2, :2] = cross
    state.cov[rows] = cov


def _human_update(state_a: SlamState, partner: PublishedEstimate, obs: EncounterObservation,
                  noise: NoiseParams, mode, rng, max_iters: int, beta: float) -> SlamState:
    mode = MeasurementMode(mode)
    if isinstance(partner, SlamState):
        partner = partner.published_estimate()
    z = _encounter_measurement(obs, mode, state_a, partner)
    R = np.asarray(obs.r_var, dtype=float) * np.eye(mode.dim)
    _refine_batch(state_a, np.arange(state_a.M), partner.mean, partner.cov, z, R, mode, rng,
                  max_iters=max_iters, beta=beta)
    state_a.diagnostics["human_updates"] += 1
    return state_a


def _encounter_measurement(obs: EncounterObservation, mode: MeasurementMode, state: SlamState,
                           partner: PublishedEstimate):
    if mode is MeasurementMode.RANGE:
        return np.array([obs.z])
    # Radio gives a distance only; in offset mode it is laid along the current
    # user-to-partner direction of the published estimates.
    direction = partner.mean - state.published_estimate().mean
    norm = np.linalg.norm(direction)
    unit = direction / norm if norm > 0 else np.array([1.0, 0.0])
    return obs.z * unit


def one_shot_human_update(state_a: SlamState, partner, obs: EncounterObservation, noise: NoiseParams,
                          mode, rng: np.random.Generator) -> SlamState:
    """Refine every particle once against the partner's published estimate.

    The partner acts as an anchor at its published mean with its published
    covariance; the encounter's ``r_var`` is the measurement noise. No map
    entry is touched and weights are left as they are.
    """
    return _human_update(state_a, partner, obs, noise, mode, rng, max_iters=1, beta=np.inf)


def iterative_human_update(state_a: SlamState, partner, obs: EncounterObservation, noise: NoiseParams,
                           mode, beta: float, max_iters: int, rng: np.random.Generator) -> SlamState:
    """Like :func:`one_shot_human_update` but iterated until the mean settles.

    Each particle is relinearized at its newest mean until two successive
    means differ by less than ``beta`` meters or ``max_iters`` is reached.
    """
    if not beta > 0:
        raise ValueError("beta must be > 0")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    return _human_update(state_a, partner, obs, noise, mode, rng, max_iters=max_iters, beta=beta)


# -- data association ----------------------------------------------------------

def _gauss_density(nu: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """N(nu; 0, Q) for batched 1-D or 2-D innovations."""
    k = nu.shape[-1]
    if k == 1:
        q = Q[..., 0, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.exp(-0.5 * nu[..., 0] ** 2 / q) / np.sqrt(2 * np.pi * q)
    a, b, d = Q[..., 0, 0], Q[..., 0, 1], Q[..., 1, 1]
    det = a * d - b * b
    x, y = nu[..., 0], nu[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        maha = (d * x * x - 2 * b * x * y + a * y * y) / det
        return np.exp(-0.5 * maha) / (2 * np.pi * np.sqrt(det))


def _association_batch(pos, anc_mu, anc_sigma, anc_type, n_anchors, z, f_hat_idx: int,
                       confusion_row: np.ndarray, p0: float, R: np.ndarray, mode: MeasurementMode,
                       pos_cov=None):
    """Raw likelihoods for all particles.

    The innovation covariance holds the uncertainty of both ends, the anchor's
    and the particle's own position (``pos_cov``, (M, 2, 2)), plus ``R``.

    Returns ``(raw_existing (M, K), raw_new (M,), n_hat (M,))`` with ``n_hat``
    0-based and equal to ``n_anchors[m]`` for a new anchor.
    """
    M, K = anc_mu.shape[:2]
    valid = np.arange(K)[None, :] < n_anchors[:, None]
    if K == 0:
        raw = np.zeros((M, 0))
    else:
        flat_pos = np.repeat(pos, K, axis=0)
        flat_mu = anc_mu.reshape(M * K, 2)
        z_pred = batch_predict(flat_pos, flat_mu, mode)
        _, J_n, degenerate = batch_jacobians(flat_pos, flat_mu, mode)
        if mode is MeasurementMode.RANGE and np.any(degenerate):
            J_n[degenerate] = np.array([[1.0, 0.0]])
        both = anc_sigma.reshape(M * K, 2, 2)
        if pos_cov is not None:
            both = both + np.repeat(pos_cov, K, axis=0)
        # J_s = -J_n in both modes, so the two terms share one sandwich
        Q = J_n @ both @ np.swapaxes(J_n, 1, 2) + R
        nu = np.asarray(z, dtype=float).reshape(1, mode.dim) - z_pred
        dens = _gauss_density(nu, Q).reshape(M, K)
        dens = np.nan_to_num(dens, nan=0.0, posinf=0.0)
        raw = np.where(valid, dens * confusion_row[anc_type], 0.0)
    raw_new = np.full(M, p0 * confusion_row[f_hat_idx])
    if K:
        best_existing = np.argmax(raw, axis=1)
        best_val = raw[np.arange(M), best_existing]
    else:
        best_existing = np.zeros(M, dtype=int)
        best_val = np.zeros(M)
    # ties favour the lower index; all-zero underflow falls to a new anchor
    take_new = (raw_new > best_val) | (best_val <= 0)
    n_hat = np.where(take_new, n_anchors, best_existing)
    return raw, raw_new, n_hat


def association_likelihoods(particle: Particle, z, f_hat: str, confusion: ConfusionMatrix, p0: float,
                            noise: NoiseParams, mode) -> AssociationResult:
    """Correspondence probabilities of an anchor detection for one particle.

    Existing anchor ``n`` scores ``N(z - z_n; 0, Q_n) * p(f_n | f_hat)`` with
    ``Q_n = J_n (Sigma_n + P) J_n^T + R``, P being the particle's position
    covariance; a new anchor scores ``p0 * p(f_hat | f_hat)``.
    """
    mode = MeasurementMode(mode)
    if not p0 > 0:
        raise ValueError("p0 must be > 0")
    N = particle.n_anchors
    K = max(N, 1)
    anc_mu = np.zeros((1, K, 2))
    anc_sigma = np.zeros((1, K, 2, 2))
    anc_type = np.zeros((1, K), dtype=int)
    for n, a in enumerate(particle.anchors):
        anc_mu[0, n], anc_sigma[0, n], anc_type[0, n] = a.mu, a.sigma, confusion.index(a.ftype)
    row = confusion.probs[confusion.index(f_hat)]
    raw, raw_new, n_hat = _association_batch(
        particle.pose.xy[None], anc_mu, anc_sigma, anc_type, np.array([N]), z,
        confusion.index(f_hat), row, p0, noise.R_matrix(mode), mode, particle.cov[None, :2, :2])
    raw_all = np.append(raw[0, :N], raw_new[0])
    probs = raw_all / raw_all.sum() if raw_all.sum() > 0 else np.eye(N + 1)[N]
    return AssociationResult(probs, int(n_hat[0]) + 1, raw_all)


# -- map update ----------------------------------------------------------------

def _map_update_batch(state: SlamState, rows, n_hat, z, R, mode: MeasurementMode, f_hat_idx: int):
    rows = np.asarray(rows)
    if rows.size == 0:
        return
    n_hat = np.asarray(n_hat)
    new = n_hat >= state.n_anchors[rows]
    if np.any(new):
        r_new = rows[new]
        state._ensure_capacity(int(state.n_anchors[r_new].max()) + 1)
        slot = state.n_anchors[r_new]
        state.anc_mu[r_new, slot] = state.poses[r_new, :2]
        if mode is MeasurementMode.OFFSET:
            state.anc_sigma[r_new, slot] = R
        else:
            # a range fixes distance, not bearing: spread the anchor over the ring
            r = float(np.asarray(z).ravel()[0])
            state.anc_sigma[r_new, slot] = (0.5 * r * r + R[0, 0]) * np.eye(2)
        state.anc_type[r_new, slot] = f_hat_idx
        state.n_anchors[r_new] += 1
        state.diagnostics["new_anchors"] += int(r_new.size)
    old = ~new
    if np.any(old):
        r_old, n_old = rows[old], n_hat[old]
        mu = state.anc_mu[r_old, n_old]
        sigma = state.anc_sigma[r_old, n_old]
        pos = state.poses[r_old, :2]
        z_pred = batch_predict(pos, mu, mode)
        _, J_n, degenerate = batch_jacobians(pos, mu, mode)
        J_nT = np.swapaxes(J_n, 1, 2)
        Q = J_n @ sigma @ J_nT + R
        Q_inv, n_reg = inv_regularized(Q)
        state.diagnostics["regularized"] += n_reg
        K = sigma @ J_nT @ Q_inv
        nu = np.asarray(z, dtype=float).reshape(1, mode.dim) - z_pred
        mu_new = mu + (K @ nu[..., None])[..., 0]
        sigma_new = (np.eye(2) - K @ J_n) @ sigma
        sigma_new = 0.5 * (sigma_new + np.swapaxes(sigma_new, 1, 2))
        ok = ~degenerate
        state.anc_mu[r_old[ok], n_old[ok]] = mu_new[ok]
        state.anc_sigma[r_old[ok], n_old[ok]] = sigma_new[ok]
        state.diagnostics["degenerate"] += int(np.count_nonzero(degenerate))


def map_update(particle: Particle, n_hat: int, z, noise: NoiseParams, mode, f_hat: str | None = None,
               types: Sequence[str] | None = None) -> Particle:
    """Create anchor ``n_hat`` (1-based) if it is new, otherwise EKF-update it.

    A new anchor is placed at the particle position with covariance ``R``.
    """
    mode = MeasurementMode(mode)
    N = particle.n_anchors
    if not 1 <= n_hat <= N + 1:
        raise ValueError(f"n_hat must be in [1, {N + 1}], got {n_hat}")
    ftype = f_hat if f_hat is not None else "organic"
    types = tuple(types) if types is not None else tuple(
        dict.fromkeys([a.ftype for a in particle.anchors] + [ftype]))
    state = SlamState.from_particles(None, [particle], types)
    _map_update_batch(state, np.array([0]), np.array([n_hat - 1]), z, noise.R_matrix(mode), mode,
                      types.index(ftype))
    return state.particle(0)


def update_weight(particle: Particle, p_nhat: float) -> Particle:
    if p_nhat < 0:
        raise ValueError("likelihood must be >= 0")
    return Particle(particle.pose, particle.weight * p_nhat, list(particle.anchors), particle.cov.copy())


# -- resampling ----------------------------------------------------------------

def normalize_and_resample(state: SlamState, rng: np.random.Generator) -> SlamState:
    """Normalize weights, record the best particle, draw M with replacement.

    If every weight is zero the set is kept as is with uniform weights and a
    degeneracy reset is counted.
    """
    total = state.weights.sum()
    M = state.M
    if not total > 0 or not np.isfinite(total):
        state.weights = np.full(M, 1.0 / M)
        state.diagnostics["degeneracy_resets"] += 1
        return state
    w = state.weights / total
    best = int(np.argmax(w))
    idx = rng.choice(M, size=M, replace=True, p=w)
    state.poses = state.poses[idx]
    state.cov = state.cov[idx]
    state.step_cov = state.step_cov[idx]
    state.anc_mu = state.anc_mu[idx]
    state.anc_sigma = state.anc_sigma[idx]
    state.anc_type = state.anc_type[idx]
    state.n_anchors = state.n_anchors[idx]
    state.weights = np.full(M, 1.0 / M)
    hits = np.flatnonzero(idx == best)
    if hits.size:
        state.best = int(hits[0])
    else:
        ancestors, counts = np.unique(idx, return_counts=True)
        state.best = int(np.flatnonzero(idx == ancestors[np.argmax(counts)])[0])
    state.diagnostics["resamples"] += 1
    return state


# -- building anchors and the full step ------------------------------------------

def building_update(state: SlamState, obs: AnchorObservation, config: FilterConfig,
                    rng: np.random.Generator) -> SlamState:
    """Associate, refine, update the map and reweight every particle, then resample."""
    mode = config.mode
    R = config.noise.with_R(config.building_R).R_matrix(mode)
    confusion = config.confusion
    f_idx = confusion.index(obs.f_hat)
    z = np.asarray(obs.z, dtype=float).reshape(mode.dim)
    # state.types must list the confusion types in the same order
    raw, raw_new, n_hat = _association_batch(
        state.poses[:, :2], state.anc_mu, state.anc_sigma, state.anc_type, state.n_anchors, z,
        f_idx, confusion.probs[f_idx], config.p0, R, mode, state.cov[:, :2, :2])
    M = state.M
    rows = np.arange(M)
    existing = n_hat < state.n_anchors
    p_hat = raw_new.copy()
    p_hat[existing] = raw[rows[existing], n_hat[existing]]
    r_ex = rows[existing]
    if r_ex.size:
        _refine_batch(state, r_ex, state.anc_mu[r_ex, n_hat[existing]],
                      state.anc_sigma[r_ex, n_hat[existing]], z, R, mode, rng)
    _map_update_batch(state, rows, n_hat, z, R, mode, f_idx)
    state.weights = state.weights * p_hat
    state.diagnostics["building_updates"] += 1
    return normalize_and_resample(state, rng)


def slam_step(state: SlamState, u: ControlInput | None, obs=None, partner=None,
              config: FilterConfig | None = None, rng: np.random.Generator | None = None) -> SlamState:
    """One filter step: motion update, then at most one observation.

    ``obs`` is an :class:`~anchorslam.encounter.EncounterObservation` (needs
    ``partner``), an :class:`AnchorObservation`, or ``None``.
    """
    config = config or FilterConfig()
    if rng is None:
        raise ValueError("slam_step needs an explicit random generator")
    if u is not None:
        predict(state, u, config.noise, rng)
    return observe(state, obs, partner, config, rng)


def observe(state: SlamState, obs, partner, config: FilterConfig, rng: np.random.Generator) -> SlamState:
    if obs is None:
        return state
    if isinstance(obs, EncounterObservation):
        if partner is None:
            raise ValueError("a human encounter needs the partner's published estimate")
        if config.sampling == ITERATIVE:
            return iterative_human_update(state, partner, obs, config.noise, config.mode,
                                          config.beta, config.max_iters, rng)
        return one_shot_human_update(state, partner, obs, config.noise, config.mode, rng)
    if isinstance(obs, AnchorObservation):
        return building_update(state, obs, config, rng)
    raise TypeError(f"unsupported observation {type(obs).__name__}")
