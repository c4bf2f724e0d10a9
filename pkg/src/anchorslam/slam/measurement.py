"""Measurement prediction, linearization and the Gaussian proposal update.

The kernels here work on a leading batch axis (one row per particle) so the
filter can refine every particle of a user in one call. The single-pose
functions at the bottom are thin wrappers with a batch of one.
"""

from __future__ import annotations

import numpy as np

from .types import (AnchorEstimate, DegenerateGeometryError, MeasurementMode,
                    NoiseParams, Pose)

EPS_REG = 1e-9
_MIN_SEPARATION = 1e-9


def batch_predict(pos: np.ndarray, anchor_mu: np.ndarray, mode: MeasurementMode) -> np.ndarray:
    """Predicted measurement, shape (B, k)."""
    offset = anchor_mu - pos
    if mode is MeasurementMode.OFFSET:
        return offset
    return np.linalg.norm(offset, axis=-1, keepdims=True)


def batch_jacobians(pos: np.ndarray, anchor_mu: np.ndarray, mode: MeasurementMode):
    """Jacobians w.r.t. user position and anchor position, each (B, k, 2).

    Also returns a boolean mask of rows where the range linearization is
    undefined (user on top of the anchor). Those rows get a zero Jacobian.
    """
    pos = np.asarray(pos, dtype=float)
    anchor_mu = np.broadcast_to(np.asarray(anchor_mu, dtype=float), pos.shape)
    batch = pos.shape[0]
    if mode is MeasurementMode.OFFSET:
        J_n = np.broadcast_to(np.eye(2), (batch, 2, 2)).copy()
        return -J_n, J_n, np.zeros(batch, dtype=bool)
    offset = anchor_mu - pos
    dist = np.linalg.norm(offset, axis=-1)
    degenerate = dist < _MIN_SEPARATION
    safe = np.where(degenerate, 1.0, dist)
    J_n = (offset / safe[:, None])[:, None, :]
    J_n[degenerate] = 0.0
    return -J_n, J_n, degenerate


def inv_regularized(S: np.ndarray):
    """Batched inverse; singular rows get ``EPS_REG`` added to the diagonal."""
    k = S.shape[-1]
    det = np.linalg.det(S)
    bad = ~(np.abs(det) > 0) | ~np.isfinite(det)
    if np.any(bad):
        S = S.copy()
        S[bad] += EPS_REG * np.eye(k)
    return np.linalg.inv(S), int(np.count_nonzero(bad))


def batch_proposal(s_hat, anchor_mu, anchor_sigma, z, P, R, mode: MeasurementMode, lin=None):
    """Gaussian proposal for the refined user position.

    Linearizes at ``lin`` (defaults to ``s_hat``; passing the previous iterate
    gives an iterated-EKF step). All covariances are batched (B, 2, 2) or
    broadcastable to it; ``R`` is (k, k).

    Returns ``(mu, sigma, gain, J_s, degenerate, n_regularized)`` where
    ``gain`` is ``I - K J_s``, the factor that maps prior position
    cross-covariances to posterior ones.
    """
    s_hat = np.asarray(s_hat, dtype=float)
    batch = s_hat.shape[0]
    lin = s_hat if lin is None else np.asarray(lin, dtype=float)
    anchor_mu = np.broadcast_to(np.asarray(anchor_mu, dtype=float), (batch, 2))
    anchor_sigma = np.broadcast_to(np.asarray(anchor_sigma, dtype=float), (batch, 2, 2))
    P = np.broadcast_to(np.asarray(P, dtype=float), (batch, 2, 2))
    z = np.broadcast_to(np.asarray(z, dtype=float).reshape(-1, mode.dim), (batch, mode.dim))

    z_pred = batch_predict(lin, anchor_mu, mode)
    J_s, J_n, degenerate = batch_jacobians(lin, anchor_mu, mode)
    J_sT = np.swapaxes(J_s, -1, -2)
    Q = J_n @ anchor_sigma @ np.swapaxes(J_n, -1, -2) + R
    # Covariance form of [J_s^T Q^-1 J_s + P^-1]^-1 and K = Sigma J_s^T Q^-1
    # (matrix inversion lemma); stays defined when P is singular.
    S = J_s @ P @ J_sT + Q
    S_inv, n_reg = inv_regularized(S)
    K = P @ J_sT @ S_inv
    gain = np.eye(2) - K @ J_s
    sigma = gain @ P
    sigma = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
    innovation = z - z_pred - (J_s @ (s_hat - lin)[..., None])[..., 0]
    mu = s_hat + (K @ innovation[..., None])[..., 0]
    if np.any(degenerate):
        mu[degenerate] = s_hat[degenerate]
        sigma[degenerate] = P[degenerate]
        gain[degenerate] = np.eye(2)
    return mu, sigma, gain, J_s, degenerate, n_reg


def sample_gaussian(mu: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one sample per row from N(mu, cov); cov may be singular."""
    w, v = np.linalg.eigh(cov)
    root = v * np.sqrt(np.clip(w, 0.0, None))[..., None, :]
    xi = rng.standard_normal(mu.shape)
    return mu + (root @ xi[..., None])[..., 0]


# -- single-pose API ---------------------------------------------------------

def predict_measurement(pose: Pose, anchor_mu, mode: MeasurementMode | str):
    """Range (float) or offset (2-vector) from ``pose`` to ``anchor_mu``."""
    mode = MeasurementMode(mode)
    z = batch_predict(pose.xy[None], np.asarray(anchor_mu, dtype=float).reshape(1, 2), mode)[0]
    return float(z[0]) if mode is MeasurementMode.RANGE else z


def measurement_jacobians(pose: Pose, anchor_mu, mode: MeasurementMode | str):
    """``(J_s, J_n)``: 2x2 matrices in offset mode, 1x2 rows in range mode."""
    mode = MeasurementMode(mode)
    J_s, J_n, degenerate = batch_jacobians(pose.xy[None], np.asarray(anchor_mu, dtype=float).reshape(1, 2), mode)
    if degenerate[0]:
        raise DegenerateGeometryError("range Jacobian undefined: user position coincides with the anchor")
    return J_s[0], J_n[0]


def refine_particle_position(s_hat: Pose, anchor: AnchorEstimate, z, noise: NoiseParams,
                             mode: MeasurementMode | str, rng: np.random.Generator,
                             diagnostics: dict | None = None):
    """Refine a predicted pose against one anchor and sample the new position.

    The anchor may be a building anchor from the particle's map or another
    user's published estimate. Returns ``(pose, proposal_mean, proposal_cov)``;
    the sampled pose keeps the heading of ``s_hat``.
    """
    mode = MeasurementMode(mode)
    mu, sigma, _, _, degenerate, n_reg = batch_proposal(
        s_hat.xy[None], anchor.mu[None], anchor.sigma[None], z, noise.P[None],
        noise.R_matrix(mode), mode)
    if diagnostics is not None:
        diagnostics["regularized"] = diagnostics.get("regularized", 0) + n_reg
    if degenerate[0]:
        raise DegenerateGeometryError("range Jacobian undefined: user position coincides with the anchor")
    xy = sample_gaussian(mu, sigma, rng)[0]
    return Pose(float(xy[0]), float(xy[1]), s_hat.phi), mu[0], sigma[0]
