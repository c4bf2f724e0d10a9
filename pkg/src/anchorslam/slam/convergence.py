"""Closed-form expected error after one linear (offset-mode) refinement."""

from __future__ import annotations

import numpy as np


def _as_matrix(a, dim: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a * np.eye(dim) if a.ndim == 0 else a.reshape(dim, dim)


def contraction_matrix(R, sigma_anchor, P) -> np.ndarray:
    """``[I + (R + Sigma_anchor) P^-1]^-1``; its spectral norm is < 1."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    dim = P.shape[0]
    R = _as_matrix(R, dim)
    sigma_anchor = _as_matrix(sigma_anchor, dim)
    P = _as_matrix(P, dim)
    try:
        P_inv = np.linalg.inv(P)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("control covariance P is singular") from None
    return np.linalg.inv(np.eye(dim) + (R + sigma_anchor) @ P_inv)


def expected_error_contraction(psi_prev, R, sigma_anchor, P, psi_anchor):
    """Expected user error after refining against an anchor.

    ``psi_prev`` is the user's position error before the update and
    ``psi_anchor`` the anchor's (zero for a surveyed building anchor). The user
    moves toward the anchor's error by the contraction factor:
    ``psi_prev + C (psi_anchor - psi_prev)``.
    """
    psi_prev = np.atleast_1d(np.asarray(psi_prev, dtype=float))
    psi_anchor = np.broadcast_to(np.asarray(psi_anchor, dtype=float), psi_prev.shape)
    dim = psi_prev.shape[0]
    C = contraction_matrix(R, sigma_anchor, _as_matrix(P, dim))
    out = psi_prev + C @ (psi_anchor - psi_prev)
    return float(out[0]) if dim == 1 and np.ndim(P) == 0 else out
