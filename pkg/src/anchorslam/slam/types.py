from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class SlamError(RuntimeError):
    pass


class DegenerateGeometryError(SlamError):
    """Range linearization requested at zero separation."""


class MeasurementMode(str, Enum):
    """How an anchor observation is expressed.

    ``RANGE`` is a scalar distance between the user and the anchor. ``OFFSET``
    is the 2-vector ``anchor - user``; its Jacobians are constant (±I), which is
    the linear setting the convergence analysis relies on.
    """

    RANGE = "range"
    OFFSET = "offset"

    @property
    def dim(self) -> int:
        return 1 if self is MeasurementMode.RANGE else 2


def wrap_angle(phi):
    """Wrap to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(phi, dtype=float), 2 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    @classmethod
    def from_array(cls, a) -> "Pose":
        return cls(float(a[0]), float(a[1]), float(a[2]) if len(a) > 2 else 0.0)


@dataclass(frozen=True)
class ControlInput:
    """One dead-reckoning step: displacement (m) and heading change (rad)."""

    l_hat: float
    phi_hat: float

    def __post_init__(self):
        if self.l_hat < 0:
            raise ValueError(f"step displacement must be >= 0, got {self.l_hat}")


def _as_cov(value, dim: int) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return a * np.eye(dim)
    return a.reshape(dim, dim)


@dataclass
class NoiseParams:
    """Noise levels used by the filter.

    ``P`` is the prior position covariance handed to the proposal update. Inside
    :class:`~anchorslam.slam.filter.SlamState` it is replaced per particle by the
    covariance the particle has accumulated since its last correction. ``R`` is
    the measurement covariance: a scalar variance in range mode or a 2x2 matrix
    in offset mode (a scalar is expanded to ``R*I``).
    """

    sigma_l: float = 0.05
    sigma_phi: float = 0.003
    P: np.ndarray = field(default_factory=lambda: np.eye(2))
    R: np.ndarray | float = 1.0

    def __post_init__(self):
        if self.sigma_l < 0 or self.sigma_phi < 0:
            raise ValueError("motion noise std must be >= 0")
        self.P = _as_cov(self.P, 2)

    def R_matrix(self, mode: MeasurementMode) -> np.ndarray:
        return _as_cov(self.R, mode.dim)

    def with_R(self, R) -> "NoiseParams":
        return NoiseParams(self.sigma_l, self.sigma_phi, self.P.copy(), R)


@dataclass
class AnchorEstimate:
    mu: np.ndarray
    sigma: np.ndarray
    ftype: str = "organic"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(2)
        self.sigma = _as_cov(self.sigma, 2)


@dataclass
class Particle:
    """One hypothesis: pose, importance weight, private anchor map.

    ``cov`` is the 3x3 pose covariance the particle has accumulated; its
    position block is the prior used when the particle is refined.
    """

    pose: Pose
    weight: float = 1.0
    anchors: list[AnchorEstimate] = field(default_factory=list)
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("particle weight must be >= 0")
        self.cov = np.asarray(self.cov, dtype=float).reshape(3, 3)

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)


class ConfusionMatrix:
    """Type-confusion probabilities ``p(actual | detected)``.

    ``probs[i, j]`` is the probability that the anchor is really of type
    ``types[j]`` when the detector reported ``types[i]``; every row sums to 1.
    The simulator samples detections from the same rows, which is exact for the
    symmetric matrices used by default.
    """

    def __init__(self, types: Sequence[str], probs):
        self.types = tuple(types)
        self.probs = np.asarray(probs, dtype=float)
        n = len(self.types)
        if len(set(self.types)) != n:
            raise ValueError("anchor types must be unique")
        if self.probs.shape != (n, n):
            raise ValueError(f"confusion matrix must be {n}x{n}, got {self.probs.shape}")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ValueError("confusion entries must lie in [0, 1]")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each confusion row must sum to 1")
        self._index = {t: i for i, t in enumerate(self.types)}

    @classmethod
    def identity(cls, types: Sequence[str]) -> "ConfusionMatrix":
        return cls(types, np.eye(len(types)))

    @classmethod
    def symmetric(cls, types: Sequence[str], accuracy: float) -> "ConfusionMatrix":
        n = len(types)
        if n == 1:
            return cls.identity(types)
        off = (1.0 - accuracy) / (n - 1)
        probs = np.full((n, n), off)
        np.fill_diagonal(probs, accuracy)
        return cls(types, probs)

    def index(self, ftype: str) -> int:
        try:
            return self._index[ftype]
        except KeyError:
            raise ValueError(f"unknown anchor type {ftype!r}") from None

    def p(self, actual: str, detected: str) -> float:
        return float(self.probs[self.index(detected), self.index(actual)])

    def to_dict(self) -> dict:
        return {"types": list(self.types), "probs": self.probs.tolist()}

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConfusionMatrix) and self.types == other.types
                and np.array_equal(self.probs, other.probs))

    def __repr__(self) -> str:
        return f"ConfusionMatrix(types={self.types!r})"


@dataclass(frozen=True)
class AssociationResult:
    """Normalized correspondence probabilities; the last entry is "new anchor".

    ``n_hat`` is 1-based to match the usual ``1..N+1`` numbering. ``raw`` keeps
    the unnormalized likelihoods, which is what reweights the particle.
    """

    probabilities: np.ndarray
    n_hat: int
    raw: np.ndarray

    @property
    def is_new(self) -> bool:
        return self.n_hat == len(self.probabilities)

    @property
    def p_hat(self) -> float:
        return float(self.raw[self.n_hat - 1])


def is_psd(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, np.swapaxes(m, -1, -2), atol=tol, rtol=0):
        return False
    return bool(np.all(np.linalg.eigvalsh(m) >= -tol))
