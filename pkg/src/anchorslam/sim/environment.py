"""Synthetic building: anchors and WiFi access points in a rectangle."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import ConfigError, SimConfig

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass
class Environment:
    width: float
    height: float
    anchor_pos: np.ndarray          # (N, 2)
    anchor_types: tuple             # N type names
    ap_pos: np.ndarray              # (A, 2)
    ap_tx: np.ndarray               # (A,) dBm at 1 m
    ap_gamma: np.ndarray            # (A,) path-loss exponent
    rss_noise: float = 3.0

    def __post_init__(self):
        for name, pts in (("anchor", self.anchor_pos), ("access point", self.ap_pos)):
            if len(pts) and (np.any(pts < 0) or np.any(pts[:, 0] > self.width) or np.any(pts[:, 1] > self.height)):
                raise ValueError(f"{name} outside the environment bounds")
        if len(self.anchor_types) != len(self.anchor_pos):
            raise ValueError("one type per anchor required")

    @property
    def n_anchors(self) -> int:
        return len(self.anchor_pos)

    @property
    def ap_ids(self) -> list[str]:
        return [f"ap{i:03d}" for i in range(len(self.ap_pos))]

    def contains(self, pos) -> np.ndarray:
        pos = np.asarray(pos, dtype=float)
        return (pos[..., 0] >= 0) & (pos[..., 0] <= self.width) & (pos[..., 1] >= 0) & (pos[..., 1] <= self.height)

    def dump(self) -> str:
        """Plain-text listing of every anchor and AP, one record per line."""
        lines = [f"# environment width={self.width!r} height={self.height!r} rss_noise={self.rss_noise!r}",
                 "kind,id,x,y,type_or_tx,gamma"]
        for i, (p, t) in enumerate(zip(self.anchor_pos, self.anchor_types)):
            lines.append(f"anchor,{i},{p[0]!r},{p[1]!r},{t},")
        for i, (p, tx, g) in enumerate(zip(self.ap_pos, self.ap_tx, self.ap_gamma)):
            lines.append(f"ap,ap{i:03d},{p[0]!r},{p[1]!r},{tx!r},{g!r}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dump())


def _place(n: int, width: float, height: float, sep: float, rng: np.random.Generator,
           what: str) -> np.ndarray:
    pts = np.empty((n, 2))
    placed = 0
    attempts = 0
    while placed < n:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise ConfigError(f"cannot place {n} {what}s {sep} m apart in {width}x{height} m")
        cand = rng.uniform((0.0, 0.0), (width, height))
        if placed and np.min(np.linalg.norm(pts[:placed] - cand, axis=1)) < sep:
            continue
        pts[placed] = cand
        placed += 1
    return pts


def generate_environment(config: SimConfig, rng: np.random.Generator) -> Environment:
    """Anchors and APs uniform in the rectangle, rejection-sampled for separation."""
    anchors = _place(config.n_building_anchors, config.width, config.height,
                     config.min_separation, rng, "building anchor")
    types = tuple(str(t) for t in rng.choice(config.anchor_types, size=config.n_building_anchors))
    aps = _place(config.n_access_points, config.width, config.height, config.min_separation, rng,
                 "access point")
    n_ap = config.n_access_points
    return Environment(config.width, config.height, anchors, types, aps,
                       np.full(n_ap, config.wifi_tx_power), np.full(n_ap, config.wifi_gamma),
                       config.wifi_rss_noise)
