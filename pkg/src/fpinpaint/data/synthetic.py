"""Log-distance indoor RF field with walls and lognormal shadowing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import RSS_FLOOR, FingerprintMap

# (x1, y1, x2, y2, attenuation_dB)
Wall = tuple[float, float, float, float, float]


def _default_walls() -> list[Wall]:
    # corridor along y in [6, 9] with rooms above and below, door gaps left open
    walls: list[Wall] = [
        (0.0, 6.0, 4.0, 6.0, 4.0),
        (5.5, 6.0, 13.0, 6.0, 4.0),
        (14.5, 6.0, 22.0, 6.0, 4.0),
        (23.5, 6.0, 30.0, 6.0, 4.0),
        (0.0, 9.0, 7.0, 9.0, 4.0),
        (8.5, 9.0, 17.0, 9.0, 4.0),
        (18.5, 9.0, 26.0, 9.0, 4.0),
        (27.5, 9.0, 30.0, 9.0, 4.0),
    ]
    for x in (7.5, 15.0, 22.5):
        walls.append((x, 0.0, x, 6.0, 6.0))
        walls.append((x, 9.0, x, 15.0, 6.0))
    return walls


@dataclass
class SyntheticFieldConfig:
    """Geometry and radio parameters of a synthetic surveyed field.

    ``ap_positions`` is either an explicit list of (x, y) pairs or an AP count;
    counts are placed uniformly at random with ``layout_seed`` so the
    noiseless field depends only on the config.
    """

    width: float = 30.0
    height: float = 15.0
    ap_positions: list | int = 20
    layout_seed: int = 0
    tx_power_at_d0: float = -40.0
    d0: float = 1.0
    gamma: float = 2.5
    walls: list = field(default_factory=_default_walls)
    shadowing_sigma: float = 2.0
    grid_pitch: float = 1.5
    samples_per_point: int = 10
    n_random_points: int = 0
    rss_floor: float = RSS_FLOOR

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.shadowing_sigma < 0:
            raise ValueError("shadowing_sigma must be >= 0")
        if self.samples_per_point < 1:
            raise ValueError("samples_per_point must be >= 1")
        if not (self.width > 0 and self.height > 0 and self.grid_pitch > 0 and self.d0 > 0):
            raise ValueError("width, height, grid_pitch and d0 must be positive")

    def resolved_aps(self) -> np.ndarray:
        if isinstance(self.ap_positions, int):
            rng = np.random.default_rng(self.layout_seed)
            return rng.uniform((0, 0), (self.width, self.height), size=(self.ap_positions, 2))
        return np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticFieldConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown synthetic config keys: {sorted(extra)}")
        d = dict(d)
        if "walls" in d:
            d["walls"] = [tuple(map(float, w)) for w in d["walls"]]
        return cls(**d)


def _crossings(aps: np.ndarray, pts: np.ndarray, walls) -> np.ndarray:
    """Total wall attenuation along each AP->point segment, shape (n_pts, n_aps)."""
    att = np.zeros((len(pts), len(aps)))
    if not len(walls):
        return att
    a = aps[None, :, :]
    p = pts[:, None, :]
    r = a - p
    for x1, y1, x2, y2, db in walls:
        s = np.array([x2 - x1, y2 - y1])
        q = np.array([x1, y1])
        denom = r[..., 0] * s[1] - r[..., 1] * s[0]
        qp = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[..., 0] * s[1] - qp[..., 1] * s[0]) / denom
            u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
        hit = (denom != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
        att += np.where(hit, db, 0.0)
    return att


def path_loss_many(aps: np.ndarray, pts: np.ndarray, cfg: SyntheticFieldConfig) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, None, 0] - aps[None, :, 0], pts[:, None, 1] - aps[None, :, 1])
    rss = cfg.tx_power_at_d0 - 10.0 * cfg.gamma * np.log10(np.maximum(d, cfg.d0) / cfg.d0)
    rss -= _crossings(aps, pts, cfg.walls)
    return np.clip(rss, cfg.rss_floor, 0.0)


def path_loss_rss(ap, p, cfg: SyntheticFieldConfig) -> float:
    """Noiseless RSS (dBm) at ``p`` from an AP at ``ap``."""
    return float(path_loss_many(np.asarray(ap, dtype=float)[None, :], np.asarray(p, dtype=float), cfg)[0, 0])


class FieldOracle:
    """Noiseless fingerprint of a synthetic field at any location."""

    def __init__(self, cfg: SyntheticFieldConfig):
        self.cfg = cfg
        self.aps = cfg.resolved_aps()

    def __call__(self, p) -> np.ndarray:
        return path_loss_many(self.aps, p, self.cfg)[0]

    def many(self, pts) -> np.ndarray:
        return path_loss_many(self.aps, pts, self.cfg)


def grid_points(cfg: SyntheticFieldConfig) -> np.ndarray:
    nx = int(np.floor(cfg.width / cfg.grid_pitch + 1e-9)) + 1
    ny = int(np.floor(cfg.height / cfg.grid_pitch + 1e-9)) + 1
    xs = np.arange(nx) * cfg.grid_pitch
    ys = np.arange(ny) * cfg.grid_pitch
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def generate_synthetic(cfg: SyntheticFieldConfig, rng: np.random.Generator):
    """Survey every grid point (plus random points) ``samples_per_point`` times.

    Returns ``(map, oracle)``.
    """
    oracle = FieldOracle(cfg)
    pts = grid_points(cfg)
    if cfg.n_random_points:
        extra = rng.uniform((0, 0), (cfg.width, cfg.height), size=(cfg.n_random_points, 2))
        pts = np.vstack([pts, extra])
    clean = oracle.many(pts)
    reps = cfg.samples_per_point
    all_pts = np.repeat(pts, reps, axis=0)
    rss = np.repeat(clean, reps, axis=0)
    if cfg.shadowing_sigma > 0:
        rss = rss + rng.normal(0.0, cfg.shadowing_sigma, size=rss.shape)
    rss = np.clip(rss, cfg.rss_floor, 0.0)
    return FingerprintMap(all_pts, rss, rss_floor=cfg.rss_floor), oracle
