"""Fingerprint maps, normalization and neighbor queries shared by every model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

RSS_FLOOR = -100.0
RSS_CEILING = 0.0


class DataError(ValueError):
    """Input data violates a structural requirement (shape, emptiness, schema)."""


class Point(NamedTuple):
    x: float
    y: float


# A fingerprint is a 1-D float array of RSS values in dBm, one entry per AP.
Fingerprint = np.ndarray


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FingerprintMap:
    """Multi-set of (point, fingerprint) survey samples.

    ``points`` has shape (N, 2) and ``rss`` shape (N, n_aps); row i of both is
    one survey sample. Duplicate points are allowed and each carries its own
    sample. Arrays are copied and frozen on construction.
    """

    points: np.ndarray
    rss: np.ndarray
    rss_floor: float = RSS_FLOOR
    rss_ceiling: float = RSS_CEILING
    ap_names: tuple[str, ...] | None = field(default=None)
    origin: tuple[float, float] = (0.0, 0.0)  # offset of the local frame in source coordinates

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        rss = np.asarray(self.rss, dtype=float)
        if rss.ndim == 1 and len(pts) <= 1:
            rss = rss.reshape(len(pts), -1)
        if rss.ndim != 2 or len(rss) != len(pts):
            raise DataError(f"rss shape {rss.shape} does not match {len(pts)} points")
        if not np.all(np.isfinite(pts)):
            raise DataError("point coordinates must be finite")
        if not np.all(np.isfinite(rss)):
            raise DataError("rss values must be finite")
        if len(rss) and (rss.min() < self.rss_floor or rss.max() > self.rss_ceiling):
            raise DataError(
                f"rss values outside [{self.rss_floor}, {self.rss_ceiling}] dBm"
            )
        if self.ap_names is not None and len(self.ap_names) != rss.shape[1]:
            raise DataError("ap_names length does not match fingerprint width")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "rss", _readonly(rss))

    @classmethod
    def from_entries(cls, entries, n_aps: int | None = None, **kw) -> "FingerprintMap":
        entries = list(entries)
        if not entries:
            width = 0 if n_aps is None else n_aps
            return cls(np.empty((0, 2)), np.empty((0, width)), **kw)
        pts = np.array([tuple(p) for p, _ in entries], dtype=float)
        rss = np.array([np.asarray(f, dtype=float) for _, f in entries])
        return cls(pts, rss, **kw)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        for p, f in zip(self.points, self.rss):
            yield Point(float(p[0]), float(p[1])), f

    @property
    def n_aps(self) -> int:
        return self.rss.shape[1]

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the surveyed points."""
        if len(self) == 0:
            raise DataError("empty map has no bounding box")
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @cached_property
    def _grouping(self):
        uniq, inverse = np.unique(self.points, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=len(uniq))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return uniq, inverse, order, counts, starts

    @property
    def distinct_points(self) -> np.ndarray:
        """Distinct survey locations, sorted lexicographically by (x, y)."""
        return self._grouping[0]

    @property
    def point_index(self) -> np.ndarray:
        """For every entry, the row of its location in ``distinct_points``."""
        return self._grouping[1]

    @property
    def sample_counts(self) -> np.ndarray:
        return self._grouping[3]

    def samples_at(self, i: int) -> np.ndarray:
        """All fingerprints recorded at distinct point ``i``."""
        _, _, order, counts, starts = self._grouping
        return self.rss[order[starts[i] : starts[i] + counts[i]]]

    def draw_samples(self, point_ids: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
        """One fingerprint per distinct point id, uniform over that point's samples.

        With ``rng=None`` the first recorded sample is used.
        """
        _, _, order, counts, starts = self._grouping
        point_ids = np.asarray(point_ids)
        if rng is None:
            offs = np.zeros(point_ids.shape, dtype=int)
        else:
            offs = (rng.random(point_ids.shape) * counts[point_ids]).astype(int)
        return self.rss[order[starts[point_ids] + offs]]

    def mean_fingerprints(self) -> np.ndarray:
        """Per distinct point mean fingerprint, shape (n_distinct, n_aps)."""
        uniq, inverse = self.distinct_points, self.point_index
        sums = np.zeros((len(uniq), self.n_aps))
        np.add.at(sums, inverse, self.rss)
        return sums / self.sample_counts[:, None]

    def find_point(self, p: Sequence[float]) -> int:
        uniq = self.distinct_points
        hit = np.flatnonzero((uniq[:, 0] == p[0]) & (uniq[:, 1] == p[1]))
        if len(hit) == 0:
            raise KeyError(f"point {tuple(p)} is not in the map")
        return int(hit[0])

    def subset(self, mask: np.ndarray) -> "FingerprintMap":
        return FingerprintMap(
            self.points[mask], self.rss[mask], self.rss_floor, self.rss_ceiling, self.ap_names, self.origin
        )

    def merge(self, other: "FingerprintMap") -> "FingerprintMap":
        if len(other) == 0:
            return self
        if other.n_aps != self.n_aps:
            raise DataError(f"cannot merge maps with {self.n_aps} and {other.n_aps} APs")
        return FingerprintMap(
            np.vstack([self.points, other.points]),
            np.vstack([self.rss, other.rss]),
            self.rss_floor,
            self.rss_ceiling,
            self.ap_names,
            self.origin,
        )


@dataclass(frozen=True)
class Scaler:
    """Linear maps RSS [floor, ceiling] -> [0, 1] and bbox -> [0, 1]^2."""

    rss_floor: float
    rss_ceiling: float
    coord_bbox: tuple[float, float, float, float]

    def __post_init__(self):
        if not self.rss_floor < self.rss_ceiling:
            raise ValueError("rss_floor must be below rss_ceiling")
        x0, y0, x1, y1 = self.coord_bbox
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate bounding box {self.coord_bbox}")

    @property
    def rss_range(self) -> float:
        return self.rss_ceiling - self.rss_floor

    def norm_rss(self, rss):
        return (np.asarray(rss, dtype=float) - self.rss_floor) / self.rss_range

    def denorm_rss(self, z):
        return np.asarray(z, dtype=float) * self.rss_range + self.rss_floor

    def norm_xy(self, xy):
        x0, y0, x1, y1 = self.coord_bbox
        xy = np.asarray(xy, dtype=float)
        return (xy - (x0, y0)) / (x1 - x0, y1 - y0)

    def denorm_xy(self, z):
        x0, y0, x1, y1 = self.coord_bbox
        return np.asarray(z, dtype=float) * (x1 - x0, y1 - y0) + (x0, y0)

    def to_dict(self) -> dict:
        return {
            "rss_floor": self.rss_floor,
            "rss_ceiling": self.rss_ceiling,
            "coord_bbox": list(self.coord_bbox),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(float(d["rss_floor"]), float(d["rss_ceiling"]), tuple(map(float, d["coord_bbox"])))


def fit_scaler(
    fmap: FingerprintMap, rss_floor: float = RSS_FLOOR, rss_ceiling: float = RSS_CEILING
) -> Scaler:
    if len(fmap) == 0:
        raise DataError("cannot fit a scaler on an empty map")
    bbox = fmap.bbox
    if not (bbox[2] > bbox[0] and bbox[3] > bbox[1]):
        raise DataError(f"degenerate bounding box {bbox}: points are collinear on an axis")
    return Scaler(float(rss_floor), float(rss_ceiling), bbox)


def neighbor_ids(
    candidates: np.ndarray, q: Sequence[float], k: int, exclude: int | None = None
) -> np.ndarray:
    """Indices of the k candidates closest to ``q``.

    ``candidates`` must be sorted lexicographically (as ``distinct_points`` is)
    so that a stable sort on distance breaks ties by (x, y).
    """
    d2 = (candidates[:, 0] - q[0]) ** 2 + (candidates[:, 1] - q[1]) ** 2
    if exclude is not None:
        d2 = d2.copy()
        d2[exclude] = np.inf
    available = len(candidates) - (exclude is not None)
    if k < 1 or k > available:
        raise DataError(f"k={k} neighbors requested but only {available} distinct points")
    return np.argsort(d2, kind="stable")[:k]


def nearest_neighbors(
    fmap: FingerprintMap,
    q: Sequence[float],
    k: int,
    rng: np.random.Generator | None = None,
    exclude_self: bool = False,
) -> list[tuple[Point, Fingerprint]]:
    """k nearest distinct surveyed points to ``q``, one sampled fingerprint each.

    Samples recorded at the same location count as a single candidate. With
    ``exclude_self`` a surveyed point equal to ``q`` is skipped.
    """
    uniq = fmap.distinct_points
    exclude = None
    if exclude_self:
        try:
            exclude = fmap.find_point(q)
        except KeyError:
            pass
    ids = neighbor_ids(uniq, q, k, exclude)
    fps = fmap.draw_samples(ids, rng)
    return [(Point(float(uniq[i, 0]), float(uniq[i, 1])), f) for i, f in zip(ids, fps)]


def sample_fingerprint(
    fmap: FingerprintMap, p: Sequence[float], rng: np.random.Generator
) -> Fingerprint:
    try:
        i = fmap.find_point(p)
    except KeyError as exc:
        raise DataError(str(exc)) from None
    return fmap.draw_samples(np.array([i]), rng)[0]
