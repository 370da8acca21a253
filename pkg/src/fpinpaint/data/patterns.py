"""Unsurveyed-region patterns and the train/heldout split they induce."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..core import DataError, FingerprintMap

Rect = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


@dataclass(frozen=True)
class PatternSpec:
    name: str
    rectangles: tuple[Rect, ...]
    kind: str = "interior"

    def __post_init__(self):
        if self.kind not in ("interior", "exterior"):
            raise ValueError(f"pattern kind must be interior or exterior, got {self.kind!r}")
        rects = tuple(tuple(float(v) for v in r) for r in self.rectangles)
        for r in rects:
            if len(r) != 4 or not (r[2] > r[0] and r[3] > r[1]):
                raise ValueError(f"bad rectangle {r}")
        object.__setattr__(self, "rectangles", rects)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Mask of points strictly inside any rectangle; boundary points stay outside."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        mask = np.zeros(len(pts), dtype=bool)
        for x0, y0, x1, y1 in self.rectangles:
            mask |= (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 1] > y0) & (pts[:, 1] < y1)
        return mask

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "rectangles": [list(r) for r in self.rectangles]}

    @classmethod
    def from_dict(cls, d: dict) -> "PatternSpec":
        return cls(d["name"], tuple(tuple(r) for r in d["rectangles"]), d.get("kind", "interior"))

    @classmethod
    def load(cls, path) -> "PatternSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def apply_pattern(fmap: FingerprintMap, pat: PatternSpec) -> tuple[FingerprintMap, FingerprintMap]:
    """Split ``fmap`` into (train, heldout); heldout = entries inside the pattern."""
    inside = pat.contains(fmap.points)
    if not inside.any():
        raise DataError(f"pattern {pat.name!r} does not cover any surveyed point")
    return fmap.subset(~inside), fmap.subset(inside)


# Analogues of six missing-region scenarios over the default 30 x 15 m field:
# two interior blocks and four regions that force extrapolation past the
# surveyed hull. Rectangles overshoot the field edge where they touch it.
BUILTIN_PATTERNS: dict[str, PatternSpec] = {
    p.name: p
    for p in (
        PatternSpec("interior-A", ((9.0, 3.5, 16.0, 11.5),), "interior"),
        PatternSpec("interior-B", ((3.5, 2.0, 8.0, 6.5), (19.5, 8.0, 25.0, 12.5)), "interior"),
        PatternSpec("exterior-C", ((24.5, -1.0, 31.0, 16.0),), "exterior"),
        PatternSpec("exterior-D", ((-1.0, -1.0, 8.0, 5.0),), "exterior"),
        PatternSpec("exterior-E", ((-1.0, 11.0, 31.0, 16.0),), "exterior"),
        PatternSpec("exterior-F", ((22.0, 10.0, 31.0, 16.0),), "exterior"),
    )
}


def get_pattern(name_or_path: str) -> PatternSpec:
    """Built-in pattern by name, otherwise a PatternSpec JSON file."""
    if name_or_path in BUILTIN_PATTERNS:
        return BUILTIN_PATTERNS[name_or_path]
    return PatternSpec.load(name_or_path)
