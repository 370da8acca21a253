"""KNN fingerprint positioning, CEP quantiles and the inpainting L1 harness."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import DataError, FingerprintMap, Point

K_POS_DEFAULT = 3


def _rss_distances(ref_rss_n: np.ndarray, q_n: np.ndarray) -> np.ndarray:
    diff = ref_rss_n[None, :, :] - q_n[:, None, :]
    return np.sqrt(np.einsum("qrn,qrn->qr", diff, diff))


def _ref_order(refmap: FingerprintMap) -> np.ndarray:
    # lexicographic (x, y) order of reference entries, stable for duplicates
    pts = refmap.points
    return np.lexsort((pts[:, 1], pts[:, 0]))


def knn_position_many(refmap: FingerprintMap, fps: np.ndarray, k_pos: int = K_POS_DEFAULT) -> np.ndarray:
    """Estimated (x, y) for each query fingerprint, shape (q, 2).

    Distances are Euclidean over all APs on the normalized RSS scale; the
    estimate is the unweighted centroid of the k_pos nearest references.
    Distance ties go to the reference with smaller (x, y).
    """
    if len(refmap) == 0:
        raise DataError("reference map is empty")
    if k_pos < 1 or k_pos > len(refmap):
        raise DataError(f"k_pos={k_pos} but reference map has {len(refmap)} entries")
    fps = np.asarray(fps, dtype=float).reshape(-1, refmap.n_aps)
    span = refmap.rss_ceiling - refmap.rss_floor
    order = _ref_order(refmap)
    ref_rss = (refmap.rss[order] - refmap.rss_floor) / span
    ref_pts = refmap.points[order]
    out = np.empty((len(fps), 2))
    chunk = max(1, 2_000_000 // max(1, len(refmap) * refmap.n_aps))
    for s in range(0, len(fps), chunk):
        q = (fps[s : s + chunk] - refmap.rss_floor) / span
        d = _rss_distances(ref_rss, q)
        nearest = np.argsort(d, axis=1, kind="stable")[:, :k_pos]
        out[s : s + chunk] = ref_pts[nearest].mean(axis=1)
    return out


def knn_position(refmap: FingerprintMap, f, k_pos: int = K_POS_DEFAULT) -> Point:
    x, y = knn_position_many(refmap, np.asarray(f, dtype=float)[None, :], k_pos)[0]
    return Point(float(x), float(y))


def cep(errors: Sequence[float], q: float) -> float:
    """Nearest-rank q-th percentile of positioning errors (meters)."""
    errs = np.sort(np.asarray(errors, dtype=float))
    if len(errs) == 0:
        raise DataError("cannot compute CEP of an empty error list")
    if not 0 < q <= 100:
        raise ValueError("q must be in (0, 100]")
    rank = math.ceil(round(q * len(errs) / 100.0, 9))
    return float(errs[max(rank, 1) - 1])


def eval_inpainting(predict: Callable[[np.ndarray], np.ndarray], heldout: FingerprintMap) -> float:
    """Mean L1 (dBm) of ``predict`` against every heldout sample.

    ``predict`` maps an (q, 2) array of points to (q, n_aps) fingerprints.
    Each distinct heldout point contributes the mean over its samples of the
    per-AP mean absolute error; the result is the mean over points.
    """
    return float(np.mean(per_point_l1(predict, heldout)))


def per_point_l1(predict, heldout: FingerprintMap) -> np.ndarray:
    if len(heldout) == 0:
        raise DataError("heldout map is empty")
    pts = heldout.distinct_points
    pred = np.asarray(predict(pts), dtype=float).reshape(len(pts), heldout.n_aps)
    abs_err = np.abs(heldout.rss - pred[heldout.point_index]).mean(axis=1)
    sums = np.bincount(heldout.point_index, weights=abs_err, minlength=len(pts))
    return sums / heldout.sample_counts


@dataclass
class EvalReport:
    method: str
    pattern: str
    l1: float | None = None
    cep68: float | None = None
    cep95: float | None = None
    per_point: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cep68 is not None and self.cep95 is not None and self.cep68 > self.cep95:
            raise ValueError("CEP68 must not exceed CEP95")
        if self.l1 is not None and self.l1 < 0:
            raise ValueError("L1 must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{k: d[k] for k in ("method", "pattern", "l1", "cep68", "cep95", "per_point", "extra") if k in d})

    def per_point_csv(self) -> str:
        if not self.per_point:
            return ""
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.per_point[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(self.per_point)
        return buf.getvalue()


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    """Flat CSV with one row per report: method, pattern, l1, cep68, cep95."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "pattern", "l1", "cep68", "cep95"])
    for r in reports:
        w.writerow([r.method, r.pattern, *("" if v is None else repr(float(v)) for v in (r.l1, r.cep68, r.cep95))])
    return buf.getvalue()


def eval_positioning(
    base: FingerprintMap,
    inpainted: FingerprintMap | None,
    test: FingerprintMap | Sequence[tuple[Point, np.ndarray]],
    k_pos: int = K_POS_DEFAULT,
    method: str = "baseline",
    pattern: str = "",
) -> EvalReport:
    """Position every test fingerprint against ``base`` plus ``inpainted``.

    With no inpainted entries this is the no-inpainting baseline.
    """
    if not isinstance(test, FingerprintMap):
        test = FingerprintMap.from_entries(test, rss_floor=base.rss_floor, rss_ceiling=base.rss_ceiling)
    if len(test) == 0:
        raise DataError("test set is empty")
    refs = base if inpainted is None else base.merge(inpainted)
    est = knn_position_many(refs, test.rss, k_pos)
    err = np.hypot(*(est - test.points).T)
    rows = [
        {"x": float(p[0]), "y": float(p[1]), "est_x": float(e[0]), "est_y": float(e[1]), "error": float(d)}
        for p, e, d in zip(test.points, est, err)
    ]
    return EvalReport(method, pattern, cep68=cep(err, 68), cep95=cep(err, 95), per_point=rows)
