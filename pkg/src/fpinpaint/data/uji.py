"""Loader for the public UJIIndoorLoc CSV files (trainingData.csv / validationData.csv)."""

from __future__ import annotations

import numpy as np
import pandas as pd

from ..core import RSS_FLOOR, DataError, FingerprintMap

NOT_DETECTED = 100
REQUIRED = ("LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID")


def load_ujiindoorloc(
    path,
    building: int | None,
    floor: int,
    rss_floor: float = RSS_FLOOR,
    aps: list[str] | None = None,
    origin: tuple[float, float] | None = None,
) -> FingerprintMap:
    """One (building, floor) of UJIIndoorLoc as a planar fingerprint map.

    ``building=None`` keeps every building's rows for that floor.

    The "not detected" value 100 and readings below ``rss_floor`` become
    ``rss_floor``. Coordinates are shifted so the selection's minimum corner
    is the origin. AP columns never detected within the selection are
    dropped, unless ``aps`` fixes the column set (use the training split's
    ``ap_names`` and ``origin`` when loading the validation split).
    """
    df = pd.read_csv(path)
    missing = [c for c in REQUIRED if c not in df.columns]
    wap_cols = [c for c in df.columns if c.startswith("WAP")]
    if missing or not wap_cols:
        raise DataError(f"{path}: missing columns {missing or ['WAP*']}")
    rows = df["FLOOR"] == floor
    if building is not None:
        rows &= df["BUILDINGID"] == building
    sel = df[rows]
    if sel.empty:
        raise DataError(f"{path}: no rows for building {building}, floor {floor}")

    raw = sel[wap_cols].to_numpy(dtype=float)
    detected = raw != NOT_DETECTED
    if aps is None:
        keep = detected.any(axis=0)
        names = [c for c, k in zip(wap_cols, keep) if k]
    else:
        unknown = set(aps) - set(wap_cols)
        if unknown:
            raise DataError(f"{path}: unknown AP columns {sorted(unknown)}")
        names = list(aps)
    cols = [wap_cols.index(c) for c in names]
    rss = np.where(detected[:, cols], raw[:, cols], rss_floor)
    rss = np.clip(rss, rss_floor, 0.0)

    xy = sel[["LONGITUDE", "LATITUDE"]].to_numpy(dtype=float)
    if origin is None:
        origin = tuple(xy.min(axis=0))
    xy = xy - np.asarray(origin)
    return FingerprintMap(
        xy, rss, rss_floor=rss_floor, ap_names=tuple(names), origin=tuple(float(v) for v in origin)
    )
