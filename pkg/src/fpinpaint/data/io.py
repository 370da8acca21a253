"""Canonical map CSV and versioned model JSON."""

from __future__ import annotations

import csv
import json
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from ..core import RSS_CEILING, RSS_FLOOR, DataError, FingerprintMap, Scaler
from ..gpr import GprModel, KernelHyper, fit_gpr_targets
from ..i2ap import I2apConfig, I2apModel
from ..iap import IapConfig, IapModel
from ..mlpnet import Network

FORMAT_VERSION = 1
MODEL_KINDS = {"gpr": GprModel, "iap": IapModel, "i2ap": I2apModel}


class ModelFormatError(DataError):
    """Model file cannot be parsed or does not match its declared config."""


class ModelKindError(ModelFormatError):
    """Model file holds a different kind of model than requested."""


@contextmanager
def atomic_output(path, mode: str = "w"):
    """Write to ``path.partial`` and move into place only on success."""
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    kw = {"encoding": "utf-8", "newline": ""} if "b" not in mode else {}
    try:
        with open(tmp, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


# ---------------------------------------------------------------- map CSV


def map_to_csv_rows(fmap: FingerprintMap):
    yield ["x", "y", *(f"AP_{i + 1}" for i in range(fmap.n_aps))]
    for p, f in zip(fmap.points, fmap.rss):
        yield [repr(float(p[0])), repr(float(p[1])), *(repr(float(v)) for v in f)]


def save_map(fmap: FingerprintMap, path) -> None:
    with atomic_output(path) as fh:
        csv.writer(fh, lineterminator="\n").writerows(map_to_csv_rows(fmap))


def load_map(path, rss_floor: float = RSS_FLOOR, rss_ceiling: float = RSS_CEILING) -> FingerprintMap:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[:2] != ["x", "y"]:
            raise DataError(f"{path}:1: header must be x,y,AP_1..AP_n")
        width = len(header)
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}:{line}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
    arr = np.array(rows, dtype=float).reshape(-1, width)
    try:
        return FingerprintMap(arr[:, :2], arr[:, 2:], rss_floor, rss_ceiling)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_points(path) -> np.ndarray:
    """Query points from a CSV with an ``x,y`` header (extra columns ignored)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["x", "y"]:
            raise DataError(f"{path}:1: header must start with x,y")
        pts = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pts.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise DataError(f"{path}:{line}: malformed point row") from None
    return np.array(pts, dtype=float).reshape(-1, 2)


# ---------------------------------------------------------------- model JSON


def _map_dict(fmap: FingerprintMap) -> dict:
    return {
        "points": fmap.points.tolist(),
        "rss": fmap.rss.tolist(),
        "rss_floor": fmap.rss_floor,
        "rss_ceiling": fmap.rss_ceiling,
    }


def _map_from(d: dict) -> FingerprintMap:
    return FingerprintMap(
        np.array(d["points"], dtype=float).reshape(-1, 2),
        np.array(d["rss"], dtype=float).reshape(len(d["points"]), -1),
        d["rss_floor"],
        d["rss_ceiling"],
    )


def _gpr_dict(m: GprModel) -> dict:
    return {
        "train_xy": m.train_xy.tolist(),
        "train_y": m.train_y.tolist(),
        "hyper": {"signal_var": m.hyper.signal_var, "length_scale": m.hyper.length_scale, "noise_var": m.hyper.noise_var},
        "jitter": m.jitter,
        "rss_floor": m.rss_floor,
        "rss_ceiling": m.rss_ceiling,
    }


def _gpr_from(d: dict) -> GprModel:
    xy = np.array(d["train_xy"], dtype=float).reshape(-1, 2)
    y = np.array(d["train_y"], dtype=float).reshape(len(xy), -1)
    return fit_gpr_targets(xy, y, KernelHyper(**d["hyper"]), d["rss_floor"], d["rss_ceiling"], jitter=d["jitter"])


def model_to_dict(model) -> dict:
    if isinstance(model, GprModel):
        kind, body = "gpr", {"gpr": _gpr_dict(model)}
        scaler, config = None, {}
    elif isinstance(model, IapModel):
        kind = "iap"
        body = {"encoder": model.encoder.to_dict(), "decoder": model.decoder.to_dict(), "gpr": _gpr_dict(model.gpr)}
        scaler, config = model.scaler, vars(model.config)
    elif isinstance(model, I2apModel):
        kind = "i2ap"
        body = {name: getattr(model, name).to_dict() for name in ("F", "G", "D", "C", "L")}
        body["reference"] = _map_dict(model.reference)
        scaler, config = model.scaler, vars(model.config)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {
        "format_version": FORMAT_VERSION,
        "model_kind": kind,
        "scaler": scaler.to_dict() if scaler else None,
        "config": dict(config),
        "layers": body,
    }


def model_from_dict(d: dict, kind: str | None = None):
    if not isinstance(d, dict) or "format_version" not in d:
        raise ModelFormatError("not a model document")
    if d["format_version"] != FORMAT_VERSION:
        raise ModelFormatError(f"model format_version {d['format_version']} unsupported (expected {FORMAT_VERSION})")
    got = d.get("model_kind")
    if got not in MODEL_KINDS:
        raise ModelFormatError(f"unknown model_kind {got!r}")
    if kind is not None and got != kind:
        raise ModelKindError(f"expected a {kind} model, file holds {got}")
    body = d["layers"]
    try:
        if got == "gpr":
            return _gpr_from(body["gpr"])
        scaler = Scaler.from_dict(d["scaler"])
        if got == "iap":
            cfg = IapConfig(**d["config"])
            enc, dec = Network.from_dict(body["encoder"]), Network.from_dict(body["decoder"])
            if dec.spec.n_in != cfg.latent_dim or enc.spec.n_out != 2 * cfg.latent_dim:
                raise ModelFormatError("IAP layer shapes do not match latent_dim in config")
            return IapModel(enc, dec, scaler, cfg, _gpr_from(body["gpr"]))
        cfg = I2apConfig(**d["config"])
        nets = {name: Network.from_dict(body[name]) for name in ("F", "G", "D", "C", "L")}
        return I2apModel(**nets, config=cfg, scaler=scaler, reference=_map_from(body["reference"]))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model does not match its declared config: {exc}") from None


def model_to_json(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def save_model(model, path) -> None:
    with atomic_output(path) as fh:
        fh.write(model_to_json(model))
        fh.write("\n")


def load_model(path, kind: str | None = None):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: parse error: {exc}") from None
    return model_from_dict(d, kind)


def model_kind(model) -> str:
    for name, cls in MODEL_KINDS.items():
        if isinstance(model, cls):
            return name
    raise TypeError(type(model).__name__)
