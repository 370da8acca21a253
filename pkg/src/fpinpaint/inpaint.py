"""Uniform prediction interface over the three model kinds."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import FingerprintMap
from .gpr import GprModel, gpr_predict_many
from .i2ap import I2apModel, i2ap_generate_many
from .iap import IapModel, iap_inpaint_many


def predictor(
    model, rng: np.random.Generator | None = None, reference: FingerprintMap | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """Function mapping (q, 2) query points to (q, n_aps) fingerprints in dBm.

    ``rng`` and ``reference`` only matter for I2AP, which draws neighbor
    samples from ``reference`` (default: the map it was trained on).
    """
    if isinstance(model, GprModel):
        return lambda pts: gpr_predict_many(model, pts)[0]
    if isinstance(model, IapModel):
        return lambda pts: iap_inpaint_many(model, model.gpr, pts)
    if isinstance(model, I2apModel):
        return lambda pts: i2ap_generate_many(model, pts, rng, reference)
    raise TypeError(f"not a fitted model: {type(model).__name__}")
