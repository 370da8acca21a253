"""Synthetic benchmark harness: one field per seed, every pattern, every method."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import FingerprintMap
from .data.patterns import BUILTIN_PATTERNS, PatternSpec, apply_pattern
from .data.synthetic import SyntheticFieldConfig, generate_synthetic
from .evaluation import K_POS_DEFAULT, EvalReport, eval_inpainting, eval_positioning
from .gpr import fit_gpr
from .i2ap import I2apConfig, train_i2ap
from .iap import IapConfig, train_iap
from .inpaint import predictor

log = logging.getLogger(__name__)

METHODS = ("gpr", "iap", "i2ap")
# independent rng streams per seed, so adding a method never shifts another's draws
_STREAM = {"field": 0, "iap": 1, "i2ap": 2, "i2ap-infer": 3}


@dataclass
class BenchmarkConfig:
    synthetic: SyntheticFieldConfig = field(default_factory=SyntheticFieldConfig)
    iap: IapConfig = field(default_factory=lambda: IapConfig(epochs=300))
    i2ap: I2apConfig = field(default_factory=lambda: I2apConfig(epochs=300))
    k_pos: int = K_POS_DEFAULT
    vary_layout: bool = True  # AP placement follows the seed


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM[name]])


def seeded_field(seed: int, cfg: BenchmarkConfig | None = None):
    cfg = cfg or BenchmarkConfig()
    fcfg = replace(cfg.synthetic, layout_seed=seed) if cfg.vary_layout else cfg.synthetic
    return generate_synthetic(fcfg, stream(seed, "field"))


@dataclass
class PatternResult:
    pattern: str
    seed: int
    inpaint: dict[str, EvalReport]
    position: dict[str, EvalReport]
    seconds: dict[str, float]

    def l1(self, method: str) -> float:
        return self.inpaint[method].l1


def run_pattern(
    fmap: FingerprintMap,
    pattern: PatternSpec,
    seed: int,
    cfg: BenchmarkConfig | None = None,
    methods=METHODS,
    positioning: bool = False,
) -> PatternResult:
    """Fit each method on the surveyed part, score heldout L1.

    With ``positioning`` the heldout samples are also located by KNN against
    the surveyed references alone and against references extended with the
    I2AP inpainting of the heldout points.
    """
    cfg = cfg or BenchmarkConfig()
    train, heldout = apply_pattern(fmap, pattern)
    models, seconds = {}, {}
    gpr = None
    for name in methods:
        t0 = time.process_time()
        if name == "gpr" or (name == "iap" and gpr is None):
            gpr = fit_gpr(train)
        if name == "gpr":
            models[name] = gpr
        elif name == "iap":
            models[name] = train_iap(train, gpr, cfg.iap, stream(seed, "iap"))
        elif name == "i2ap":
            models[name] = train_i2ap(train, cfg.i2ap, stream(seed, "i2ap"))
        else:
            raise ValueError(f"unknown method {name!r}")
        seconds[name] = time.process_time() - t0

    inpaint, position = {}, {}
    pts = heldout.distinct_points
    for name, model in models.items():
        # one draw per heldout point, shared by the L1 score and the positioning references
        fps = predictor(model, stream(seed, "i2ap-infer"), train)(pts)
        l1 = eval_inpainting(lambda q: fps, heldout)
        inpaint[name] = EvalReport(name, pattern.name, l1=l1, extra={"seed": seed})
        if positioning:
            if not position:
                position["baseline"] = eval_positioning(train, None, heldout, cfg.k_pos, "baseline", pattern.name)
            refs = FingerprintMap(pts, fps, train.rss_floor, train.rss_ceiling)
            position[name] = eval_positioning(train, refs, heldout, cfg.k_pos, name, pattern.name)
        log.info("seed %d %s %s L1 %.3f (%.0fs)", seed, pattern.name, name, inpaint[name].l1, seconds[name])
    return PatternResult(pattern.name, seed, inpaint, position, seconds)


def run_benchmark(
    patterns, seeds, cfg: BenchmarkConfig | None = None, methods=METHODS, positioning: bool = False
) -> list[PatternResult]:
    cfg = cfg or BenchmarkConfig()
    out = []
    for seed in seeds:
        fmap, _ = seeded_field(seed, cfg)
        for p in patterns:
            pat = BUILTIN_PATTERNS[p] if isinstance(p, str) else p
            out.append(run_pattern(fmap, pat, seed, cfg, methods, positioning))
    return out


def median_l1(results: list[PatternResult], pattern: str, method: str) -> float:
    return float(np.median([r.l1(method) for r in results if r.pattern == pattern]))


# ---------------------------------------------------------------- UJIIndoorLoc

UJI_K = 20
UJI_DIM_V = 160


@dataclass
class UjiFloorResult:
    floor: int
    n_train: int
    n_test: int
    n_aps: int
    dim_v: int
    l1: dict[str, float]
    seconds: dict[str, float]


def uji_floor_comparison(
    train_csv,
    test_csv,
    floor: int,
    seed: int = 0,
    building: int | None = None,
    max_train: int = 3000,
    epochs: int = 300,
) -> UjiFloorResult:
    """GPR vs I2AP on one floor: training split as the survey, test split as unsurveyed.

    The training split is subsampled to ``max_train`` entries. I2AP uses k=20
    and a feature width of 160, raised to n_aps + 1 when the floor has at
    least 160 detected APs.
    """
    from .data.uji import load_ujiindoorloc

    train = load_ujiindoorloc(train_csv, building, floor)
    test = load_ujiindoorloc(test_csv, building, floor, aps=list(train.ap_names), origin=train.origin)
    if len(train) > max_train:
        keep = np.sort(np.random.default_rng([seed, 7]).choice(len(train), max_train, replace=False))
        train = train.subset(keep)
    dim_v = max(UJI_DIM_V, train.n_aps + 1)
    t0 = time.process_time()
    gpr = fit_gpr(train)
    t_gpr = time.process_time() - t0
    cfg = I2apConfig(k=UJI_K, dim_v=dim_v, epochs=epochs)
    t0 = time.process_time()
    i2ap = train_i2ap(train, cfg, stream(seed, "i2ap"))
    t_i2ap = time.process_time() - t0
    l1 = {
        "gpr": eval_inpainting(predictor(gpr), test),
        "i2ap": eval_inpainting(predictor(i2ap, stream(seed, "i2ap-infer"), train), test),
    }
    return UjiFloorResult(floor, len(train), len(test), train.n_aps, dim_v, l1, {"gpr": t_gpr, "i2ap": t_i2ap})
