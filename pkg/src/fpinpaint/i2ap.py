"""Inter- and intra-AP inpainting with a neighbor-conditioned generator.

For a query point u the k nearest surveyed points are each turned into an
(n + 2)-vector (normalized location, normalized sampled fingerprint). A shared
feature extractor F maps every such vector to dim_v features; the generator G
reads the k feature vectors plus u and emits the fingerprint at u.

The discriminator has a shared trunk and two heads: C scores (location,
fingerprint) pairs as real/fake and L regresses the location of a
fingerprint paired with a random location. D is trained on

* (u, f_u) as real,
* (u, G(u)) and (p_oth, f_u) as fake,
* (p_no, f_u + noise) for location regression only.

G and F are trained jointly on lambda_l1 * L1 + lambda_adv * (-log C(u, G(u))).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .core import DataError, FingerprintMap, Scaler, fit_scaler, neighbor_ids
from .mlpnet import (
    LOG_EPS,
    AdamState,
    MlpSpec,
    Network,
    NonFiniteError,
    adam_step,
    bind_flat,
    flat_grads,
    log_clamped,
    log_clamped_grad,
)

log = logging.getLogger(__name__)

F_HIDDEN = (256, 128)
G_HIDDEN = (160, 64)
D_TRUNK = (30, 40, 50, 30)

LOSS_COLUMNS = ("L_gen", "L_l1", "L_adv", "L_condition", "L_position")


@dataclass
class I2apConfig:
    k: int = 4
    dim_v: int = 30
    lambda_l1: float = 1.0
    lambda_adv: float = 0.1
    alpha: float = 1.0
    beta: float = 1.0
    noise_sigma: float = 2.0
    gap_radius: float = 0.0
    pairs: str = "points"
    epochs: int = 1000
    batch_size: int = 16
    lr: float = 1e-4

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be > 1")
        if self.dim_v < 1:
            raise ValueError("dim_v must be positive")
        if min(self.lambda_l1, self.lambda_adv, self.alpha, self.beta, self.noise_sigma, self.gap_radius) < 0:
            raise ValueError("loss weights, noise_sigma and gap_radius must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.pairs not in ("entries", "points"):
            raise ValueError("pairs must be 'entries' or 'points'")

    def check_for(self, n_aps: int, n_points: int | None = None) -> None:
        if self.dim_v <= n_aps:
            raise ValueError(f"dim_v={self.dim_v} must exceed the fingerprint dimension {n_aps}")
        if n_points is not None and not self.k < n_points:
            raise DataError(f"k={self.k} needs more than {self.k} distinct surveyed points, map has {n_points}")


@dataclass
class I2apModel:
    F: Network
    G: Network
    D: Network  # shared trunk
    C: Network  # real/fake head
    L: Network  # location head
    config: I2apConfig
    scaler: Scaler | None = None
    reference: FingerprintMap | None = field(default=None, repr=False)
    history: list[dict] = field(default_factory=list, repr=False)

    def __post_init__(self):
        n = self.G.spec.n_out
        cfg = self.config
        checks = [
            (self.F.spec.n_in == n + 2, "F input width must be n + 2"),
            (self.F.spec.n_out == cfg.dim_v, "F output width must be dim_v"),
            (self.G.spec.n_in == cfg.k * cfg.dim_v + 2, "G input width must be k * dim_v + 2"),
            (self.D.spec.n_in == n + 2, "D input width must be n + 2"),
            (self.C.spec.n_in == self.D.spec.n_out and self.C.spec.n_out == 1, "C head must map trunk -> 1"),
            (self.L.spec.n_in == self.D.spec.n_out and self.L.spec.n_out == 2, "L head must map trunk -> 2"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def n_aps(self) -> int:
        return self.G.spec.n_out

    def networks(self) -> list[Network]:
        return [self.F, self.G, self.D, self.C, self.L]

    # batched building blocks, everything on normalized scales

    def _generate(self, nb_xy, nb_fp, u_xy):
        """nb_xy (B, k, 2), nb_fp (B, k, n), u_xy (B, 2) -> G output and caches."""
        b, k, n = nb_fp.shape
        tensors = np.concatenate([nb_xy, nb_fp], axis=2).reshape(b * k, n + 2)
        v, f_cache = self.F.forward(tensors)
        g_in = np.hstack([v.reshape(b, k * self.config.dim_v), u_xy])
        out, g_cache = self.G.forward(g_in)
        return out, (f_cache, g_cache, b, k)

    def _generate_backward(self, caches, grad_out):
        f_cache, g_cache, b, k = caches
        g_grads, g_in = self.G.backward(g_cache, grad_out)
        g_v = g_in[:, : k * self.config.dim_v].reshape(b * k, self.config.dim_v)
        f_grads, _ = self.F.backward(f_cache, g_v)
        return f_grads, g_grads

    def _discriminate(self, xy, fp):
        h, d_cache = self.D.forward(np.hstack([xy, fp]))
        c, c_cache = self.C.forward(h)
        loc, l_cache = self.L.forward(h)
        return c[:, 0], loc, (d_cache, c_cache, l_cache)


def build_i2ap(n_aps: int, config: I2apConfig, rng: np.random.Generator) -> I2apModel:
    config.check_for(n_aps)
    n_in = n_aps + 2
    F = Network.create(MlpSpec.build(n_in, F_HIDDEN, config.dim_v, "relu"), rng)
    G = Network.create(MlpSpec.build(config.k * config.dim_v + 2, G_HIDDEN, n_aps, "sigmoid"), rng)
    D = Network.create(MlpSpec.build(n_in, D_TRUNK[:-1], D_TRUNK[-1], "relu"), rng)
    C = Network.create(MlpSpec.build(D_TRUNK[-1], (), 1, "sigmoid"), rng)
    L = Network.create(MlpSpec.build(D_TRUNK[-1], (), 2, "linear"), rng)
    return I2apModel(F, G, D, C, L, config)


def assemble_neighbor_input(
    fmap: FingerprintMap,
    u,
    k: int,
    rng: np.random.Generator | None,
    scaler: Scaler,
    exclude_self: bool = False,
):
    """k neighbor tensors (k, n + 2) ordered by distance, plus normalized u.

    Each tensor is (normalized location, normalized sampled fingerprint).
    With ``exclude_self`` a surveyed point equal to ``u`` is left out, as
    during training.
    """
    uniq = fmap.distinct_points
    exclude = None
    if exclude_self:
        try:
            exclude = fmap.find_point(u)
        except KeyError:
            pass
    ids = neighbor_ids(uniq, u, k, exclude)
    fps = fmap.draw_samples(ids, rng)
    tensors = np.hstack([scaler.norm_xy(uniq[ids]), scaler.norm_rss(fps)])
    return tensors, scaler.norm_xy(np.asarray(u, dtype=float))


def _self_excluded_neighbors(pts: np.ndarray, k: int) -> np.ndarray:
    """(m, k) nearest other distinct points; ties broken by (x, y) order."""
    d2 = (pts[:, None, 0] - pts[None, :, 0]) ** 2 + (pts[:, None, 1] - pts[None, :, 1]) ** 2
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _masked_neighbors(pts: np.ndarray, idx: np.ndarray, k: int, radius: np.ndarray) -> np.ndarray:
    """Nearest k points to pts[idx] outside a disk of the given radius (self always excluded)."""
    q = pts[idx]
    d2 = (q[:, None, 0] - pts[None, :, 0]) ** 2 + (q[:, None, 1] - pts[None, :, 1]) ** 2
    d2[d2 <= (radius * radius)[:, None]] = np.inf
    d2[np.arange(len(idx)), idx] = np.inf
    nb = np.argsort(d2, axis=1, kind="stable")[:, :k]
    if np.isinf(np.take_along_axis(d2, nb, axis=1)).any():
        raise DataError("gap_radius leaves fewer than k neighbors")
    return nb


def _query_neighbors(ref_pts: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    if k > len(ref_pts):
        raise DataError(f"k={k} neighbors requested but only {len(ref_pts)} distinct points")
    d2 = (queries[:, None, 0] - ref_pts[None, :, 0]) ** 2 + (queries[:, None, 1] - ref_pts[None, :, 1]) ** 2
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _d_step(model: I2apModel, u_xy, f_u, fake, oth_xy, no_xy, noisy):
    cfg = model.config
    b = len(u_xy)
    xy = np.vstack([u_xy, u_xy, oth_xy, no_xy])
    fp = np.vstack([f_u, fake, f_u, noisy])
    c, loc, (d_cache, c_cache, l_cache) = model._discriminate(xy, fp)
    c_real, c_fake, c_oth = c[:b], c[b : 2 * b], c[2 * b : 3 * b]

    cond = -(log_clamped(c_real) + log_clamped(1.0 - c_fake) + log_clamped(1.0 - c_oth)).mean()
    diff = loc[3 * b :] - u_xy
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    pos = dist.mean()

    g_c = np.zeros((4 * b, 1))
    g_c[:b, 0] = -cfg.alpha / b * log_clamped_grad(c_real)
    g_c[b : 2 * b, 0] = cfg.alpha / b * log_clamped_grad(1.0 - c_fake)
    g_c[2 * b : 3 * b, 0] = cfg.alpha / b * log_clamped_grad(1.0 - c_oth)
    g_loc = np.zeros((4 * b, 2))
    g_loc[3 * b :] = cfg.beta / b * diff / np.maximum(dist, 1e-12)[:, None]

    gc_params, g_h1 = model.C.backward(c_cache, g_c)
    gl_params, g_h2 = model.L.backward(l_cache, g_loc)
    gd_params, _ = model.D.backward(d_cache, g_h1 + g_h2)
    return (cond, pos), (gd_params, gc_params, gl_params)


def _g_step(model: I2apModel, nb_xy, nb_fp, u_xy, f_u, rss_range: float):
    cfg = model.config
    out, gen_cache = model._generate(nb_xy, nb_fp, u_xy)
    diff = out - f_u
    l1 = rss_range * np.abs(diff).mean()
    g_out = cfg.lambda_l1 * rss_range * np.sign(diff) / diff.size

    adv = 0.0
    if cfg.lambda_adv > 0:
        c, _, (d_cache, c_cache, _) = model._discriminate(u_xy, out)
        adv = -log_clamped(c).mean()
        g_c = (-cfg.lambda_adv / len(c) * log_clamped_grad(c))[:, None]
        _, g_h = model.C.backward(c_cache, g_c)
        _, g_in = model.D.backward(d_cache, g_h)
        g_out = g_out + g_in[:, 2:]
    f_grads, g_grads = model._generate_backward(gen_cache, g_out)
    total = cfg.lambda_l1 * l1 + cfg.lambda_adv * adv
    return (total, l1, adv), (f_grads, g_grads)


def train_i2ap(
    fmap: FingerprintMap,
    config: I2apConfig | None = None,
    rng: np.random.Generator | None = None,
    scaler: Scaler | None = None,
    on_epoch: Callable[[int, I2apModel], None] | None = None,
) -> I2apModel:
    """Adversarial training, one D update then one G/F update per batch.

    With ``pairs="entries"`` an epoch visits every (u, f_u) entry of the map
    once. With ``pairs="points"`` it visits every distinct point once, paired
    with one of its samples drawn afresh each epoch. Neighbor samples are
    redrawn for every batch.
    """
    config = config or I2apConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    pts = fmap.distinct_points
    m = len(pts)
    config.check_for(fmap.n_aps, m)
    scaler = scaler or fit_scaler(fmap, fmap.rss_floor, fmap.rss_ceiling)
    model = build_i2ap(fmap.n_aps, config, rng)
    model.scaler = scaler
    model.reference = fmap

    k = config.k
    nbrs = _self_excluded_neighbors(pts, k)
    pts_n = scaler.norm_xy(pts)
    rss_n = scaler.norm_rss(fmap.rss)
    noise_n = config.noise_sigma / scaler.rss_range

    gen_theta = bind_flat([model.F, model.G])
    dis_theta = bind_flat([model.D, model.C, model.L])
    gen_opt = AdamState.zeros_like([gen_theta], lr=config.lr)
    dis_opt = AdamState.zeros_like([dis_theta], lr=config.lr)

    def draw(ids):
        # normalized sample fingerprints for distinct point ids of any shape
        return scaler.norm_rss(fmap.draw_samples(ids, rng))

    by_entry = config.pairs == "entries"
    n_pairs = len(fmap) if by_entry else m
    for epoch in range(config.epochs):
        order = rng.permutation(n_pairs)
        f_epoch = rss_n if by_entry else draw(np.arange(m))
        sums = np.zeros(len(LOSS_COLUMNS))
        n_batches = 0
        for bi, start in enumerate(range(0, n_pairs, config.batch_size)):
            pick = order[start : start + config.batch_size]
            idx = fmap.point_index[pick] if by_entry else pick
            b = len(idx)
            u_xy = pts_n[idx]
            f_u = f_epoch[pick]
            if config.gap_radius > 0:
                nb = _masked_neighbors(pts, idx, k, rng.random(b) * config.gap_radius)
            else:
                nb = nbrs[idx]
            nb_xy = pts_n[nb]
            nb_fp = draw(nb)

            oth = rng.integers(0, m - 1, size=b)
            oth += oth >= idx
            no_xy = rng.random((b, 2))
            noisy = np.clip(f_u + rng.normal(0.0, noise_n, size=f_u.shape), 0.0, 1.0)

            try:
                fake, _ = model._generate(nb_xy, nb_fp, u_xy)
                (cond, pos), d_grads = _d_step(model, u_xy, f_u, fake, pts_n[oth], no_xy, noisy)
                adam_step(dis_opt, [dis_theta], [flat_grads(d_grads)])
            except NonFiniteError as exc:
                raise NonFiniteError(f"I2AP D phase, epoch {epoch}, batch {bi}: {exc}") from None
            try:
                (gen, l1, adv), g_grads = _g_step(model, nb_xy, nb_fp, u_xy, f_u, scaler.rss_range)
                adam_step(gen_opt, [gen_theta], [flat_grads(g_grads)])
            except NonFiniteError as exc:
                raise NonFiniteError(f"I2AP G phase, epoch {epoch}, batch {bi}: {exc}") from None
            losses = (gen, l1, adv, cond, pos)
            if not np.all(np.isfinite(losses)):
                raise NonFiniteError(f"I2AP epoch {epoch}, batch {bi}: non-finite loss {losses}")
            sums += losses
            n_batches += 1
        row = {"epoch": epoch, **dict(zip(LOSS_COLUMNS, (sums / n_batches).tolist()))}
        model.history.append(row)
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.debug("I2AP %s", row)
        if on_epoch is not None:
            on_epoch(epoch, model)
    return model


def i2ap_generate_many(
    model: I2apModel,
    pts,
    rng: np.random.Generator | None = None,
    fmap: FingerprintMap | None = None,
) -> np.ndarray:
    """Inpainted fingerprints (dBm) at query points, neighbors taken from ``fmap``.

    ``fmap`` defaults to the map the model was trained on. With ``rng=None``
    each neighbor contributes its first recorded sample.
    """
    fmap = fmap if fmap is not None else model.reference
    if fmap is None:
        raise DataError("no reference map to draw neighbors from")
    if fmap.n_aps != model.n_aps:
        raise DataError(f"reference map has {fmap.n_aps} APs, model expects {model.n_aps}")
    sc = model.scaler
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ref = fmap.distinct_points
    nb = _query_neighbors(ref, pts, model.config.k)
    nb_xy = sc.norm_xy(ref[nb])
    nb_fp = sc.norm_rss(fmap.draw_samples(nb, rng))
    out, _ = model._generate(nb_xy, nb_fp, sc.norm_xy(pts))
    return np.clip(sc.denorm_rss(out), sc.rss_floor, sc.rss_ceiling)


def i2ap_generate(model: I2apModel, fmap: FingerprintMap | None, u, rng: np.random.Generator | None = None):
    return i2ap_generate_many(model, np.asarray(u, dtype=float)[None, :], rng, fmap)[0]


def discriminate(model: I2apModel, p, f) -> tuple[float, np.ndarray]:
    """Real/fake score in (0, 1) and the L-head location (normalized coordinates)."""
    sc = model.scaler
    xy = sc.norm_xy(np.asarray(p, dtype=float))[None, :]
    fp = sc.norm_rss(np.asarray(f, dtype=float))[None, :]
    c, loc, _ = model._discriminate(xy, fp)
    return float(np.clip(c[0], LOG_EPS, 1.0 - LOG_EPS)), loc[0]


def i2ap_config_dict(cfg: I2apConfig) -> dict:
    return asdict(cfg)
