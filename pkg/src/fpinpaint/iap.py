"""Inter-AP inpainting: a VAE that refines GPR-predicted fingerprints.

The encoder sees only the normalized GPR fingerprint at a point; the decoder
maps the latent mean back to a fingerprint on the normalized RSS scale.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import FingerprintMap, Scaler, fit_scaler
from .gpr import GprModel, gpr_predict_many
from .mlpnet import (
    AdamState,
    MlpSpec,
    Network,
    NonFiniteError,
    adam_step,
    bind_flat,
    flat_grads,
    kl_gauss_grad,
)

log = logging.getLogger(__name__)

ENCODER_HIDDEN = (128, 192)
DECODER_HIDDEN = (128, 64)
LATENT_DIM = 60


@dataclass
class IapConfig:
    alpha: float = 1.0
    beta: float = 0.01
    epochs: int = 1000
    batch_size: int = 16
    lr: float = 1e-4
    latent_dim: int = LATENT_DIM

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs, batch_size and lr must be positive")


@dataclass
class IapModel:
    encoder: Network  # outputs [mu | logvar]
    decoder: Network
    scaler: Scaler | None = None
    config: IapConfig = field(default_factory=IapConfig)
    gpr: GprModel | None = None
    history: list[dict] = field(default_factory=list, repr=False)

    @property
    def n_aps(self) -> int:
        return self.decoder.spec.n_out

    @property
    def latent_dim(self) -> int:
        return self.decoder.spec.n_in

    def networks(self) -> list[Network]:
        return [self.encoder, self.decoder]

    def encode(self, x):
        h = self.encoder(x)
        return h[..., : self.latent_dim], h[..., self.latent_dim :]


def build_iap(n_aps: int, rng: np.random.Generator, config: IapConfig | None = None) -> IapModel:
    if n_aps < 1:
        raise ValueError("n_aps must be >= 1")
    config = config or IapConfig()
    dz = config.latent_dim
    enc = MlpSpec.build(n_aps, ENCODER_HIDDEN, 2 * dz, "linear")
    dec = MlpSpec.build(dz, DECODER_HIDDEN, n_aps, "sigmoid")
    return IapModel(Network.create(enc, rng), Network.create(dec, rng), config=config)


def _loss_and_grads(model: IapModel, x, target, eps, rss_range: float):
    """Forward/backward on one batch. ``target`` is normalized RSS."""
    cfg = model.config
    dz = model.latent_dim
    b = len(x)
    h, enc_cache = model.encoder.forward(x)
    mu, logvar = h[:, :dz], h[:, dz:]
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    out, dec_cache = model.decoder.forward(z)

    diff = out - target
    rec = rss_range * np.mean(np.abs(diff))
    kl = 0.5 * np.sum(mu * mu + np.expm1(logvar) - logvar) / b
    total = cfg.alpha * rec + cfg.beta * kl

    g_out = cfg.alpha * rss_range * np.sign(diff) / diff.size
    g_dec, g_z = model.decoder.backward(dec_cache, g_out)
    g_mu_kl, g_lv_kl = kl_gauss_grad(mu, logvar)
    g_mu = g_z + cfg.beta * g_mu_kl / b
    g_lv = g_z * eps * 0.5 * std + cfg.beta * g_lv_kl / b
    g_enc, _ = model.encoder.backward(enc_cache, np.hstack([g_mu, g_lv]))
    return (rec, kl, total), flat_grads([g_enc, g_dec])


def train_iap(
    fmap: FingerprintMap,
    gpr: GprModel,
    config: IapConfig | None = None,
    rng: np.random.Generator | None = None,
    scaler: Scaler | None = None,
) -> IapModel:
    """Fit the VAE on every (point, sample) pair of ``fmap``.

    Input is the GPR mean at the sample's point, target is the sample itself.
    Loss is alpha * L1 (dBm) + beta * KL, averaged over the batch.
    """
    config = config or IapConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    scaler = scaler or fit_scaler(fmap, fmap.rss_floor, fmap.rss_ceiling)
    if gpr.n_aps != fmap.n_aps:
        raise ValueError(f"GPR has {gpr.n_aps} APs, map has {fmap.n_aps}")
    model = build_iap(fmap.n_aps, rng, config)
    model.scaler = scaler
    model.gpr = gpr

    gpr_mean, _ = gpr_predict_many(gpr, fmap.distinct_points)
    x_all = scaler.norm_rss(gpr_mean)[fmap.point_index]
    t_all = scaler.norm_rss(fmap.rss)
    theta = bind_flat(model.networks())
    opt = AdamState.zeros_like([theta], lr=config.lr)
    n = len(fmap)
    dz = model.latent_dim

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            eps = rng.standard_normal((len(idx), dz))
            try:
                losses, grads = _loss_and_grads(model, x_all[idx], t_all[idx], eps, scaler.rss_range)
            except NonFiniteError as exc:
                raise NonFiniteError(f"IAP epoch {epoch}: {exc}") from None
            if not np.isfinite(losses[2]):
                raise NonFiniteError(f"IAP epoch {epoch}: non-finite loss")
            adam_step(opt, [theta], [grads])
            sums += losses
            n_batches += 1
        rec, kl, total = sums / n_batches
        model.history.append({"epoch": epoch, "L_rec": rec, "L_KL": kl, "loss": total})
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.debug("IAP epoch %d rec=%.4f kl=%.4f", epoch, rec, kl)
    return model


def iap_inpaint_many(model: IapModel, gpr: GprModel, pts) -> np.ndarray:
    gpr_mean, _ = gpr_predict_many(gpr, pts)
    mu, _ = model.encode(model.scaler.norm_rss(gpr_mean))
    out = model.decoder(mu)
    return np.clip(model.scaler.denorm_rss(out), model.scaler.rss_floor, model.scaler.rss_ceiling)


def iap_inpaint(model: IapModel, gpr: GprModel, u) -> np.ndarray:
    """Deterministic inpainting at ``u``: decode the latent mean of the GPR fingerprint."""
    return iap_inpaint_many(model, gpr, np.asarray(u, dtype=float)[None, :])[0]


def iap_config_dict(cfg: IapConfig) -> dict:
    return asdict(cfg)
