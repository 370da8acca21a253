import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpinpaint.core import fit_scaler
from fpinpaint.data.synthetic import SyntheticFieldConfig, generate_synthetic
from fpinpaint.gpr import fit_gpr
from fpinpaint.iap import (
    IapConfig,
    _loss_and_grads,
    build_iap,
    iap_inpaint,
    iap_inpaint_many,
    train_iap,
)
from fpinpaint.mlpnet import bind_flat


@pytest.fixture(scope="module")
def small_field():
    cfg = SyntheticFieldConfig(width=6.0, height=6.0, ap_positions=4, grid_pitch=1.5, samples_per_point=4, walls=())
    fmap, _ = generate_synthetic(cfg, np.random.default_rng(0))
    return fmap


@pytest.fixture(scope="module")
def trained(small_field):
    gpr = fit_gpr(small_field)
    return train_iap(small_field, gpr, IapConfig(epochs=5), np.random.default_rng(1)), gpr


def test_architecture_widths():
    m = build_iap(20, np.random.default_rng(0))
    assert m.encoder.spec.widths == (20, 128, 192, 120)
    assert m.encoder.spec.activations == ("relu", "relu", "linear")
    assert m.decoder.spec.widths == (60, 128, 64, 20)
    assert m.decoder.spec.activations[-1] == "sigmoid"


def test_loss_gradient_matches_directional_finite_difference():
    rng = np.random.default_rng(4)
    model = build_iap(5, rng, IapConfig(beta=0.3, latent_dim=3))
    theta = bind_flat(model.networks())
    x = rng.uniform(0.2, 0.8, size=(6, 5))
    t = rng.uniform(0.2, 0.8, size=(6, 5))
    eps = rng.standard_normal((6, 3))
    (_, _, _), g = _loss_and_grads(model, x, t, eps, 100.0)
    h = 1e-6
    for _ in range(5):
        d = rng.standard_normal(theta.shape)
        theta += h * d
        fp = _loss_and_grads(model, x, t, eps, 100.0)[0][2]
        theta -= 2 * h * d
        fm = _loss_and_grads(model, x, t, eps, 100.0)[0][2]
        theta += h * d
        assert g @ d == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-8)


def test_loss_components():
    rng = np.random.default_rng(0)
    model = build_iap(4, rng, IapConfig(alpha=2.0, beta=0.5, latent_dim=2))
    x = rng.uniform(size=(3, 4))
    (rec, kl, total), _ = _loss_and_grads(model, x, x, np.zeros((3, 2)), 100.0)
    assert rec >= 0 and kl >= 0
    assert total == pytest.approx(2.0 * rec + 0.5 * kl)


def test_training_is_reproducible_and_logs_every_epoch(small_field, trained):
    model, gpr = trained
    again = train_iap(small_field, gpr, IapConfig(epochs=5), np.random.default_rng(1))
    assert [r["loss"] for r in model.history] == [r["loss"] for r in again.history]
    assert [r["epoch"] for r in model.history] == list(range(5))
    assert set(model.history[0]) == {"epoch", "L_rec", "L_KL", "loss"}


@settings(max_examples=25)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_inpainting_in_range_and_deterministic(trained, x, y):
    model, gpr = trained
    f = iap_inpaint(model, gpr, (x, y))
    assert f.shape == (4,)
    assert np.all((f >= -100) & (f <= 0))
    np.testing.assert_array_equal(f, iap_inpaint(model, gpr, (x, y)))


def test_batch_inpainting_matches_single(trained):
    model, gpr = trained
    pts = np.array([[0.5, 0.5], [3.0, 2.0]])
    many = iap_inpaint_many(model, gpr, pts)
    np.testing.assert_allclose(many[1], iap_inpaint(model, gpr, pts[1]), atol=1e-12)


def test_training_reduces_reconstruction_loss():
    cfg = SyntheticFieldConfig(width=13.5, height=13.5, ap_positions=10, grid_pitch=1.5, samples_per_point=10)
    fmap, _ = generate_synthetic(cfg, np.random.default_rng(2))
    assert len(fmap.distinct_points) == 100
    model = train_iap(fmap, fit_gpr(fmap), IapConfig(epochs=300), np.random.default_rng(3), fit_scaler(fmap))
    assert model.history[-1]["L_rec"] < model.history[0]["L_rec"]


def test_mismatched_gpr_rejected(small_field):
    gpr = fit_gpr(small_field)
    narrow = type(small_field)(small_field.points, small_field.rss[:, :2])
    with pytest.raises(ValueError):
        train_iap(narrow, gpr, IapConfig(epochs=1))


def test_config_validation():
    with pytest.raises(ValueError):
        IapConfig(beta=-1)
    with pytest.raises(ValueError):
        IapConfig(epochs=0)
