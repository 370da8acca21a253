import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpinpaint.core import DataError, FingerprintMap, Scaler, fit_scaler
from fpinpaint.data.synthetic import SyntheticFieldConfig, generate_synthetic
from fpinpaint.i2ap import (
    I2apConfig,
    I2apModel,
    _d_step,
    _g_step,
    _masked_neighbors,
    assemble_neighbor_input,
    build_i2ap,
    discriminate,
    i2ap_generate,
    i2ap_generate_many,
    train_i2ap,
)
from fpinpaint.mlpnet import MlpSpec, Network, bind_flat, flat_grads


def miniature(n=3, k=2, dim_v=4, seed=0, **cfg):
    """Same wiring as the full model, every hidden layer 4 wide."""
    rng = np.random.default_rng(seed)
    config = I2apConfig(k=k, dim_v=dim_v, **cfg)
    net = lambda a, hidden, b, act: Network.create(MlpSpec.build(a, hidden, b, act), rng)  # noqa: E731
    model = I2apModel(
        F=net(n + 2, (4, 4), dim_v, "relu"),
        G=net(k * dim_v + 2, (4, 4), n, "sigmoid"),
        D=net(n + 2, (4, 4, 4), 4, "relu"),
        C=net(4, (), 1, "sigmoid"),
        L=net(4, (), 2, "linear"),
        config=config,
    )
    for network in model.networks():
        for b in network.params.biases:
            b += rng.normal(scale=0.3, size=b.shape)
    return model


def batch(rng, b=5, k=2, n=3):
    return {
        "nb_xy": rng.uniform(size=(b, k, 2)),
        "nb_fp": rng.uniform(0.2, 0.8, size=(b, k, n)),
        "u_xy": rng.uniform(size=(b, 2)),
        "f_u": rng.uniform(0.2, 0.8, size=(b, n)),
    }


def directional_check(theta, grad, loss, rng, trials=6, h=1e-6, tol=1e-3):
    for _ in range(trials):
        d = rng.standard_normal(theta.shape)
        theta += h * d
        fp = loss()
        theta -= 2 * h * d
        fm = loss()
        theta += h * d
        num = (fp - fm) / (2 * h)
        assert abs(grad @ d - num) <= tol * max(abs(num), abs(grad @ d), 1e-8)


@pytest.fixture(scope="module")
def field():
    cfg = SyntheticFieldConfig(width=9.0, height=7.5, ap_positions=6, grid_pitch=1.5, samples_per_point=3, walls=())
    return generate_synthetic(cfg, np.random.default_rng(0))


@pytest.fixture(scope="module")
def trained(field):
    fmap, _ = field
    return train_i2ap(fmap, I2apConfig(k=4, dim_v=30, epochs=3), np.random.default_rng(1))


def test_architecture_widths():
    m = build_i2ap(20, I2apConfig(k=4, dim_v=30), np.random.default_rng(0))
    assert m.F.spec.widths == (22, 256, 128, 30)
    assert m.G.spec.widths == (4 * 30 + 2, 160, 64, 20)
    assert m.G.spec.activations[-1] == "sigmoid"
    assert m.D.spec.widths == (22, 30, 40, 50, 30)
    assert m.C.spec.widths == (30, 1) and m.C.spec.activations == ("sigmoid",)
    assert m.L.spec.widths == (30, 2) and m.L.spec.activations == ("linear",)


def test_width_contracts_enforced():
    m = miniature()
    with pytest.raises(ValueError, match="G input"):
        wrong_g = Network.create(MlpSpec.build(5, (4,), 3, "sigmoid"), np.random.default_rng(0))
        I2apModel(m.F, wrong_g, m.D, m.C, m.L, m.config)
    with pytest.raises(ValueError, match="D input"):
        wrong_d = Network.create(MlpSpec.build(7, (4,), 4, "relu"), np.random.default_rng(0))
        I2apModel(m.F, m.G, wrong_d, m.C, m.L, m.config)


def test_config_invariants():
    with pytest.raises(ValueError):
        I2apConfig(k=1)
    with pytest.raises(ValueError):
        I2apConfig(dim_v=20).check_for(20)
    with pytest.raises(DataError):
        I2apConfig(k=4).check_for(3, n_points=4)
    with pytest.raises(ValueError):
        I2apConfig(lambda_adv=-1)


def test_generator_loss_gradient_through_frozen_discriminator():
    rng = np.random.default_rng(2)
    model = miniature(lambda_l1=1.0, lambda_adv=0.7)
    gen = bind_flat([model.F, model.G])
    bind_flat([model.D, model.C, model.L])
    x = batch(rng)
    args = (x["nb_xy"], x["nb_fp"], x["u_xy"], x["f_u"], 100.0)
    _, grads = _g_step(model, *args)
    directional_check(gen, flat_grads(grads), lambda: _g_step(model, *args)[0][0], rng)


def test_discriminator_loss_gradient():
    rng = np.random.default_rng(3)
    model = miniature(alpha=0.8, beta=1.3)
    dis = bind_flat([model.D, model.C, model.L])
    x = batch(rng)
    fake = rng.uniform(size=(5, 3))
    oth, no, noisy = rng.uniform(size=(5, 2)), rng.uniform(size=(5, 2)), rng.uniform(size=(5, 3))
    args = (x["u_xy"], x["f_u"], fake, oth, no, noisy)
    cfg = model.config

    def total():
        (cond, pos), _ = _d_step(model, *args)
        return cfg.alpha * cond + cfg.beta * pos

    _, grads = _d_step(model, *args)
    directional_check(dis, flat_grads(grads), total, rng)


def test_zero_adversarial_weight_is_pure_l1():
    rng = np.random.default_rng(4)
    model = miniature(lambda_adv=0.0)
    x = batch(rng)
    (total, l1, adv), _ = _g_step(model, x["nb_xy"], x["nb_fp"], x["u_xy"], x["f_u"], 100.0)
    assert adv == 0.0 and total == l1
    out, _ = model._generate(x["nb_xy"], x["nb_fp"], x["u_xy"])
    assert l1 == pytest.approx(100.0 * np.abs(out - x["f_u"]).mean())


def test_position_loss_zero_iff_exact():
    model = miniature()
    xy = np.array([[0.3, 0.6]])
    fp = np.array([[0.5, 0.5, 0.5]])
    _, loc, _ = model._discriminate(xy, fp)
    zeros = np.zeros((1, 3))
    (_, pos), _ = _d_step(model, xy, fp, zeros, xy, xy, fp)
    assert pos == pytest.approx(np.hypot(*(loc[0] - xy[0])))
    (_, pos_exact), _ = _d_step(model, loc, fp, zeros, loc, xy, fp)
    assert pos_exact == pytest.approx(0.0, abs=1e-12)


def test_assemble_neighbor_input(field):
    fmap, _ = field
    sc = fit_scaler(fmap)
    u = tuple(fmap.distinct_points[7])
    t, u_n = assemble_neighbor_input(fmap, u, 4, np.random.default_rng(0), sc, exclude_self=True)
    assert t.shape == (4, fmap.n_aps + 2)
    locs = sc.denorm_xy(t[:, :2])
    assert not any(np.allclose(p, u) for p in locs)
    d = np.hypot(*(locs - u).T)
    assert np.all(np.diff(d) >= -1e-12)
    t2, _ = assemble_neighbor_input(fmap, u, 4, np.random.default_rng(0), sc, exclude_self=True)
    np.testing.assert_array_equal(t, t2)
    np.testing.assert_allclose(u_n, sc.norm_xy(u))


def test_masked_neighbors_respect_radius():
    pts = np.array([(x, y) for x in range(6) for y in range(6)], dtype=float)
    nb = _masked_neighbors(pts, np.array([14]), 4, np.array([1.5]))
    assert np.all(np.hypot(*(pts[nb[0]] - pts[14]).T) > 1.5)
    with pytest.raises(DataError):
        _masked_neighbors(pts, np.array([14]), 4, np.array([100.0]))


def test_training_logs_finite_losses_and_is_reproducible(field, trained):
    fmap, _ = field
    again = train_i2ap(fmap, I2apConfig(k=4, dim_v=30, epochs=3), np.random.default_rng(1))
    assert trained.history == again.history
    for row in trained.history:
        assert all(np.isfinite(v) for v in row.values())
        assert row["L_position"] >= 0


@settings(max_examples=25)
@given(st.floats(-30, 30), st.floats(-30, 30))
def test_generated_fingerprints_in_range(trained, x, y):
    f = i2ap_generate(trained, None, (x, y), np.random.default_rng(0))
    assert f.shape == (trained.n_aps,)
    assert np.all((f >= -100) & (f <= 0))


def test_generation_batch_matches_single(trained):
    pts = np.array([[1.0, 1.0], [4.0, 2.5]])
    many = i2ap_generate_many(trained, pts)
    np.testing.assert_allclose(many[0], i2ap_generate(trained, trained.reference, pts[0]), atol=1e-12)


def test_identical_equidistant_neighbors_commute():
    # two neighbors at equal distance with identical fingerprints: swapping them changes nothing
    pts = np.array([[0, 0], [2, 0], [1, 1], [1, -1]], dtype=float)
    rss = np.array([[-50.0, -60, -70], [-50, -60, -70], [-40, -40, -40], [-80, -80, -80]])
    fmap = FingerprintMap(pts, rss)
    model = miniature()
    model.scaler = Scaler(-100.0, 0.0, (0.0, -1.0, 2.0, 1.0))
    a = i2ap_generate(model, fmap, (1.0, 0.0))
    swapped = FingerprintMap(pts[[1, 0, 2, 3]], rss[[1, 0, 2, 3]])
    np.testing.assert_array_equal(a, i2ap_generate(model, swapped, (1.0, 0.0)))


def test_reference_width_checked(trained):
    bad = FingerprintMap(np.zeros((5, 2)) + np.arange(5)[:, None], np.full((5, 2), -50.0))
    with pytest.raises(DataError):
        i2ap_generate_many(trained, np.zeros((1, 2)), fmap=bad)


def test_discriminate_untrained_is_finite_and_clamped():
    model = build_i2ap(4, I2apConfig(k=2, dim_v=30), np.random.default_rng(0))
    model.scaler = Scaler(-100.0, 0.0, (0.0, 0.0, 10.0, 10.0))
    rng = np.random.default_rng(1)
    for _ in range(20):
        s, loc = discriminate(model, rng.uniform(-5, 15, 2), rng.uniform(-100, 0, 4))
        assert 0.0 < s < 1.0
        assert np.all(np.isfinite(loc))


def test_discriminator_separates_real_from_generated():
    # spatially distinct fingerprints make (u, f_u) easy to tell from early generator output
    cfg = SyntheticFieldConfig(width=9.0, height=9.0, ap_positions=8, grid_pitch=1.5, samples_per_point=4, walls=())
    fmap, _ = generate_synthetic(cfg, np.random.default_rng(5))
    model = train_i2ap(fmap, I2apConfig(k=4, dim_v=30, epochs=30), np.random.default_rng(6))
    pts = fmap.distinct_points
    gen = i2ap_generate_many(model, pts, np.random.default_rng(7))
    real = fmap.draw_samples(np.arange(len(pts)), np.random.default_rng(8))
    s_real = np.mean([discriminate(model, p, f)[0] for p, f in zip(pts, real)])
    s_fake = np.mean([discriminate(model, p, f)[0] for p, f in zip(pts, gen)])
    assert s_real > s_fake


def test_entry_pairs_mode_trains_and_validates(field):
    fmap, _ = field
    model = train_i2ap(fmap, I2apConfig(k=4, dim_v=30, epochs=2, pairs="entries"), np.random.default_rng(1))
    assert len(model.history) == 2
    assert all(np.isfinite(v) for v in model.history[-1].values())
    with pytest.raises(ValueError):
        I2apConfig(pairs="samples")
