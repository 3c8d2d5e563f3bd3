import numpy as np
import pytest

from pwpipe.nn import LayerSpec, ModelConfig, ModelGraph, build_discriminator, build_generator
from pwpipe.train import (
    AdamState,
    LossWeights,
    LrSchedule,
    adam_step,
    backward_graph,
    cyclegan_losses,
    default_cyclegan_schedule,
    forward_training,
    l1_grad,
    l1_loss,
    mse_grad,
    mse_loss,
    mse_to_const,
    mse_to_const_grad,
    read_training_log,
    write_training_log,
    append_log_note,
)

# ---------------------------------------------------------------- losses


def test_l1_and_mse_hand_values():
    a = np.array([1.0, 2.0, 4.0])
    b = np.array([1.0, 0.0, 1.0])
    assert l1_loss(a, b) == pytest.approx((0 + 2 + 3) / 3)
    assert mse_loss(a, b) == pytest.approx((0 + 4 + 9) / 3)
    assert mse_to_const(a, 1.0) == pytest.approx((0 + 1 + 9) / 3)


def test_loss_grads_match_finite_differences():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(2, 3, 3, 1))
    b = rng.normal(size=(2, 3, 3, 1))
    h = 1e-6
    for loss, grad in [
        (lambda u: l1_loss(u, b), lambda u: l1_grad(u, b)),
        (lambda u: mse_loss(u, b), lambda u: mse_grad(u, b)),
        (lambda u: mse_to_const(u, 0.7), lambda u: mse_to_const_grad(u, 0.7)),
    ]:
        g = grad(a)
        for idx in [(0, 0, 0, 0), (1, 2, 1, 0), (0, 1, 2, 0)]:
            p = a.copy(); p[idx] += h
            m = a.copy(); m[idx] -= h
            fd = (loss(p) - loss(m)) / (2 * h)
            assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_l1_grad_zero_at_ties():
    a = np.array([1.0, 2.0])
    g = l1_grad(a, a)
    np.testing.assert_array_equal(g, np.zeros(2))


def test_loss_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        l1_loss(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        LossWeights(lambda_g=-1.0)


# ---------------------------------------------------------------- gradient checks


def _fd_check(graph, x, keys, h=1e-5, rel_tol=1e-4, samples=3, seed=0):
    """Central finite differences against a fixed linear probe.

    The scalar objective sum(output * R) with a frozen random R exercises the
    chain rule without adding loss curvature or kinks of its own, so the
    remaining FD error is truncation through the network.
    """
    rng = np.random.default_rng(seed)
    probe = rng.normal(size=forward_training(graph, x)[0].shape)

    def loss():
        return float(np.sum(forward_training(graph, x)[0] * probe))

    out, tape = forward_training(graph, x)
    grads, _ = backward_graph(graph, tape, probe)
    for key in keys:
        w = graph.weights[key]
        flat_idx = rng.choice(w.size, size=min(samples, w.size), replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, w.shape)
            orig = w[idx]
            w[idx] = orig + h
            lp = loss()
            w[idx] = orig - h
            lm = loss()
            w[idx] = orig
            fd = (lp - lm) / (2 * h)
            an = grads[key][idx]
            if abs(fd) < 1e-9 and abs(an) < 1e-9:
                continue
            rel = abs(fd - an) / max(abs(fd), abs(an))
            assert rel <= rel_tol, f"{key}{idx}: fd {fd} vs analytic {an}"


def _f64_graph(builder, *args, seed, **kwargs):
    g = builder(*args, **kwargs)
    g.init_weights(seed=seed)
    g.weights = {k: np.asarray(v, dtype=np.float64) for k, v in g.weights.items()}
    return g


def test_unet_gradients_every_layer_kind_over_seeds():
    # covers conv2d (stride 1 and 2), transposed conv, instance_norm,
    # leaky_relu, concat_skip and sigmoid in one graph
    cfg = ModelConfig(resolution=8, base_filters=4, levels=2)
    for seed in range(10):
        g = _f64_graph(build_generator, cfg, seed=seed)
        x = np.random.default_rng(1000 + seed).random((1, 8, 8, 1))
        keys = [k for k in g.weights if not k.endswith(".u")]
        _fd_check(g, x, keys, samples=2, seed=seed)


def test_discriminator_gradients_with_spectral_norm():
    cfg = ModelConfig(resolution=16, disc_base_filters=4, levels=2)
    for seed in range(10):
        d = _f64_graph(build_discriminator, cfg, role="discriminator_X", seed=seed)
        x = np.random.default_rng(2000 + seed).random((1, 16, 16, 1))
        keys = [k for k in d.weights if not k.endswith(".u")]
        _fd_check(d, x, keys, samples=2, seed=seed)


def test_tanh_and_batch_norm_gradients():
    specs = (
        LayerSpec(name="c0", kind="conv2d", kernel=(3, 3), stride=1, filters=3),
        LayerSpec(name="bn0", kind="batch_norm"),
        LayerSpec(name="t0", kind="tanh"),
        LayerSpec(name="c1", kind="conv2d", kernel=(1, 1), stride=1, filters=1),
    )
    g = ModelGraph(role="stage1_unet", layers=specs, in_channels=2)
    g.init_weights(seed=3)
    g.weights = {k: np.asarray(v, dtype=np.float64) for k, v in g.weights.items()}
    # make running stats non-trivial
    g.weights["bn0.mean"] = np.array([0.1, -0.2, 0.05])
    g.weights["bn0.var"] = np.array([0.5, 1.5, 2.0])
    x = np.random.default_rng(4).random((2, 6, 6, 2))
    _fd_check(g, x, ["c0.w", "c0.b", "bn0.gamma", "bn0.beta", "c1.w"], samples=4)


def test_crop_output_transpose_gradients():
    specs = (
        LayerSpec(name="up", kind="conv2d_transpose", kernel=(4, 4), stride=2,
                  filters=2, semantics="crop_output"),
        LayerSpec(name="act", kind="leaky_relu", alpha=0.2),
    )
    g = ModelGraph(role="stage1_unet", layers=specs, in_channels=3)
    g.init_weights(seed=5)
    g.weights = {k: np.asarray(v, dtype=np.float64) for k, v in g.weights.items()}
    x = np.random.default_rng(6).random((1, 5, 5, 3))
    _fd_check(g, x, ["up.w", "up.b"], samples=6)


def test_input_gradient_matches_finite_differences():
    cfg = ModelConfig(resolution=8, base_filters=4, levels=2)
    g = _f64_graph(build_generator, cfg, seed=11)
    rng = np.random.default_rng(12)
    x = rng.random((1, 8, 8, 1))
    target = rng.normal(size=(1, 8, 8, 1))
    out, tape = forward_training(g, x)
    _, dx = backward_graph(g, tape, l1_grad(out, target))
    h = 1e-6
    for idx in [(0, 0, 0, 0), (0, 3, 5, 0), (0, 7, 7, 0)]:
        p = x.copy(); p[idx] += h
        m = x.copy(); m[idx] -= h
        fd = (l1_loss(forward_training(g, p)[0], target)
              - l1_loss(forward_training(g, m)[0], target)) / (2 * h)
        assert dx[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_spectral_norm_gradient_is_exact_for_fixed_u():
    # forward uses sigma = ||W^T u|| with the stored u; the rank-one
    # correction makes the analytic gradient exact, so a tight FD tolerance
    # holds even though u is not the converged singular vector
    specs = (
        LayerSpec(name="d0", kind="conv2d", kernel=(3, 3), stride=2, filters=4,
                  spectral_norm=True),
        LayerSpec(name="a0", kind="leaky_relu", alpha=0.2),
        LayerSpec(name="d1", kind="conv2d", kernel=(1, 1), stride=1, filters=1),
    )
    g = ModelGraph(role="discriminator_X", layers=specs, in_channels=2)
    g.init_weights(seed=7)
    g.weights = {k: np.asarray(v, dtype=np.float64) for k, v in g.weights.items()}
    x = np.random.default_rng(8).random((1, 8, 8, 2))
    _fd_check(g, x, ["d0.w"], h=1e-5, rel_tol=2e-5, samples=8)


# ---------------------------------------------------------------- cyclegan losses


def _toy_cyclegan(res=16):
    cfg = ModelConfig(resolution=res, base_filters=4, disc_base_filters=4, levels=2)
    G = build_generator(cfg, role="generator_G")
    F = build_generator(cfg, role="generator_F")
    DX = build_discriminator(cfg, role="discriminator_X")
    DY = build_discriminator(cfg, role="discriminator_Y")
    for i, m in enumerate((G, F, DX, DY)):
        m.init_weights(seed=40 + i)
    return G, F, DX, DY


def test_cyclegan_totals_equal_component_sums():
    G, F, DX, DY = _toy_cyclegan()
    rng = np.random.default_rng(50)
    x = rng.random((1, 16, 16, 1), dtype=np.float32)
    y = rng.random((1, 16, 16, 1), dtype=np.float32)
    w = LossWeights()
    out = cyclegan_losses(G, F, DX, DY, x, y, w)
    assert abs(out["gen_G"] - (out["gen_G_gan"] + out["gen_G_cyc"] + out["gen_G_id"])) <= 1e-10
    assert abs(out["gen_F"] - (out["gen_F_gan"] + out["gen_F_cyc"] + out["gen_F_id"])) <= 1e-10
    assert set(out) == {
        "gen_G_gan", "gen_G_cyc", "gen_G_id", "gen_F_gan", "gen_F_cyc", "gen_F_id",
        "disc_X", "disc_Y", "gen_G", "gen_F",
    }
    for v in out.values():
        assert np.isfinite(v) and v >= 0.0


def test_cyclegan_lambda_weights_scale_gan_terms():
    G, F, DX, DY = _toy_cyclegan()
    rng = np.random.default_rng(51)
    x = rng.random((1, 16, 16, 1), dtype=np.float32)
    y = rng.random((1, 16, 16, 1), dtype=np.float32)
    base = cyclegan_losses(G, F, DX, DY, x, y, LossWeights(lambda_g=1.0, lambda_f=0.1))
    doubled = cyclegan_losses(G, F, DX, DY, x, y, LossWeights(lambda_g=2.0, lambda_f=0.2))
    assert doubled["gen_G_gan"] == pytest.approx(2.0 * base["gen_G_gan"], rel=1e-12)
    assert doubled["gen_F_gan"] == pytest.approx(2.0 * base["gen_F_gan"], rel=1e-12)
    assert doubled["gen_G_cyc"] == base["gen_G_cyc"]


# ---------------------------------------------------------------- ADAM


def test_adam_matches_hand_recurrence():
    # single scalar weight, fixed gradient sequence, bias-corrected updates
    w = {"p": np.array([2.0])}
    st = AdamState()
    grads = [np.array([1.0]), np.array([-0.5]), np.array([0.25])]
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    m = v = 0.0
    expect = 2.0
    for t, g in enumerate(grads, start=1):
        adam_step(st, w, {"p": g}, lr=lr)
        m = b1 * m + (1 - b1) * float(g[0])
        v = b2 * v + (1 - b2) * float(g[0]) ** 2
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        expect -= lr * mhat / (np.sqrt(vhat) + eps)
        assert w["p"][0] == pytest.approx(expect, abs=1e-14)


def test_adam_zero_lr_is_bit_identical():
    rng = np.random.default_rng(60)
    w = {"a": rng.normal(size=(3, 3)).astype(np.float32)}
    before = w["a"].copy()
    st = AdamState()
    adam_step(st, w, {"a": rng.normal(size=(3, 3))}, lr=0.0)
    assert np.array_equal(w["a"], before)
    assert w["a"].dtype == np.float32


def test_adam_preserves_dtype_and_shares_step():
    w = {"a": np.ones(2, dtype=np.float32), "b": np.ones(3, dtype=np.float32)}
    st = AdamState()
    adam_step(st, w, {"a": np.ones(2)}, lr=1e-3)  # b has no gradient this step
    adam_step(st, w, {"a": np.ones(2), "b": np.ones(3)}, lr=1e-3)
    assert st.step == 2
    assert w["a"].dtype == np.float32 and w["b"].dtype == np.float32


def test_adam_rejects_unknown_or_misshapen_gradients():
    w = {"a": np.ones(2)}
    st = AdamState()
    with pytest.raises(KeyError):
        adam_step(st, w, {"zzz": np.ones(2)}, lr=1e-3)
    with pytest.raises(ValueError):
        adam_step(st, w, {"a": np.ones(3)}, lr=1e-3)


# ---------------------------------------------------------------- schedule


def test_lr_schedule_piecewise_values():
    s = default_cyclegan_schedule()
    assert s.rate(0) == pytest.approx(1e-4)
    assert s.rate(9999) == pytest.approx(1e-4)
    assert s.rate(10000) == pytest.approx(5e-5)
    assert s.rate(29999) == pytest.approx(5e-5)
    assert s.rate(30000) == pytest.approx(1e-5)
    assert s.rate(10**6) == pytest.approx(1e-5)


def test_lr_schedule_scaling_compresses_boundaries():
    s = default_cyclegan_schedule().scaled(500 / 40000)
    assert s.rate(0) == pytest.approx(1e-4)
    assert s.rate(s.boundaries[0]) == pytest.approx(5e-5)
    assert s.boundaries[0] == 125
    assert s.boundaries[1] == 375


def test_lr_schedule_validation():
    with pytest.raises(ValueError):
        LrSchedule(boundaries=(10, 5), rates=(1.0, 0.5, 0.1))
    with pytest.raises(ValueError):
        LrSchedule(boundaries=(10,), rates=(1.0, 0.5, 0.1))


# ---------------------------------------------------------------- logs


def test_training_log_round_trip(tmp_path):
    path = tmp_path / "log.txt"
    meta = {"task": "stage1", "epochs": 3}
    cols = ["epoch", "train_l1", "val_l1"]
    rows = [[1, 0.5, 0.6], [2, 0.25, 0.4], [3, 0.125, 0.3]]
    write_training_log(path, meta, cols, rows)
    append_log_note(path, "finished")
    got_meta, got = read_training_log(path)
    assert got_meta["task"] == "stage1"
    assert got_meta["epochs"] == "3"
    assert "finished" in got_meta["_notes"]
    np.testing.assert_allclose(got["val_l1"], [0.6, 0.4, 0.3])
    np.testing.assert_allclose(got["epoch"], [1, 2, 3])
