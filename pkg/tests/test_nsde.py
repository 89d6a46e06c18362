import io

import numpy as np
import pytest

from sigscore import diffengine, nsde
from sigscore.errors import RolloutDivergenceError
from sigscore.paths import Path, PathBatch, TimeGrid, time_augment
from sigscore.sigkernel import RBF, Linear, SolverConfig


def test_init_deterministic_and_seed_sensitivity():
    dims = nsde.SdeDims()
    a = nsde.init_params(dims, seed=1)
    b = nsde.init_params(dims, seed=1)
    c = nsde.init_params(dims, seed=2)
    for k, v in a.tree().items():
        np.testing.assert_array_equal(v, b.tree()[k])
    assert any(
        not np.array_equal(v, c.tree()[k]) for k, v in a.tree().items()
    )


def test_init_scale_zero_constant_rollout():
    dims = nsde.SdeDims(d_x=1, d_y=4, d_w=2, d_a=4, hidden=(8,))
    params = nsde.init_params(dims, init_scale=0.0, seed=3)
    grid = TimeGrid(np.arange(6.0))
    noise = nsde.make_noise(5, grid, dims, seed=4)
    batch = nsde.sample(params, 5, grid, noise)
    vals = batch.stack()[:, :, 1]  # channel 0 is time
    np.testing.assert_allclose(vals, np.broadcast_to(vals[:, :1], vals.shape), atol=1e-14)


def test_bias_only_drift_gives_linear_paths():
    dims = nsde.SdeDims(d_x=1, d_y=2, d_w=1, d_a=2, hidden=())
    params = nsde.init_params(dims, init_scale=0.0, seed=5)
    params.mu.final_activation = "identity"
    params.sigma.final_activation = "identity"
    tree = params.tree()
    tree["mu.b0"] = np.array([0.5, -0.25])
    tree["A"] = np.array([[1.0, 1.0]])
    params = params.replace_tree(tree)
    grid = TimeGrid(np.arange(5.0))
    noise = nsde.make_noise(3, grid, dims, seed=6)
    batch = nsde.sample(params, 3, grid, noise)
    vals = batch.stack()[:, :, 1]
    # deterministic Euler: X_k = A (c t_k) with A c = 0.25, dt = 1
    np.testing.assert_allclose(vals, np.tile(0.25 * np.arange(5.0), (3, 1)), atol=1e-12)


def test_sample_reproducible_from_noise():
    dims = nsde.SdeDims(d_x=2, d_y=3, d_w=2, d_a=3, hidden=(4,))
    params = nsde.init_params(dims, init_scale=0.4, seed=7)
    grid = TimeGrid(np.arange(8.0))
    n1 = nsde.make_noise(4, grid, dims, seed=8)
    n2 = nsde.make_noise(4, grid, dims, seed=8)
    b1 = nsde.sample(params, 4, grid, n1)
    b2 = nsde.sample(params, 4, grid, n2)
    np.testing.assert_array_equal(b1.stack(), b2.stack())
    assert b1.time_channel == 0


def test_noise_bundle_shapes_and_scaling():
    dims = nsde.SdeDims(d_w=3, d_a=5)
    grid = TimeGrid(np.array([0.0, 0.5, 2.0]))
    noise = nsde.make_noise(1000, grid, dims, seed=9)
    assert noise.a.shape == (1000, 5)
    assert noise.dW.shape == (1000, 2, 3)
    # increments scale with sqrt(dt)
    v = noise.dW.var(axis=(0, 2))
    np.testing.assert_allclose(v, [0.5, 1.5], rtol=0.15)


def test_rollout_divergence_reports_step():
    dims = nsde.SdeDims(d_x=1, d_y=2, d_w=1, d_a=2, hidden=(4,))
    params = nsde.init_params(dims, init_scale=0.5, seed=10)
    tree = params.tree()
    tree["mu.W1"] = tree["mu.W1"] * 1e308  # explode immediately
    params = params.replace_tree(tree)
    params.mu.final_activation = "identity"
    grid = TimeGrid(np.arange(4.0))
    noise = nsde.make_noise(2, grid, dims, seed=11)
    with pytest.raises(RolloutDivergenceError) as exc:
        nsde.sample(params, 2, grid, noise)
    assert exc.value.step >= 1


def test_encode_condition_constant_path_is_zero():
    q = Path(TimeGrid(np.arange(4.0)), np.full((4, 2), 1.5))
    enc_q = nsde.encode_condition(q, 3, transforms=())
    np.testing.assert_allclose(enc_q, 0.0, atol=1e-12)


def test_encode_condition_depth1_is_increment():
    vals = np.array([[0.0, 1.0], [0.5, 3.0], [1.0, 2.0]])
    p = Path(TimeGrid(np.arange(3.0)), vals)
    enc = nsde.encode_condition(p, 1, transforms=())
    np.testing.assert_allclose(enc, [0.0, 1.0, 1.0], atol=1e-12)  # level0 + incr


def test_encode_condition_leadlag_dimension():
    d = 2
    M = 3
    p = Path(TimeGrid(np.arange(5.0)), np.random.default_rng(0).normal(size=(5, d)))
    enc = nsde.encode_condition(p, M, transforms=("lead_lag",))
    expected = sum((2 * d) ** k for k in range(M + 1))
    assert enc.shape == (expected,)


def test_checkpoint_roundtrip_bitexact(tmp_path):
    dims = nsde.SdeDims(d_x=2, d_y=3, d_w=2, d_a=3, hidden=(4, 4))
    params = nsde.init_params(dims, init_scale=0.4, seed=12)
    f = tmp_path / "p.ckpt"
    nsde.save_checkpoint(params, str(f))
    back = nsde.load_checkpoint(str(f))
    for k, v in params.tree().items():
        np.testing.assert_array_equal(v, back.tree()[k])
    assert back.dims == params.dims
    # byte-deterministic writes
    buf1, buf2 = io.BytesIO(), io.BytesIO()
    nsde.save_checkpoint(params, buf1)
    nsde.save_checkpoint(back, buf2)
    assert buf1.getvalue() == buf2.getvalue()


def test_conditional_sample_uses_encoding():
    d_c = 3
    dims = nsde.SdeDims(d_x=1, d_y=2, d_w=1, d_a=2, d_c=d_c, hidden=(4,), xi_in=1)
    params = nsde.init_params(dims, init_scale=0.4, seed=13, learn_initial=True)
    grid = TimeGrid(np.arange(5.0))
    noise = nsde.make_noise(3, grid, dims, seed=14)
    xi_in = np.zeros((3, 1))
    b1 = nsde.sample_with_record(
        params, 3, grid, noise, condition=np.zeros(d_c), xi_input=xi_in
    )[0]
    b2 = nsde.sample_with_record(
        params, 3, grid, noise, condition=np.ones(d_c), xi_input=xi_in
    )[0]
    assert not np.array_equal(b1.stack(), b2.stack())
    with pytest.raises(ValueError, match="encoding"):
        nsde.sample(params, 3, grid, noise)


def test_conditional_mean_tracks_condition_endpoint():
    # desk-scale sanity oracle: for a martingale target law, conditional
    # samples should start (and stay centered) where the condition ended
    from sigscore.cli import apply_pair_transforms
    from sigscore.synthdata import GbmConfig, gbm, make_conditional_pairs

    window_grid = TimeGrid.regular(24, 0.0, 0.23)
    windows = gbm(GbmConfig(mu=0.0, sigma=0.2, grid=window_grid, n=64, seed=0))
    pairs = [
        apply_pair_transforms(x, y, ["normalize_initial", "scale:10", "translate_to_zero"])
        for x, y in make_conditional_pairs(windows, past_len=16, future_len=8)
    ]
    encoder = lambda p: nsde.encode_condition(p, 2, ("time_normalize", "lead_lag"))
    d_c = encoder(pairs[0][0]).shape[0]
    dims = nsde.SdeDims(d_x=1, d_y=6, d_w=2, d_a=6, d_c=d_c, hidden=(16,), xi_in=1)
    params = nsde.init_params(dims, init_scale=0.1, seed=1, learn_initial=True)
    grid = TimeGrid.regular(8, 0.0, 7.0)
    settings = nsde.TrainSettings(
        steps=150,
        batch_size=4,
        kernel_list=((1.0, RBF(1.0)),),
        solver=SolverConfig(0, "order2"),
        gen_transforms=("time_normalize",),
    )
    adam = diffengine.AdamState(lr=3e-3)
    params, _ = nsde.train_conditional(
        params, pairs, grid, settings, adam, seed=2, fan_out=8, encoder=encoder
    )
    cond_end, gen_start = [], []
    for i in range(0, len(pairs), 8):
        x, _ = pairs[i]
        noise = nsde.make_noise(32, grid, dims, seed=100 + i)
        x_term = x.values[-1, x.value_channels()]
        gen = nsde.sample_with_record(
            params, 32, grid, noise, condition=encoder(x),
            xi_input=np.tile(x_term, (32, 1)),
        )[0]
        cond_end.append(x.values[-1, 1])
        gen_start.append(gen.stack()[:, 0, 1].mean())
    corr = np.corrcoef(cond_end, gen_start)[0, 1]
    assert corr > 0.5, f"generated starts do not track condition endpoints (corr {corr:.2f})"


def test_train_smoke_constant_target():
    # learning a constant distribution: the loss decreases over 50 steps in
    # at least 18 of 20 seeds (decrease measured start-window to end-window;
    # a stochastic minibatch loss is not per-step monotone)
    grid = TimeGrid(np.arange(8.0))
    target = PathBatch(
        [time_augment(Path(grid, np.zeros((8, 1)))) for _ in range(16)]
    )
    improved = 0
    for seed in range(20):
        dims = nsde.SdeDims(d_x=1, d_y=3, d_w=2, d_a=3, hidden=(8,))
        params = nsde.init_params(dims, init_scale=0.3, seed=seed)
        settings = nsde.TrainSettings(
            steps=50,
            batch_size=8,
            kernel_list=((1.0, RBF(1.0)),),
            solver=SolverConfig(0, "order2"),
        )
        adam = diffengine.AdamState(lr=3e-3)
        _, metrics = nsde.train_unconditional(
            params, target, grid, settings, adam, seed=seed
        )
        first = np.mean([m["loss"] for m in metrics[:5]])
        last = np.mean([m["loss"] for m in metrics[-5:]])
        improved += last < first
    assert improved >= 18, f"loss improved in only {improved}/20 seeds"
