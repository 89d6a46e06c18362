import math

import numpy as np
import pytest

from sigscore import tsig
from sigscore.errors import DivergenceError
from sigscore.paths import Path, PathBatch, TimeGrid
from sigscore.sigkernel import (
    RBF,
    SETCEXP,
    SETID,
    SETSQR,
    Linear,
    SolverConfig,
    _mesh_weights,
    gram,
    kernel_eval,
    kernel_grad_x,
    refine_values,
    solve_from_static_matrix,
)

I0_OF_2 = 2.2795853023360673  # sum_k 1 / (k!)^2

CFG2 = SolverConfig(2, "order2")


def path_of(values):
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    return Path(TimeGrid(np.arange(float(values.shape[0]))), values)


def random_bv_path(rng, L, d, total_variation):
    """Piecewise-linear path with prescribed total variation."""
    inc = rng.standard_normal((L - 1, d))
    inc *= total_variation / np.abs(inc).sum()
    return path_of(np.vstack([np.zeros(d), np.cumsum(inc, axis=0)]))


def test_constant_path_gives_one():
    # all driving increments vanish, so f stays at its boundary value
    # (up to second-difference rounding noise)
    rng = np.random.default_rng(0)
    x = path_of(np.full((6, 2), 3.0))
    y = path_of(rng.standard_normal((9, 2)))
    assert kernel_eval(x, y, Linear(), CFG2) == pytest.approx(1.0, abs=1e-12)
    assert kernel_eval(x, y, RBF(0.7), CFG2) == pytest.approx(1.0, abs=1e-12)


def test_analytic_linear_path_value():
    p = path_of(np.linspace(0.0, 1.0, 5))
    v = kernel_eval(p, p, Linear(), SolverConfig(4, "order2"))
    assert abs(v - I0_OF_2) <= 1e-4


def test_matches_truncated_oracle_on_small_tv_paths():
    rng = np.random.default_rng(1)
    cfg = SolverConfig(3, "order2")
    for _ in range(6):
        x = random_bv_path(rng, 10, 2, 1.0)
        y = random_bv_path(rng, 10, 2, 1.0)
        pde = kernel_eval(x, y, Linear(), cfg)
        oracle = tsig.truncated_kernel(x, y, 10)
        assert abs(pde - oracle) <= 1e-3


def test_truncated_kernel_increases_to_pde_value():
    rng = np.random.default_rng(2)
    x = random_bv_path(rng, 8, 2, 0.9)
    pde = kernel_eval(x, x, Linear(), SolverConfig(3, "order2"))
    vals = [tsig.truncated_kernel(x, x, N) for N in range(1, 8)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - pde) < 1e-3


def test_symmetry_exact():
    rng = np.random.default_rng(3)
    x = path_of(rng.standard_normal((7, 2)) * 0.5)
    y = path_of(rng.standard_normal((5, 2)) * 0.5)
    for sk in (Linear(), RBF(1.0), SETID(1.0)):
        assert kernel_eval(x, y, sk, CFG2) == kernel_eval(y, x, sk, CFG2)


def test_order2_self_convergence():
    # refinement error shrinks as lambda grows, on smooth test paths
    t = np.linspace(0.0, 1.0, 9)
    x = path_of(np.stack([np.sin(2 * t), np.cos(t)], axis=1))
    y = path_of(np.stack([t, t * t], axis=1))
    vals = [
        kernel_eval(x, y, Linear(), SolverConfig(lam, "order2")) for lam in (0, 1, 2, 3)
    ]
    d01 = abs(vals[1] - vals[0])
    d12 = abs(vals[2] - vals[1])
    d23 = abs(vals[3] - vals[2])
    assert d12 < d01 and d23 < d12


def test_order1_less_accurate_than_order2():
    p = path_of(np.linspace(0.0, 1.0, 5))
    cfg1 = SolverConfig(2, "order1")
    cfg2 = SolverConfig(2, "order2")
    e1 = abs(kernel_eval(p, p, Linear(), cfg1) - I0_OF_2)
    e2 = abs(kernel_eval(p, p, Linear(), cfg2) - I0_OF_2)
    assert e2 < e1


def test_scaling_matches_oracle_series():
    rng = np.random.default_rng(4)
    x = random_bv_path(rng, 6, 2, 0.8)
    c = 0.5
    xs = path_of(c * x.values)
    pde = kernel_eval(xs, xs, Linear(), SolverConfig(3, "order2"))
    sx = tsig.signature(x, 12)
    series = sum(
        c ** (2 * k) * float(sx.levels[k] @ sx.levels[k]) for k in range(13)
    )
    assert abs(pde - series) <= 1e-3


def test_gram_constants_all_ones():
    b = PathBatch([path_of(np.full(4, v)) for v in (0.0, 1.0, 2.0)])
    G = gram(b, b, Linear(), CFG2)
    np.testing.assert_allclose(G.entries, 1.0, atol=1e-14)
    assert G.symmetric


def test_gram_single_pair_matches_kernel_eval():
    rng = np.random.default_rng(5)
    x = path_of(rng.standard_normal((5, 2)) * 0.4)
    y = path_of(rng.standard_normal((5, 2)) * 0.4)
    G = gram(PathBatch([x]), PathBatch([y]), RBF(1.0), CFG2)
    assert G.entries[0, 0] == kernel_eval(x, y, RBF(1.0), CFG2)


def test_gram_symmetric_psd_diag():
    rng = np.random.default_rng(6)
    b = PathBatch([path_of(rng.standard_normal((6, 2)) * 0.5) for _ in range(6)])
    G = gram(b, b, Linear(), CFG2)
    np.testing.assert_allclose(G.entries, G.entries.T, atol=1e-12)
    assert np.linalg.eigvalsh(G.entries).min() >= -1e-8
    assert np.all(np.diag(G.entries) >= 1.0 - 1e-12)


@pytest.mark.parametrize(
    "sk",
    [Linear(), RBF(0.8), SETID(0.9), SETSQR(1.1), SETCEXP(1.0, 0.7, 3)],
    ids=["linear", "rbf", "setid", "setsqr", "setcexp"],
)
def test_kernel_grad_finite_difference(sk):
    rng = np.random.default_rng(7)
    xv = rng.standard_normal((5, 3)) * 0.4
    yv = rng.standard_normal((6, 3)) * 0.4
    x = path_of(xv)
    y = path_of(yv)
    g = kernel_grad_x(x, y, sk, SolverConfig(1, "order2"))
    h = 1e-5
    num = np.zeros_like(g)
    for ix in np.ndindex(xv.shape):
        xp = xv.copy(); xp[ix] += h
        xm = xv.copy(); xm[ix] -= h
        num[ix] = (
            kernel_eval(path_of(xp), y, sk, SolverConfig(1, "order2"))
            - kernel_eval(path_of(xm), y, sk, SolverConfig(1, "order2"))
        ) / (2 * h)
    rel = np.abs(g - num).max() / max(np.abs(num).max(), 1e-8)
    assert rel <= 1e-4


def test_kernel_grad_constant_paths_zero():
    x = path_of(np.full(5, 2.0))
    y = path_of(np.full(5, -1.0))
    g = kernel_grad_x(x, y, Linear(), CFG2)
    np.testing.assert_allclose(g, 0.0, atol=1e-14)


def test_rbf_equals_setid_on_single_point_mesh():
    # 1-d states: the trapezoid mesh weight degenerates to the Euclidean one
    rng = np.random.default_rng(8)
    x = path_of(rng.standard_normal(6) * 0.5)
    y = path_of(rng.standard_normal(6) * 0.5)
    a = kernel_eval(x, y, RBF(0.9), CFG2)
    b = kernel_eval(x, y, SETID(0.9), CFG2)
    assert a == pytest.approx(b, abs=1e-12)


def test_setid_large_sigma_taylor_surrogate():
    rng = np.random.default_rng(9)
    sigma = 1e3
    cfg = SolverConfig(1, "order2")
    xv = rng.standard_normal((6, 4)) * 0.5
    yv = rng.standard_normal((6, 4)) * 0.5
    xr = refine_values(xv, cfg)
    yr = refine_values(yv, cfg)
    w = _mesh_weights(4)
    d2 = ((xr[:, None, :] - yr[None, :, :]) ** 2 * w).sum(axis=2)
    exact = np.exp(-d2 / (2 * sigma**2))
    taylor = 1.0 - d2 / (2 * sigma**2) + d2**2 / (8 * sigma**4)
    v_exact = solve_from_static_matrix(exact, cfg)
    v_taylor = solve_from_static_matrix(taylor, cfg)
    v_setid = kernel_eval(path_of(xv), path_of(yv), SETID(sigma), cfg)
    assert v_setid == pytest.approx(v_exact, abs=1e-12)
    assert abs(v_setid - v_taylor) <= 1e-6


def test_setsqr_matches_manual_stack():
    rng = np.random.default_rng(10)
    xv = rng.standard_normal((5, 3)) * 0.5
    yv = rng.standard_normal((5, 3)) * 0.5
    cfg = SolverConfig(1, "order2")
    v = kernel_eval(path_of(xv), path_of(yv), SETSQR(1.3), cfg)
    xr = refine_values(xv, cfg)
    yr = refine_values(yv, cfg)
    w = _mesh_weights(3)
    d2 = ((xr[:, None] - yr[None]) ** 2 * w).sum(-1) + (
        (xr[:, None] ** 2 - yr[None] ** 2) ** 2 * w
    ).sum(-1)
    K = np.exp(-d2 / (2 * 1.3**2))
    assert v == pytest.approx(solve_from_static_matrix(K, cfg), abs=1e-12)


def test_setcexp_matches_manual_operator():
    rng = np.random.default_rng(11)
    sk = SETCEXP(1.0, 0.5, 4)
    xv = rng.standard_normal((4, 5)) * 0.5
    yv = rng.standard_normal((4, 5)) * 0.5
    cfg = SolverConfig(0, "order2")
    v = kernel_eval(path_of(xv), path_of(yv), sk, cfg)
    mesh = np.linspace(0, 1, 5)
    diff = mesh[:, None] - mesh[None, :]
    km = np.exp(-(diff**2) / (2 * 0.5**2)) * sum(
        np.cos(2 * np.pi * n * diff) for n in range(4)
    )
    C = km * _mesh_weights(5)[None, :]
    xt = xv @ C.T
    yt = yv @ C.T
    w = _mesh_weights(5)
    d2 = ((xt[:, None] - yt[None]) ** 2 * w).sum(-1)
    K = np.exp(-d2 / 2.0)
    assert v == pytest.approx(solve_from_static_matrix(K, cfg), abs=1e-12)


def test_divergence_error_advises_rescaling():
    big = path_of(np.linspace(0.0, 700.0, 40))
    with pytest.raises(DivergenceError, match="rescale"):
        kernel_eval(big, big, Linear(), SolverConfig(0, "order2"))


def test_dimension_mismatch():
    x = path_of(np.zeros((4, 2)))
    y = path_of(np.zeros((4, 3)))
    with pytest.raises(ValueError, match="dimension"):
        kernel_eval(x, y, Linear(), CFG2)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(11, "order2")
    with pytest.raises(ValueError):
        SolverConfig(1, "order3")
    with pytest.raises(ValueError):
        RBF(0.0)
    with pytest.raises(ValueError):
        SETCEXP(1.0, 1.0, 0)
