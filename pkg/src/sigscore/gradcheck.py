"""Randomized finite-difference gradient checks for every differentiable stage.

Each registered check perturbs inputs with central differences (h = 1e-5) and
compares against the exact reverse-mode result. Pure stages must agree to
relative error 1e-4; the composed training pipeline to 1e-3.
"""

import numpy as np

from . import diffengine, nsde
from .paths import Path, PathBatch, TimeGrid, time_augment
from .scores import multi_kernel_loss
from .sigkernel import Linear, SolverConfig, kernel_eval, kernel_grad_x

PURE_TOL = 1e-4
PIPELINE_TOL = 1e-3
_H = 1e-5


def _rel_err(exact: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(numeric).max()), 1e-8)
    return float(np.abs(exact - numeric).max() / scale)


def check_mlp(seed: int = 0) -> float:
    """d(sum(mlp(z)))/dz and /dW vs finite differences."""
    rng = np.random.default_rng(seed)
    mlp = nsde._init_mlp((3, 5, 2), "tanh", 0.8, rng)
    z = rng.normal(size=(4, 3))

    def value(m, zz):
        return float(diffengine.mlp_forward(m, zz).sum())

    out, cache = diffengine.mlp_forward(mlp, z, want_cache=True)
    grads: dict = {}
    bar_z = diffengine.mlp_backward(mlp, cache, np.ones_like(out), "mlp", grads)
    worst = 0.0
    num = np.zeros_like(z)
    for ix in np.ndindex(z.shape):
        zp = z.copy(); zp[ix] += _H
        zm = z.copy(); zm[ix] -= _H
        num[ix] = (value(mlp, zp) - value(mlp, zm)) / (2 * _H)
    worst = max(worst, _rel_err(bar_z, num))
    for k, W in enumerate(mlp.weights):
        num = np.zeros_like(W)
        for ix in np.ndindex(W.shape):
            Wp = W.copy(); Wp[ix] += _H
            mp = nsde.MlpParams(
                [Wp if i == k else w for i, w in enumerate(mlp.weights)],
                mlp.biases, mlp.final_activation,
            )
            Wm = W.copy(); Wm[ix] -= _H
            mm = nsde.MlpParams(
                [Wm if i == k else w for i, w in enumerate(mlp.weights)],
                mlp.biases, mlp.final_activation,
            )
            num[ix] = (value(mp, z) - value(mm, z)) / (2 * _H)
        worst = max(worst, _rel_err(grads[f"mlp.W{k}"], num))
    return worst


def check_kernel_pde(kernel_list, solver: SolverConfig, seed: int = 0) -> float:
    """kernel_grad_x vs finite differences for every configured static kernel."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _, sk in kernel_list:
        xv = rng.normal(size=(5, 2)) * 0.4
        yv = rng.normal(size=(6, 2)) * 0.4
        gx = TimeGrid(np.arange(5.0))
        gy = TimeGrid(np.arange(6.0))
        g = kernel_grad_x(Path(gx, xv), Path(gy, yv), sk, solver)
        num = np.zeros_like(g)
        for ix in np.ndindex(xv.shape):
            xp = xv.copy(); xp[ix] += _H
            xm = xv.copy(); xm[ix] -= _H
            num[ix] = (
                kernel_eval(Path(gx, xp), Path(gy, yv), sk, solver)
                - kernel_eval(Path(gx, xm), Path(gy, yv), sk, solver)
            ) / (2 * _H)
        worst = max(worst, _rel_err(g, num))
    return worst


def check_pipeline(kernel_list, solver: SolverConfig, seed: int = 0) -> float:
    """Composed params -> rollout -> transforms -> loss gradient vs differences.

    Micro configuration: d_y = 3, d_w = 2, path length 5, batch 3.
    """
    rng = np.random.default_rng(seed)
    dims = nsde.SdeDims(d_x=2, d_y=3, d_w=2, d_a=3, hidden=(4,))
    params = nsde.init_params(dims, init_scale=0.5, seed=seed, learn_initial=False)
    grid = TimeGrid(np.arange(5.0))
    noise = nsde.make_noise(3, grid, dims, seed=seed + 1)
    real = PathBatch(
        [time_augment(Path(grid, rng.normal(size=(5, 2)) * 0.3)) for _ in range(3)]
    )
    transforms = ("translate_to_zero", "time_normalize")

    def loss_of(p):
        gen_raw, rec = nsde.sample_with_record(p, 3, grid, noise)
        gen = nsde._apply_gen_transforms(gen_raw, transforms)
        return (
            multi_kernel_loss(gen, real, kernel_list, solver, need_grad=False).value,
            gen_raw,
            rec,
        )

    _, gen_raw, rec = loss_of(params)
    gen = nsde._apply_gen_transforms(gen_raw, transforms)
    sv = multi_kernel_loss(gen, real, kernel_list, solver, need_grad=True)
    gvals = nsde._backward_gen_transforms(
        sv.gradient_wrt_generated, transforms, gen.time_channel
    )
    value_cols = [c for c in range(gen_raw.dim) if c != gen_raw.time_channel]
    bundle = diffengine.backward(params, rec, gvals[..., value_cols])
    tree = params.tree()
    worst = 0.0
    for name, arr in tree.items():
        g = np.asarray(bundle.grads[name])
        num = np.zeros_like(arr)
        for ix in np.ndindex(arr.shape):
            t2 = {k: (v.copy() if k == name else v) for k, v in tree.items()}
            t2[name][ix] += _H
            vp, _, _ = loss_of(params.replace_tree(t2))
            t2 = {k: (v.copy() if k == name else v) for k, v in tree.items()}
            t2[name][ix] -= _H
            vm, _, _ = loss_of(params.replace_tree(t2))
            num[ix] = (vp - vm) / (2 * _H)
        worst = max(worst, _rel_err(g, num))
    return worst


def run_gradcheck(kernel_list=None, solver: SolverConfig | None = None, seed: int = 0):
    """Run every registered check; returns a list of failure descriptions."""
    if kernel_list is None or not kernel_list:
        kernel_list = ((1.0, Linear()),)
    if solver is None:
        solver = SolverConfig(1, "order2")
    failures = []
    checks = (
        ("mlp", lambda: check_mlp(seed), PURE_TOL),
        ("kernel_pde", lambda: check_kernel_pde(kernel_list, solver, seed), PURE_TOL),
        ("pipeline", lambda: check_pipeline(kernel_list, solver, seed), PIPELINE_TOL),
    )
    for name, fn, tol in checks:
        err = fn()
        status = "ok" if err <= tol else "FAIL"
        print(f"gradcheck {name}: rel err {err:.3e} (tol {tol:.0e}) {status}")
        if err > tol:
            failures.append(f"{name}: rel err {err:.3e} > {tol:.0e}")
    return failures
