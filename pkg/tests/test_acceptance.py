"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The full suite trains the
shipped gBm configuration from scratch (criterion 7), so expect roughly
30-45 minutes end to end on one CPU core.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from sigscore import diffengine, nsde, tsig
from sigscore.cli import apply_real_transforms, build_dataset, cmd_train, load_config
from sigscore.evalstats import ks_marginal_protocol, ks_two_sample
from sigscore.gradcheck import run_gradcheck
from sigscore.paths import (
    Path,
    PathBatch,
    TimeGrid,
    fit_standardization,
    lead_lag,
    scale,
    standardize,
    time_normalize,
    translate_to_zero,
)
from sigscore.scores import (
    loss_unconditional,
    permutation_mmd_test,
    score_unbiased_from_gram,
)
from sigscore.sigkernel import RBF, Linear, SolverConfig, gram, solve_values_pairs
from sigscore.synthdata import GbmConfig, RBergomiConfig, gbm, rbergomi

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")


def report(criterion: int, ok: bool, detail: str):
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def path_of(values):
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[:, None]
    return Path(TimeGrid(np.arange(float(values.shape[0]))), values)


# -- 1 ----------------------------------------------------------------------


def test_criterion_01_kernel_oracle_equivalence():
    rng = np.random.default_rng(11)
    n_paths, L = 50, 64
    paths = []
    for _ in range(n_paths):
        inc = rng.standard_normal((L - 1, 2))
        inc *= 1.0 / np.abs(inc).sum()  # total variation exactly 1
        paths.append(np.vstack([np.zeros(2), np.cumsum(inc, axis=0)]))
    vals = np.stack(paths)
    sigs = [tsig.signature_of_values(v, 10) for v in vals]
    iu, ju = np.triu_indices(n_paths)
    t0 = time.perf_counter()
    pde, _, _ = solve_values_pairs(
        vals, vals, iu, ju, Linear(), SolverConfig(3, "order2")
    )
    per_pair = (time.perf_counter() - t0) / iu.shape[0]
    worst = 0.0
    for k, (i, j) in enumerate(zip(iu, ju)):
        oracle = tsig.signature_kernel_from_signatures(sigs[i], sigs[j])
        worst = max(worst, abs(pde[k] - oracle))
    ok = worst <= 1e-3 and per_pair <= 1.0
    report(
        1,
        ok,
        f"max |PDE - truncated(N=10)| = {worst:.2e} over {iu.shape[0]} pairs "
        f"(tol 1e-3), {per_pair * 1e3:.2f} ms/pair (cap 1000 ms)",
    )


# -- 2 ----------------------------------------------------------------------


def test_criterion_02_analytic_value():
    p = path_of(np.linspace(0.0, 1.0, 5))
    v = float(
        solve_values_pairs(
            p.values[None], p.values[None], np.zeros(1), np.zeros(1),
            Linear(), SolverConfig(4, "order2"),
        )[0][0]
    )
    target = sum(1.0 / math.factorial(k) ** 2 for k in range(60))
    err = abs(v - target)
    report(2, err <= 1e-4, f"unit-speed linear path: {v:.7f} vs {target:.7f} (err {err:.2e}, tol 1e-4)")


# -- 3 ----------------------------------------------------------------------


def test_criterion_03_gradient_fidelity():
    t0 = time.perf_counter()
    failures = run_gradcheck(
        kernel_list=((1.0, RBF(1.0)), (1.0, Linear())),
        solver=SolverConfig(1, "order2"),
        seed=3,
    )
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed <= 60.0
    report(3, ok, f"gradcheck {'clean' if not failures else failures} in {elapsed:.1f} s (cap 60 s)")


# -- 4 ----------------------------------------------------------------------


def test_criterion_04_estimator_unbiasedness():
    grid = TimeGrid.regular(16, 0.0, 0.63)
    pop_raw = gbm(GbmConfig(sigma=0.2, grid=grid, n=64, seed=4))
    pop = PathBatch([time_normalize(translate_to_zero(p)) for p in pop_raw])
    y = time_normalize(
        translate_to_zero(gbm(GbmConfig(sigma=0.2, grid=grid, n=1, seed=44))[0])
    )
    sk, cfg = RBF(1.0), SolverConfig(1, "order2")
    K = gram(pop, pop, sk, cfg).entries
    kxy, _, _ = solve_values_pairs(
        pop.stack(), y.values[None], np.arange(64), np.zeros(64), sk, cfg
    )
    plug_in = score_unbiased_from_gram(K, kxy)
    rng = np.random.default_rng(45)
    draws = np.array(
        [
            score_unbiased_from_gram(K[np.ix_(idx, idx)], kxy[idx])
            for idx in (rng.choice(64, size=8, replace=False) for _ in range(200))
        ]
    )
    se = draws.std(ddof=1) / np.sqrt(draws.shape[0])
    dev = abs(draws.mean() - plug_in)
    report(
        4,
        dev <= 3 * se,
        f"MC mean {draws.mean():.5f} vs plug-in {plug_in:.5f} "
        f"(|diff| {dev:.2e} <= 3 SE = {3 * se:.2e})",
    )


# -- 5 ----------------------------------------------------------------------


def test_criterion_05_strict_properness():
    grid = TimeGrid.regular(64, 0.0, 0.63)
    cfg = SolverConfig(0, "order2")
    sk = RBF(1.0)
    t0 = time.perf_counter()
    data_raw = gbm(GbmConfig(sigma=0.2, grid=grid, n=1024, seed=500))
    stats = fit_standardization(data_raw)

    def prep(batch):
        out = standardize(batch, stats)
        return PathBatch([time_normalize(translate_to_zero(p)) for p in out])

    data = prep(data_raw)
    sigmas = (0.10, 0.15, 0.20, 0.25, 0.30, 0.40)
    losses = {}
    for k, sig in enumerate(sigmas):
        genb = prep(gbm(GbmConfig(sigma=sig, grid=grid, n=1024, seed=600 + k)))
        losses[sig] = loss_unconditional(genb, data, sk, cfg).value
    elapsed = time.perf_counter() - t0
    argmin = min(losses, key=losses.get)
    curve = ", ".join(f"{s}: {v:.4f}" for s, v in losses.items())
    ok = argmin == 0.20 and elapsed <= 600.0
    report(5, ok, f"argmin sigma = {argmin} in {elapsed:.0f} s (cap 600 s); curve {curve}")


# -- 6 ----------------------------------------------------------------------


def _strip_time(p: Path) -> Path:
    return Path(p.grid, p.values[:, 1:], time_channel=None)


def _mmd_prep(batch: PathBatch) -> PathBatch:
    return PathBatch(
        [lead_lag(scale(translate_to_zero(_strip_time(p)), 3.0)) for p in batch]
    )


def test_criterion_06_mmd_test_power_and_null():
    grid = TimeGrid.regular(64, 0.0, 0.63)
    cfg = SolverConfig(0, "order2")
    sk = RBF(0.5)
    rejects = 0
    for trial in range(20):
        X = _mmd_prep(gbm(GbmConfig(sigma=0.2, grid=grid, n=64, seed=1000 + trial)))
        Y = _mmd_prep(gbm(GbmConfig(sigma=0.3, grid=grid, n=64, seed=2000 + trial)))
        rejects += permutation_mmd_test(X, Y, sk, cfg, 200, 0.05, seed=trial)[2]
    null_rej = 0
    for trial in range(100):
        X = _mmd_prep(gbm(GbmConfig(sigma=0.2, grid=grid, n=64, seed=5000 + 2 * trial)))
        Y = _mmd_prep(gbm(GbmConfig(sigma=0.2, grid=grid, n=64, seed=5001 + 2 * trial)))
        null_rej += permutation_mmd_test(X, Y, sk, cfg, 200, 0.05, seed=300 + trial)[2]
    null_rate = null_rej / 100.0
    band = 3 * math.sqrt(0.05 * 0.95 / 100)
    ok = rejects >= 18 and abs(null_rate - 0.05) <= band
    report(
        6,
        ok,
        f"power {rejects}/20 (need >= 18); null rejection {null_rate:.2f} "
        f"(5% +- {band:.3f})",
    )


# -- 7 ----------------------------------------------------------------------


def test_criterion_07_relaxed_table1_reproduction(tmp_path):
    cfg = load_config(os.path.join(CONFIG_DIR, "gbm.cfg"))
    assert cfg["generator"]["d_y"] == 8
    assert cfg["schedule"]["batch_size"] == 64
    assert cfg["schedule"]["steps"] >= 800
    run_dir = str(tmp_path / "gbm_run")
    t0 = time.perf_counter()
    cmd_train(cfg, run_dir)
    train_minutes = (time.perf_counter() - t0) / 60.0
    params = nsde.load_checkpoint(os.path.join(run_dir, "checkpoints", "final.ckpt"))
    train_data = build_dataset(cfg, purpose="dataset")
    _, stats = apply_real_transforms(train_data, cfg["transforms"]["real"])
    unseen = build_dataset(cfg, purpose="eval-data")
    unseen, _ = apply_real_transforms(unseen, cfg["transforms"]["real"], stats=stats)
    grid = cfg.grid("generator")
    noise = nsde.make_noise(1024, grid, params.dims, seed=777)
    gen = nsde.sample(params, 1024, grid, noise)
    gen = nsde._apply_gen_transforms(gen, tuple(cfg["transforms"]["generated"]))
    rep = ks_marginal_protocol(
        gen, unseen, times=(6, 19, 32, 44, 57), repeats=500, m=64, alpha=0.05, seed=7
    )
    worst_rate = max(rep.rejection_rate)
    worst_ks = max(rep.mean_ks)
    detail = "; ".join(
        f"t={t}: KS {d:.4f}, rej {r * 100:.1f}%"
        for t, d, r in zip(rep.time_indices, rep.mean_ks, rep.rejection_rate)
    )
    ok = worst_rate <= 0.20 and worst_ks <= 0.16 and train_minutes <= 45.0
    report(
        7,
        ok,
        f"trained {cfg['schedule']['steps']} steps in {train_minutes:.1f} min "
        f"(cap 45); {detail} (gates: rej <= 20%, mean KS <= 0.16)",
    )


# -- 8 ----------------------------------------------------------------------


def test_criterion_08_rbergomi_moments():
    grid = TimeGrid.regular(65, 0.0, 2.0)  # nodes k/32: holds t = 0.5, 1, 2 exactly
    cfgs = RBergomiConfig(
        xi0=0.04, eta=1.5, rho=-0.7, H=0.2, grid=grid, n=100_000, seed=8,
        keep_variance=True,
    )
    batch = rbergomi(cfgs)
    arr = batch.stack()
    v = arr[:, :, 2]
    two_a1 = 2 * cfgs.alpha + 1
    details = []
    ok = True
    for t_target in (0.5, 1.0, 2.0):
        idx = int(round(t_target / (2.0 / 64)))
        sample = v[:, idx]
        se = sample.std(ddof=1) / np.sqrt(sample.shape[0])
        mean_ok = abs(sample.mean() - 0.04) <= 3 * se
        lv = np.log(sample)
        target = 1.5**2 * t_target**two_a1
        var_ok = abs(lv.var(ddof=1) - target) <= 0.05 * target
        ok = ok and mean_ok and var_ok
        details.append(
            f"t={t_target}: E[V] {sample.mean():.5f} (3SE {3 * se:.1e}), "
            f"Var[logV] {lv.var(ddof=1):.4f} vs {target:.4f}"
        )
    report(8, ok, "; ".join(details))


# -- 9 ----------------------------------------------------------------------


def test_criterion_09_evaluation_stats():
    d0, r0 = ks_two_sample(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
    d1, _ = ks_two_sample(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.5, 2.5, 3.5, 4.5]))
    d2, r2 = ks_two_sample(np.array([0.0, 1.0] * 8), np.array([5.0, 6.0] * 8))
    exact_ok = d0 == 0.0 and not r0 and d1 == 0.25 and d2 == 1.0 and r2
    rng = np.random.default_rng(9)
    pool = PathBatch.from_array(
        rng.standard_normal((600, 8, 1)), TimeGrid.regular(8, 0.0, 1.0)
    )
    rep = ks_marginal_protocol(pool, pool, times=(3, 6), repeats=500, m=64, seed=90)
    band = 3 * math.sqrt(0.05 * 0.95 / 500)
    null_ok = all(abs(r - 0.05) <= band for r in rep.rejection_rate)
    ok = exact_ok and null_ok
    report(
        9,
        ok,
        f"exact D values {'ok' if exact_ok else 'WRONG'}; null rejection "
        f"{tuple(round(r, 3) for r in rep.rejection_rate)} within 5% +- {band:.3f}",
    )


# -- 10 ---------------------------------------------------------------------


def test_criterion_10_cli_determinism(tmp_path):
    micro = os.path.join(CONFIG_DIR, "micro.cfg")

    def run(args):
        res = subprocess.run(
            [sys.executable, "-m", "sigscore.cli", *args],
            cwd=tmp_path,
            capture_output=True,
            text=True,
        )
        assert res.returncode == 0, res.stderr
        return res

    run(["simulate", "-c", micro, "-o", "a.csv"])
    run(["simulate", "-c", micro, "-o", "b.csv"])
    csv_same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    run(["--workers", "1", "train", "-c", micro, "-o", "r1"])
    run(["--workers", "4", "train", "-c", micro, "-o", "r2"])
    metrics_same = (tmp_path / "r1" / "metrics.jsonl").read_bytes() == (
        tmp_path / "r2" / "metrics.jsonl"
    ).read_bytes()
    ckpt_same = all(
        (tmp_path / "r1" / "checkpoints" / name).read_bytes()
        == (tmp_path / "r2" / "checkpoints" / name).read_bytes()
        for name in ("final.ckpt", "step_000005.ckpt", "step_000010.ckpt")
    )
    ok = csv_same and metrics_same and ckpt_same
    report(
        10,
        ok,
        f"simulate byte-identical: {csv_same}; metrics identical across "
        f"worker counts: {metrics_same}; checkpoints identical: {ckpt_same}",
    )
