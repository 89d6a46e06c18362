"""Kernel scores, squared MMD, and the training losses built from Gram entries.

The score of a generated batch {x_i} against one observed path y is the
U-statistic

    phi_hat = (1 / (m (m-1))) sum_{i != j} k(x_i, x_j) - (2 / m) sum_i k(x_i, y)

whose expectation over the data law is minimised exactly when the generator
law matches the data law (strict properness of the kernel score). The
unconditional loss averages phi_hat over a batch of observed paths, which
drops the theta-independent observed-observed term of the squared MMD.

Gradients are taken with respect to generated path *values*; the gradient of
any tagged time-augmentation channel is masked to zero (generated time stamps
are not trainable). Parameter gradients are composed downstream.
"""

from dataclasses import dataclass

import numpy as np

from .paths import Path, PathBatch
from .sigkernel import GramMatrix, SolverConfig, StaticKernel, gram, solve_values_pairs


@dataclass(frozen=True)
class ScoreValue:
    """A score plus (optionally) its gradient w.r.t. the generated values."""

    value: float
    gradient_wrt_generated: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("non-finite score")


def _mask_time_channel(grad: np.ndarray, batch: PathBatch) -> np.ndarray:
    tc = batch.time_channel
    if tc is not None:
        grad[..., tc] = 0.0
    return grad


def score_unbiased_from_gram(k_xx: np.ndarray, k_xy: np.ndarray) -> float:
    """Assemble phi_hat from precomputed Gram pieces.

    k_xx: (m, m) generated-generated Gram; k_xy: (m,) generated-observed column.
    """
    m = k_xx.shape[0]
    if m < 2:
        raise ValueError("need at least 2 generated paths (U-statistic undefined)")
    off = k_xx.sum() - np.trace(k_xx)
    return float(off / (m * (m - 1)) - 2.0 * k_xy.mean())


def score_unbiased(
    X: PathBatch,
    y: Path,
    sk: StaticKernel,
    cfg: SolverConfig,
    need_grad: bool = False,
) -> ScoreValue:
    """Unbiased estimator of the kernel score of batch X against outcome y."""
    m = len(X)
    if m < 2:
        raise ValueError("need at least 2 generated paths (U-statistic undefined)")
    loss = loss_unconditional(X, PathBatch([y]), sk, cfg, need_grad=need_grad)
    return loss


def mmd_sq_unbiased(
    X: PathBatch, Y: PathBatch, sk: StaticKernel, cfg: SolverConfig
) -> float:
    """Unbiased estimator of the squared signature-kernel MMD (may be negative)."""
    m, n = len(X), len(Y)
    if m < 2 or n < 2:
        raise ValueError("need at least 2 paths on each side")
    xv, yv = X.stack(), Y.stack()
    iu, ju = np.triu_indices(m, k=1)
    vxx, _, _ = solve_values_pairs(xv, xv, iu, ju, sk, cfg)
    iu, ju = np.triu_indices(n, k=1)
    vyy, _, _ = solve_values_pairs(yv, yv, iu, ju, sk, cfg)
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    vxy, _, _ = solve_values_pairs(xv, yv, ii.ravel(), jj.ravel(), sk, cfg)
    return float(
        2.0 * vxx.sum() / (m * (m - 1))
        + 2.0 * vyy.sum() / (n * (n - 1))
        - 2.0 * vxy.sum() / (m * n)
    )


def mmd_sq_biased_from_gram(k_pool: np.ndarray, m: int) -> float:
    """Biased V-statistic MMD^2 from a pooled (m+n, m+n) Gram matrix.

    The first m rows/columns are the X sample. Used by the permutation test,
    where the V-statistic is stable under relabeling.
    """
    kxx = k_pool[:m, :m]
    kyy = k_pool[m:, m:]
    kxy = k_pool[:m, m:]
    n = k_pool.shape[0] - m
    return float(kxx.mean() + kyy.mean() - 2.0 * kxy.sum() / (m * n))


def loss_unconditional(
    generated: PathBatch,
    real_batch: PathBatch,
    sk: StaticKernel,
    cfg: SolverConfig,
    need_grad: bool = False,
) -> ScoreValue:
    """Mean over observed paths of the unbiased kernel score of the generated batch.

    Equals the squared-MMD estimator up to the generator-independent
    observed-observed term. The gradient (if requested) is with respect to the
    generated node values only, time channel masked.
    """
    m, n = len(generated), len(real_batch)
    if m < 2:
        raise ValueError("need at least 2 generated paths (U-statistic undefined)")
    if n < 1:
        raise ValueError("need at least 1 observed path")
    xv = generated.stack()
    yv = real_batch.stack()
    iu, ju = np.triu_indices(m, k=1)
    vgg, g_i, g_j = solve_values_pairs(xv, xv, iu, ju, sk, cfg, need_grad=need_grad)
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    vgr, g_r, _ = solve_values_pairs(
        xv, yv, ii.ravel(), jj.ravel(), sk, cfg, need_grad=need_grad
    )
    c_gg = 2.0 / (m * (m - 1))
    c_gr = 2.0 / (m * n)
    value = float(c_gg * vgg.sum() - c_gr * vgr.sum())
    if not need_grad:
        return ScoreValue(value)
    grad = np.zeros_like(xv)
    np.add.at(grad, iu, c_gg * g_i)
    np.add.at(grad, ju, c_gg * g_j)
    grad -= c_gr * g_r.reshape(m, n, *g_r.shape[1:]).sum(axis=1)
    return ScoreValue(value, _mask_time_channel(grad, generated))


def loss_conditional(
    pairs,
    sampler,
    m: int,
    sk: StaticKernel,
    cfg: SolverConfig,
    need_grad: bool = False,
):
    """Conditional objective: average score of m conditional draws per pair.

    ``pairs`` is a sequence of (condition_path, outcome_path); ``sampler`` maps
    (condition_path, m) to a PathBatch of m conditional samples. Returns the
    averaged ScoreValue plus the list of sampled batches; the gradient entry
    (if requested) is a (n_pairs, m, L, d) array scaled by 1/n_pairs so it can
    be backpropagated per pair directly.
    """
    pairs = list(pairs)
    if m < 2:
        raise ValueError("conditional fan-out m must be >= 2")
    if not pairs:
        raise ValueError("need at least 1 conditioning pair")
    n = len(pairs)
    total = 0.0
    grads = []
    batches = []
    for x_i, y_i in pairs:
        batch = sampler(x_i, m)
        batches.append(batch)
        sv = score_unbiased(batch, y_i, sk, cfg, need_grad=need_grad)
        total += sv.value
        if need_grad:
            grads.append(sv.gradient_wrt_generated / n)
    value = total / n
    if need_grad:
        return ScoreValue(value, np.stack(grads)), batches
    return ScoreValue(value), batches


def permutation_mmd_test(
    X: PathBatch,
    Y: PathBatch,
    sk: StaticKernel,
    cfg: SolverConfig,
    n_permutations: int = 200,
    alpha: float = 0.05,
    seed: int = 0,
):
    """Two-sample permutation test on the biased V-statistic MMD^2.

    Returns (statistic, p_value, reject). The pooled Gram matrix is computed
    once; permutations merely relabel its rows.
    """
    m, n = len(X), len(Y)
    pooled = PathBatch(list(X.paths) + list(Y.paths))
    K = gram(pooled, pooled, sk, cfg).entries
    stat = mmd_sq_biased_from_gram(K, m)
    rng = np.random.default_rng(seed)
    count = 0
    for _ in range(n_permutations):
        perm = rng.permutation(m + n)
        Kp = K[np.ix_(perm, perm)]
        if mmd_sq_biased_from_gram(Kp, m) >= stat:
            count += 1
    p_value = (1.0 + count) / (n_permutations + 1.0)
    return stat, p_value, bool(p_value <= alpha)


def multi_kernel_loss(
    generated: PathBatch,
    real_batch: PathBatch,
    kernel_list,
    cfg: SolverConfig,
    need_grad: bool = False,
) -> ScoreValue:
    """Sum of unconditional losses over (scale, static kernel) pairs.

    Each entry of ``kernel_list`` is (scale_factor, StaticKernel); non-time
    channels of both batches are multiplied by the scale before scoring, and
    the per-kernel scores are summed with equal weights.
    """
    from .paths import scale as scale_path

    total = 0.0
    grad = None
    for c, sk in kernel_list:
        if c == 1.0:
            gen_s, real_s = generated, real_batch
        else:
            gen_s = PathBatch([scale_path(p, c) for p in generated])
            real_s = PathBatch([scale_path(p, c) for p in real_batch])
        sv = loss_unconditional(gen_s, real_s, sk, cfg, need_grad=need_grad)
        total += sv.value
        if need_grad:
            g = sv.gradient_wrt_generated * c  # chain rule through the scaling
            if generated.time_channel is not None:
                g[..., generated.time_channel] = 0.0
            grad = g if grad is None else grad + g
    return ScoreValue(total, grad)
