"""Evaluation statistics: repeated two-sample KS tests, ACF, cross-correlations.

The KS protocol mirrors the marginal-comparison tables: repeatedly subsample
both batches, compare the marginal distributions at fixed grid indices, and
report the mean statistic plus the rejection rate at the chosen level. The
reported rate equals the Type-I error only under the null; it is labelled
``rejection_rate`` throughout.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .paths import PathBatch


@dataclass(frozen=True)
class KsReport:
    """Per-time mean KS statistic and rejection rate of the repeated protocol."""

    time_indices: tuple
    mean_ks: tuple
    rejection_rate: tuple
    repeats: int
    batch_size: int
    alpha: float

    def rows(self):
        for t, d, r in zip(self.time_indices, self.mean_ks, self.rejection_rate):
            yield {"time_index": t, "mean_ks": d, "rejection_rate": r}

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "repeats": self.repeats,
                "batch_size": self.batch_size,
                "marginals": list(self.rows()),
            },
            sort_keys=True,
        )

    def to_csv(self) -> str:
        lines = ["time_index,mean_ks,rejection_rate"]
        for row in self.rows():
            lines.append(
                f"{row['time_index']},{row['mean_ks']!r},{row['rejection_rate']!r}"
            )
        return "\n".join(lines) + "\n"


def ks_critical(alpha: float) -> float:
    """Asymptotic two-sample critical coefficient c(alpha); c(0.05) = 1.358."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def ks_two_sample(a: np.ndarray, b: np.ndarray, alpha: float = 0.05):
    """Exact two-sample KS statistic by merge-scan, with asymptotic decision.

    Returns (D, reject) with D = sup |ECDF_a - ECDF_b| and reject iff
    D > c(alpha) * sqrt((n + m) / (n m)).
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("empty sample")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / n
    cdf_b = np.searchsorted(b, pooled, side="right") / m
    d = float(np.abs(cdf_a - cdf_b).max())
    reject = d > ks_critical(alpha) * math.sqrt((n + m) / (n * m))
    return d, bool(reject)


def ks_marginal_protocol(
    gen_batch: PathBatch,
    real_batch: PathBatch,
    times,
    repeats: int,
    m: int,
    alpha: float = 0.05,
    seed: int = 0,
    channel: int | None = None,
) -> KsReport:
    """Repeated subsampled KS comparison of marginals at the listed grid indices.

    Each repeat draws m paths from each batch without replacement and tests
    the marginal of the chosen value channel at every index in ``times``
    (defaults to {6, 19, 32, 44, 57}). Comparing a batch against itself draws
    the two subsamples disjointly, so the null calibration is clean.
    """
    times = tuple(times) if times is not None else (6, 19, 32, 44, 57)
    same = gen_batch is real_batch
    if same and 2 * m > len(gen_batch):
        raise ValueError(f"disjoint subsamples of size {m} exceed the batch size")
    if m > len(gen_batch) or m > len(real_batch):
        raise ValueError(f"subsample size {m} exceeds a batch size")
    if channel is None:
        vc = gen_batch.paths[0].value_channels()
        channel = int(vc[0])
    gv = gen_batch.stack()[:, :, channel]
    rv = real_batch.stack()[:, :, channel]
    if max(times) >= gv.shape[1]:
        raise ValueError("time index beyond path length")
    rng = np.random.default_rng(seed)
    d_sum = np.zeros(len(times))
    rej = np.zeros(len(times))
    for _ in range(repeats):
        if same:
            both = rng.choice(gv.shape[0], size=2 * m, replace=False)
            gi, ri = both[:m], both[m:]
        else:
            gi = rng.choice(gv.shape[0], size=m, replace=False)
            ri = rng.choice(rv.shape[0], size=m, replace=False)
        for k, t in enumerate(times):
            d, r = ks_two_sample(gv[gi, t], rv[ri, t], alpha)
            d_sum[k] += d
            rej[k] += r
    return KsReport(
        time_indices=times,
        mean_ks=tuple(d_sum / repeats),
        rejection_rate=tuple(rej / repeats),
        repeats=repeats,
        batch_size=m,
        alpha=alpha,
    )


def acf(batch: PathBatch, max_lag: int, channel: int | None = None):
    """Autocorrelation per path, aggregated to mean and std across the batch.

    Per path: ACF_l = sum_{t=l}^{L-1} (X_t - mu)(X_{t-l} - mu) / (L sigma^2)
    with the path's own mean and population variance, so lag 0 is exactly 1.
    Zero-variance paths are skipped; their count is reported.

    Returns (lags, mean, std, skipped).
    """
    if channel is None:
        channel = int(batch.paths[0].value_channels()[0])
    v = batch.stack()[:, :, channel]
    L = v.shape[1]
    if L <= max_lag:
        raise ValueError(f"max_lag {max_lag} requires paths longer than {max_lag}")
    rows = []
    skipped = 0
    for x in v:
        mu = x.mean()
        var = ((x - mu) ** 2).mean()
        if var <= 0:
            skipped += 1
            continue
        xc = x - mu
        row = [float(np.dot(xc[l:], xc[: L - l]) / (L * var)) for l in range(max_lag + 1)]
        rows.append(row)
    if not rows:
        raise ValueError("all paths degenerate; no ACF")
    arr = np.array(rows)
    return (
        np.arange(max_lag + 1),
        arr.mean(axis=0),
        arr.std(axis=0),
        skipped,
    )


def returns(batch: PathBatch, channel: int | None = None) -> np.ndarray:
    """Consecutive differences of a value channel, shape (n, L-1)."""
    if channel is None:
        channel = int(batch.paths[0].value_channels()[0])
    return np.diff(batch.stack()[:, :, channel], axis=1)


def cross_corr_matrix(batch: PathBatch, lags=(0, 1, 2, 3, 4, 5), channel: int | None = None):
    """corr(r_t, r^2_{t-l}) across the batch for every time t and lag l.

    Entry (t, l) is the Pearson correlation, pooled over the batch, between
    the return at index t and the squared return at index t - lags[l]; rows
    where t - l < 0 or where either variance degenerates are NaN (missing).
    """
    r = returns(batch, channel)
    n, T = r.shape
    r2 = r * r
    lags = tuple(lags)
    out = np.full((T, len(lags)), np.nan)
    for li, l in enumerate(lags):
        for t in range(T):
            if t - l < 0:
                continue
            a = r[:, t]
            b = r2[:, t - l]
            sa, sb = a.std(), b.std()
            if sa <= 0 or sb <= 0:
                continue
            out[t, li] = float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb))
    return out


def matrix_mse(A: np.ndarray, B: np.ndarray) -> float:
    """Mean squared entrywise difference, NaN entries excluded pairwise."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    mask = np.isfinite(A) & np.isfinite(B)
    if not mask.any():
        raise ValueError("no overlapping finite entries")
    diff = A[mask] - B[mask]
    return float((diff * diff).mean())


def terminal_corr_hist(batch: PathBatch, ch_i: int, ch_j: int, bins: int = 20):
    """Histogram of per-path Pearson correlations between two channels' returns.

    Returns (counts, bin_edges) over [-1, 1]; degenerate paths are dropped.
    """
    v = batch.stack()
    ri = np.diff(v[:, :, ch_i], axis=1)
    rj = np.diff(v[:, :, ch_j], axis=1)
    corrs = []
    for a, b in zip(ri, rj):
        sa, sb = a.std(), b.std()
        if sa <= 0 or sb <= 0:
            continue
        corrs.append(float(((a - a.mean()) * (b - b.mean())).mean() / (sa * sb)))
    # rounding can push a perfect correlation to 1 + eps; keep it in range
    corrs = np.clip(np.array(corrs), -1.0, 1.0)
    return np.histogram(corrs, bins=bins, range=(-1.0, 1.0))
