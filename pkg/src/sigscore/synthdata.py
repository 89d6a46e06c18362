"""Reference data simulators: geometric Brownian motion and rough Bergomi.

gBm steps the exact lognormal transition, so samples are draws from the true
marginal law at every grid node. The rough Bergomi simulator draws the
Gaussian Volterra process X_t = int_0^t (t-s)^alpha dB_s *exactly* on the grid
by Cholesky-factorising its covariance jointly with the driving Brownian
motion; the spot variance is the compensated stochastic exponential

    V_t = xi0 exp(eta sqrt(2 alpha + 1) X_t - (eta^2 / 2) t^(2 alpha + 1)),

and the (log-)price is stepped log-Euler with a rho-correlated driver.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .paths import Path, PathBatch, TimeGrid, load_batch_csv, time_augment


@dataclass(frozen=True)
class GbmConfig:
    """dy = mu y dt + sigma y dW on the given grid, y_0 = y0."""

    mu: float = 0.0
    sigma: float = 0.2
    y0: float = 1.0
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.regular(64, 0.0, 0.63))
    n: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.y0 > 0:
            raise ValueError("y0 must be > 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def gbm(config: GbmConfig) -> PathBatch:
    """Exact lognormal stepping; returns time-augmented paths."""
    t = config.grid.times
    dts = np.diff(t)
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((config.n, dts.shape[0]))
    log_incs = (config.mu - 0.5 * config.sigma**2) * dts + config.sigma * np.sqrt(
        dts
    ) * z
    log_y = np.concatenate(
        [np.zeros((config.n, 1)), np.cumsum(log_incs, axis=1)], axis=1
    )
    y = config.y0 * np.exp(log_y)
    return PathBatch(time_augment(Path(config.grid, y[i])) for i in range(config.n))


@dataclass(frozen=True)
class RBergomiConfig:
    """Rough Bergomi parameters; alpha = H - 1/2 with 0 < H < 1/2."""

    xi0: float = 0.04
    eta: float = 1.5
    rho: float = -0.7
    H: float = 0.2
    y0: float = 1.0
    grid: TimeGrid = field(default_factory=lambda: TimeGrid.regular(64, 0.0, 2.0))
    n: int = 128
    seed: int = 0
    keep_variance: bool = False

    def __post_init__(self):
        if not 0.0 < self.H <= 0.5:
            raise ValueError("H must be in (0, 1/2] (1/2 only as Brownian boundary case)")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must be in [-1, 1]")
        if not self.xi0 > 0:
            raise ValueError("xi0 must be > 0")
        t = self.grid.times
        if not np.allclose(np.diff(t), t[1] - t[0]):
            raise ValueError("rBergomi requires a uniform grid")

    @property
    def alpha(self) -> float:
        return self.H - 0.5


def _volterra_cov_entry(s: float, t: float, alpha: float) -> float:
    """Cov(X_s, X_t) = int_0^min(s,t) (t-u)^alpha (s-u)^alpha du by quadrature."""
    lo, hi = (s, t) if s <= t else (t, s)
    if lo <= 0.0:
        return 0.0
    val, _ = integrate.quad(
        lambda u: (hi - u) ** alpha * (lo - u) ** alpha,
        0.0,
        lo,
        epsabs=1e-12,
        limit=200,
        points=(lo,),
    )
    return val


def volterra_joint_covariance(times: np.ndarray, alpha: float) -> np.ndarray:
    """Covariance of (X_{t_1..t_k}, B_{t_1..t_k}) for positive grid times.

    Blocks: Cov(X, X) by quadrature, Cov(B_s, B_t) = min(s, t) and
    Cov(X_t, B_s) = (t^(a+1) - (t - min(s,t))^(a+1)) / (a+1).
    """
    k = times.shape[0]
    cxx = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            cxx[i, j] = cxx[j, i] = _volterra_cov_entry(times[i], times[j], alpha)
    tt = np.minimum(times[:, None], times[None, :])
    cbb = tt
    a1 = alpha + 1.0
    cxb = (times[:, None] ** a1 - (times[:, None] - tt) ** a1) / a1
    return np.block([[cxx, cxb], [cxb.T, cbb]])


_chol_cache: dict = {}


def _volterra_cholesky(times: np.ndarray, alpha: float) -> np.ndarray:
    key = (round(float(alpha), 12), times.shape[0], round(float(times[-1]), 12))
    if key in _chol_cache:
        return _chol_cache[key]
    cov = volterra_joint_covariance(times, alpha)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # one shot of diagonal jitter, then give up
        jitter = 1e-12 * np.diag(np.diag(cov))
        try:
            L = np.linalg.cholesky(cov + jitter)
        except np.linalg.LinAlgError:
            raise ArithmeticError(
                "Volterra covariance not positive definite even after jitter"
            ) from None
    _chol_cache[key] = L
    return L


def rbergomi(config: RBergomiConfig) -> PathBatch:
    """Exact-covariance rough Bergomi sampling; time-augmented price paths.

    With ``keep_variance`` the instantaneous variance V is appended as an
    extra channel.
    """
    t = config.grid.times
    if t[0] != 0.0:
        raise ValueError("rBergomi grid must start at 0")
    k = t.shape[0] - 1
    L = _volterra_cholesky(t[1:], config.alpha)
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((2 * k, config.n))
    joint = L @ z
    x = np.concatenate([np.zeros((1, config.n)), joint[:k]], axis=0)  # Volterra
    bm = np.concatenate([np.zeros((1, config.n)), joint[k:]], axis=0)  # driving BM
    two_a1 = 2.0 * config.alpha + 1.0
    v = config.xi0 * np.exp(
        config.eta * math.sqrt(two_a1) * x
        - 0.5 * config.eta**2 * t[:, None] ** two_a1
    )
    # price driver: rho * dB + sqrt(1 - rho^2) * independent, Ito log-Euler
    db = np.diff(bm, axis=0)
    dts = np.diff(t)
    perp = rng.standard_normal((k, config.n)) * np.sqrt(dts)[:, None]
    dz = config.rho * db + math.sqrt(1.0 - config.rho**2) * perp
    log_y = np.empty((k + 1, config.n))
    log_y[0] = math.log(config.y0)
    for i in range(k):
        log_y[i + 1] = log_y[i] - 0.5 * v[i] * dts[i] + np.sqrt(v[i]) * dz[i]
    y = np.exp(log_y)
    out = []
    for j in range(config.n):
        cols = [y[:, j]]
        if config.keep_variance:
            cols.append(v[:, j])
        out.append(time_augment(Path(config.grid, np.stack(cols, axis=1))))
    return PathBatch(out)


def load_series(file, time_channel: int | None = None) -> Path:
    """Load a single series from the interchange CSV (first series in the file)."""
    batch = load_batch_csv(file, time_channel=time_channel)
    return batch[0]


def make_conditional_pairs(batch: PathBatch, past_len: int, future_len: int):
    """Split each window into a (conditioning, outcome) pair of sub-paths.

    The first ``past_len`` nodes become the conditioning path and the next
    ``future_len`` nodes the outcome; both are re-based to start at time 0.
    Value normalisation (initial-value scaling etc.) is left to the configured
    transform chain.
    """
    if past_len < 2 or future_len < 2:
        raise ValueError("past_len and future_len must be >= 2")
    if past_len + future_len > batch.length:
        raise ValueError(
            f"past_len + future_len = {past_len + future_len} exceeds window "
            f"length {batch.length}"
        )
    pairs = []
    for p in batch:
        t = p.grid.times

        def _sub(lo, hi):
            v = p.values[lo:hi].copy()
            if p.time_channel is not None:
                v[:, p.time_channel] -= v[0, p.time_channel]
            return Path(
                TimeGrid(t[lo:hi] - t[lo]), v, time_channel=p.time_channel
            )

        pairs.append((_sub(0, past_len), _sub(past_len, past_len + future_len)))
    return pairs
