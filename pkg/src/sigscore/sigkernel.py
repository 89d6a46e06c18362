"""Signature kernel evaluation by solving its Goursat PDE on the discrete grid.

The kernel of two piecewise-linear paths is the terminal value f(T, T) of

    f(s, t) = 1 + integral_0^s integral_0^t f(u, v) <dx_u, dy_v>

solved by an explicit finite-difference sweep. The inner product on state
space is pluggable: plain Euclidean (Linear), an RBF lift of the states into
its RKHS, or squared-exponential kernels on L2([0,1]) that read each state
vector as function samples on a uniform mesh (SE-T family: ID, SQR, CEXP).

The same sweep run in reverse yields the exact gradient of the *discrete*
solver output with respect to the path node values (discretise-then-optimise),
which is what the training losses consume.

All pairwise work is dispatched to a fused numba kernel (static-kernel matrix,
forward sweep, reverse sweep per pair); each pair writes only its own output
slot, so results are independent of the worker count.
"""

from dataclasses import dataclass

import numpy as np
from numba import config as _numba_config
from numba import njit, prange, set_num_threads

from .errors import DivergenceError
from .paths import Path, PathBatch


def set_workers(n: int) -> int:
    """Set the numba worker count (clamped to what the host allows)."""
    n = max(1, min(int(n), _numba_config.NUMBA_NUM_THREADS))
    set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# static kernels on state space
# ---------------------------------------------------------------------------


def _mesh_weights(m: int) -> np.ndarray:
    """Trapezoidal quadrature weights for a uniform mesh of [0, 1] with m points."""
    if m == 1:
        return np.ones(1)
    w = np.full(m, 1.0 / (m - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


@dataclass(frozen=True)
class StaticKernel:
    """Base for kernels on state vectors; subclasses configure the solver core."""

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Map raw state vectors (..., d) to the space the kernel acts on."""
        return values

    def chain_grad(self, values: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
        """Pull a gradient w.r.t. transformed states back to raw states."""
        return grad_t

    def weights(self, d: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_linear(self) -> bool:
        return False

    @property
    def sigma(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Linear(StaticKernel):
    """Plain Euclidean inner product; the canonical signature kernel."""

    def weights(self, d: int) -> np.ndarray:
        return np.ones(d)

    @property
    def is_linear(self) -> bool:
        return True


@dataclass(frozen=True)
class RBF(StaticKernel):
    """RKHS lift: kappa(u, v) = exp(-|u - v|^2 / (2 sigma^2)) on R^d."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def weights(self, d: int) -> np.ndarray:
        return np.ones(d)


@dataclass(frozen=True)
class SETID(StaticKernel):
    """SE-T kernel with T = identity on L2([0,1]) sampled on a uniform mesh."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def weights(self, d: int) -> np.ndarray:
        return _mesh_weights(d)


@dataclass(frozen=True)
class SETSQR(StaticKernel):
    """SE-T kernel with T(f) = (f, f^2) on L2 + L2."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def transform(self, values: np.ndarray) -> np.ndarray:
        return np.concatenate([values, values**2], axis=-1)

    def chain_grad(self, values: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
        d = values.shape[-1]
        return grad_t[..., :d] + 2.0 * values * grad_t[..., d:]

    def weights(self, d: int) -> np.ndarray:
        # d here is the transformed dimension 2 * mesh size
        w = _mesh_weights(d // 2)
        return np.concatenate([w, w])


@dataclass(frozen=True)
class SETCEXP(StaticKernel):
    """SE-T kernel with T = covariance operator of a cosine-modulated SE kernel.

    The operator is applied as the dense quadrature matrix C = K_mesh diag(w)
    with K_mesh[i, j] = exp(-(x_i - x_j)^2 / (2 l^2)) * sum_{n<F} cos(2 pi n (x_i - x_j))
    on the state mesh; C depends only on the mesh, so gradients treat it as
    constant.
    """

    sigma: float = 1.0
    l: float = 1.0
    F: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and self.l > 0 and self.F >= 1):
            raise ValueError("require sigma > 0, l > 0, F >= 1")

    def _operator(self, d: int) -> np.ndarray:
        x = np.linspace(0.0, 1.0, d) if d > 1 else np.zeros(1)
        diff = x[:, None] - x[None, :]
        k = np.exp(-(diff**2) / (2.0 * self.l**2))
        k = k * sum(np.cos(2.0 * np.pi * n * diff) for n in range(self.F))
        return k * _mesh_weights(d)[None, :]

    def transform(self, values: np.ndarray) -> np.ndarray:
        C = self._operator(values.shape[-1])
        return values @ C.T

    def chain_grad(self, values: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
        C = self._operator(values.shape[-1])
        return grad_t @ C

    def weights(self, d: int) -> np.ndarray:
        return _mesh_weights(d)


@dataclass(frozen=True)
class SolverConfig:
    """PDE discretisation: dyadic refinement level and update scheme."""

    dyadic_order: int = 2
    scheme: str = "order2"

    def __post_init__(self):
        if not 0 <= self.dyadic_order <= 10:
            raise ValueError("dyadic_order must be in [0, 10]")
        if self.scheme not in ("order1", "order2"):
            raise ValueError("scheme must be 'order1' or 'order2'")

    @property
    def order2(self) -> bool:
        return self.scheme == "order2"


@dataclass(frozen=True)
class GramMatrix:
    """Pairwise kernel evaluations between two path batches."""

    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if not np.all(np.isfinite(e)):
            raise DivergenceError("Gram matrix contains non-finite entries")
        object.__setattr__(self, "entries", e)

    @property
    def shape(self):
        return self.entries.shape


# ---------------------------------------------------------------------------
# numba core
# ---------------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def _static_matrix(x, y, linear, inv2s2, w, K):
    n1, d = x.shape
    m1 = y.shape[0]
    if linear:
        for i in range(n1):
            for j in range(m1):
                s = 0.0
                for c in range(d):
                    s += x[i, c] * y[j, c]
                K[i, j] = s
    else:
        for i in range(n1):
            for j in range(m1):
                s = 0.0
                for c in range(d):
                    t = x[i, c] - y[j, c]
                    s += w[c] * t * t
                K[i, j] = np.exp(-s * inv2s2)


@njit(cache=True, fastmath=True)
def _forward(K, order2, f):
    """Goursat sweep; fills the solution field f and returns f at the corner."""
    n1, m1 = K.shape
    for i in range(n1):
        f[i, 0] = 1.0
    for j in range(m1):
        f[0, j] = 1.0
    if order2:
        for i in range(n1 - 1):
            for j in range(m1 - 1):
                a = K[i + 1, j + 1] - K[i + 1, j] - K[i, j + 1] + K[i, j]
                c1 = 1.0 + 0.5 * a + a * a / 12.0
                c2 = 1.0 - a * a / 12.0
                f[i + 1, j + 1] = (f[i + 1, j] + f[i, j + 1]) * c1 - f[i, j] * c2
    else:
        for i in range(n1 - 1):
            for j in range(m1 - 1):
                a = K[i + 1, j + 1] - K[i + 1, j] - K[i, j + 1] + K[i, j]
                f[i + 1, j + 1] = f[i + 1, j] + f[i, j + 1] - f[i, j] + a * f[i, j]
    return f[n1 - 1, m1 - 1]


@njit(cache=True, fastmath=True)
def _backward(K, f, order2, barK):
    """Reverse sweep: adjoint of `_forward` w.r.t. the static-kernel matrix."""
    n1, m1 = K.shape
    barf = np.zeros((n1, m1))
    barf[n1 - 1, m1 - 1] = 1.0
    for i in range(n1 - 2, -1, -1):
        for j in range(m1 - 2, -1, -1):
            g = barf[i + 1, j + 1]
            a = K[i + 1, j + 1] - K[i + 1, j] - K[i, j + 1] + K[i, j]
            if order2:
                c1 = 1.0 + 0.5 * a + a * a / 12.0
                c2 = 1.0 - a * a / 12.0
                barf[i + 1, j] += g * c1
                barf[i, j + 1] += g * c1
                barf[i, j] -= g * c2
                bar_a = g * (
                    (f[i + 1, j] + f[i, j + 1]) * (0.5 + a / 6.0) + f[i, j] * (a / 6.0)
                )
            else:
                barf[i + 1, j] += g
                barf[i, j + 1] += g
                barf[i, j] += g * (a - 1.0)
                bar_a = g * f[i, j]
            barK[i + 1, j + 1] += bar_a
            barK[i + 1, j] -= bar_a
            barK[i, j + 1] -= bar_a
            barK[i, j] += bar_a


@njit(cache=True, fastmath=True)
def _grad_nodes(x, y, K, barK, linear, inv2s2, w, gu, gv):
    """Chain barK through the static kernel to both sides' node values."""
    n1, d = x.shape
    m1 = y.shape[0]
    if linear:
        for i in range(n1):
            for j in range(m1):
                b = barK[i, j]
                for c in range(d):
                    gu[i, c] += b * y[j, c]
                    gv[j, c] += b * x[i, c]
    else:
        for i in range(n1):
            for j in range(m1):
                b = barK[i, j] * K[i, j] * 2.0 * inv2s2
                for c in range(d):
                    t = w[c] * (y[j, c] - x[i, c])
                    gu[i, c] += b * t
                    gv[j, c] -= b * t


@njit(parallel=True, cache=True, fastmath=True)
def _solve_pair_batch(xs, ys, pi, pj, linear, inv2s2, w, order2, need_grad):
    """Kernel values (and node gradients) for the listed (pi, pj) pairs.

    Each pair writes only its own slot, so the result is independent of the
    thread schedule.
    """
    P = pi.shape[0]
    n1, d = xs.shape[1], xs.shape[2]
    m1 = ys.shape[1]
    vals = np.empty(P)
    ok = np.ones(P, np.bool_)
    if need_grad:
        gu = np.zeros((P, n1, d))
        gv = np.zeros((P, m1, d))
    else:
        gu = np.zeros((1, 1, 1))
        gv = np.zeros((1, 1, 1))
    for p in prange(P):
        x = xs[pi[p]]
        y = ys[pj[p]]
        K = np.empty((n1, m1))
        _static_matrix(x, y, linear, inv2s2, w, K)
        f = np.empty((n1, m1))
        v = _forward(K, order2, f)
        vals[p] = v
        if not np.isfinite(v) or abs(v) > 1e300:
            ok[p] = False
            continue
        if need_grad:
            barK = np.zeros((n1, m1))
            _backward(K, f, order2, barK)
            _grad_nodes(x, y, K, barK, linear, inv2s2, w, gu[p], gv[p])
    return vals, gu, gv, ok


# ---------------------------------------------------------------------------
# dyadic refinement of piecewise-linear paths
# ---------------------------------------------------------------------------


def _refine(values: np.ndarray, lam: int) -> np.ndarray:
    """Insert 2^lam - 1 linearly interpolated nodes into every cell.

    values: (..., L, d) -> (..., (L-1) * 2^lam + 1, d)
    """
    if lam == 0:
        return np.ascontiguousarray(values)
    R = 1 << lam
    base = values[..., :-1, :]
    delta = np.diff(values, axis=-2)
    frac = (np.arange(R) / R)[:, None]
    sub = base[..., :, None, :] + delta[..., :, None, :] * frac
    lead = sub.reshape(*values.shape[:-2], (values.shape[-2] - 1) * R, values.shape[-1])
    return np.ascontiguousarray(
        np.concatenate([lead, values[..., -1:, :]], axis=-2)
    )


def _fold_refined_grad(grad_ref: np.ndarray, lam: int) -> np.ndarray:
    """Adjoint of `_refine`: fold refined-node gradients onto original nodes."""
    if lam == 0:
        return grad_ref
    R = 1 << lam
    n_ref = grad_ref.shape[-2]
    L = (n_ref - 1) // R + 1
    d = grad_ref.shape[-1]
    lead = grad_ref[..., :-1, :].reshape(*grad_ref.shape[:-2], L - 1, R, d)
    frac = (np.arange(R) / R)[:, None]
    out = np.zeros((*grad_ref.shape[:-2], L, d))
    out[..., :-1, :] += ((1.0 - frac) * lead).sum(axis=-2)
    out[..., 1:, :] += (frac * lead).sum(axis=-2)
    out[..., -1, :] += grad_ref[..., -1, :]
    return out


# ---------------------------------------------------------------------------
# batched driver and public operations
# ---------------------------------------------------------------------------


def solve_values_pairs(
    xvals: np.ndarray,
    yvals: np.ndarray,
    pairs_i: np.ndarray,
    pairs_j: np.ndarray,
    sk: StaticKernel,
    cfg: SolverConfig,
    need_grad: bool = False,
):
    """Kernel values (and gradients w.r.t. raw node values) for listed pairs.

    xvals: (Nx, Lx, d) raw node values; yvals: (Ny, Ly, d). Returns
    (vals, grad_x, grad_y) where grad_x[p] is d kernel / d xvals[pairs_i[p]]
    with shape (Lx, d); gradients are None unless requested.
    """
    xvals = np.asarray(xvals, dtype=np.float64)
    yvals = np.asarray(yvals, dtype=np.float64)
    if xvals.shape[-1] != yvals.shape[-1]:
        raise ValueError(
            f"state dimension mismatch: {xvals.shape[-1]} vs {yvals.shape[-1]}"
        )
    if not (np.all(np.isfinite(xvals)) and np.all(np.isfinite(yvals))):
        raise ValueError("non-finite path values")
    lam = cfg.dyadic_order
    xr = _refine(xvals, lam)
    yr = _refine(yvals, lam)
    xt = np.ascontiguousarray(sk.transform(xr))
    yt = np.ascontiguousarray(sk.transform(yr))
    w = sk.weights(xt.shape[-1])
    inv2s2 = 1.0 / (2.0 * sk.sigma**2)
    pairs_i = np.ascontiguousarray(pairs_i, dtype=np.int64)
    pairs_j = np.ascontiguousarray(pairs_j, dtype=np.int64)
    vals, gu, gv, ok = _solve_pair_batch(
        xt, yt, pairs_i, pairs_j, sk.is_linear, inv2s2, w, cfg.order2, need_grad
    )
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise DivergenceError(
            f"PDE solution overflow for pair ({int(pairs_i[bad])}, {int(pairs_j[bad])}); "
            "rescale the paths to a smaller range"
        )
    if not need_grad:
        return vals, None, None
    # pull gradients back through the state transform, then through refinement
    grad_xr = sk.chain_grad(xr[pairs_i], gu)
    grad_yr = sk.chain_grad(yr[pairs_j], gv)
    return vals, _fold_refined_grad(grad_xr, lam), _fold_refined_grad(grad_yr, lam)


def solve_from_static_matrix(K: np.ndarray, cfg: SolverConfig) -> float:
    """Run the Goursat sweep on a precomputed static-kernel matrix.

    ``K[i, j]`` must hold kappa(x_i, y_j) on the *refined* node grids. Mainly
    a debugging / verification hook: it lets tests drive the solver with
    surrogate kernels that the production code does not implement.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    f = np.empty_like(K)
    v = float(_forward(K, cfg.order2, f))
    if not np.isfinite(v) or abs(v) > 1e300:
        raise DivergenceError("PDE solution overflow; rescale the paths")
    return v


def refine_values(values: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    """Refined node values the solver actually uses (dyadic interpolation)."""
    return _refine(np.asarray(values, dtype=np.float64), cfg.dyadic_order)


def kernel_eval(x: Path, y: Path, sk: StaticKernel, cfg: SolverConfig) -> float:
    """Signature kernel of two paths under the given static kernel and solver."""
    vals, _, _ = solve_values_pairs(
        x.values[None], y.values[None], np.zeros(1), np.zeros(1), sk, cfg
    )
    return float(vals[0])


def kernel_grad_x(x: Path, y: Path, sk: StaticKernel, cfg: SolverConfig) -> np.ndarray:
    """Exact gradient of the discrete kernel value w.r.t. the node values of x."""
    _, gx, _ = solve_values_pairs(
        x.values[None], y.values[None], np.zeros(1), np.zeros(1), sk, cfg, need_grad=True
    )
    return gx[0]


def gram(X: PathBatch, Y: PathBatch, sk: StaticKernel, cfg: SolverConfig) -> GramMatrix:
    """All pairwise kernel values; exploits symmetry when X and Y coincide."""
    xv = X.stack()
    if Y is X:
        m = len(X)
        iu, ju = np.triu_indices(m)
        try:
            vals, _, _ = solve_values_pairs(xv, xv, iu, ju, sk, cfg)
        except DivergenceError as e:
            raise DivergenceError(f"self-Gram: {e}") from None
        out = np.empty((m, m))
        out[iu, ju] = vals
        out[ju, iu] = vals
        return GramMatrix(out, symmetric=True)
    yv = Y.stack()
    m, n = len(X), len(Y)
    ii, jj = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    vals, _, _ = solve_values_pairs(xv, yv, ii.ravel(), jj.ravel(), sk, cfg)
    return GramMatrix(vals.reshape(m, n), symmetric=False)
