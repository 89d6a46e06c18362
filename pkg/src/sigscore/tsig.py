"""Truncated signatures and log-signatures of piecewise-linear paths.

Level-k tensors are stored dense and flat (length d**k, row-major), so the
tensor product of levels is a Kronecker product of the flat vectors. Level 0
is always the scalar 1. This module doubles as the brute-force oracle for the
PDE-based kernel: the inner product of two truncated signatures converges to
the kernel value as the depth grows.
"""

from dataclasses import dataclass

import numpy as np

from .paths import Path


def _tensor_exp(delta: np.ndarray, depth: int) -> list[np.ndarray]:
    """Truncated tensor exponential of a single increment: level k = delta^(x)k / k!."""
    levels = [np.ones(1)]
    for k in range(1, depth + 1):
        levels.append(np.kron(levels[-1], delta) / k)
    return levels


def _chen(a: list[np.ndarray], b: list[np.ndarray], depth: int) -> list[np.ndarray]:
    """Truncated tensor-algebra product (Chen concatenation of signatures)."""
    out = []
    for k in range(depth + 1):
        acc = np.zeros(a[k].shape)
        for i in range(k + 1):
            acc += np.kron(a[i], b[k - i])
        out.append(acc)
    return out


def _tensor_log(s: list[np.ndarray], depth: int) -> list[np.ndarray]:
    """Truncated tensor logarithm of a group-like element (scalar part 1)."""
    u = [lvl.copy() for lvl in s]
    u[0] = np.zeros(1)  # log argument minus identity
    out = [np.zeros_like(lvl) for lvl in s]
    power = [lvl.copy() for lvl in u]
    sign = 1.0
    for n in range(1, depth + 1):
        for k in range(depth + 1):
            out[k] += (sign / n) * power[k]
        power = _chen(power, u, depth)
        sign = -sign
    return out


def _tensor_exp_series(l: list[np.ndarray], depth: int) -> list[np.ndarray]:
    """Truncated tensor exponential of a Lie-like element (scalar part 0)."""
    out = [np.zeros_like(lvl) for lvl in l]
    out[0] = np.ones(1)
    term = [np.zeros_like(lvl) for lvl in l]
    term[0] = np.ones(1)
    fact = 1.0
    for n in range(1, depth + 1):
        term = _chen(term, l, depth)
        fact *= n
        for k in range(depth + 1):
            out[k] += term[k] / fact
    return out


@dataclass(frozen=True)
class TruncatedSignature:
    """Signature levels 0..depth of a path in R^dim, flat dense storage."""

    depth: int
    dim: int
    levels: tuple

    def __post_init__(self):
        if len(self.levels) != self.depth + 1:
            raise ValueError("level count must be depth + 1")
        if abs(self.levels[0][0] - 1.0) > 1e-14:
            raise ValueError("level 0 must equal 1")

    def level(self, k: int) -> np.ndarray:
        """Level-k tensor reshaped to (dim,)*k."""
        return self.levels[k].reshape((self.dim,) * k)

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.levels)


@dataclass(frozen=True)
class LogSignature:
    """Tensor logarithm of a truncated signature (free, non-compressed)."""

    depth: int
    dim: int
    levels: tuple

    def level(self, k: int) -> np.ndarray:
        return self.levels[k].reshape((self.dim,) * k)

    def flatten(self) -> np.ndarray:
        """Flat coefficient vector, scalar level included (identically 0)."""
        return np.concatenate(self.levels)


def signature(path: Path, depth: int) -> TruncatedSignature:
    """Exact truncated signature of the piecewise-linear interpolant.

    Per-segment signatures are tensor exponentials of the increments, combined
    left-to-right by Chen's identity.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if path.length < 2:
        raise ValueError("path needs at least 2 nodes")
    incs = np.diff(path.values, axis=0)
    acc = _tensor_exp(incs[0], depth)
    for k in range(1, incs.shape[0]):
        acc = _chen(acc, _tensor_exp(incs[k], depth), depth)
    return TruncatedSignature(depth, path.dim, tuple(acc))


def signature_of_values(values: np.ndarray, depth: int) -> TruncatedSignature:
    """Signature of a bare (L, d) node-value array (grid-free: signatures are
    invariant under reparameterization, so only node values matter)."""
    values = np.asarray(values, dtype=np.float64)
    incs = np.diff(values, axis=0)
    acc = _tensor_exp(incs[0], depth)
    for k in range(1, incs.shape[0]):
        acc = _chen(acc, _tensor_exp(incs[k], depth), depth)
    return TruncatedSignature(depth, values.shape[1], tuple(acc))


def log_signature(path: Path, depth: int) -> LogSignature:
    """Truncated tensor logarithm of ``signature(path, depth)``."""
    sig = signature(path, depth)
    return LogSignature(depth, sig.dim, tuple(_tensor_log(list(sig.levels), depth)))


def log_to_signature(logsig: LogSignature) -> TruncatedSignature:
    """Inverse of the tensor logarithm (used to verify round-trips)."""
    levels = _tensor_exp_series(list(logsig.levels), logsig.depth)
    return TruncatedSignature(logsig.depth, logsig.dim, tuple(levels))


def chen_product(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenated path from the two factors (Chen's identity)."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    depth = min(a.depth, b.depth)
    return TruncatedSignature(
        depth, a.dim, tuple(_chen(list(a.levels[: depth + 1]), list(b.levels[: depth + 1]), depth))
    )


def truncated_kernel(x: Path, y: Path, depth: int) -> float:
    """Sum over levels 0..depth of Hilbert-Schmidt inner products of signatures.

    Brute-force approximation of the signature kernel; converges monotonically
    from below toward the PDE value when every level inner product is positive
    (e.g. shared-direction paths), and in general converges for paths of small
    total variation.
    """
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    sx = signature(x, depth)
    sy = signature(y, depth)
    return float(sum(float(a @ b) for a, b in zip(sx.levels, sy.levels)))


def signature_kernel_from_signatures(sx: TruncatedSignature, sy: TruncatedSignature) -> float:
    if sx.dim != sy.dim:
        raise ValueError("dimension mismatch")
    depth = min(sx.depth, sy.depth)
    return float(
        sum(float(sx.levels[k] @ sy.levels[k]) for k in range(depth + 1))
    )
