"""Exact reverse-mode differentiation of the generator pipeline, plus Adam.

Everything is discretise-then-optimise: the derivative of the *computed*
discrete quantities, obtained by walking the Euler unroll backwards in time
and the MLPs layer by layer. There is no general-purpose tape; only the fixed
pipeline stages (MLP, Euler step, affine readout, initial map) are handled.

Parameter collections are addressed as flat name -> array dictionaries (see
``NeuralSdeParams.tree``), which keeps the Adam update and the gradient
bundle generic over model variants.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError

LIPSWISH_SCALE = 1.1  # fixes the Lipschitz constant of the activation at <= 1


def lipswish(x: np.ndarray) -> np.ndarray:
    return x / (LIPSWISH_SCALE * (1.0 + np.exp(-x)))


def lipswish_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return (s + x * s * (1.0 - s)) / LIPSWISH_SCALE


def _final_act(name, x):
    if name == "tanh":
        return np.tanh(x)
    return x


def _final_act_grad(name, x):
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    return np.ones_like(x)


def mlp_forward(mlp, z: np.ndarray, want_cache: bool = False):
    """Evaluate an MLP (LipSwish hidden, configurable final activation).

    ``mlp`` provides .weights (list of (fan_in, fan_out)), .biases and
    .final_activation. Returns the output, plus the per-layer pre-activation
    cache when requested.
    """
    pres = []
    h = z
    last = len(mlp.weights) - 1
    for k, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        pre = h @ W + b
        if want_cache:
            pres.append((h, pre))
        h = _final_act(mlp.final_activation, pre) if k == last else lipswish(pre)
    return (h, pres) if want_cache else h


def mlp_backward(mlp, cache, bar_out: np.ndarray, prefix: str, grads: dict):
    """Chain bar_out through the MLP; accumulates weight grads, returns input grad."""
    last = len(mlp.weights) - 1
    bar = bar_out
    for k in range(last, -1, -1):
        h_in, pre = cache[k]
        act_g = (
            _final_act_grad(mlp.final_activation, pre)
            if k == last
            else lipswish_grad(pre)
        )
        bar_pre = bar * act_g
        gW = h_in.reshape(-1, h_in.shape[-1]).T @ bar_pre.reshape(-1, bar_pre.shape[-1])
        gb = bar_pre.reshape(-1, bar_pre.shape[-1]).sum(axis=0)
        grads[f"{prefix}.W{k}"] = grads.get(f"{prefix}.W{k}", 0.0) + gW
        grads[f"{prefix}.b{k}"] = grads.get(f"{prefix}.b{k}", 0.0) + gb
        bar = bar_pre @ mlp.weights[k].T
    return bar


@dataclass
class GradientBundle:
    """Per-parameter gradient arrays, keyed like ``NeuralSdeParams.tree()``."""

    grads: dict

    def check_congruent(self, params) -> None:
        tree = params.tree()
        for name, g in self.grads.items():
            if tree[name].shape != np.shape(g):
                raise AssertionError(f"gradient {name} has shape {np.shape(g)}, "
                                     f"parameter has {tree[name].shape}")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.grads.values())

    def scaled(self, c: float) -> "GradientBundle":
        return GradientBundle({k: c * v for k, v in self.grads.items()})

    def added(self, other: "GradientBundle") -> "GradientBundle":
        out = dict(self.grads)
        for k, v in other.grads.items():
            out[k] = out.get(k, 0.0) + v
        return GradientBundle(out)


def backward(params, record, bar_values: np.ndarray) -> GradientBundle:
    """Exact gradient of the rollout w.r.t. all parameters.

    ``record`` is the RolloutRecord produced by ``nsde.sample_with_record``;
    ``bar_values`` is the upstream gradient w.r.t. the generated *value*
    channels, shape (n, L, d_x). The conditional encoding is treated as a
    constant input: no gradient flows to the conditioning path.
    """
    y = record.y  # (n, L, d_y)
    n, L, d_y = y.shape
    bar_values = np.asarray(bar_values, dtype=np.float64)
    if bar_values.shape[:2] != (n, L):
        raise AssertionError(
            f"upstream gradient has shape {bar_values.shape}, rollout is ({n}, {L})"
        )
    cond = record.cond  # (n, d_C) or None
    grads: dict = {}

    # readout X_k = A @ [Y_k; C] + b
    ro_in = y if cond is None else np.concatenate(
        [y, np.broadcast_to(cond[:, None, :], (n, L, cond.shape[-1]))], axis=2
    )
    grads["A"] = np.einsum("nkx,nkz->xz", bar_values, ro_in)
    grads["b"] = bar_values.sum(axis=(0, 1))
    bar_y_nodes = np.einsum("nkx,xz->nkz", bar_values, params.A)[:, :, :d_y]

    d_w = record.dW.shape[-1]
    bar_next = bar_y_nodes[:, L - 1, :].copy()
    for k in range(L - 2, -1, -1):
        t_col = np.full((n, 1), record.net_times[k])
        inp = np.concatenate([t_col, y[:, k, :]], axis=1)
        if cond is not None:
            inp = np.concatenate([inp, cond], axis=1)
        mu_out, mu_cache = mlp_forward(params.mu, inp, want_cache=True)
        sg_out, sg_cache = mlp_forward(params.sigma, inp, want_cache=True)
        dt = record.times[k + 1] - record.times[k]
        bar_mu = bar_next * dt
        # Y_{k+1} += sigma_mat @ dW_k, sigma flattened row-major (d_y, d_w)
        bar_sg = (bar_next[:, :, None] * record.dW[:, k, None, :]).reshape(n, d_y * d_w)
        bar_in = mlp_backward(params.mu, mu_cache, bar_mu, "mu", grads)
        bar_in = bar_in + mlp_backward(params.sigma, sg_cache, bar_sg, "sigma", grads)
        bar_next = bar_next + bar_in[:, 1 : 1 + d_y] + bar_y_nodes[:, k, :]

    # initial state
    if params.y0 is not None:
        grads["y0"] = bar_next.sum(axis=0)
    else:
        _, xi_cache = mlp_forward(params.xi, record.xi_input, want_cache=True)
        mlp_backward(params.xi, xi_cache, bar_next, "xi", grads)

    bundle = GradientBundle(grads)
    bundle.check_congruent(params)
    return bundle


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, bundle: GradientBundle, state: AdamState):
    """One Adam update with bias correction; refuses non-finite gradients."""
    if not bundle.is_finite():
        raise DivergenceError("non-finite gradient; update refused")
    state.step += 1
    t = state.step
    tree = params.tree()
    new_tree = {}
    for name, p in tree.items():
        g = bundle.grads.get(name)
        if g is None:
            new_tree[name] = p
            continue
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_tree[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params.replace_tree(new_tree), state
