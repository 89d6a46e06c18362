"""Neural SDE generator: MLP vector fields, Euler-Maruyama rollout, training.

The model is

    Y_0 = xi(a),   Y_{k+1} = Y_k + mu(t_k, Y_k) dt + sigma(t_k, Y_k) dW_k,
    X_k = A Y_k + b,

with LipSwish hidden activations and (by default) a final tanh on the vector
fields. Stochastic integration is Euler-Maruyama in the Ito sense. In the
conditional variant an encoding of the conditioning path is appended to the
inputs of every trainable map, and the initial map consumes the condition's
terminal state instead of noise.

Sampled paths come back time-augmented on the rollout grid. Training follows
the score-matching loop: draw data batch, roll out the generator, apply the
value transforms, evaluate the kernel score, backpropagate exactly through
everything, Adam-update.
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import diffengine, tsig
from ._rng import derive_rng
from .errors import DivergenceError, RolloutDivergenceError
from .paths import Path, PathBatch, TimeGrid, lead_lag, time_augment, time_normalize, translate_to_zero
from .scores import multi_kernel_loss
from .sigkernel import SolverConfig


@dataclass
class MlpParams:
    """Weights/biases of one MLP; LipSwish hidden, tanh or identity output."""

    weights: list
    biases: list
    final_activation: str = "tanh"

    def __post_init__(self):
        if self.final_activation not in ("tanh", "identity"):
            raise ValueError("final_activation must be 'tanh' or 'identity'")
        for k in range(len(self.weights) - 1):
            if self.weights[k].shape[1] != self.weights[k + 1].shape[0]:
                raise ValueError(f"layer {k} -> {k + 1} shapes do not chain")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass(frozen=True)
class SdeDims:
    """Hyperparameter block describing all generator dimensions."""

    d_x: int = 1
    d_y: int = 8
    d_w: int = 3
    d_a: int = 8
    d_c: int = 0
    hidden: tuple = (16,)
    xi_hidden: tuple = ()
    xi_in: int = 0  # per-sample initial-net input width in conditional mode
    # (the encoding is appended on top of xi_in inputs)

    def __post_init__(self):
        if self.d_y < 1 or self.d_w < 1 or self.d_x < 1:
            raise ValueError("d_y, d_w, d_x must be >= 1")


@dataclass
class NeuralSdeParams:
    """All trainable weights: initial map (net or constant), mu, sigma, readout."""

    dims: SdeDims
    mu: MlpParams
    sigma: MlpParams
    A: np.ndarray
    b: np.ndarray
    xi: MlpParams | None = None
    y0: np.ndarray | None = None

    def __post_init__(self):
        if (self.xi is None) == (self.y0 is None):
            raise ValueError("exactly one of xi (net) or y0 (constant) must be set")

    def tree(self) -> dict:
        """Flat name -> array view of every trainable tensor, fixed order."""
        out = {}
        if self.y0 is not None:
            out["y0"] = self.y0
        else:
            for k, (W, b) in enumerate(zip(self.xi.weights, self.xi.biases)):
                out[f"xi.W{k}"] = W
                out[f"xi.b{k}"] = b
        for prefix, mlp in (("mu", self.mu), ("sigma", self.sigma)):
            for k, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
                out[f"{prefix}.W{k}"] = W
                out[f"{prefix}.b{k}"] = b
        out["A"] = self.A
        out["b"] = self.b
        return out

    def replace_tree(self, tree: dict) -> "NeuralSdeParams":
        """New parameter set with arrays taken from a name -> array dict."""

        def rebuild(mlp, prefix):
            ws = [tree[f"{prefix}.W{k}"] for k in range(len(mlp.weights))]
            bs = [tree[f"{prefix}.b{k}"] for k in range(len(mlp.biases))]
            return MlpParams(ws, bs, mlp.final_activation)

        return NeuralSdeParams(
            dims=self.dims,
            mu=rebuild(self.mu, "mu"),
            sigma=rebuild(self.sigma, "sigma"),
            A=tree["A"],
            b=tree["b"],
            xi=None if self.xi is None else rebuild(self.xi, "xi"),
            y0=None if self.y0 is None else tree["y0"],
        )

    def n_parameters(self) -> int:
        return sum(int(np.prod(a.shape)) for a in self.tree().values())


@dataclass(frozen=True)
class NoiseBundle:
    """All randomness of one rollout: initial draws and Brownian increments."""

    a: np.ndarray  # (n, d_a) standard normals
    dW: np.ndarray  # (n, steps, d_w), already scaled by sqrt(dt_k)
    seed: int

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass
class RolloutRecord:
    """Everything `diffengine.backward` needs to replay a rollout."""

    times: np.ndarray
    net_times: np.ndarray  # times rescaled onto [0, 1] for the vector fields
    dW: np.ndarray
    y: np.ndarray  # (n, L, d_y) hidden states
    xi_input: np.ndarray | None
    cond: np.ndarray | None


def _init_mlp(sizes, final_activation, init_scale, rng) -> MlpParams:
    ws, bs = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        s = init_scale / math.sqrt(fi)
        ws.append(rng.uniform(-s, s, size=(fi, fo)))
        bs.append(np.zeros(fo))
    return MlpParams(ws, bs, final_activation)


def init_params(
    dims: SdeDims,
    init_scale: float = 0.5,
    seed: int = 0,
    learn_initial: bool = False,
    final_activation: str = "tanh",
) -> NeuralSdeParams:
    """Fresh parameters: uniform(+-init_scale / sqrt(fan_in)) weights, zero biases.

    With ``learn_initial`` False the initial map is a trainable constant vector
    (zero-initialised); otherwise it is an MLP fed with the d_a noise draws
    (or, conditionally, with the condition's terminal state and encoding).
    """
    rng = derive_rng(seed, "init")
    field_in = 1 + dims.d_y + dims.d_c
    mu = _init_mlp(
        (field_in, *dims.hidden, dims.d_y), final_activation, init_scale, rng
    )
    sigma = _init_mlp(
        (field_in, *dims.hidden, dims.d_y * dims.d_w), final_activation, init_scale, rng
    )
    ro_in = dims.d_y + dims.d_c
    s = init_scale / math.sqrt(ro_in)
    A = rng.uniform(-s, s, size=(dims.d_x, ro_in))
    b = np.zeros(dims.d_x)
    if learn_initial:
        xi_in = (dims.xi_in + dims.d_c) if dims.d_c > 0 else dims.d_a
        xi = _init_mlp(
            (xi_in, *dims.xi_hidden, dims.d_y), "identity", init_scale, rng
        )
        return NeuralSdeParams(dims, mu, sigma, A, b, xi=xi)
    return NeuralSdeParams(dims, mu, sigma, A, b, y0=np.zeros(dims.d_y))


def make_noise(n: int, grid: TimeGrid, dims: SdeDims, seed: int) -> NoiseBundle:
    """Draw all rollout randomness, reproducibly from the seed."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, dims.d_a))
    dts = np.diff(grid.times)
    dW = rng.standard_normal((n, dts.shape[0], dims.d_w)) * np.sqrt(dts)[None, :, None]
    return NoiseBundle(a, dW, seed)


def sample_with_record(
    params: NeuralSdeParams,
    n: int,
    grid: TimeGrid,
    noise: NoiseBundle,
    condition: np.ndarray | None = None,
    xi_input: np.ndarray | None = None,
):
    """Euler-Maruyama rollout; returns the time-augmented batch and the record.

    The vector fields consume the step time through a fixed affine rescaling
    onto [0, 1] (an architecture choice that keeps the first-layer inputs
    O(1) on long grids); the rollout itself uses the raw grid increments.
    """
    dims = params.dims
    if noise.n != n or noise.dW.shape[1] != len(grid) - 1:
        raise ValueError("noise bundle shape does not match n and grid")
    cond = None
    if dims.d_c > 0:
        if condition is None:
            raise ValueError("conditional model requires an encoding")
        cond = np.asarray(condition, dtype=np.float64)
        if cond.ndim == 1:
            cond = np.broadcast_to(cond, (n, cond.shape[0]))
        cond = np.ascontiguousarray(cond)
    if params.y0 is not None:
        y = np.broadcast_to(params.y0, (n, dims.d_y)).copy()
        xin = None
    else:
        xin = noise.a if xi_input is None else np.asarray(xi_input, dtype=np.float64)
        if cond is not None:
            xin = np.concatenate([xin, cond], axis=1)
        y = diffengine.mlp_forward(params.xi, xin)
    times = grid.times
    net_times = (times - times[0]) / (times[-1] - times[0])
    L = len(grid)
    states = np.empty((n, L, dims.d_y))
    states[:, 0, :] = y
    for k in range(L - 1):
        t_col = np.full((n, 1), net_times[k])
        inp = np.concatenate([t_col, y], axis=1)
        if cond is not None:
            inp = np.concatenate([inp, cond], axis=1)
        mu_out = diffengine.mlp_forward(params.mu, inp)
        sg_out = diffengine.mlp_forward(params.sigma, inp).reshape(n, dims.d_y, dims.d_w)
        y = y + mu_out * (times[k + 1] - times[k]) + np.einsum(
            "nyw,nw->ny", sg_out, noise.dW[:, k, :]
        )
        if not np.all(np.isfinite(y)):
            raise RolloutDivergenceError(k + 1)
        states[:, k + 1, :] = y
    ro_in = states if cond is None else np.concatenate(
        [states, np.broadcast_to(cond[:, None, :], (n, L, dims.d_c))], axis=2
    )
    values = np.einsum("nkz,xz->nkx", ro_in, params.A) + params.b
    batch = PathBatch(
        time_augment(Path(grid, values[i])) for i in range(n)
    )
    record = RolloutRecord(
        times=times, net_times=net_times, dW=noise.dW, y=states, xi_input=xin, cond=cond
    )
    return batch, record


def sample(
    params: NeuralSdeParams,
    n: int,
    grid: TimeGrid,
    noise: NoiseBundle,
    condition: np.ndarray | None = None,
) -> PathBatch:
    """Generate n time-augmented sample paths (see `sample_with_record`)."""
    batch, _ = sample_with_record(params, n, grid, noise, condition)
    return batch


# ---------------------------------------------------------------------------
# checkpoint format
#
# magic "NSDECKPT" | uint32 version (=1) | uint32 header length | UTF-8 JSON
# header | concatenated raw little-endian float64 arrays, C order, in the
# header's "names" order. The header carries dims, the initial-map mode, the
# final activation, and every array's shape.
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"NSDECKPT"
_CKPT_VERSION = 1


def save_checkpoint(params: NeuralSdeParams, file) -> None:
    """Write a versioned binary dump of the parameters (byte-deterministic)."""
    tree = params.tree()
    names = list(tree.keys())
    header = {
        "dims": {
            "d_x": params.dims.d_x,
            "d_y": params.dims.d_y,
            "d_w": params.dims.d_w,
            "d_a": params.dims.d_a,
            "d_c": params.dims.d_c,
            "hidden": list(params.dims.hidden),
            "xi_hidden": list(params.dims.xi_hidden),
            "xi_in": params.dims.xi_in,
        },
        "learn_initial": params.y0 is None,
        "final_activation": params.mu.final_activation,
        "names": names,
        "shapes": {k: list(np.shape(tree[k])) for k in names},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "wb")
        close = True
    try:
        file.write(_CKPT_MAGIC)
        file.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        file.write(blob)
        for k in names:
            file.write(np.ascontiguousarray(tree[k], dtype="<f8").tobytes())
    finally:
        if close:
            file.close()


def load_checkpoint(file) -> NeuralSdeParams:
    """Read a checkpoint written by `save_checkpoint`."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "rb")
        close = True
    try:
        magic = file.read(8)
        if magic != _CKPT_MAGIC:
            raise ValueError("not a generator checkpoint (bad magic)")
        version, hlen = struct.unpack("<II", file.read(8))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(file.read(hlen).decode())
        tree = {}
        for name in header["names"]:
            shape = tuple(header["shapes"][name])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(file.read(count * 8), dtype="<f8").reshape(shape)
            tree[name] = arr.copy()
    finally:
        if close:
            file.close()
    dims = SdeDims(
        d_x=header["dims"]["d_x"],
        d_y=header["dims"]["d_y"],
        d_w=header["dims"]["d_w"],
        d_a=header["dims"]["d_a"],
        d_c=header["dims"]["d_c"],
        hidden=tuple(header["dims"]["hidden"]),
        xi_hidden=tuple(header["dims"]["xi_hidden"]),
        xi_in=header["dims"]["xi_in"],
    )
    template = init_params(
        dims,
        seed=0,
        learn_initial=header["learn_initial"],
        final_activation=header["final_activation"],
    )
    return template.replace_tree(tree)


# ---------------------------------------------------------------------------
# conditioning encoder
# ---------------------------------------------------------------------------

_ENCODER_TRANSFORMS = {
    "time_normalize": time_normalize,
    "lead_lag": lead_lag,
    "translate_to_zero": translate_to_zero,
}


def encode_condition(x: Path, depth: int, transforms=("time_normalize", "lead_lag")) -> np.ndarray:
    """Encode a conditioning path as its flattened truncated log-signature.

    The configured transforms are applied first. The returned vector includes
    the scalar level (identically zero for log-signatures), so its length is
    sum_{k<=depth} d_t^k with d_t the post-transform channel count.
    """
    p = x
    for name in transforms:
        p = _ENCODER_TRANSFORMS[name](p)
    return tsig.log_signature(p, depth).flatten()


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

# value transforms applied to generated paths before scoring, with their
# exact backward rules (gradient w.r.t. raw generated values)


def _apply_gen_transforms(batch: PathBatch, names) -> PathBatch:
    for name in names:
        if name == "translate_to_zero":
            batch = PathBatch([translate_to_zero(p) for p in batch])
        elif name == "time_normalize":
            batch = PathBatch([time_normalize(p) for p in batch])
        elif name.startswith("scale:"):
            from .paths import scale as scale_path

            c = float(name.split(":", 1)[1])
            batch = PathBatch([scale_path(p, c) for p in batch])
        else:
            raise ValueError(f"unsupported generator transform {name!r}")
    return batch


def _backward_gen_transforms(grad: np.ndarray, names, time_channel) -> np.ndarray:
    # reverse order; time channel carries no gradient (masked upstream)
    for name in reversed(list(names)):
        if name == "translate_to_zero":
            g0 = grad.sum(axis=1)
            grad = grad.copy()
            grad[:, 0, :] -= g0
            if time_channel is not None:
                grad[..., time_channel] = 0.0
        elif name == "time_normalize":
            pass  # touches only the masked time channel
        elif name.startswith("scale:"):
            grad = grad * float(name.split(":", 1)[1])
    return grad


@dataclass
class TrainSettings:
    """Schedule and objective wiring for a training run."""

    steps: int = 100
    batch_size: int = 64
    kernel_list: tuple = ()  # (scale, StaticKernel) pairs, scores summed
    solver: SolverConfig = SolverConfig()
    gen_transforms: tuple = ("translate_to_zero", "time_normalize")
    checkpoint_every: int = 0  # 0 = only final
    log_real_term_every: int = 10  # also log MMD^2 incl. the data-data term


def train_unconditional(
    params: NeuralSdeParams,
    data: PathBatch,
    grid: TimeGrid,
    settings: TrainSettings,
    adam: diffengine.AdamState,
    seed: int,
    log_fn=None,
    checkpoint_fn=None,
):
    """Score-matching training loop (shuffled data batches, exact gradients).

    Returns (trained params, metrics list). Aborts on divergent loss with a
    last-good checkpoint via ``checkpoint_fn(step, params, tag='abort')``.
    """
    n_data = len(data)
    bs = min(settings.batch_size, n_data)
    metrics = []
    last_good = params
    for step in range(settings.steps):
        batch_rng = derive_rng(seed, f"real-batch-{step}")
        idx = batch_rng.choice(n_data, size=bs, replace=False)
        real = PathBatch([data.paths[i] for i in idx])
        noise = make_noise(
            bs, grid, params.dims, derive_rng(seed, f"noise-{step}").integers(2**63)
        )
        gen_raw, record = sample_with_record(params, bs, grid, noise)
        gen = _apply_gen_transforms(gen_raw, settings.gen_transforms)
        try:
            sv = multi_kernel_loss(
                gen, real, settings.kernel_list, settings.solver, need_grad=True
            )
        except DivergenceError:
            if checkpoint_fn is not None:
                checkpoint_fn(step, last_good, tag="abort")
            raise
        if not np.isfinite(sv.value):
            if checkpoint_fn is not None:
                checkpoint_fn(step, last_good, tag="abort")
            raise DivergenceError(f"non-finite loss at step {step}")
        grad_vals = _backward_gen_transforms(
            sv.gradient_wrt_generated, settings.gen_transforms, gen.time_channel
        )
        value_cols = [c for c in range(gen_raw.dim) if c != gen_raw.time_channel]
        bundle = diffengine.backward(params, record, grad_vals[..., value_cols])
        params, adam = diffengine.adam_step(params, bundle, adam)
        last_good = params
        entry = {"step": step, "loss": sv.value}
        if settings.log_real_term_every and step % settings.log_real_term_every == 0:
            entry["mmd_sq"] = sv.value + _real_real_term(
                real, settings.kernel_list, settings.solver
            )
        metrics.append(entry)
        if log_fn is not None:
            log_fn(entry)
        if (
            checkpoint_fn is not None
            and settings.checkpoint_every
            and (step + 1) % settings.checkpoint_every == 0
        ):
            checkpoint_fn(step + 1, params, tag="step")
    if checkpoint_fn is not None:
        checkpoint_fn(settings.steps, params, tag="final")
    return params, metrics


def _real_real_term(real: PathBatch, kernel_list, solver) -> float:
    """Data-data U-statistic that upgrades the loss to an MMD^2 estimate."""
    from .paths import scale as scale_path
    from .sigkernel import solve_values_pairs

    n = len(real)
    if n < 2:
        return float("nan")
    total = 0.0
    iu, ju = np.triu_indices(n, k=1)
    for c, sk in kernel_list:
        batch = real if c == 1.0 else PathBatch([scale_path(p, c) for p in real])
        vals, _, _ = solve_values_pairs(
            batch.stack(), batch.stack(), iu, ju, sk, solver
        )
        total += 2.0 * vals.sum() / (n * (n - 1))
    return total


def train_conditional(
    params: NeuralSdeParams,
    pairs,
    grid: TimeGrid,
    settings: TrainSettings,
    adam: diffengine.AdamState,
    seed: int,
    fan_out: int = 32,
    encoder=None,
    log_fn=None,
    checkpoint_fn=None,
):
    """Conditional training: per pair, score fan-out conditional samples.

    ``pairs`` is a list of (condition Path, outcome Path); ``encoder`` maps a
    condition path to its encoding vector (default: order-5 log-signature of
    the time-normalized lead-lag path).
    """
    if encoder is None:
        encoder = lambda p: encode_condition(p, 5)
    pairs = list(pairs)
    enc = [encoder(x) for x, _ in pairs]
    metrics = []
    last_good = params
    for step in range(settings.steps):
        rng = derive_rng(seed, f"cond-batch-{step}")
        idx = rng.choice(len(pairs), size=min(settings.batch_size, len(pairs)), replace=False)
        total = 0.0
        bundle = None
        for count, i in enumerate(idx):
            x_i, y_i = pairs[i]
            noise = make_noise(
                fan_out,
                grid,
                params.dims,
                derive_rng(seed, f"cond-noise-{step}-{count}").integers(2**63),
            )
            x_term = x_i.values[-1, x_i.value_channels()]
            gen_raw, record = sample_with_record(
                params,
                fan_out,
                grid,
                noise,
                condition=enc[i],
                xi_input=np.tile(x_term, (fan_out, 1)),
            )
            gen = _apply_gen_transforms(gen_raw, settings.gen_transforms)
            sv = multi_kernel_loss(
                gen,
                PathBatch([y_i]),
                settings.kernel_list,
                settings.solver,
                need_grad=True,
            )
            total += sv.value / len(idx)
            grad_vals = _backward_gen_transforms(
                sv.gradient_wrt_generated, settings.gen_transforms, gen.time_channel
            )
            value_cols = [c for c in range(gen_raw.dim) if c != gen_raw.time_channel]
            g = diffengine.backward(params, record, grad_vals[..., value_cols]).scaled(
                1.0 / len(idx)
            )
            bundle = g if bundle is None else bundle.added(g)
        if not np.isfinite(total):
            if checkpoint_fn is not None:
                checkpoint_fn(step, last_good, tag="abort")
            raise DivergenceError(f"non-finite loss at step {step}")
        params, adam = diffengine.adam_step(params, bundle, adam)
        last_good = params
        entry = {"step": step, "loss": total}
        metrics.append(entry)
        if log_fn is not None:
            log_fn(entry)
        if (
            checkpoint_fn is not None
            and settings.checkpoint_every
            and (step + 1) % settings.checkpoint_every == 0
        ):
            checkpoint_fn(step + 1, params, tag="step")
    if checkpoint_fn is not None:
        checkpoint_fn(settings.steps, params, tag="final")
    return params, metrics
