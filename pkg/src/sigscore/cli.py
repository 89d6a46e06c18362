"""Command-line entry point: simulate / train / eval / gram / gradcheck.

One JSON config file (conventionally ``*.cfg``) drives a whole run; every
random draw derives from its master seed, so repeating a command with the
same config produces byte-identical outputs at any worker count. Exit codes:
0 success, 1 validation failure, 2 runtime divergence, 3 I/O failure.

Run directories written by ``train`` contain a resolved-config snapshot
(``config.resolved.cfg``) sufficient to bit-reproduce the run, a
``metrics.jsonl`` log (one JSON object per step: deterministic fields only),
checkpoints, and a ``timing.log`` with wall-clock info (wall time is the one
quantity exempt from the byte-identity contract, which is why it lives in its
own file).
"""

import argparse
import copy
import json
import os
import sys
import time

import numpy as np

from . import diffengine, evalstats, nsde, synthdata
from ._rng import derive_seed
from .errors import (
    ConfigValidationError,
    DegenerateDataError,
    DivergenceError,
    ParseError,
)
from .paths import (
    Path,
    PathBatch,
    TimeGrid,
    fit_standardization,
    load_batch_csv,
    median_terminal_filter,
    save_batch_csv,
    scale as scale_path,
    standardize,
    stride_split,
    time_normalize,
    translate_to_zero,
)
from .sigkernel import (
    RBF,
    SETCEXP,
    SETID,
    SETSQR,
    Linear,
    SolverConfig,
    gram,
    set_workers,
)

DEFAULT_CONFIG = {
    "experiment": "run",
    "seed": 0,
    "workers": 1,
    "dataset": {
        "kind": "gbm",
        "n": 1024,
        "mu": 0.0,
        "sigma": 0.2,
        "y0": 1.0,
        "xi0": 0.04,
        "eta": 1.5,
        "rho": -0.7,
        "H": 0.2,
        "sim_dt": None,
        "grid": {"length": 64, "t0": 0.0, "t1": 0.63},
        "file": None,
        "window": 64,
        "stride": 64,
        "median_filter": False,
        "time_channel": None,
    },
    "transforms": {
        "real": ["standardize", "translate_to_zero", "time_normalize"],
        "generated": ["translate_to_zero", "time_normalize"],
    },
    "generator": {
        "d_x": 1,
        "d_y": 8,
        "d_w": 3,
        "d_a": 8,
        "hidden": [16],
        "learn_initial": False,
        "init_scale": 0.1,
        "init_seed": 0,
        "final_activation": "tanh",
        "rollout_grid": {"length": 64, "t0": 0.0, "t1": 63.0},
    },
    "kernel": {
        "solver": {"dyadic_order": 2, "scheme": "order2"},
        "static": [{"scale": 1.0, "kind": "rbf", "sigma": 1.0}],
    },
    "optimizer": {"lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "schedule": {"steps": 100, "batch_size": 64, "checkpoint_every": 0},
    "eval": {
        "times": [6, 19, 32, 44, 57],
        "repeats": 500,
        "m": 64,
        "alpha": 0.05,
        "n_generate": 1024,
        "acf_max_lag": 5,
        "cross_lags": [0, 1, 2, 3, 4, 5],
    },
    "conditional": {
        "enabled": False,
        "past_len": 32,
        "future_len": 16,
        "fan_out": 32,
        "logsig_depth": 5,
        "encoder_transforms": ["time_normalize", "lead_lag"],
    },
}

_KERNEL_KINDS = {"linear", "rbf", "setid", "setsqr", "setcexp"}
_REAL_TRANSFORMS = {
    "standardize",
    "translate_to_zero",
    "time_normalize",
    "normalize_initial",
}
_GEN_TRANSFORMS = {"translate_to_zero", "time_normalize"}


def _merge(base: dict, override: dict, prefix: str, violations: list) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            violations.append(f"{prefix}{key}: unknown field")
            continue
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{prefix}{key}.", violations)
        else:
            out[key] = copy.deepcopy(val)
    return out


class RunConfig:
    """Validated, fully resolved run configuration."""

    def __init__(self, raw: dict, base_dir: str = "."):
        violations: list[str] = []
        if not isinstance(raw, dict):
            raise ConfigValidationError(["config root must be a JSON object"])
        cfg = _merge(DEFAULT_CONFIG, raw, "", violations)
        self._validate(cfg, base_dir, violations)
        if violations:
            raise ConfigValidationError(violations)
        self.data = cfg
        self.base_dir = base_dir

    @staticmethod
    def _validate(cfg: dict, base_dir: str, v: list) -> None:
        ds = cfg["dataset"]
        if ds["kind"] not in ("gbm", "rbergomi", "file"):
            v.append("dataset.kind: must be gbm, rbergomi or file")
        if not isinstance(ds["n"], int) or ds["n"] < 1:
            v.append("dataset.n: must be a positive integer")
        for gname in ("dataset", "generator"):
            g = (
                cfg[gname]["grid"]
                if gname == "dataset"
                else cfg[gname]["rollout_grid"]
            )
            where = "dataset.grid" if gname == "dataset" else "generator.rollout_grid"
            if not isinstance(g["length"], int) or g["length"] < 2:
                v.append(f"{where}.length: must be an integer >= 2")
            elif not g["t1"] > g["t0"]:
                v.append(f"{where}: t1 must exceed t0")
        if ds["kind"] == "gbm":
            if ds["sigma"] < 0:
                v.append("dataset.sigma: must be >= 0")
            if not ds["y0"] > 0:
                v.append("dataset.y0: must be > 0")
        if ds["kind"] == "rbergomi":
            if not 0 < ds["H"] <= 0.5:
                v.append("dataset.H: must be in (0, 1/2]")
            if not -1 <= ds["rho"] <= 1:
                v.append("dataset.rho: must be in [-1, 1]")
            if not ds["xi0"] > 0:
                v.append("dataset.xi0: must be > 0")
        if ds["kind"] == "file":
            if not ds["file"]:
                v.append("dataset.file: required when kind is file")
            elif not os.path.exists(os.path.join(base_dir, ds["file"])):
                v.append(f"dataset.file: {ds['file']} does not exist")
            if ds["window"] < 2:
                v.append("dataset.window: must be >= 2")
            if ds["stride"] < 1:
                v.append("dataset.stride: must be >= 1")
        if ds["sim_dt"] is not None and not ds["sim_dt"] > 0:
            v.append("dataset.sim_dt: must be > 0 when set")
        for name in cfg["transforms"]["real"]:
            base = name.split(":", 1)[0]
            if base not in _REAL_TRANSFORMS and base != "scale":
                v.append(f"transforms.real: unknown transform {name!r}")
        for name in cfg["transforms"]["generated"]:
            base = name.split(":", 1)[0]
            if base not in _GEN_TRANSFORMS and base != "scale":
                v.append(f"transforms.generated: unknown transform {name!r}")
        gen = cfg["generator"]
        for fieldname in ("d_x", "d_y", "d_w", "d_a"):
            if not isinstance(gen[fieldname], int) or gen[fieldname] < 1:
                v.append(f"generator.{fieldname}: must be a positive integer")
        if not gen["init_scale"] >= 0:
            v.append("generator.init_scale: must be >= 0")
        if gen["final_activation"] not in ("tanh", "identity"):
            v.append("generator.final_activation: must be tanh or identity")
        sol = cfg["kernel"]["solver"]
        if not isinstance(sol["dyadic_order"], int) or not 0 <= sol["dyadic_order"] <= 10:
            v.append("kernel.solver.dyadic_order: must be an integer in [0, 10]")
        if sol["scheme"] not in ("order1", "order2"):
            v.append("kernel.solver.scheme: must be order1 or order2")
        if not cfg["kernel"]["static"]:
            v.append("kernel.static: need at least one static kernel")
        for i, sk in enumerate(cfg["kernel"]["static"]):
            kind = sk.get("kind")
            if kind not in _KERNEL_KINDS:
                v.append(f"kernel.static[{i}].kind: unknown kind {kind!r}")
                continue
            if not sk.get("scale", 1.0) > 0:
                v.append(f"kernel.static[{i}].scale: must be > 0")
            if kind != "linear" and not sk.get("sigma", 1.0) > 0:
                v.append(f"kernel.static[{i}].sigma: must be > 0")
            if kind == "setcexp":
                if not sk.get("l", 1.0) > 0:
                    v.append(f"kernel.static[{i}].l: must be > 0")
                if not int(sk.get("F", 1)) >= 1:
                    v.append(f"kernel.static[{i}].F: must be >= 1")
        opt = cfg["optimizer"]
        if not opt["lr"] >= 0:
            v.append("optimizer.lr: must be >= 0")
        for b in ("beta1", "beta2"):
            if not 0 <= opt[b] < 1:
                v.append(f"optimizer.{b}: must be in [0, 1)")
        sch = cfg["schedule"]
        if not isinstance(sch["steps"], int) or sch["steps"] < 1:
            v.append("schedule.steps: must be a positive integer")
        if not isinstance(sch["batch_size"], int) or sch["batch_size"] < 2:
            v.append("schedule.batch_size: must be an integer >= 2")
        ev = cfg["eval"]
        if not ev["times"]:
            v.append("eval.times: must be non-empty")
        if not isinstance(ev["repeats"], int) or ev["repeats"] < 1:
            v.append("eval.repeats: must be a positive integer")
        if not 0 < ev["alpha"] < 1:
            v.append("eval.alpha: must be in (0, 1)")
        if not isinstance(ev["m"], int) or ev["m"] < 1:
            v.append("eval.m: must be a positive integer")
        cond = cfg["conditional"]
        if cond["enabled"]:
            if cond["past_len"] < 2 or cond["future_len"] < 2:
                v.append("conditional: past_len and future_len must be >= 2")
            if cond["fan_out"] < 2:
                v.append("conditional.fan_out: must be >= 2")
        if not isinstance(cfg["seed"], int):
            v.append("seed: must be an integer")
        if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
            v.append("workers: must be a positive integer")

    # -- builders ----------------------------------------------------------

    def __getitem__(self, key):
        return self.data[key]

    def grid(self, which: str) -> TimeGrid:
        g = (
            self.data["dataset"]["grid"]
            if which == "dataset"
            else self.data["generator"]["rollout_grid"]
        )
        return TimeGrid.regular(g["length"], g["t0"], g["t1"])

    def solver(self) -> SolverConfig:
        s = self.data["kernel"]["solver"]
        return SolverConfig(s["dyadic_order"], s["scheme"])

    def kernel_list(self):
        out = []
        for sk in self.data["kernel"]["static"]:
            kind = sk["kind"]
            c = float(sk.get("scale", 1.0))
            if kind == "linear":
                k = Linear()
            elif kind == "rbf":
                k = RBF(float(sk.get("sigma", 1.0)))
            elif kind == "setid":
                k = SETID(float(sk.get("sigma", 1.0)))
            elif kind == "setsqr":
                k = SETSQR(float(sk.get("sigma", 1.0)))
            else:
                k = SETCEXP(
                    float(sk.get("sigma", 1.0)),
                    float(sk.get("l", 1.0)),
                    int(sk.get("F", 1)),
                )
            out.append((c, k))
        return tuple(out)

    def dims(self) -> nsde.SdeDims:
        g = self.data["generator"]
        cond = self.data["conditional"]
        d_c = 0
        xi_in = 0
        if cond["enabled"]:
            d_c = self._encoding_dim()
            xi_in = g["d_x"]
        return nsde.SdeDims(
            d_x=g["d_x"],
            d_y=g["d_y"],
            d_w=g["d_w"],
            d_a=g["d_a"],
            d_c=d_c,
            hidden=tuple(g["hidden"]),
            xi_in=xi_in,
        )

    def _encoding_dim(self) -> int:
        cond = self.data["conditional"]
        d = self.data["generator"]["d_x"] + 1  # condition paths are time-augmented
        if "lead_lag" in cond["encoder_transforms"]:
            d *= 2
        return sum(d**k for k in range(cond["logsig_depth"] + 1))

    def resolved_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigValidationError([f"config file {path!r} does not exist"]) from None
    except json.JSONDecodeError as e:
        raise ConfigValidationError([f"config is not valid JSON: {e}"]) from None
    return RunConfig(raw, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# dataset construction and transform chains
# ---------------------------------------------------------------------------


def build_dataset(cfg: RunConfig, purpose: str = "dataset") -> PathBatch:
    """Simulate or load the raw (untransformed, time-augmented) dataset."""
    ds = cfg["dataset"]
    grid = cfg.grid("dataset")
    seed = derive_seed(cfg["seed"], purpose)
    if ds["kind"] == "gbm":
        sim_grid = grid
        if ds["sim_dt"]:
            n_fine = int(np.ceil((grid.times[-1] - grid.times[0]) / ds["sim_dt"])) + 1
            sim_grid = TimeGrid.regular(max(n_fine, len(grid)), grid.times[0], grid.times[-1])
        batch = synthdata.gbm(
            synthdata.GbmConfig(
                mu=ds["mu"], sigma=ds["sigma"], y0=ds["y0"],
                grid=sim_grid, n=ds["n"], seed=seed,
            )
        )
        if sim_grid is not grid:
            from .paths import linear_interpolate

            batch = PathBatch([linear_interpolate(p, grid) for p in batch])
        return batch
    if ds["kind"] == "rbergomi":
        return synthdata.rbergomi(
            synthdata.RBergomiConfig(
                xi0=ds["xi0"], eta=ds["eta"], rho=ds["rho"], H=ds["H"],
                y0=ds["y0"], grid=grid, n=ds["n"], seed=seed,
            )
        )
    series = synthdata.load_series(
        os.path.join(cfg.base_dir, ds["file"]), time_channel=ds["time_channel"]
    )
    if series.time_channel is None:
        from .paths import time_augment

        series = time_augment(series)
    windows = stride_split(series, ds["window"], ds["stride"])
    if ds["median_filter"]:
        windows = median_terminal_filter(windows)
    return windows


def apply_pair_transforms(x: Path, y: Path, names):
    """Transform a (condition, outcome) pair as one object.

    ``normalize_initial`` divides both by the condition's initial value and
    ``translate_to_zero`` shifts both by the condition's initial row, so the
    outcome stays anchored to the condition's endpoint.
    """
    for name in names:
        if name == "normalize_initial":
            ref = x.values[0, x.value_channels()]
            if np.any(ref == 0):
                raise DegenerateDataError("normalize_initial: condition starts at 0")
            x = _pair_affine(x, 1.0 / ref, 0.0)
            y = _pair_affine(y, 1.0 / ref, 0.0)
        elif name == "translate_to_zero":
            ref = x.values[0, x.value_channels()]
            x = _pair_affine(x, 1.0, -ref)
            y = _pair_affine(y, 1.0, -ref)
        elif name == "time_normalize":
            x = time_normalize(x)
            y = time_normalize(y)
        elif name.startswith("scale:"):
            c = float(name.split(":", 1)[1])
            x = scale_path(x, c)
            y = scale_path(y, c)
        else:
            raise ConfigValidationError([f"transforms.real: unknown {name!r} for pairs"])
    return x, y


def _pair_affine(p: Path, mul, add) -> Path:
    vals = p.values.copy()
    cols = p.value_channels()
    vals[:, cols] = vals[:, cols] * mul + add
    return Path(p.grid, vals, time_channel=p.time_channel)


def apply_real_transforms(batch: PathBatch, names, stats=None):
    """Apply the data-side transform chain; returns (batch, fitted stats)."""
    for name in names:
        if name == "standardize":
            if stats is None:
                stats = fit_standardization(batch)
            batch = standardize(batch, stats)
        elif name == "translate_to_zero":
            batch = PathBatch([translate_to_zero(p) for p in batch])
        elif name == "time_normalize":
            batch = PathBatch([time_normalize(p) for p in batch])
        elif name == "normalize_initial":
            out = []
            for p in batch:
                vals = p.values.copy()
                for c in range(p.dim):
                    if c != p.time_channel:
                        if vals[0, c] == 0:
                            raise DegenerateDataError(
                                "normalize_initial on a path starting at 0"
                            )
                        vals[:, c] /= vals[0, c]
                out.append(Path(p.grid, vals, time_channel=p.time_channel))
            batch = PathBatch(out)
        elif name.startswith("scale:"):
            c = float(name.split(":", 1)[1])
            batch = PathBatch([scale_path(p, c) for p in batch])
        else:
            raise ConfigValidationError([f"transforms.real: unknown {name!r}"])
    return batch, stats


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out_path: str) -> int:
    batch = build_dataset(cfg)
    save_batch_csv(batch, out_path)
    print(f"wrote {len(batch)} paths (L={batch.length}, d={batch.dim}) to {out_path}")
    return 0


def _write_checkpoint(run_dir, step, params, tag):
    os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
    if tag == "final":
        name = "final.ckpt"
    elif tag == "abort":
        name = "abort.ckpt"
    else:
        name = f"step_{step:06d}.ckpt"
    nsde.save_checkpoint(params, os.path.join(run_dir, "checkpoints", name))


def cmd_train(cfg: RunConfig, run_dir: str) -> int:
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.resolved.cfg"), "w") as fh:
        fh.write(cfg.resolved_json())
    t_start = time.time()
    data = build_dataset(cfg)
    settings = nsde.TrainSettings(
        steps=cfg["schedule"]["steps"],
        batch_size=cfg["schedule"]["batch_size"],
        kernel_list=cfg.kernel_list(),
        solver=cfg.solver(),
        gen_transforms=tuple(cfg["transforms"]["generated"]),
        checkpoint_every=cfg["schedule"]["checkpoint_every"],
    )
    opt = cfg["optimizer"]
    adam = diffengine.AdamState(
        lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"], eps=opt["eps"]
    )
    gen_cfg = cfg["generator"]
    params = nsde.init_params(
        cfg.dims(),
        init_scale=gen_cfg["init_scale"],
        seed=derive_seed(cfg["seed"], f"init-{gen_cfg['init_seed']}"),
        learn_initial=gen_cfg["learn_initial"],
        final_activation=gen_cfg["final_activation"],
    )
    grid = cfg.grid("generator")
    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    with open(metrics_path, "w") as metrics_fh:

        def log_fn(entry):
            metrics_fh.write(json.dumps(entry, sort_keys=True) + "\n")

        checkpoint_fn = lambda step, p, tag: _write_checkpoint(run_dir, step, p, tag)
        if cfg["conditional"]["enabled"]:
            cond = cfg["conditional"]
            pairs = synthdata.make_conditional_pairs(
                data, cond["past_len"], cond["future_len"]
            )
            pairs = [
                apply_pair_transforms(x, y, cfg["transforms"]["real"])
                for x, y in pairs
            ]
            encoder = lambda p: nsde.encode_condition(
                p, cond["logsig_depth"], cond["encoder_transforms"]
            )
            params, _ = nsde.train_conditional(
                params,
                pairs,
                grid,
                settings,
                adam,
                cfg["seed"],
                fan_out=cond["fan_out"],
                encoder=encoder,
                log_fn=log_fn,
                checkpoint_fn=checkpoint_fn,
            )
        else:
            real, stats = apply_real_transforms(data, cfg["transforms"]["real"])
            params, _ = nsde.train_unconditional(
                params,
                real,
                grid,
                settings,
                adam,
                cfg["seed"],
                log_fn=log_fn,
                checkpoint_fn=checkpoint_fn,
            )
    with open(os.path.join(run_dir, "timing.log"), "w") as fh:
        fh.write(f"train wall time: {time.time() - t_start:.2f} s\n")
    print(f"trained {cfg['schedule']['steps']} steps; run dir: {run_dir}")
    return 0


def cmd_eval(cfg: RunConfig, checkpoint: str, out_dir: str) -> int:
    if not os.path.exists(checkpoint):
        raise FileNotFoundError(f"checkpoint {checkpoint!r} does not exist")
    if cfg["conditional"]["enabled"]:
        raise ConfigValidationError(
            ["eval: marginal evaluation applies to unconditional runs only"]
        )
    os.makedirs(out_dir, exist_ok=True)
    params = nsde.load_checkpoint(checkpoint)
    ev = cfg["eval"]
    # train-set stats, unseen evaluation batch
    train_data = build_dataset(cfg, purpose="dataset")
    _, stats = apply_real_transforms(train_data, cfg["transforms"]["real"])
    unseen = build_dataset(cfg, purpose="eval-data")
    unseen, _ = apply_real_transforms(unseen, cfg["transforms"]["real"], stats=stats)
    n_gen = ev["n_generate"]
    grid = cfg.grid("generator")
    noise = nsde.make_noise(
        n_gen, grid, params.dims, derive_seed(cfg["seed"], "eval-noise")
    )
    gen = nsde.sample(params, n_gen, grid, noise)
    gen = nsde._apply_gen_transforms(gen, tuple(cfg["transforms"]["generated"]))
    report = evalstats.ks_marginal_protocol(
        gen,
        unseen,
        times=ev["times"],
        repeats=ev["repeats"],
        m=ev["m"],
        alpha=ev["alpha"],
        seed=derive_seed(cfg["seed"], "eval-ks"),
    )
    with open(os.path.join(out_dir, "ks_report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "ks_report.csv"), "w") as fh:
        fh.write(report.to_csv())
    lags, acf_gen_mean, acf_gen_std, _ = evalstats.acf(gen, ev["acf_max_lag"])
    _, acf_real_mean, acf_real_std, _ = evalstats.acf(unseen, ev["acf_max_lag"])
    with open(os.path.join(out_dir, "acf.csv"), "w") as fh:
        fh.write("lag,generated_mean,generated_std,real_mean,real_std\n")
        for l in lags:
            fh.write(
                f"{l},{acf_gen_mean[l]!r},{acf_gen_std[l]!r},"
                f"{acf_real_mean[l]!r},{acf_real_std[l]!r}\n"
            )
    ccm_gen = evalstats.cross_corr_matrix(gen, ev["cross_lags"])
    ccm_real = evalstats.cross_corr_matrix(unseen, ev["cross_lags"])
    mse = evalstats.matrix_mse(ccm_gen, ccm_real)
    np.savetxt(os.path.join(out_dir, "cross_corr_generated.csv"), ccm_gen, delimiter=",")
    np.savetxt(os.path.join(out_dir, "cross_corr_real.csv"), ccm_real, delimiter=",")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(
            json.dumps(
                {
                    "cross_corr_mse": mse,
                    "mean_ks": dict(zip(map(str, report.time_indices), report.mean_ks)),
                    "rejection_rate": dict(
                        zip(map(str, report.time_indices), report.rejection_rate)
                    ),
                },
                sort_keys=True,
            )
            + "\n"
        )
    print(f"eval reports written to {out_dir}")
    for row in report.rows():
        print(
            f"  t={row['time_index']}: mean KS {row['mean_ks']:.4f}, "
            f"rejection rate {row['rejection_rate'] * 100:.1f}%"
        )
    print(f"  cross-correlation MSE {mse:.6f}")
    return 0


def cmd_gram(cfg: RunConfig, data_path: str, out_path: str) -> int:
    batch = load_batch_csv(data_path, time_channel=cfg["dataset"]["time_channel"])
    c, sk = cfg.kernel_list()[0]
    if c != 1.0:
        batch = PathBatch([scale_path(p, c) for p in batch])
    g = gram(batch, batch, sk, cfg.solver())
    np.savetxt(out_path, g.entries, delimiter=",")
    print(f"wrote {g.shape[0]}x{g.shape[1]} Gram matrix to {out_path}")
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    from .gradcheck import run_gradcheck

    failures = run_gradcheck(cfg.kernel_list(), cfg.solver(), seed=cfg["seed"])
    if failures:
        for f in failures:
            print(f"FAIL {f}")
        return 2
    print("gradcheck passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sigscore",
        description="Train and evaluate neural SDE generators with signature kernel scores.",
    )
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate a dataset and write it as CSV")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", required=True)
    p = sub.add_parser("train", help="train a generator per the config")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("-o", "--out", required=True, help="run directory")
    p = sub.add_parser("eval", help="evaluate a checkpoint against fresh data")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-o", "--out", required=True, help="report directory")
    p = sub.add_parser("gram", help="dump a Gram matrix for a path-batch CSV")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("-o", "--out", required=True)
    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("-c", "--config", required=True)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        workers = args.workers if args.workers is not None else cfg["workers"]
        set_workers(workers)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "train":
            return cmd_train(cfg, args.out)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.out)
        if args.command == "gram":
            return cmd_gram(cfg, args.data, args.out)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigValidationError as e:
        print(str(e), file=sys.stderr)
        return 1
    except DivergenceError as e:
        print(f"runtime divergence: {e}", file=sys.stderr)
        return 2
    except (OSError, ParseError) as e:
        print(f"I/O failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
