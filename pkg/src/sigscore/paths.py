"""Piecewise-linear path data model and the transformations used around training.

A ``Path`` is a matrix of channel values on a strictly increasing time grid,
understood as its piecewise-linear interpolant. One channel may be tagged as
the time-augmentation channel; transformations treat it specially (it is never
shifted or rescaled by value transforms).

All operations are pure: they return new objects and never mutate inputs.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateDataError, ParseError


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing, finite timestamps (abstract units), length >= 2."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        if t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("time grid needs at least 2 points")
        if not np.all(np.isfinite(t)):
            raise ValueError("time grid contains non-finite values")
        if not np.all(np.diff(t) > 0):
            raise ValueError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    @staticmethod
    def regular(length: int, t0: float = 0.0, t1: float = 1.0) -> "TimeGrid":
        return TimeGrid(np.linspace(t0, t1, length))


@dataclass(frozen=True)
class Path:
    """Values of d channels on a time grid; row i is the state at ``times[i]``.

    ``time_channel`` marks the channel (if any) carrying the time augmentation;
    that channel must be strictly increasing.
    """

    grid: TimeGrid
    values: np.ndarray
    time_channel: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != len(self.grid):
            raise ValueError(
                f"values have {v.shape[0]} rows but grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values contain non-finite entries")
        tc = self.time_channel
        if tc is not None:
            if not 0 <= tc < v.shape[1]:
                raise ValueError(f"time channel {tc} out of range for d={v.shape[1]}")
            if not np.all(np.diff(v[:, tc]) > 0):
                raise ValueError("tagged time channel must be strictly increasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value_channels(self) -> np.ndarray:
        """Indices of the non-time channels."""
        return np.array([c for c in range(self.dim) if c != self.time_channel])


@dataclass(frozen=True)
class PathBatch:
    """Non-empty sequence of paths sharing length and channel count."""

    paths: tuple

    def __init__(self, paths):
        paths = tuple(paths)
        if not paths:
            raise ValueError("empty path batch")
        L, d = paths[0].length, paths[0].dim
        tc = paths[0].time_channel
        for k, p in enumerate(paths):
            if p.length != L or p.dim != d:
                raise ValueError(
                    f"path {k} has shape ({p.length},{p.dim}), expected ({L},{d})"
                )
            if p.time_channel != tc:
                raise ValueError(f"path {k} has inconsistent time-channel tag")
        object.__setattr__(self, "paths", paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, i) -> Path:
        return self.paths[i]

    def __iter__(self):
        return iter(self.paths)

    @property
    def length(self) -> int:
        return self.paths[0].length

    @property
    def dim(self) -> int:
        return self.paths[0].dim

    @property
    def time_channel(self) -> int | None:
        return self.paths[0].time_channel

    def stack(self) -> np.ndarray:
        """All values as one (n, L, d) array."""
        return np.stack([p.values for p in self.paths])

    @staticmethod
    def from_array(values: np.ndarray, grids, time_channel: int | None = None) -> "PathBatch":
        """Build a batch from an (n, L, d) array.

        ``grids`` is either a single TimeGrid shared by all paths or a sequence
        of per-path grids.
        """
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3:
            raise ValueError("expected an (n, L, d) array")
        if isinstance(grids, TimeGrid):
            grids = [grids] * values.shape[0]
        return PathBatch(
            Path(g, v, time_channel=time_channel) for g, v in zip(grids, values)
        )


@dataclass(frozen=True)
class StandardizationStats:
    """Per-channel mean / std of terminal values, fit on a training batch."""

    mu_T: np.ndarray
    sigma_T: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu_T, dtype=np.float64))
        sg = np.atleast_1d(np.asarray(self.sigma_T, dtype=np.float64))
        if mu.shape != sg.shape:
            raise ValueError("mu_T and sigma_T shapes differ")
        if not np.all(sg > 0):
            raise DegenerateDataError("sigma_T must be positive componentwise")
        object.__setattr__(self, "mu_T", mu)
        object.__setattr__(self, "sigma_T", sg)


# ---------------------------------------------------------------------------
# transformations
# ---------------------------------------------------------------------------


def linear_interpolate(path: Path, target: TimeGrid) -> Path:
    """Evaluate the piecewise-linear interpolant of ``path`` on ``target``.

    Target times must lie within the source span; nodes that coincide with
    source nodes reproduce the source values exactly.
    """
    t_src = path.grid.times
    t_new = target.times
    if t_new[0] < t_src[0] or t_new[-1] > t_src[-1]:
        raise ValueError(
            f"target grid [{t_new[0]}, {t_new[-1]}] outside source span "
            f"[{t_src[0]}, {t_src[-1]}]"
        )
    cols = [np.interp(t_new, t_src, path.values[:, c]) for c in range(path.dim)]
    return Path(target, np.stack(cols, axis=1), time_channel=path.time_channel)


def time_augment(path: Path) -> Path:
    """Prepend a channel equal to the grid times and tag it."""
    if path.time_channel is not None:
        raise ValueError("path already carries a time-augmentation channel")
    vals = np.concatenate([path.grid.times[:, None], path.values], axis=1)
    return Path(path.grid, vals, time_channel=0)


def translate_to_zero(path: Path) -> Path:
    """Shift each non-time channel so the first row is zero."""
    vals = path.values.copy()
    for c in range(path.dim):
        if c != path.time_channel:
            vals[:, c] -= vals[0, c]
    return Path(path.grid, vals, time_channel=path.time_channel)


def time_normalize(path: Path) -> Path:
    """Affinely map the tagged time channel onto [0, 1]."""
    tc = path.time_channel
    if tc is None:
        raise ValueError("time_normalize requires a tagged time channel")
    vals = path.values.copy()
    t = vals[:, tc]
    vals[:, tc] = (t - t[0]) / (t[-1] - t[0])
    return Path(path.grid, vals, time_channel=tc)


def scale(path: Path, c: float) -> Path:
    """Multiply the non-time channels by a positive constant."""
    if not c > 0:
        raise ValueError("scale factor must be positive")
    vals = path.values.copy()
    for ch in range(path.dim):
        if ch != path.time_channel:
            vals[:, ch] *= c
    return Path(path.grid, vals, time_channel=path.time_channel)


def lead_lag(path: Path) -> Path:
    """Standard lead-lag embedding: length 2L-1, channels doubled.

    Output rows interleave (lead, lag) copies so the lead coordinate advances
    one node ahead of the lag coordinate. The time-channel tag is dropped:
    both copies stall at every other node, so neither remains strictly
    increasing.
    """
    v = path.values
    rep = np.repeat(v, 2, axis=0)
    lead = rep[1:]
    lag = rep[:-1]
    t = path.grid.times
    new_grid = TimeGrid(np.linspace(t[0], t[-1], 2 * len(t) - 1))
    return Path(new_grid, np.concatenate([lead, lag], axis=1), time_channel=None)


def fit_standardization(batch: PathBatch) -> StandardizationStats:
    """Mean/std (population convention) of terminal values per non-time channel."""
    term = batch.stack()[:, -1, :]
    cols = batch.paths[0].value_channels()
    term = term[:, cols]
    mu = term.mean(axis=0)
    sg = term.std(axis=0)  # population (1/N) variance
    if np.any(sg <= 0):
        raise DegenerateDataError(
            "zero terminal variance in channel(s) "
            f"{list(cols[np.flatnonzero(sg <= 0)])}; cannot standardize"
        )
    return StandardizationStats(mu, sg)


def standardize(batch: PathBatch, stats: StandardizationStats) -> PathBatch:
    """Map each non-time channel x -> (x - mu_T) / sigma_T."""
    cols = batch.paths[0].value_channels()
    if stats.mu_T.shape[0] != len(cols):
        raise ValueError(
            f"stats cover {stats.mu_T.shape[0]} channels, batch has {len(cols)}"
        )
    out = []
    for p in batch:
        vals = p.values.copy()
        vals[:, cols] = (vals[:, cols] - stats.mu_T) / stats.sigma_T
        out.append(Path(p.grid, vals, time_channel=p.time_channel))
    return PathBatch(out)


def stride_split(series: Path, window: int, step: int) -> PathBatch:
    """Cut a long series into windows of ``window`` nodes every ``step`` nodes.

    Each window is re-based as its own path with time starting at 0.
    """
    if window < 2:
        raise ValueError("window must cover at least 2 nodes")
    if step < 1:
        raise ValueError("step must be >= 1")
    L = series.length
    if window > L:
        raise ValueError(f"window {window} exceeds series length {L}")
    out = []
    for start in range(0, L - window + 1, step):
        t = series.grid.times[start : start + window]
        v = series.values[start : start + window].copy()
        if series.time_channel is not None:
            v[:, series.time_channel] -= v[0, series.time_channel]
        out.append(
            Path(TimeGrid(t - t[0]), v, time_channel=series.time_channel)
        )
    return PathBatch(out)


def median_terminal_filter(windows: PathBatch) -> PathBatch:
    """Keep windows whose time span is at most the median span, then regrid.

    The median of an even count is the lower-middle element, so the threshold
    is always an observed span. Survivors are re-based to start at time 0 and
    linearly interpolated onto the common grid ``linspace(0, median_span, L)``;
    windows shorter than the median are extended by holding their terminal
    value constant.
    """
    spans = np.array([p.grid.span for p in windows])
    order = np.sort(spans)
    med = order[(len(order) - 1) // 2]  # lower-middle convention
    L = windows.length
    common = TimeGrid(np.linspace(0.0, med, L))
    kept = []
    for p, s in zip(windows, spans):
        if s > med:
            continue
        t = p.grid.times - p.grid.times[0]
        cols = []
        for c in range(p.dim):
            if c == p.time_channel:
                cols.append(common.times)
            else:
                # np.interp holds the terminal value beyond the window span
                cols.append(np.interp(common.times, t, p.values[:, c]))
        kept.append(Path(common, np.stack(cols, axis=1), time_channel=p.time_channel))
    return PathBatch(kept)


# ---------------------------------------------------------------------------
# CSV interchange: header `series_id,t,ch0,ch1,...`, rows grouped by series
# ---------------------------------------------------------------------------


def save_batch_csv(batch: PathBatch, file) -> None:
    """Write a batch in the interchange CSV format (deterministic formatting)."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "w")
        close = True
    try:
        d = batch.dim
        header = "series_id,t," + ",".join(f"ch{c}" for c in range(d))
        file.write(header + "\n")
        for sid, p in enumerate(batch):
            for t, row in zip(p.grid.times, p.values):
                cells = [str(sid), repr(float(t))] + [repr(float(x)) for x in row]
                file.write(",".join(cells) + "\n")
    finally:
        if close:
            file.close()


def load_batch_csv(file, time_channel: int | None = None) -> PathBatch:
    """Read the interchange CSV format, validating invariants row by row.

    Raises ParseError naming the first offending row.
    """
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "r")
        close = True
    try:
        header = file.readline().strip()
        fields = header.split(",")
        if fields[:2] != ["series_id", "t"] or len(fields) < 3:
            raise ParseError(1, f"bad header {header!r}")
        d = len(fields) - 2
        series: dict[str, list] = {}
        order: list[str] = []
        for line_no, line in enumerate(file, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != d + 2:
                raise ParseError(line_no, f"expected {d + 2} columns, got {len(cells)}")
            sid = cells[0]
            try:
                t = float(cells[1])
                row = [float(x) for x in cells[2:]]
            except ValueError as e:
                raise ParseError(line_no, str(e)) from None
            if not np.isfinite(t) or not all(np.isfinite(row)):
                raise ParseError(line_no, "non-finite value")
            if sid not in series:
                series[sid] = []
                order.append(sid)
            elif series[sid] and t <= series[sid][-1][0]:
                raise ParseError(
                    line_no, f"time {t} not increasing within series {sid}"
                )
            series[sid].append((t, row))
        if not order:
            raise ParseError(1, "no data rows")
        paths = []
        for sid in order:
            rows = series[sid]
            grid = TimeGrid(np.array([r[0] for r in rows]))
            vals = np.array([r[1] for r in rows])
            paths.append(Path(grid, vals, time_channel=time_channel))
        return PathBatch(paths)
    finally:
        if close:
            file.close()
