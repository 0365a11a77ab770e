"""
Time grids, seeded Brownian drivers, path arithmetic, brackets and
zero-set / excursion machinery.

Every array-valued object here carries time on its last axis, so a single
path has shape ``(N+1,)`` and a batch of ``P`` paths has shape ``(P, N+1)``.
All functions act along the last axis and broadcast over the leading ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "TimeGrid",
    "SeedSpec",
    "SamplePath",
    "DriverSet",
    "ExcursionList",
    "generator",
    "sample_brownian",
    "sample_correlated_pair",
    "quadratic_variation",
    "cross_variation",
    "zero_tolerance",
    "zero_mask",
    "last_zero_indices",
    "last_zero_before",
    "excursion_decompose",
    "excursion_running_max",
]

# Stream channels: one per independent noise source drawn from a seed.
CHANNEL_PRIMARY = 0
CHANNEL_SECONDARY = 1
CHANNEL_LATTICE = 7


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0, dt, ..., N dt = T``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if isinstance(self.steps, bool) or int(self.steps) != self.steps:
            raise ValueError(f"steps must be an integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))
        if not math.isfinite(self.horizon) or self.horizon <= 0:
            raise ValueError(f"horizon must be finite and > 0, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        """Largest grid index whose time is <= t."""
        k = int(math.floor(t / self.dt + 1e-9))
        return min(max(k, 0), self.steps)


@dataclass(frozen=True)
class SeedSpec:
    """(master_seed, stream_id) names one reproducible noise stream.

    A batch of ``P`` paths drawn from ``SeedSpec(m, s)`` uses streams
    ``s, s+1, ..., s+P-1``; stream ``j`` is the same whichever batch it
    is drawn in, so sharding never changes a path.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if int(self.stream_id) < 0:
            raise ValueError("stream_id must be >= 0")

    def shifted(self, offset: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.stream_id + offset)


def generator(master_seed: int, stream_id: int, channel: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator for one (seed, stream, channel) triple."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id), int(channel)))
    return np.random.Generator(np.random.Philox(ss))


def _stream_ids(seed: SeedSpec, paths: int | None) -> list[int]:
    n = 1 if paths is None else int(paths)
    if n < 1:
        raise ValueError("paths must be >= 1")
    return [seed.stream_id + j for j in range(n)]


def _normals(grid: TimeGrid, seed: SeedSpec, paths: int | None, channel: int) -> np.ndarray:
    rows = [
        generator(seed.master_seed, sid, channel).standard_normal(grid.steps)
        for sid in _stream_ids(seed, paths)
    ]
    z = np.stack(rows)
    return z[0] if paths is None else z


def uniforms(grid: TimeGrid, seed: SeedSpec, paths: int | None = None,
             channel: int = CHANNEL_LATTICE) -> np.ndarray:
    """Per-step U(0,1) draws from the same stream layout as the Gaussian drivers."""
    rows = [
        generator(seed.master_seed, sid, channel).random(grid.steps)
        for sid in _stream_ids(seed, paths)
    ]
    u = np.stack(rows)
    return u[0] if paths is None else u


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Values of a process on a grid, optionally with its driver increments.

    ``values`` has shape ``(..., N+1)``. ``increments`` (shape ``(..., N)``)
    is present for driver paths and reconstructs ``values`` by partial sums.
    """

    grid: TimeGrid
    values: np.ndarray
    increments: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 0 or v.shape[-1] != self.grid.steps + 1:
            raise ValueError(
                f"values must have last dimension {self.grid.steps + 1}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "values", _freeze(v))
        if self.increments is not None:
            d = np.array(self.increments, dtype=np.float64)
            if d.shape != v.shape[:-1] + (self.grid.steps,):
                raise ValueError("increments shape does not match values")
            object.__setattr__(self, "increments", _freeze(d))

    @classmethod
    def from_increments(cls, grid: TimeGrid, increments: np.ndarray, start=0.0) -> "SamplePath":
        d = np.asarray(increments, dtype=np.float64)
        start = np.broadcast_to(np.asarray(start, dtype=np.float64), d.shape[:-1])
        values = np.concatenate([start[..., None], start[..., None] + np.cumsum(d, axis=-1)], axis=-1)
        return cls(grid, values, d)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.values.shape[:-1]

    @property
    def dx(self) -> np.ndarray:
        """Increments of the path (driver increments when stored)."""
        if self.increments is not None:
            return self.increments
        return np.diff(self.values, axis=-1)

    def path(self, i: int) -> "SamplePath":
        inc = None if self.increments is None else self.increments[i]
        return SamplePath(self.grid, self.values[i], inc)

    def map(self, fn) -> "SamplePath":
        """New path ``fn(values)`` on the same grid (increments dropped)."""
        return SamplePath(self.grid, fn(self.values))

    def __len__(self):
        return self.values.shape[0] if self.values.ndim > 1 else 1


def _check_same_grid(*paths: SamplePath):
    g = paths[0].grid
    for p in paths[1:]:
        if p.grid != g:
            raise ValueError(f"grid mismatch: {g} vs {p.grid}")
        if p.values.shape != paths[0].values.shape:
            raise ValueError("path batches have different shapes")


@dataclass(frozen=True, eq=False)
class DriverSet:
    """Driver channels on one grid plus their declared pairwise brackets.

    ``cross_structure`` maps a channel pair ``(i, j)`` to the slope ``c`` in
    ``<C_i, C_j>_t = c t`` (0.0 for orthogonal channels).
    """

    channels: tuple[SamplePath, ...]
    cross_structure: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.channels:
            raise ValueError("DriverSet needs at least one channel")
        _check_same_grid(*self.channels)

    @property
    def grid(self) -> TimeGrid:
        return self.channels[0].grid

    def __getitem__(self, i: int) -> SamplePath:
        return self.channels[i]


def sample_brownian(grid: TimeGrid, seed: SeedSpec, paths: int | None = None,
                    channel: int = CHANNEL_PRIMARY) -> SamplePath:
    """Standard Brownian motion started at 0.

    Parameters
    ----------
    grid : TimeGrid
    seed : SeedSpec
        First stream of the batch; path ``j`` uses stream ``seed.stream_id + j``.
    paths : int, optional
        Batch size. ``None`` returns a single 1-D path.
    channel : int
        Independent noise channel within each stream.
    """
    dB = _normals(grid, seed, paths, channel) * math.sqrt(grid.dt)
    return SamplePath.from_increments(grid, dB)


def sample_correlated_pair(grid: TimeGrid, seed: SeedSpec, mode: str = "independent",
                           eta: float | None = None, paths: int | None = None) -> DriverSet:
    """Two Brownian channels (W, V), independent or with ``<W,V>_t = -t/eta``.

    ``mode="bracket"`` needs ``|eta| >= 1`` so that the correlation ``-1/eta``
    lies in [-1, 1].
    """
    if mode == "independent":
        rho = 0.0
    elif mode == "bracket":
        if eta is None or eta == 0:
            raise ValueError("bracket mode needs a nonzero eta")
        if abs(eta) < 1:
            raise ValueError(f"|eta| must be >= 1 for correlation -1/eta, got eta={eta}")
        rho = -1.0 / eta
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sq = math.sqrt(grid.dt)
    dW = _normals(grid, seed, paths, CHANNEL_PRIMARY) * sq
    dZ = _normals(grid, seed, paths, CHANNEL_SECONDARY) * sq
    dV = rho * dW + math.sqrt(1.0 - rho * rho) * dZ
    W = SamplePath.from_increments(grid, dW)
    V = SamplePath.from_increments(grid, dV)
    return DriverSet((W, V), {(0, 1): rho})


def quadratic_variation(path: SamplePath) -> SamplePath:
    """Cumulative realized variance ``sum (dX)^2``."""
    d = path.dx
    return SamplePath.from_increments(path.grid, d * d)


def cross_variation(x: SamplePath, y: SamplePath) -> SamplePath:
    """Cumulative realized covariation ``sum dX dY``."""
    _check_same_grid(x, y)
    return SamplePath.from_increments(x.grid, x.dx * y.dx)


def zero_tolerance(values: np.ndarray, dt: float) -> np.ndarray:
    """Per-index zero tolerance ``sqrt(dt) * max(1, running max |X|)``."""
    scale = np.maximum(np.maximum.accumulate(np.abs(values), axis=-1), 1.0)
    return math.sqrt(dt) * scale


def zero_mask(values: np.ndarray, dt: float, level: float = 0.0) -> np.ndarray:
    """Boolean mask of grid points where a zero of ``values - level`` occurs.

    A zero occurs in step k if the step changes sign (product <= 0) or
    ``|X_k|`` is within tolerance; it is located at the earlier point k.
    The last point counts on its own when within tolerance.
    """
    y = np.asarray(values, dtype=np.float64) - level
    tol = zero_tolerance(y, dt)
    near = np.abs(y) < tol
    mask = near.copy()
    mask[..., :-1] |= (y[..., :-1] * y[..., 1:]) <= 0
    return mask


def last_zero_indices(values: np.ndarray, dt: float, level: float = 0.0,
                      mask: np.ndarray | None = None) -> np.ndarray:
    """Index of the last zero at or before each t (0 when there is none)."""
    if mask is None:
        mask = zero_mask(values, dt, level)
    idx = np.arange(mask.shape[-1])
    return np.maximum.accumulate(np.where(mask, idx, 0), axis=-1)


def last_zero_before(path: SamplePath, t_index: int, level: float = 0.0):
    """gamma_t: time of the last zero at or before grid index ``t_index``.

    Resolution-limited to +/- dt; 0 when the path has no zero on [0, t].
    Returns a float for a single path and an array for a batch.
    """
    if not 0 <= t_index <= path.grid.steps:
        raise IndexError(f"t_index {t_index} outside grid")
    g = last_zero_indices(path.values, path.grid.dt, level)[..., t_index]
    t = g * path.grid.dt
    return float(t) if np.ndim(t) == 0 else t


@dataclass(frozen=True)
class ExcursionList:
    """Excursions of one path away from ``level``.

    ``intervals[n] = (g, d)``: the path is off-level at indices ``g..d-1``
    and the indices outside all intervals form the discretized zero set.
    ``maxima[n]`` is the maximum of the positive part over the excursion.
    """

    intervals: tuple[tuple[int, int], ...]
    level: float
    maxima: tuple[float, ...]

    def __len__(self):
        return len(self.intervals)


def excursion_decompose(path: SamplePath, level: float = 0.0) -> ExcursionList:
    if path.values.ndim != 1:
        raise ValueError("excursion_decompose works on a single path")
    mask = zero_mask(path.values, path.grid.dt, level)
    off = ~mask
    edges = np.diff(np.concatenate([[0], off.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    pos = np.maximum(path.values - level, 0.0)
    maxima = tuple(float(pos[s:e].max()) for s, e in zip(starts, stops))
    intervals = tuple((int(s), int(e)) for s, e in zip(starts, stops))
    return ExcursionList(intervals, float(level), maxima)


def excursion_running_max(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Running max of the positive part within each excursion, reset at zeros.

    Entry k is ``M_n(t_k)`` for the excursion n containing k and 0 on the
    zero set given by ``mask``.
    """
    pos = np.where(mask, 0.0, np.maximum(values, 0.0))
    out = np.empty_like(pos)
    run = np.zeros(pos.shape[:-1])
    for k in range(pos.shape[-1]):
        run = np.where(mask[..., k], 0.0, np.maximum(run, pos[..., k]))
        out[..., k] = run
    return out
