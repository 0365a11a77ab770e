"""
Local-time estimators, occupation/support checks, the balayage transform and
comparison diagnostics for pairs of paths.

Three estimators of ``L_t^a`` are provided:

* ``occupation``: ``(1/2 eps) * sum 1{|X_k - a| < eps} (dX_k)^2``
* ``upcrossing``: ``2 eps`` times the number of upcrossings of a band above ``a``
* ``tanaka``: the residual of the Tanaka formula (right, left or symmetric)

Bandwidths default to ``c * sigma_hat * sqrt(dt)`` where ``sigma_hat`` is the
path's realized volatility ``sqrt(<X>_T / T)``. This makes every estimator
exactly equivariant under ``X -> c X`` for ``c > 0``; a fixed bandwidth can be
forced with ``EstimatorConfig(bandwidth=...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .paths import (
    SamplePath,
    TimeGrid,
    _check_same_grid,
    excursion_running_max,
    last_zero_indices,
    zero_mask,
    zero_tolerance,
)

__all__ = [
    "EstimatorConfig",
    "LocalTimeCurve",
    "DominationReport",
    "OccupationCheck",
    "BalayageResult",
    "ESTIMATORS",
    "sgn",
    "occupation_bandwidth",
    "upcrossing_bandwidth",
    "lt_occupation",
    "lt_occupation_field",
    "lt_upcrossing",
    "lt_boundary",
    "lt_tanaka",
    "local_time",
    "right_left_gap",
    "level_grid",
    "occupation_formula_check",
    "support_check",
    "balayage_transform",
    "domination_diagnostic",
    "excursion_comparison",
    "rn_liminf",
]

# Expected overshoot of a Gaussian random walk over a barrier, in units of one
# step's standard deviation: -zeta(1/2)/sqrt(2 pi).
MONITORING_SHIFT = 0.5826

ESTIMATORS = ("occupation", "upcrossing", "tanaka_right", "tanaka_left", "tanaka_symmetric")
# "tally" marks a local time accumulated by a solver (e.g. the reflection push)
CURVE_TAGS = ESTIMATORS + ("tally",)


def sgn(x: np.ndarray) -> np.ndarray:
    """Sign with the convention sgn(0) = -1."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


@dataclass(frozen=True)
class EstimatorConfig:
    """Bandwidth settings shared by the estimators.

    Attributes
    ----------
    scale : float
        Occupation bandwidth multiplier ``c`` in ``eps = c * sigma_hat * sqrt(dt)``.
    bandwidth : float, optional
        Fixed occupation bandwidth overriding the adaptive rule.
    adaptive : bool
        Use the path's realized volatility ``sigma_hat``; when False,
        ``eps = c * sqrt(dt)``.
    upcrossing_scale, upcrossing_bandwidth : float
        Same knobs for the upcrossing band width.
    monitoring_correction : bool
        Shrink the upcrossing band by the expected one-step overshoot at each
        end, removing the first-order bias of counting on a grid.
    tanaka_convention : float
        Value of sgn(0); fixed at -1.
    """

    scale: float = 1.0
    bandwidth: float | None = None
    adaptive: bool = True
    upcrossing_scale: float = 8.0
    upcrossing_bandwidth: float | None = None
    monitoring_correction: bool = True
    tanaka_convention: float = -1.0

    def __post_init__(self):
        for name in ("scale", "upcrossing_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")
        for name in ("bandwidth", "upcrossing_bandwidth"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.tanaka_convention != -1.0:
            raise ValueError("only the sgn(0) = -1 convention is supported")

    def with_bandwidth(self, eps: float) -> "EstimatorConfig":
        return replace(self, bandwidth=eps)


DEFAULT_CONFIG = EstimatorConfig()


@dataclass(frozen=True, eq=False)
class LocalTimeCurve:
    """Cumulative local-time estimate ``t -> L_t^level``.

    ``values`` has the path's batch shape plus a time axis; ``bandwidth`` is a
    scalar or one value per path.
    """

    grid: TimeGrid
    level: float
    values: np.ndarray
    estimator_tag: str
    bandwidth: np.ndarray | float

    def __post_init__(self):
        if self.estimator_tag not in CURVE_TAGS:
            raise ValueError(f"unknown estimator tag {self.estimator_tag!r}")
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def terminal(self) -> np.ndarray | float:
        t = self.values[..., -1]
        return float(t) if np.ndim(t) == 0 else t

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)


# ---------------------------------------------------------------------------
# bandwidths


def _batch(values: np.ndarray) -> tuple[np.ndarray, bool]:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        return v[None, :], True
    return v.reshape(-1, v.shape[-1]), False


def _unbatch(a: np.ndarray, single: bool, shape: tuple[int, ...]) -> np.ndarray:
    if single:
        return a[0]
    return a.reshape(shape + a.shape[1:])


def _sigma_hat(y: np.ndarray, horizon: float) -> np.ndarray:
    d = np.diff(y, axis=-1)
    s = np.sqrt(np.sum(d * d, axis=-1) / horizon)
    return np.where(s > 0, s, 1.0)


def _base_width(y: np.ndarray, grid: TimeGrid, adaptive: bool) -> np.ndarray:
    base = np.full(y.shape[:-1], math.sqrt(grid.dt))
    if adaptive:
        base = base * _sigma_hat(y, grid.horizon)
    return base


def occupation_bandwidth(path: SamplePath, cfg: EstimatorConfig = DEFAULT_CONFIG,
                         level: float = 0.0) -> np.ndarray:
    """Per-path occupation bandwidth (shape = batch shape)."""
    y = path.values - level
    if cfg.bandwidth is not None:
        return np.full(y.shape[:-1], cfg.bandwidth)
    return cfg.scale * _base_width(y, path.grid, cfg.adaptive)


def upcrossing_bandwidth(path: SamplePath, cfg: EstimatorConfig = DEFAULT_CONFIG,
                         level: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-path (band width eps, monitoring shift s) for the upcrossing estimator."""
    y = path.values - level
    if cfg.upcrossing_bandwidth is not None:
        eps = np.full(y.shape[:-1], cfg.upcrossing_bandwidth)
    else:
        eps = cfg.upcrossing_scale * _base_width(y, path.grid, cfg.adaptive)
    if cfg.monitoring_correction:
        s = MONITORING_SHIFT * _base_width(y, path.grid, True)
    else:
        s = np.zeros_like(eps)
    return eps, s


# ---------------------------------------------------------------------------
# estimators


def _cumulate(inc: np.ndarray) -> np.ndarray:
    out = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def _occupation_from_shifted(y: np.ndarray, eps: np.ndarray) -> np.ndarray:
    d = np.diff(y, axis=-1)
    e = eps[..., None]
    inc = np.where(np.abs(y[..., :-1]) < e, d * d, 0.0) / (2.0 * e)
    return _cumulate(inc)


def lt_occupation(path: SamplePath, level: float = 0.0,
                  cfg: EstimatorConfig = DEFAULT_CONFIG) -> LocalTimeCurve:
    """Occupation-density estimate of the local time at ``level``.

    Parameters
    ----------
    path : SamplePath
        Single path or batch.
    level : float
    cfg : EstimatorConfig

    Returns
    -------
    LocalTimeCurve
        ``L_t = (1/2 eps) * sum_{k < t} 1{|X_k - level| < eps} (X_{k+1} - X_k)^2``,
        nondecreasing and zero at t = 0.
    """
    y = path.values - level
    eps = occupation_bandwidth(path, cfg, level)
    return LocalTimeCurve(path.grid, float(level), _occupation_from_shifted(y, eps),
                          "occupation", eps)


def lt_occupation_field(path: SamplePath, levels: np.ndarray,
                        cfg: EstimatorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Terminal occupation estimates at many levels at once.

    Returns an array of shape ``batch_shape + (len(levels),)``. Uses the
    level-0 bandwidth of each path for every level.
    """
    levels = np.asarray(levels, dtype=np.float64)
    v, single = _batch(path.values)
    eps_all = np.atleast_1d(occupation_bandwidth(path, cfg)).reshape(-1)
    out = np.empty((v.shape[0], levels.size))
    for p in range(v.shape[0]):
        x = v[p]
        d = np.diff(x)
        order = np.argsort(x[:-1], kind="stable")
        xs = x[:-1][order]
        cw = np.concatenate([[0.0], np.cumsum((d * d)[order])])
        eps = eps_all[p]
        lo = np.searchsorted(xs, levels - eps, side="right")
        hi = np.searchsorted(xs, levels + eps, side="left")
        out[p] = (cw[hi] - cw[lo]) / (2.0 * eps)
    return _unbatch(out, single, path.batch_shape)


def _upcrossing_from_shifted(y: np.ndarray, eps: np.ndarray, s: np.ndarray) -> np.ndarray:
    if np.any(eps <= 2 * s):
        raise ValueError("upcrossing band is empty: bandwidth must exceed twice the monitoring shift")
    low = y <= s[..., None]
    high = y >= (eps - s)[..., None]
    n = y.shape[-1]
    # forward-fill the last band touched: 0 = at/below the low edge (armed),
    # 1 = at/above the high edge; before any touch the counter is unarmed.
    event = np.where(low | high, np.arange(1, n + 1), 0)
    last = np.maximum.accumulate(event, axis=-1)
    state_src = np.where(high, 1, 0)
    state = np.where(last > 0, np.take_along_axis(state_src, np.maximum(last - 1, 0), axis=-1), 1)
    ups = np.zeros(y.shape, dtype=np.int64)
    ups[..., 1:] = (state[..., 1:] == 1) & (state[..., :-1] == 0)
    return 2.0 * eps[..., None] * np.cumsum(ups, axis=-1)


def lt_upcrossing(path: SamplePath, level: float = 0.0,
                  cfg: EstimatorConfig = DEFAULT_CONFIG) -> LocalTimeCurve:
    """Upcrossing estimate ``2 eps * #upcrossings`` of the band above ``level``.

    An upcrossing is a passage from ``y <= s`` to ``y >= eps - s`` where
    ``y = X - level`` and ``s`` is the monitoring shift (0 when the
    correction is disabled).
    """
    y = path.values - level
    eps, s = upcrossing_bandwidth(path, cfg, level)
    return LocalTimeCurve(path.grid, float(level), _upcrossing_from_shifted(y, eps, s),
                          "upcrossing", eps)


def lt_boundary(path: SamplePath, cfg: EstimatorConfig = DEFAULT_CONFIG) -> LocalTimeCurve:
    """Symmetric local time at 0 of a nonnegative path (reflected, folded).

    For ``Z >= 0`` the symmetric local time at 0 is half the right one, and
    ``Z`` upcrosses ``[0, eps]`` once for every upcrossing or downcrossing of
    the unfolded path, so half the upcrossing estimate is used. The occupation
    estimator is biased low here: squared increments of steps that fold at 0
    underweight the time spent next to the boundary.
    """
    if np.any(path.values < 0):
        raise ValueError("lt_boundary needs a nonnegative path")
    up = lt_upcrossing(path, 0.0, cfg)
    return LocalTimeCurve(path.grid, 0.0, 0.5 * up.values, "upcrossing", up.bandwidth)


def _tanaka_from_shifted(y: np.ndarray, side: str) -> np.ndarray:
    d = np.diff(y, axis=-1)
    yk = y[..., :-1]
    pos = np.maximum(y, 0.0)
    neg = np.maximum(-y, 0.0)
    if side in ("right", "symmetric"):
        right = 2.0 * (pos - pos[..., :1] - _cumulate(np.where(yk > 0, d, 0.0)))
    if side in ("left", "symmetric"):
        left = 2.0 * (neg - neg[..., :1] + _cumulate(np.where(yk < 0, d, 0.0)))
    if side == "right":
        return right
    if side == "left":
        return left
    if side == "symmetric":
        return 0.5 * (right + left)
    raise ValueError(f"side must be right, left or symmetric, got {side!r}")


def lt_tanaka(path: SamplePath, level: float = 0.0, side: str = "symmetric",
              cfg: EstimatorConfig = DEFAULT_CONFIG) -> LocalTimeCurve:
    """Tanaka-residual estimate of the right, left or symmetric local time.

    Right: ``2[(X_t - a)^+ - (X_0 - a)^+ - sum 1{X_k > a} dX_k]``.
    Left: ``2[(X_t - a)^- - (X_0 - a)^- + sum 1{X_k < a} dX_k]``.
    Symmetric: their average. Integrands use left-endpoint values.
    """
    y = path.values - level
    vals = _tanaka_from_shifted(y, side)
    return LocalTimeCurve(path.grid, float(level), vals, f"tanaka_{side}",
                          occupation_bandwidth(path, cfg, level))


def local_time(path: SamplePath, level: float = 0.0, estimator: str = "occupation",
               cfg: EstimatorConfig = DEFAULT_CONFIG) -> LocalTimeCurve:
    """Dispatch by estimator tag (see ``ESTIMATORS``)."""
    if estimator == "occupation":
        return lt_occupation(path, level, cfg)
    if estimator == "upcrossing":
        return lt_upcrossing(path, level, cfg)
    if estimator.startswith("tanaka_"):
        return lt_tanaka(path, level, estimator[len("tanaka_"):], cfg)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")


def right_left_gap(path: SamplePath, level: float = 0.0,
                   cfg: EstimatorConfig = DEFAULT_CONFIG):
    """Terminal right minus left Tanaka estimate, ``2 sum 1{X_k = a} dX_k`` up to rounding."""
    r = lt_tanaka(path, level, "right", cfg).terminal
    l = lt_tanaka(path, level, "left", cfg).terminal
    return r - l


# ---------------------------------------------------------------------------
# occupation formula and support


@dataclass(frozen=True)
class OccupationCheck:
    residual: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    covered: np.ndarray


def level_grid(path: SamplePath, cfg: EstimatorConfig = DEFAULT_CONFIG,
               per_band: int = 8) -> np.ndarray:
    """Levels spaced ``2 eps / per_band`` covering a single path's range.

    With this spacing every grid value lies in exactly ``per_band`` level
    windows, so ``sum_a L^a da`` reproduces ``<X>_T`` up to rounding.
    """
    if path.values.ndim != 1:
        raise ValueError("level_grid works on a single path")
    eps = float(occupation_bandwidth(path, cfg))
    h = 2.0 * eps / per_band
    lo = path.values.min() - eps - h
    hi = path.values.max() + eps + h
    n = int(math.ceil((hi - lo) / h)) + 1
    # irrational offset keeps levels off the (grid-aligned) path values
    return lo + h * (np.arange(n) + 0.5 * (math.sqrt(5) - 1))


def occupation_formula_check(path: SamplePath, f: Callable[[np.ndarray], np.ndarray],
                             levels: np.ndarray | None = None,
                             cfg: EstimatorConfig = DEFAULT_CONFIG) -> OccupationCheck:
    """Compare ``sum f(X_k) dX_k^2`` with ``sum_a f(a) L^a_T da`` path by path.

    Parameters
    ----------
    path : SamplePath
    f : callable
        Vectorized level function.
    levels : array, optional
        Uniform level grid shared by all paths; defaults to ``level_grid`` per path.

    Returns
    -------
    OccupationCheck
        ``residual = |LHS - RHS| / max(LHS, 1)``; ``covered`` is False where
        the level grid does not span the path's range (the residual is still
        reported).
    """
    v, single = _batch(path.values)
    n = v.shape[0]
    lhs = np.empty(n)
    rhs = np.empty(n)
    covered = np.empty(n, dtype=bool)
    for p in range(n):
        sub = SamplePath(path.grid, v[p])
        lv = level_grid(sub, cfg) if levels is None else np.asarray(levels, dtype=np.float64)
        if lv.size < 2:
            raise ValueError("level grid needs at least two levels")
        da = np.diff(lv)
        if not np.allclose(da, da[0], rtol=1e-9, atol=0):
            raise ValueError("level grid must be uniform")
        d = np.diff(v[p])
        lhs[p] = float(np.sum(f(v[p, :-1]) * d * d))
        field_ = lt_occupation_field(sub, lv, cfg)
        rhs[p] = float(np.sum(f(lv) * field_) * da[0])
        eps = float(occupation_bandwidth(sub, cfg))
        covered[p] = bool(lv[0] - eps <= v[p].min() and lv[-1] + eps >= v[p].max())
    res = np.abs(lhs - rhs) / np.maximum(lhs, 1.0)
    if single:
        return OccupationCheck(res[0], lhs[0], rhs[0], covered[0])
    return OccupationCheck(res, lhs, rhs, covered)


def support_check(curve: LocalTimeCurve, path: SamplePath, level: float | None = None):
    """Curve mass accrued on steps starting farther than ``2 eps`` from the level.

    Returns the total absolute increment per path over those steps.
    """
    if curve.grid != path.grid:
        raise ValueError("curve and path grids differ")
    a = curve.level if level is None else level
    y = path.values - a
    eps = np.asarray(curve.bandwidth)[..., None]
    far = np.abs(y[..., :-1]) > 2.0 * eps
    mass = np.sum(np.where(far, np.abs(curve.increments()), 0.0), axis=-1)
    return float(mass) if np.ndim(mass) == 0 else mass


# ---------------------------------------------------------------------------
# balayage


@dataclass(frozen=True, eq=False)
class BalayageResult:
    """``k_{gamma_t} X_t`` and its integral form ``k_0 X_0 + sum k_{gamma_s} dX_s``."""

    transformed: SamplePath
    integral: SamplePath
    gamma_index: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return np.max(np.abs(self.transformed.values - self.integral.values), axis=-1)


def balayage_transform(path: SamplePath, k: np.ndarray, level: float = 0.0) -> BalayageResult:
    """Spread a predictable process over excursions: ``t -> k_{gamma_t} X_t``.

    Parameters
    ----------
    path : SamplePath
    k : array
        Bounded process sampled on the grid (same shape as ``path.values``).
    level : float
        Zeros are detected for ``X - level``; the transform acts on ``X`` itself.

    Notes
    -----
    The discrete integral form differs from the transformed path only on
    steps where ``gamma`` jumps, by ``(k_{gamma_{j+1}} - k_{gamma_j}) X_{j+1}``,
    which is of the order of the zero tolerance.
    """
    x = path.values
    k = np.broadcast_to(np.asarray(k, dtype=np.float64), x.shape)
    if not np.all(np.isfinite(k)):
        raise ValueError("k must be finite")
    g = last_zero_indices(x, path.grid.dt, level)
    kg = np.take_along_axis(k, g, axis=-1)
    transformed = kg * x
    d = np.diff(x, axis=-1)
    integral = (k[..., :1] * x[..., :1]) + _cumulate(kg[..., :-1] * d)
    return BalayageResult(SamplePath(path.grid, transformed), SamplePath(path.grid, integral), g)


# ---------------------------------------------------------------------------
# comparison diagnostics

ZERO_SLACK = 4.0
POSITIVITY_RTOL = 1e-12
ACTIVE_RTOL = 10.0 * np.finfo(float).eps
VIOLATION_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class DominationReport:
    """Windowed comparison of ``L^0(X)`` against ``L^0(Y)`` over a batch.

    Per-path, per-window arrays have shape ``(paths, windows)``.
    """

    edges: np.ndarray
    dl_x: np.ndarray
    dl_y: np.ndarray
    theta: np.ndarray
    active: np.ndarray
    violation_windows: np.ndarray
    zero_inclusion_ok: np.ndarray
    ordering_ok: np.ndarray
    included: np.ndarray
    localized: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def hypotheses_ok(self) -> np.ndarray:
        return self.zero_inclusion_ok & self.ordering_ok

    @property
    def hypothesis_flags(self) -> int:
        return int(np.sum(~self.hypotheses_ok))

    @property
    def violation_count(self) -> int:
        return int(np.sum(self.violation_windows[self.included]))

    @property
    def violation_rate(self) -> float:
        inc = self.included
        considered = (self.active | (self.dl_x > 0))[inc]
        n = int(np.sum(considered))
        return float(np.sum(self.violation_windows[inc])) / n if n else 0.0

    @property
    def mean_theta(self) -> float:
        """Pooled density ``sum dL_X / sum dL_Y`` over active windows of included paths."""
        m = self.active & self.included[:, None]
        den = math.fsum(self.dl_y[m].tolist())
        return math.fsum(self.dl_x[m].tolist()) / den if den > 0 else float("nan")

    @property
    def mean_window_theta(self) -> float:
        t = self.theta[self.included]
        t = t[np.isfinite(t)]
        return float(np.mean(t)) if t.size else float("nan")

    @property
    def theta_max(self) -> float:
        t = self.theta[self.included]
        t = t[np.isfinite(t)]
        return float(np.max(t)) if t.size else float("nan")

    @property
    def verdict(self) -> bool | None:
        """True when no included window violates domination; None when suppressed."""
        if self.localized:
            if not np.any(self.included):
                return None
        elif self.hypothesis_flags:
            return None
        return self.violation_count == 0

    def summary(self) -> dict:
        return {
            "paths": int(self.dl_x.shape[0]),
            "windows": int(self.dl_x.shape[1]),
            "hypothesis_flags": self.hypothesis_flags,
            "included_paths": int(np.sum(self.included)),
            "violation_count": self.violation_count,
            "violation_rate": self.violation_rate,
            "mean_theta": self.mean_theta,
            "mean_window_theta": self.mean_window_theta,
            "theta_max": self.theta_max,
            "verdict": self.verdict,
            "localized": self.localized,
            **self.extra,
        }


def _window_edges(steps: int, windows: int) -> np.ndarray:
    if windows < 1 or windows > steps:
        raise ValueError(f"windows must be in [1, {steps}], got {windows}")
    return np.linspace(0, steps, windows + 1).round().astype(int)


def _pos_curves(xv: np.ndarray, yv: np.ndarray, grid: TimeGrid, cfg: EstimatorConfig):
    xp = SamplePath(grid, np.maximum(xv, 0.0))
    yp = SamplePath(grid, np.maximum(yv, 0.0))
    return lt_occupation(xp, 0.0, cfg).values, lt_occupation(yp, 0.0, cfg).values


def _windowed(lx: np.ndarray, ly: np.ndarray, edges: np.ndarray):
    dlx = np.diff(lx[:, edges], axis=-1)
    dly = np.diff(ly[:, edges], axis=-1)
    scale = np.maximum(1.0, ly[:, -1])[:, None]
    active = dly > ACTIVE_RTOL * scale
    viol = dlx > dly + VIOLATION_RTOL * (1.0 + ly[:, -1])[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(active, dlx / np.where(active, dly, 1.0), np.nan)
    return dlx, dly, theta, active, viol


def _zero_inclusion(xv, yv, dt, mask_x=None):
    """True per path when no detected zero of X sits where Y is clearly nonzero."""
    mx = zero_mask(xv, dt) if mask_x is None else mask_x
    my = zero_mask(yv, dt)
    far = np.abs(yv) > ZERO_SLACK * zero_tolerance(yv, dt)
    return ~np.any(mx & ~my & far, axis=-1)


def domination_diagnostic(x: SamplePath, y: SamplePath, windows: int = 32,
                          cfg: EstimatorConfig = DEFAULT_CONFIG,
                          localized: bool = False) -> DominationReport:
    """Check ``dL^0(X) <= dL^0(Y)`` window by window and estimate the density theta.

    Parameters
    ----------
    x, y : SamplePath
        Batches on a shared grid.
    windows : int
        Number of equal time windows.
    cfg : EstimatorConfig
        Occupation estimator settings; estimates use the positive parts.
    localized : bool
        Restrict the verdict to paths with ``0 <= X <= Y`` throughout and
        zero-set inclusion, instead of suppressing it on any hypothesis failure.

    Returns
    -------
    DominationReport
    """
    _check_same_grid(x, y)
    grid = x.grid
    xv, _ = _batch(x.values)
    yv, _ = _batch(y.values)
    zero_ok = _zero_inclusion(xv, yv, grid.dt)
    xpos, ypos = np.maximum(xv, 0.0), np.maximum(yv, 0.0)
    order_ok = np.all(xpos <= ypos + POSITIVITY_RTOL * np.maximum(1.0, ypos), axis=-1)
    if localized:
        in_a = np.all((xv >= 0) & (xv <= yv + POSITIVITY_RTOL * np.maximum(1.0, np.abs(yv))), axis=-1)
        included = in_a & zero_ok
    else:
        included = zero_ok & order_ok
    edges = _window_edges(grid.steps, windows)
    lx, ly = _pos_curves(xv, yv, grid, cfg)
    dlx, dly, theta, active, viol = _windowed(lx, ly, edges)
    return DominationReport(edges, dlx, dly, theta, active, viol, zero_ok, order_ok,
                            included, localized)


def excursion_comparison(x: SamplePath, y: SamplePath, windows: int = 32,
                         cfg: EstimatorConfig = DEFAULT_CONFIG) -> DominationReport:
    """Comparison under matched zero sets and per-excursion maximum domination.

    ``zero_inclusion_ok`` records that the zero sets match (in both
    directions, with the same slack as ``domination_diagnostic``);
    ``ordering_ok`` records ``M_n^X(t) <= M_n^Y(t)`` for every excursion of Y.
    """
    _check_same_grid(x, y)
    grid = x.grid
    xv, _ = _batch(x.values)
    yv, _ = _batch(y.values)
    match = _zero_inclusion(xv, yv, grid.dt) & _zero_inclusion(yv, xv, grid.dt)
    my = zero_mask(yv, grid.dt)
    mx_run = excursion_running_max(xv, my)
    my_run = excursion_running_max(yv, my)
    max_ok = np.all(mx_run <= my_run + POSITIVITY_RTOL * np.maximum(1.0, my_run), axis=-1)
    edges = _window_edges(grid.steps, windows)
    lx, ly = _pos_curves(xv, yv, grid, cfg)
    dlx, dly, theta, active, viol = _windowed(lx, ly, edges)
    return DominationReport(edges, dlx, dly, theta, active, viol, match, max_ok,
                            match & max_ok, False)


def rn_liminf(x: SamplePath, y: SamplePath, t_index: int,
              cfg: EstimatorConfig = DEFAULT_CONFIG, m: int = 8):
    """Density estimate ``X/Y`` just after the last zero ``gamma_t`` of Y.

    Averages ``X_k / Y_k`` over the first ``m`` grid points after ``gamma_t``
    where ``|Y_k|`` exceeds the zero tolerance. Returns NaN (missing) when no
    such point exists.
    """
    _check_same_grid(x, y)
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 <= t_index <= x.grid.steps:
        raise IndexError(f"t_index {t_index} outside grid")
    xv, single = _batch(x.values)
    yv, _ = _batch(y.values)
    dt = x.grid.dt
    g = last_zero_indices(yv, dt)[:, t_index]
    valid = np.abs(yv) > zero_tolerance(yv, dt)
    idx = np.arange(yv.shape[-1])
    out = np.full(yv.shape[0], np.nan)
    for p in range(yv.shape[0]):
        pts = idx[(idx > g[p]) & valid[p]][:m]
        if pts.size:
            out[p] = float(np.mean(xv[p, pts] / yv[p, pts]))
    return float(out[0]) if single else out
