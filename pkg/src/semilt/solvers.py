"""
Discrete-time solvers: Euler-Maruyama, projected (reflected) Euler, the
local-time drift equation through its scale function, the skew lattice walk,
the Barlow transform, the perturbed Tanaka equation and the Lipschitz-envelope
construction of minimal and maximal solutions.

All solvers march a whole batch of paths at once along the time axis and are
deterministic functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import Coefficient, CoefficientSpec
from .localtime import DEFAULT_CONFIG, EstimatorConfig, LocalTimeCurve, lt_boundary
from .measure import SignedMeasure, scale_function
from .paths import (
    CHANNEL_LATTICE,
    SamplePath,
    SeedSpec,
    TimeGrid,
    _check_same_grid,
    uniforms,
)

__all__ = [
    "SolverConfig",
    "SolutionPath",
    "euler_maruyama",
    "reflected_euler",
    "local_time_drift_solver",
    "skew_walk",
    "barlow_phi",
    "barlow_residual",
    "perturbed_tanaka_solver",
    "mn_transform",
    "Envelope",
    "lipschitz_envelope",
    "sup_envelope",
    "MinMaxResult",
    "min_max_solutions",
]

SCHEMES = ("euler", "reflected_euler", "scale_transform", "skew_walk")


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "euler"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Solver output: state path, optional local-time tally, failure flags."""

    state: SamplePath
    local_time: LocalTimeCurve | None = None
    failed: np.ndarray | None = None
    driver: SamplePath | None = None
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.state.values

    @property
    def grid(self) -> TimeGrid:
        return self.state.grid

    @property
    def any_failed(self) -> bool:
        return bool(self.failed is not None and np.any(self.failed))


def _driver_increments(driver: SamplePath, grid: TimeGrid | None) -> np.ndarray:
    if grid is not None and driver.grid != grid:
        raise ValueError(f"driver grid {driver.grid} does not match {grid}")
    return driver.dx


def _start(x0, batch_shape) -> np.ndarray:
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), batch_shape).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial value must be finite")
    return x


def _as_spec(coeff) -> CoefficientSpec:
    if isinstance(coeff, CoefficientSpec):
        return coeff
    if isinstance(coeff, tuple) and len(coeff) == 2:
        return CoefficientSpec(coeff[0], coeff[1])
    raise TypeError("coeff must be a CoefficientSpec or a (sigma, drift) pair")


def euler_maruyama(coeff, driver: SamplePath, x0=0.0, grid: TimeGrid | None = None) -> SolutionPath:
    """Euler-Maruyama scheme ``X_{k+1} = X_k + sigma(X_k) dB_k + b(X_k) dt``.

    Parameters
    ----------
    coeff : CoefficientSpec or (sigma, drift)
        Vectorized coefficient callables.
    driver : SamplePath
        Brownian driver (single path or batch).
    x0 : float or array
        Initial value, broadcast over the batch.
    grid : TimeGrid, optional
        Checked against the driver's grid when given.

    Returns
    -------
    SolutionPath
        Paths whose coefficients return a non-finite value are frozen at their
        last finite state and flagged in ``failed``.
    """
    spec = _as_spec(coeff)
    dB = _driver_increments(driver, grid)
    g = driver.grid
    dt = g.dt
    x = _start(x0, dB.shape[:-1])
    out = np.empty(dB.shape[:-1] + (g.steps + 1,))
    out[..., 0] = x
    failed = np.zeros(x.shape, dtype=bool)
    sigma, drift = spec.sigma, spec.drift
    with np.errstate(all="ignore"):
        for k in range(g.steps):
            new = x + sigma(x) * dB[..., k] + drift(x) * dt
            failed |= ~np.isfinite(new)
            x = np.where(failed, x, new)
            out[..., k + 1] = x
    return SolutionPath(SamplePath(g, out), None, failed, driver)


def reflected_euler(coeff, driver: SamplePath, x0=0.0, grid: TimeGrid | None = None) -> SolutionPath:
    """Projected Euler scheme for the reflected equation on ``[0, inf)``.

    ``Y~ = Y_k + sigma(Y_k) dB_k + b(Y_k) dt``, ``Y_{k+1} = max(Y~, 0)``. The
    tallied local time grows by ``2 max(-Y~, 0)`` so that half of it equals the
    total push applied by the projection.
    """
    spec = _as_spec(coeff)
    if np.any(np.asarray(x0) < 0):
        raise ValueError("reflected_euler needs x0 >= 0")
    dB = _driver_increments(driver, grid)
    g = driver.grid
    dt = g.dt
    y = _start(x0, dB.shape[:-1])
    out = np.empty(dB.shape[:-1] + (g.steps + 1,))
    tally = np.zeros_like(out)
    out[..., 0] = y
    acc = np.zeros(y.shape)
    failed = np.zeros(y.shape, dtype=bool)
    sigma, drift = spec.sigma, spec.drift
    with np.errstate(all="ignore"):
        for k in range(g.steps):
            trial = y + sigma(y) * dB[..., k] + drift(y) * dt
            failed |= ~np.isfinite(trial)
            trial = np.where(failed, y, trial)
            push = np.maximum(-trial, 0.0)
            acc = acc + 2.0 * push
            y = trial + push
            out[..., k + 1] = y
            tally[..., k + 1] = acc
    curve = LocalTimeCurve(g, 0.0, tally, "tally", 0.0)
    return SolutionPath(SamplePath(g, out), curve, failed, driver)


def local_time_drift_solver(measure: SignedMeasure, sigma, driver: SamplePath, x0=0.0,
                            grid: TimeGrid | None = None) -> SolutionPath:
    """Solve ``X = X_0 + int sigma(X) dB + int L^a(X) nu(da)`` in scale coordinates.

    With ``Y = F_nu(X)`` the local-time drift disappears and
    ``dY = f_nu(F^{-1}(Y)) sigma(F^{-1}(Y)) dB``, which is marched by Euler;
    ``X = F^{-1}(Y)``. For the zero measure this is exactly ``euler_maruyama``
    with zero drift.
    """
    if not callable(sigma):
        raise TypeError("sigma must be callable")
    sf = scale_function(measure)
    if sf.identity:
        return euler_maruyama(CoefficientSpec(sigma, Coefficient.constant(0.0)), driver, x0, grid)
    dB = _driver_increments(driver, grid)
    g = driver.grid
    x_start = _start(x0, dB.shape[:-1])
    y = sf.F(x_start)
    xs = np.empty(dB.shape[:-1] + (g.steps + 1,))
    xs[..., 0] = x_start
    x = x_start
    failed = np.zeros(y.shape, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(g.steps):
            new = y + sf.f(x) * sigma(x) * dB[..., k]
            failed |= ~np.isfinite(new)
            y = np.where(failed, y, new)
            x = sf.F_inverse(y)
            if not np.all(np.isfinite(x)):
                raise ValueError("scale-function inverse failed to evaluate")
            xs[..., k + 1] = x
    return SolutionPath(SamplePath(g, xs), None, failed, driver, {"scale_bounds": (sf.m, sf.M)})


def skew_walk(beta: float, grid: TimeGrid, seed: SeedSpec, paths: int | None = None) -> SolutionPath:
    """Skew random walk on the lattice ``sqrt(dt) Z`` started at 0.

    Away from 0 the walk steps +-sqrt(dt) with probability 1/2; at 0 it steps
    up with probability ``(1 + beta) / 2``. Uniforms come from a dedicated
    stream channel, independent of the Gaussian drivers of the same seed.
    """
    if not math.isfinite(beta) or abs(beta) > 1:
        raise ValueError(f"skew parameter must satisfy |beta| <= 1, got {beta}")
    u = uniforms(grid, seed, paths, CHANNEL_LATTICE)
    p0 = 0.5 * (1.0 + beta)
    h = math.sqrt(grid.dt)
    j = np.zeros(u.shape[:-1], dtype=np.int64)
    out = np.empty(u.shape[:-1] + (grid.steps + 1,), dtype=np.int64)
    out[..., 0] = 0
    for k in range(grid.steps):
        p = np.where(j == 0, p0, 0.5)
        j = j + np.where(u[..., k] < p, 1, -1)
        out[..., k + 1] = j
    return SolutionPath(SamplePath(grid, out * h), None, np.zeros(j.shape, dtype=bool), None,
                        {"lattice_step": h})


def barlow_phi(x, a: float, b: float) -> SamplePath:
    """``phi(X) = X^+ / a + X^- / b`` with ``X^- = max(-X, 0)``."""
    if not (a > 0 and b > 0):
        raise ValueError("barlow_phi needs a > 0 and b > 0")
    path = x.state if isinstance(x, SolutionPath) else x
    v = path.values
    return SamplePath(path.grid, np.maximum(v, 0.0) / a + np.maximum(-v, 0.0) / b)


def barlow_residual(phi: SamplePath, driver: SamplePath,
                    cfg: EstimatorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``sup_t |phi_t - phi_0 - (1/2) L^0_t(phi) - B_t|`` per path.

    For the nonnegative path ``phi`` half its right local time at 0 equals its
    symmetric local time, estimated by ``lt_boundary``.
    """
    _check_same_grid(phi, driver)
    half_lt = lt_boundary(phi, cfg).values
    r = phi.values - phi.values[..., :1] - half_lt - (driver.values - driver.values[..., :1])
    return np.max(np.abs(r), axis=-1)


def perturbed_tanaka_solver(sigma, M: SamplePath, N: SamplePath, x0=0.0,
                            grid: TimeGrid | None = None) -> SolutionPath:
    """Euler scheme ``X_{k+1} = X_k + sigma(X_k) dM_k + dN_k``."""
    _check_same_grid(M, N)
    if grid is not None and M.grid != grid:
        raise ValueError("driver grid mismatch")
    dM, dN = M.dx, N.dx
    g = M.grid
    x = _start(x0, dM.shape[:-1])
    out = np.empty(dM.shape[:-1] + (g.steps + 1,))
    out[..., 0] = x
    failed = np.zeros(x.shape, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(g.steps):
            new = x + sigma(x) * dM[..., k] + dN[..., k]
            failed |= ~np.isfinite(new)
            x = np.where(failed, x, new)
            out[..., k + 1] = x
    return SolutionPath(SamplePath(g, out), None, failed, M)


def mn_transform(W: SamplePath, V: SamplePath, eta: float) -> tuple[SamplePath, SamplePath]:
    """``M = W / 2`` and ``N = (W + eta V) / 2`` (values and increments)."""
    _check_same_grid(W, V)
    if not math.isfinite(eta):
        raise ValueError("eta must be finite")
    g = W.grid
    M = SamplePath(g, 0.5 * W.values, 0.5 * W.dx)
    N = SamplePath(g, 0.5 * (W.values + eta * V.values), 0.5 * (W.dx + eta * V.dx))
    return M, N


# ---------------------------------------------------------------------------
# Lipschitz envelopes and minimal / maximal solutions


@dataclass(frozen=True, eq=False)
class Envelope:
    """Grid inf-convolution ``min_j (b(y_j) + n |y_i - y_j|)`` at the nodes (or its sup mirror).

    Between nodes the node values are interpolated linearly, which keeps the
    envelope ``n``-Lipschitz without the ``n h / 2`` overshoot of evaluating
    the cones at ``x`` itself; beyond the box the cones extend it.
    """

    nodes: np.ndarray
    values: np.ndarray
    lipschitz: float
    sign: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y, g, n = self.nodes, self.values, self.lipschitz
        v = np.interp(x, y, g)
        v = np.where(x < y[0], g[0] + n * (y[0] - x), v)
        v = np.where(x > y[-1], g[-1] + n * (x - y[-1]), v)
        return self.sign * v


def _envelope_fast(vals: np.ndarray, n: float, h: float) -> np.ndarray:
    # forward: g_i = min_j<=i (b_j + n h (i - j)) = n h i + cummin(b_j - n h j)
    idx = np.arange(vals.size) * (n * h)
    fwd = idx + np.minimum.accumulate(vals - idx)
    # backward on the reversed array
    r = fwd[::-1]
    bwd = idx + np.minimum.accumulate(r - idx)
    return bwd[::-1]


def lipschitz_envelope(b: Callable, n: float, eval_box: tuple[float, float],
                       points: int | None = None, tol: float = 1e-10,
                       max_points: int = 2 ** 18 + 1) -> Envelope:
    """``b_n(x) = inf_{y in box} (b(y) + n |x - y|)`` on a uniform grid over the box.

    Parameters
    ----------
    b : callable
        Vectorized function, bounded below on the box.
    n : float
        Lipschitz constant (> 0).
    eval_box : (lo, hi)
    points : int, optional
        Fixed grid size. Envelopes sharing a grid are exactly ordered in ``n``.
        Without it the grid is doubled from 1025 points until the envelope
        changes by less than ``tol`` or ``max_points`` is reached.

    Returns
    -------
    Envelope
        Exactly ``n``-Lipschitz and below ``b`` at every grid node.
    """
    if not (n > 0 and math.isfinite(n)):
        raise ValueError("Lipschitz constant must be finite and > 0")
    lo, hi = (float(v) for v in eval_box)
    if not (lo < hi):
        raise ValueError("eval_box must satisfy lo < hi")

    def build(m):
        y = np.linspace(lo, hi, m)
        v = np.asarray(b(y), dtype=float) * np.ones(m)
        if not np.all(np.isfinite(v)) or v.min() < -1e12:
            raise ValueError("b must be finite and bounded below on the evaluation box")
        return Envelope(y, _envelope_fast(v, n, y[1] - y[0]), float(n))

    if points is not None:
        if points < 2:
            raise ValueError("points must be >= 2")
        return build(int(points))
    m = 1025
    env = build(m)
    while m < max_points:
        m2 = 2 * (m - 1) + 1
        finer = build(m2)
        change = float(np.max(np.abs(finer(env.nodes) - env.values)))
        env, m = finer, m2
        if change <= tol:
            break
    return env


def sup_envelope(b: Callable, n: float, eval_box: tuple[float, float], **kw) -> Envelope:
    """``b^n(x) = sup_y (b(y) - n |x - y|)``, the mirror image of ``lipschitz_envelope``."""
    inner = lipschitz_envelope(lambda x: -np.asarray(b(x), dtype=float), n, eval_box, **kw)
    return Envelope(inner.nodes, inner.values, inner.lipschitz, -1.0)


def lipschitz_ladder(n_levels: int) -> list[float]:
    """Lipschitz constants ``2^(k-1)`` for levels ``k = 1..n_levels``."""
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    return [float(2 ** (k - 1)) for k in range(1, n_levels + 1)]


@dataclass(frozen=True, eq=False)
class MinMaxResult:
    lower: SolutionPath
    upper: SolutionPath
    lipschitz: tuple[float, ...]
    gaps: np.ndarray  # (levels, paths): sup_t |upper - lower|

    @property
    def gap(self) -> np.ndarray:
        return self.gaps[-1]


def min_max_solutions(coeff, driver: SamplePath, x0, grid: TimeGrid | None, n_levels: int,
                      eval_box: tuple[float, float] = (-10.0, 10.0),
                      points: int = 2 ** 16 + 1,
                      ladder: Callable[[int], list[float]] = lipschitz_ladder) -> MinMaxResult:
    """Approximate minimal and maximal solutions through Lipschitz drift envelopes.

    For each level the drift is replaced by its lower (inf-convolution) and
    upper (sup-convolution) envelope with the level's Lipschitz constant and
    the equation is solved on the shared driver. Envelopes share one grid, so
    the lower drifts increase and the upper drifts decrease with the level.
    """
    spec = _as_spec(coeff)
    lips = ladder(n_levels)
    gaps = []
    lower = upper = None
    for n in lips:
        b_lo = lipschitz_envelope(spec.drift, n, eval_box, points=points)
        b_hi = sup_envelope(spec.drift, n, eval_box, points=points)
        lower = euler_maruyama(CoefficientSpec(spec.sigma, b_lo), driver, x0, grid)
        upper = euler_maruyama(CoefficientSpec(spec.sigma, b_hi), driver, x0, grid)
        gaps.append(np.max(np.abs(upper.values - lower.values), axis=-1))
    return MinMaxResult(lower, upper, tuple(lips), np.array(gaps))
