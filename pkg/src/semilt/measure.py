"""
Signed measures with finitely many atoms plus a compactly supported density,
and the scale function ``F_nu`` that removes a local-time drift.

For ``nu = sum_i w_i delta_{a_i} + rho(x) dx`` the scale density is

    f(y) = exp(-2 nu^c(0, y]) * prod_{a_i <= y} (1 - w_i) / (1 + w_i)

with the signed-interval convention ``nu^c(0, y] = -nu^c(y, 0]`` for ``y < 0``,
and ``F(x) = int_0^x f(y) dy``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "DensitySpec",
    "SignedMeasure",
    "ScaleFunction",
    "f_nu",
    "F_nu",
    "F_nu_inverse",
    "scale_function",
    "drift_to_measure",
    "parse_measure",
]

QUAD_EPSABS = 1e-10


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """Bounded density with compact support ``[lo, hi]``.

    Families: ``constant`` (params ``value``), ``table`` (piecewise linear
    through ``xs``/``ys``, support = table range) and ``callable`` (``fn``).
    """

    family: str
    lo: float
    hi: float
    value: float = 0.0
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in ("constant", "table", "callable"):
            raise ValueError(f"unknown density family {self.family!r}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"density support must be a finite interval, got [{self.lo}, {self.hi}]")
        if self.family == "table":
            xs = np.asarray(self.xs, dtype=float)
            if xs.size < 2 or len(self.ys) != xs.size or np.any(np.diff(xs) <= 0):
                raise ValueError("table density needs >= 2 strictly increasing xs and matching ys")
            if not np.all(np.isfinite(self.ys)):
                raise ValueError("table density values must be finite")
        if self.family == "callable" and self.fn is None:
            raise ValueError("callable density needs fn")
        if self.family == "constant" and not math.isfinite(self.value):
            raise ValueError("constant density must be finite")

    @classmethod
    def constant(cls, value: float, lo: float, hi: float) -> "DensitySpec":
        return cls("constant", float(lo), float(hi), value=float(value))

    @classmethod
    def table(cls, xs, ys) -> "DensitySpec":
        xs = tuple(float(v) for v in xs)
        return cls("table", xs[0], xs[-1], xs=xs, ys=tuple(float(v) for v in ys))

    @classmethod
    def from_callable(cls, fn, lo: float, hi: float, breakpoints=()) -> "DensitySpec":
        return cls("callable", float(lo), float(hi), fn=fn,
                   breakpoints=tuple(float(b) for b in breakpoints))

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Density formula without the support mask (valid on ``[lo, hi]``)."""
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full(x.shape, self.value)
        if self.family == "table":
            return np.interp(x, self.xs, self.ys)
        return np.asarray(self.fn(x), dtype=float) * np.ones(x.shape)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, self.raw(np.clip(x, self.lo, self.hi)), 0.0)

    @property
    def knots(self) -> tuple[float, ...]:
        """Points where the density may be non-smooth."""
        inner = self.xs if self.family == "table" else self.breakpoints
        return tuple(sorted({self.lo, self.hi, *inner}))

    def integral(self, a: float, b: float) -> float:
        """``int_a^b rho`` for a <= b."""
        a, b = max(a, self.lo), min(b, self.hi)
        if b <= a:
            return 0.0
        if self.family == "constant":
            return self.value * (b - a)
        if self.family == "table":
            pts = np.concatenate([[a], [x for x in self.xs if a < x < b], [b]])
            vals = self.raw(pts)
            return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(pts)))
        pts = [p for p in self.breakpoints if a < p < b]
        val, _ = integrate.quad(lambda t: float(self.raw(np.array(t))), a, b,
                                points=pts or None, epsabs=QUAD_EPSABS, limit=200)
        return float(val)

    def total_variation(self) -> float:
        if self.family == "constant":
            return abs(self.value) * (self.hi - self.lo)
        pts = [p for p in self.knots if self.lo < p < self.hi]
        val, _ = integrate.quad(lambda t: abs(float(self.raw(np.array(t)))), self.lo, self.hi,
                                points=pts or None, epsabs=QUAD_EPSABS, limit=200)
        return float(val)

    def to_literal(self) -> str:
        if self.family == "constant":
            return f"constant({self.value!r},{self.lo!r},{self.hi!r})"
        if self.family == "table":
            pairs = ",".join(f"{x!r}:{y!r}" for x, y in zip(self.xs, self.ys))
            return f"table({pairs})"
        raise ValueError("callable densities have no literal form")


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """``nu = sum w_i delta_{a_i} + density``, with ``|w_i| < 1`` and increasing ``a_i``."""

    atoms: tuple[tuple[float, float], ...] = ()
    density: DensitySpec | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        atoms = tuple((float(a), float(w)) for a, w in self.atoms)
        locs = [a for a, _ in atoms]
        for a, w in atoms:
            if not (math.isfinite(a) and math.isfinite(w)):
                raise ValueError("atom locations and weights must be finite")
            if abs(w) >= 1:
                raise ValueError(f"atom weight must satisfy |w| < 1, got {w} at {a}")
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise ValueError("atom locations must be strictly increasing")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, weight: float, location: float = 0.0) -> "SignedMeasure":
        return cls(((location, weight),))

    @property
    def is_zero(self) -> bool:
        no_atoms = all(w == 0 for _, w in self.atoms)
        no_density = self.density is None or (
            self.density.family == "constant" and self.density.value == 0)
        return no_atoms and no_density

    @property
    def is_pure_atomic(self) -> bool:
        return self.density is None or (
            self.density.family == "constant" and self.density.value == 0)

    @property
    def locations(self) -> np.ndarray:
        return np.array([a for a, _ in self.atoms], dtype=float)

    @property
    def ratios(self) -> np.ndarray:
        """Jump ratios ``(1 - w) / (1 + w)`` at each atom."""
        w = np.array([w for _, w in self.atoms], dtype=float)
        return (1.0 - w) / (1.0 + w)

    def continuous_mass(self, y: float) -> float:
        """Signed ``nu^c(0, y]``."""
        if self.is_pure_atomic:
            return 0.0
        if y >= 0:
            return self.density.integral(0.0, y)
        return -self.density.integral(y, 0.0)

    def scale_bounds(self) -> tuple[float, float]:
        """``(m, M)`` with ``m <= f_nu <= M`` from total-variation bounds."""
        tv = 0.0 if self.is_pure_atomic else self.density.total_variation()
        r = self.ratios
        lo = math.exp(-2 * tv) * float(np.prod(np.minimum(1.0, r)))
        hi = math.exp(2 * tv) * float(np.prod(np.maximum(1.0, r)))
        return lo, hi

    def to_literal(self) -> str:
        parts = []
        if self.atoms:
            parts.append("atoms=" + ",".join(f"{a!r}:{w!r}" for a, w in self.atoms))
        if self.density is not None:
            parts.append("density=" + self.density.to_literal())
        return ";".join(parts) if parts else "zero"


_LITERAL_RE = re.compile(r"^(constant|table)\((.*)\)$")


def parse_measure(text: str) -> SignedMeasure:
    """Parse a measure literal.

    ``zero`` | ``atoms=loc:w,loc:w`` | ``density=constant(value,lo,hi)`` |
    ``density=table(x:y,x:y,...)``, with ``;`` joining an atom part and a
    density part.
    """
    text = text.strip()
    if text in ("", "zero", "0"):
        return SignedMeasure()
    atoms: list[tuple[float, float]] = []
    density = None
    for part in text.split(";"):
        key, sep, val = part.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ValueError(f"measure part {part!r} is not key=value")
        if key == "atoms":
            for item in val.split(","):
                loc, colon, w = item.partition(":")
                if not colon:
                    raise ValueError(f"atom {item!r} must be location:weight")
                atoms.append((float(loc), float(w)))
        elif key == "density":
            m = _LITERAL_RE.match(val.replace(" ", ""))
            if not m:
                raise ValueError(f"bad density literal {val!r}")
            fam, args = m.groups()
            if fam == "constant":
                v = [float(a) for a in args.split(",")]
                if len(v) != 3:
                    raise ValueError("constant density takes (value, lo, hi)")
                density = DensitySpec.constant(*v)
            else:
                pairs = [p.split(":") for p in args.split(",")]
                if any(len(p) != 2 for p in pairs):
                    raise ValueError("table density takes x:y pairs")
                density = DensitySpec.table([float(p[0]) for p in pairs],
                                            [float(p[1]) for p in pairs])
        else:
            raise ValueError(f"unknown measure key {key!r}")
    atoms.sort()
    return SignedMeasure(tuple(atoms), density)


# ---------------------------------------------------------------------------
# scale function

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _hermite(t, h, y0, y1, d0, d1):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)


def _hermite_dt(t, h, y0, y1, d0, d1):
    t2 = t * t
    return ((6 * t2 - 6 * t) * y0 + (3 * t2 - 4 * t + 1) * h * d0
            + (-6 * t2 + 6 * t) * y1 + (3 * t2 - 2 * t) * h * d1)


class ScaleFunction:
    """Evaluators for ``f_nu``, ``F_nu`` and ``F_nu^{-1}`` of one measure.

    Pure-atom measures use exact piecewise-linear ``F``. With a density the
    range spanned by atoms, support and 0 is split into ``cells`` cells;
    ``nu^c(0, .]`` is tabulated at the nodes and interpolated by cubic Hermite
    (exact for constant and table densities), ``F`` is tabulated by
    Gauss-Legendre cell integrals and interpolated by cubic Hermite with the
    exact slopes ``f``. ``F_inverse`` inverts that same interpolant, so
    ``F(F_inverse(v)) = v`` up to rounding. Outside the node range ``f`` is
    constant and ``F`` is linear.
    """

    def __init__(self, measure: SignedMeasure, cells: int = 4096):
        self.measure = measure
        self.identity = measure.is_zero
        self.m, self.M = measure.scale_bounds()
        self._locs = measure.locations
        self._cumratio = np.concatenate([[1.0], np.cumprod(measure.ratios)])
        if self.identity:
            return
        self._build(cells)

    def _atom_factor(self, x: np.ndarray) -> np.ndarray:
        return self._cumratio[np.searchsorted(self._locs, x, side="right")]

    def _build(self, cells: int):
        meas = self.measure
        breaks = {0.0, *self._locs.tolist()}
        if not meas.is_pure_atomic:
            breaks |= set(meas.density.knots)
        breaks = np.array(sorted(breaks))
        if breaks.size == 1:
            breaks = np.array([breaks[0], breaks[0] + 1.0])
        if meas.is_pure_atomic:
            nodes = breaks
        else:
            span = max(breaks[-1] - breaks[0], 1e-300)
            h = span / cells
            pieces = [breaks[:1]]
            for a, b in zip(breaks[:-1], breaks[1:]):
                n = max(1, int(math.ceil((b - a) / h)))
                pieces.append(np.linspace(a, b, n + 1)[1:])
            nodes = np.concatenate(pieces)
        self._x = nodes
        self._h = np.diff(nodes)
        i0 = int(np.searchsorted(nodes, 0.0))
        # continuous mass G(x) = nu^c(0, x] at nodes, one-sided densities per cell
        if meas.is_pure_atomic:
            self._G = np.zeros(nodes.size)
            self._r0 = self._r1 = np.zeros(nodes.size - 1)
        else:
            d = meas.density
            cell_int = np.array([d.integral(a, b) for a, b in zip(nodes[:-1], nodes[1:])])
            G = np.concatenate([[0.0], np.cumsum(cell_int)])
            self._G = G - G[i0]
            inside = (nodes[:-1] >= d.lo) & (nodes[1:] <= d.hi)
            self._r0 = np.where(inside, d.raw(nodes[:-1]), 0.0)
            self._r1 = np.where(inside, d.raw(nodes[1:]), 0.0)
        # atom factor on each cell (right-continuous at nodes)
        self._A = self._atom_factor(nodes[:-1])
        self._f0 = self._A * np.exp(-2.0 * self._G[:-1])
        self._f1 = self._A * np.exp(-2.0 * self._G[1:])
        if meas.is_pure_atomic:
            cellF = self._f0 * self._h
        else:
            t = 0.5 * (_GL_X + 1.0)
            g = _hermite(t[None, :], self._h[:, None], self._G[:-1, None], self._G[1:, None],
                         self._r0[:, None], self._r1[:, None])
            fv = self._A[:, None] * np.exp(-2.0 * g)
            cellF = 0.5 * self._h * (fv @ _GL_W)
        F = np.concatenate([[0.0], np.cumsum(cellF)])
        self._F = F - F[i0]
        self._f_left = math.exp(-2.0 * self._G[0]) * float(self._atom_factor(np.array(nodes[0] - 1.0)))
        self._f_right = float(self._atom_factor(np.array(nodes[-1]))) * math.exp(-2.0 * self._G[-1])
        if np.any(np.diff(self._F) <= 0):
            raise ValueError("scale function is not strictly increasing on the node grid")

    # -- evaluation ---------------------------------------------------------

    def _cell(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self._x, x, side="right") - 1, 0, self._h.size - 1)

    def G(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.identity or self.measure.is_pure_atomic:
            return np.zeros(x.shape)
        i = self._cell(x)
        t = np.clip((x - self._x[i]) / self._h[i], 0.0, 1.0)
        return _hermite(t, self._h[i], self._G[i], self._G[i + 1], self._r0[i], self._r1[i])

    def f(self, x) -> np.ndarray:
        """``f_nu(x)``."""
        x = np.asarray(x, dtype=float)
        if self.identity:
            return np.ones(x.shape)
        return self._atom_factor(x) * np.exp(-2.0 * self.G(x))

    def F(self, x) -> np.ndarray:
        """``F_nu(x)``."""
        x = np.asarray(x, dtype=float)
        if self.identity:
            return x.copy()
        xs = self._x
        i = self._cell(x)
        h = self._h[i]
        t = (x - xs[i]) / h
        if self.measure.is_pure_atomic:
            inner = self._F[i] + self._f0[i] * (x - xs[i])
        else:
            tc = np.clip(t, 0.0, 1.0)
            inner = _hermite(tc, h, self._F[i], self._F[i + 1], self._f0[i], self._f1[i])
        below = self._F[0] + self._f_left * (x - xs[0])
        above = self._F[-1] + self._f_right * (x - xs[-1])
        return np.where(x < xs[0], below, np.where(x > xs[-1], above, inner))

    def F_inverse(self, v) -> np.ndarray:
        """``F_nu^{-1}(v)`` on the same interpolant as ``F``."""
        v = np.asarray(v, dtype=float)
        if self.identity:
            return v.copy()
        xs, Fs = self._x, self._F
        i = np.clip(np.searchsorted(Fs, v, side="right") - 1, 0, self._h.size - 1)
        h = self._h[i]
        if self.measure.is_pure_atomic:
            inner = xs[i] + (v - Fs[i]) / self._f0[i]
        else:
            inner = xs[i] + h * self._solve_cell(i, v)
        below = xs[0] + (v - Fs[0]) / self._f_left
        above = xs[-1] + (v - Fs[-1]) / self._f_right
        return np.where(v < Fs[0], below, np.where(v > Fs[-1], above, inner))

    def _solve_cell(self, i: np.ndarray, v: np.ndarray) -> np.ndarray:
        h, F0, F1, d0, d1 = self._h[i], self._F[i], self._F[i + 1], self._f0[i], self._f1[i]
        target = np.clip(v, F0, F1)
        lo = np.zeros(v.shape)
        hi = np.ones(v.shape)
        t = np.clip((target - F0) / (F1 - F0), 0.0, 1.0)
        done = np.zeros(v.shape, dtype=bool)
        for _ in range(60):
            r = _hermite(t, h, F0, F1, d0, d1) - target
            lo = np.where(r <= 0, t, lo)
            hi = np.where(r > 0, t, hi)
            dr = _hermite_dt(t, h, F0, F1, d0, d1)
            with np.errstate(divide="ignore", invalid="ignore"):
                tn = t - r / dr
            bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
            tn = np.where(bad, 0.5 * (lo + hi), tn)
            # freeze each element once it converges, so its result does not
            # depend on which other elements share the batch
            conv = np.abs(tn - t) <= 4e-16
            t = np.where(done, t, tn)
            done |= conv
            if np.all(done):
                break
        return t


def scale_function(measure: SignedMeasure) -> ScaleFunction:
    """Cached ``ScaleFunction`` for a measure."""
    sf = measure._cache.get("scale")
    if sf is None:
        sf = ScaleFunction(measure)
        measure._cache["scale"] = sf
    return sf


def f_nu(measure: SignedMeasure, y):
    """Scale density ``f_nu(y)``; right-continuous with jumps at atoms."""
    r = scale_function(measure).f(y)
    return float(r) if np.ndim(r) == 0 else r


def F_nu(measure: SignedMeasure, x):
    """Scale function ``F_nu(x) = int_0^x f_nu``."""
    r = scale_function(measure).F(x)
    return float(r) if np.ndim(r) == 0 else r


def F_nu_inverse(measure: SignedMeasure, v):
    r = scale_function(measure).F_inverse(v)
    return float(r) if np.ndim(r) == 0 else r


def drift_to_measure(sigma: Callable, b: Callable, support_box: tuple[float, float],
                     zero_atol: float = 0.0) -> SignedMeasure:
    """Measure with density ``b / sigma^2`` on ``support_box``, masked where sigma vanishes.

    Parameters
    ----------
    sigma, b : callable
        Vectorized coefficients.
    support_box : (lo, hi)
        Finite localization box.
    zero_atol : float
        ``|sigma| <= zero_atol`` counts as a zero of sigma.

    Raises
    ------
    ValueError
        When the density is not integrable on the box (quadrature fails to
        converge) or the box is not a finite interval.
    """
    lo, hi = (float(v) for v in support_box)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"support box must be finite with lo < hi, got {support_box}")
    probe = np.linspace(lo, hi, 1025)
    if np.all(np.asarray(b(probe)) * np.ones(probe.shape) == 0):
        return SignedMeasure()
    s_probe = np.asarray(sigma(probe), dtype=float) * np.ones(probe.shape)
    b_probe = np.asarray(b(probe), dtype=float) * np.ones(probe.shape)
    if np.ptp(s_probe) == 0 and np.ptp(b_probe) == 0 and abs(s_probe[0]) > zero_atol:
        return SignedMeasure((), DensitySpec.constant(b_probe[0] / s_probe[0] ** 2, lo, hi))

    def rho(x):
        x = np.asarray(x, dtype=float)
        s = np.asarray(sigma(x), dtype=float) * np.ones(x.shape)
        bb = np.asarray(b(x), dtype=float) * np.ones(x.shape)
        nz = np.abs(s) > zero_atol
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(nz, bb / np.where(nz, s * s, 1.0), 0.0)

    # only the ends of each run of sigma-zeros matter to the quadrature
    zero = np.abs(s_probe) <= max(zero_atol, 1e-300)
    edge = np.flatnonzero(zero[1:] != zero[:-1])
    ends = np.concatenate([probe[edge], probe[edge + 1]])
    kinks = sorted({float(z) for z in ends if lo < z < hi})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = integrate.quad(lambda t: abs(float(rho(np.array(t)))), lo, hi,
                             points=kinks or None, epsabs=QUAD_EPSABS,
                             limit=200, full_output=1)
    val, err = res[0], res[1]
    # quad appends a message only when it reports a convergence problem
    failed = len(res) > 3
    if failed or not math.isfinite(val) or err > 1e-6 * max(1.0, val) or val > 1e8:
        raise ValueError(f"b/sigma^2 is not integrable on [{lo}, {hi}] (quadrature estimate {val:.3g}, error {err:.3g})")
    return SignedMeasure((), DensitySpec.from_callable(rho, lo, hi, breakpoints=kinks))
