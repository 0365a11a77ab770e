"""Named coefficient families for sigma and b, with a small literal syntax."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Coefficient", "CoefficientSpec", "parse_coefficient", "FAMILIES"]

FAMILIES = ("constant", "linear", "sign", "sqrt_cap", "step", "table", "odd_table", "barlow")

_ARITY = {
    "constant": (1, 1),
    "linear": (1, 2),
    "sign": (0, 0),
    "sqrt_cap": (0, 1),
    "step": (0, 3),
    "barlow": (2, 2),
}


@dataclass(frozen=True)
class Coefficient:
    """``scale * base(x) + offset`` for a named base family.

    Families and positional params:

    - ``constant(c)``
    - ``linear(slope, intercept=0)``
    - ``sign()``: +1 for x > 0, -1 for x <= 0
    - ``sqrt_cap(cap=1)``: ``min(sqrt|x|, cap)``
    - ``step(x0=0, left=0, right=1)``: ``left`` for x < x0, ``right`` for x >= x0
    - ``table(x:y, ...)``: piecewise linear, constant beyond the ends
    - ``odd_table(x:y, ...)``: ``sgn(x) * table(|x|)`` (odd, 0 at 0)
    - ``barlow(a, b)``: ``a`` for x > 0, ``-b`` for x <= 0
    """

    family: str
    params: tuple[float, ...] = ()
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown coefficient family {self.family!r}; choose from {', '.join(FAMILIES)}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.family in _ARITY:
            lo, hi = _ARITY[self.family]
            if not lo <= len(self.params) <= hi:
                raise ValueError(f"{self.family} takes {lo}..{hi} parameters, got {len(self.params)}")
        if self.family in ("table", "odd_table"):
            xs = np.asarray(self.xs, dtype=float)
            if xs.size < 1 or len(self.ys) != xs.size or np.any(np.diff(xs) <= 0):
                raise ValueError("table needs strictly increasing xs with matching ys")
            if self.family == "odd_table" and xs[0] < 0:
                raise ValueError("odd_table is specified on x >= 0")
        if self.family == "barlow" and min(self.params) <= 0:
            raise ValueError("barlow coefficient needs a > 0 and b > 0")
        if self.family == "sqrt_cap" and self.params and self.params[0] <= 0:
            raise ValueError("sqrt_cap needs cap > 0")
        vals = list(self.params) + list(self.xs) + list(self.ys) + [self.scale, self.offset]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("coefficient parameters must be finite")

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "Coefficient":
        return cls("constant", (c,))

    @classmethod
    def table(cls, xs, ys, odd: bool = False) -> "Coefficient":
        return cls("odd_table" if odd else "table", (), tuple(map(float, xs)), tuple(map(float, ys)))

    # -- evaluation ---------------------------------------------------------

    def base(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        fam = self.family
        if fam == "constant":
            return np.full(x.shape, p[0])
        if fam == "linear":
            return p[0] * x + (p[1] if len(p) > 1 else 0.0)
        if fam == "sign":
            return np.where(x > 0, 1.0, -1.0)
        if fam == "sqrt_cap":
            cap = p[0] if p else 1.0
            return np.minimum(np.sqrt(np.abs(x)), cap)
        if fam == "step":
            x0, left, right = (list(p) + [0.0, 0.0, 1.0][len(p):])[:3]
            return np.where(x < x0, left, right)
        if fam == "table":
            return np.interp(x, self.xs, self.ys)
        if fam == "odd_table":
            return np.sign(x) * np.interp(np.abs(x), self.xs, self.ys)
        a, b = p
        return np.where(x > 0, a, -b)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        v = self.base(x)
        if self.scale != 1.0:
            v = self.scale * v
        if self.offset != 0.0:
            v = v + self.offset
        return v

    @property
    def is_constant(self) -> bool:
        return self.family == "constant" or self.scale == 0.0

    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError(f"{self.family} is not constant")
        return float(self(np.zeros(1))[0])

    def to_literal(self) -> str:
        if self.family in ("table", "odd_table"):
            args = [f"{x!r}:{y!r}" for x, y in zip(self.xs, self.ys)]
        else:
            args = [repr(p) for p in self.params]
        if self.scale != 1.0:
            args.append(f"scale={self.scale!r}")
        if self.offset != 0.0:
            args.append(f"offset={self.offset!r}")
        return f"{self.family}({','.join(args)})"


_LIT = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_coefficient(text: str) -> Coefficient:
    """Parse ``family(arg, ..., scale=s, offset=o)``; bare ``sign`` is allowed.

    A plain number parses as a constant.
    """
    try:
        return Coefficient.constant(float(text))
    except ValueError:
        pass
    m = _LIT.match(text)
    if not m:
        raise ValueError(f"bad coefficient literal {text!r}")
    fam, argstr = m.group(1), (m.group(2) or "").strip()
    params, xs, ys, kw = [], [], [], {}
    for tok in filter(None, (t.strip() for t in argstr.split(","))):
        if "=" in tok:
            k, v = (s.strip() for s in tok.split("=", 1))
            if k not in ("scale", "offset"):
                raise ValueError(f"unknown coefficient keyword {k!r}")
            kw[k] = float(v)
        elif ":" in tok:
            x, y = tok.split(":", 1)
            xs.append(float(x))
            ys.append(float(y))
        else:
            params.append(float(tok))
    if fam in ("table", "odd_table") and params:
        raise ValueError("table literals take x:y pairs only")
    return Coefficient(fam, tuple(params), tuple(xs), tuple(ys), **kw)


@dataclass(frozen=True)
class CoefficientSpec:
    """Diffusion ``sigma`` and drift ``b`` plus declared metadata.

    ``declared`` may hold ``bounded``, ``odd`` and ``lipschitz`` (a constant);
    ``spot_check`` tests those claims on sample points.
    """

    sigma: Coefficient
    drift: Coefficient = field(default_factory=lambda: Coefficient.constant(0.0))
    declared: dict = field(default_factory=dict)

    def spot_check(self, xs: np.ndarray, bound: float = 1e6) -> dict[str, bool]:
        xs = np.asarray(xs, dtype=float)
        out = {}
        for name, fn in (("sigma", self.sigma), ("drift", self.drift)):
            v = fn(xs)
            out[f"{name}_finite"] = bool(np.all(np.isfinite(v)))
            if self.declared.get("bounded"):
                out[f"{name}_bounded"] = bool(np.all(np.abs(v) <= bound))
            if self.declared.get("odd"):
                nz = xs != 0
                out[f"{name}_odd"] = bool(np.allclose(fn(-xs[nz]), -v[nz], rtol=1e-12, atol=1e-12))
            lip = self.declared.get("lipschitz")
            if lip is not None:
                o = np.argsort(xs)
                dx = np.diff(xs[o])
                dv = np.abs(np.diff(v[o]))
                ok = dx > 0
                out[f"{name}_lipschitz"] = bool(np.all(dv[ok] <= lip * dx[ok] * (1 + 1e-12) + 1e-15))
        return out

    def to_literal(self) -> dict[str, str]:
        return {"sigma": self.sigma.to_literal(), "drift": self.drift.to_literal()}
