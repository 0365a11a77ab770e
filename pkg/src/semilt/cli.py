"""Command-line front end: ``semilt {simulate,localtime,experiment,list,verify-all}``.

Exit codes: 0 when everything passes, 1 when an experiment or criterion
fails, 2 for usage and configuration errors (one-line reason on stderr).

Outputs (all inside ``--out``):

- ``experiment NAME``: ``NAME.json`` (report) and ``NAME_residuals.csv``
  (``path_index`` plus one column per residual, 17 significant digits).
- ``simulate FAMILY``: ``simulate_FAMILY.csv`` with ``time_index,t,path_0,...``.
- ``localtime ESTIMATOR``: ``localtime_ESTIMATOR.csv``, same layout.
- ``verify-all``: ``acceptance.json``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance
from .coefficients import Coefficient, CoefficientSpec, parse_coefficient
from .experiments import DEFAULT_SEED, REGISTRY, ExperimentSpec, run
from .localtime import ESTIMATORS, EstimatorConfig, local_time
from .measure import parse_measure
from .paths import SamplePath, SeedSpec, TimeGrid, sample_brownian, sample_correlated_pair
from .solvers import (
    barlow_phi,
    euler_maruyama,
    local_time_drift_solver,
    perturbed_tanaka_solver,
    reflected_euler,
    skew_walk,
)

__all__ = ["main", "RunConfig", "UsageError", "build_config"]

COMMANDS = ("simulate", "localtime", "experiment", "list", "verify-all")
RUN_KEYS = ("seed", "paths", "horizon", "dt", "steps", "out", "tol_scale", "shard_size")
SMALL_BATCH = 16

# simulate families and the parameters each accepts (with defaults)
FAMILIES = {
    "brownian": {},
    "euler": {"sigma": "1.0", "drift": "0.0", "x0": "0.0"},
    "reflected": {"sigma": "1.0", "drift": "0.0", "x0": "0.0"},
    "skew": {"beta": "0.5"},
    "drift_solver": {"measure": "atoms=0:0.5", "sigma": "1.0", "x0": "0.0"},
    "barlow": {"a": "1.0", "b": "2.0", "x0": "0.0", "phi": "false"},
    "perturbed_tanaka": {"lam": "1.0", "x0": "0.0"},
}
LOCALTIME_PARAMS = {"level": "0.0", "family": "brownian", "bandwidth_scale": "1.0"}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated command configuration; ``out`` does not take part in equality."""

    command: str
    target: str | None = None
    horizon: float = 1.0
    steps: int = 4096
    paths: int = 4096
    seed: int = DEFAULT_SEED
    tol_scale: float = 1.0
    shard_size: int = 512
    params: tuple[tuple[str, str], ...] = ()
    out: str = field(default="semilt_out", compare=False)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.steps)

    def experiment_spec(self) -> ExperimentSpec:
        return ExperimentSpec(self.target, self.horizon, self.steps, self.paths, self.seed,
                              self.shard_size, self.tol_scale, dict(self.params))

    @classmethod
    def from_echo(cls, echo: dict, out: str = "semilt_out") -> "RunConfig":
        """Rebuild the configuration of an experiment from its report echo."""
        return cls("experiment", echo["name"], float(echo["horizon"]), int(echo["steps"]),
                   int(echo["paths"]), int(echo["seed"]), float(echo["tol_scale"]),
                   int(echo["shard_size"]), tuple(sorted(echo["params"].items())), out)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semilt", description="Semimartingale local times: simulation and experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("target", nargs="?")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.add_argument("--tol-scale", dest="tol_scale", type=float)
    p.add_argument("--shard-size", dest="shard_size", type=int)
    return p


def _extra_params(tokens: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise UsageError(f"missing value for --{key}")
            val = tokens[i + 1]
            i += 2
        out[key.replace("-", "_")] = val
    return out


def _read_config(path: str) -> tuple[dict, dict]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise UsageError(f"cannot read config {path}: {str(e).splitlines()[0]}") from None
    unknown = set(cp.sections()) - {"run", "params"}
    if unknown:
        raise UsageError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    run_sec = dict(cp["run"]) if cp.has_section("run") else {}
    bad = set(run_sec) - set(RUN_KEYS)
    if bad:
        raise UsageError(f"unknown key(s) in [run]: {', '.join(sorted(bad))}")
    params = dict(cp["params"]) if cp.has_section("params") else {}
    return run_sec, params


def _steps(horizon: float, dt, steps) -> int:
    if dt is not None and steps is not None:
        raise UsageError("give either dt or steps, not both")
    if dt is None:
        return 4096 if steps is None else int(steps)
    if not (dt > 0 and math.isfinite(dt)):
        raise UsageError("dt must be > 0")
    n = horizon / dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
        raise UsageError(f"horizon/dt = {n} is not a positive integer")
    return int(round(n))


def build_config(argv: list[str]) -> RunConfig:
    """Parse and validate arguments (config file first, flags override)."""
    ns, rest = _parser().parse_known_args(argv)
    file_run, file_params = _read_config(ns.config) if ns.config else ({}, {})

    def pick(key, conv):
        v = getattr(ns, key, None)
        if v is None and key in file_run:
            try:
                v = conv(file_run[key])
            except ValueError:
                raise UsageError(f"bad value for {key}: {file_run[key]!r}") from None
        return v

    horizon = pick("horizon", float)
    horizon = 1.0 if horizon is None else horizon
    if not (horizon > 0 and math.isfinite(horizon)):
        raise UsageError("horizon must be > 0")
    if ns.dt is not None or ns.steps is not None:
        steps = _steps(horizon, ns.dt, ns.steps)
    else:
        steps = _steps(horizon, pick("dt", float), pick("steps", int))
    cmd, target = ns.command, ns.target
    paths = pick("paths", int)
    if paths is None:
        paths = 4096 if cmd in ("experiment", "verify-all") else SMALL_BATCH
    seed = pick("seed", int)
    seed = DEFAULT_SEED if seed is None else seed
    tol = pick("tol_scale", float)
    tol = 1.0 if tol is None else tol
    shard = pick("shard_size", int)
    shard = 512 if shard is None else shard
    out = pick("out", str) or "semilt_out"
    params = {**file_params, **_extra_params(rest)}

    if steps < 1 or paths < 1 or shard < 1:
        raise UsageError("steps, paths and shard-size must be positive")
    if seed < 0:
        raise UsageError("seed must be >= 0")
    if not (tol > 0 and math.isfinite(tol)):
        raise UsageError("tol-scale must be > 0")

    if cmd in ("list", "verify-all"):
        if target is not None:
            raise UsageError(f"{cmd} takes no target")
        if params:
            raise UsageError(f"unknown option(s): {', '.join('--' + k for k in sorted(params))}")
        return RunConfig(cmd, None, horizon, steps, paths, seed, tol, shard, (), out)

    if target is None:
        raise UsageError(f"{cmd} needs a target")
    if cmd == "experiment":
        try:
            spec = ExperimentSpec(target, horizon, steps, paths, seed, shard, tol, params)
            echo = spec.echo()
        except ValueError as e:
            raise UsageError(str(e)) from None
        return RunConfig.from_echo(echo, out)

    allowed = FAMILIES.get(target) if cmd == "simulate" else (
        LOCALTIME_PARAMS if target in ESTIMATORS else None)
    if allowed is None:
        choices = FAMILIES if cmd == "simulate" else ESTIMATORS
        raise UsageError(f"unknown {cmd} target {target!r}; choose from {', '.join(choices)}")
    bad = set(params) - set(allowed)
    if bad:
        raise UsageError(f"unknown option(s) for {cmd} {target}: {', '.join('--' + k for k in sorted(bad))}")
    merged = {**allowed, **params}
    return RunConfig(cmd, target, horizon, steps, paths, seed, tol, shard,
                     tuple(sorted(merged.items())), out)


# ---------------------------------------------------------------------------
# commands


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _curves_csv(grid: TimeGrid, values: np.ndarray) -> str:
    v = np.atleast_2d(values)
    lines = [",".join(["time_index", "t"] + [f"path_{i}" for i in range(v.shape[0])])]
    t = grid.times
    for k in range(v.shape[1]):
        lines.append(",".join([str(k), "%.17g" % t[k]] + ["%.17g" % x for x in v[:, k]]))
    return "\n".join(lines) + "\n"


def _simulate_values(cfg: RunConfig, family: str, p: dict) -> SamplePath:
    g, seed = cfg.grid, SeedSpec(cfg.seed, 0)
    if family == "skew":
        return skew_walk(float(p["beta"]), g, seed, cfg.paths).state
    B = sample_brownian(g, seed, cfg.paths)
    if family == "brownian":
        return B
    if family in ("euler", "reflected"):
        spec = CoefficientSpec(parse_coefficient(p["sigma"]), parse_coefficient(p["drift"]))
        solver = euler_maruyama if family == "euler" else reflected_euler
        return solver(spec, B, float(p["x0"])).state
    if family == "drift_solver":
        return local_time_drift_solver(parse_measure(p["measure"]), parse_coefficient(p["sigma"]),
                                       B, float(p["x0"])).state
    if family == "barlow":
        a, b = float(p["a"]), float(p["b"])
        X = euler_maruyama(CoefficientSpec(Coefficient("barlow", (a, b))), B, float(p["x0"]))
        return barlow_phi(X, a, b) if p["phi"].lower() in ("1", "true", "yes") else X.state
    if family == "perturbed_tanaka":
        D = sample_correlated_pair(g, seed, "independent", paths=cfg.paths)
        lam = float(p["lam"])
        N = SamplePath(g, lam * D[1].values, lam * D[1].dx)
        return perturbed_tanaka_solver(Coefficient("sign"), D[0], N, float(p["x0"])).state
    raise UsageError(f"unknown family {family!r}")


def _cmd_simulate(cfg: RunConfig) -> int:
    path = _simulate_values(cfg, cfg.target, dict(cfg.params))
    _write(_out_dir(cfg) / f"simulate_{cfg.target}.csv", _curves_csv(cfg.grid, path.values))
    return 0


def _cmd_localtime(cfg: RunConfig) -> int:
    p = dict(cfg.params)
    if p["family"] not in FAMILIES:
        raise UsageError(f"unknown family {p['family']!r}")
    path = _simulate_values(cfg, p["family"], FAMILIES[p["family"]])
    curve = local_time(path, float(p["level"]), cfg.target,
                       EstimatorConfig(scale=float(p["bandwidth_scale"])))
    _write(_out_dir(cfg) / f"localtime_{cfg.target}.csv", _curves_csv(cfg.grid, curve.values))
    return 0


def _cmd_experiment(cfg: RunConfig) -> int:
    rep = run(cfg.experiment_spec())
    d = _out_dir(cfg)
    _write(d / f"{cfg.target}.json", rep.to_json())
    _write(d / f"{cfg.target}_residuals.csv", rep.residual_csv())
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {cfg.target}.{c.name} = {c.value:.6g}")
    print(f"{cfg.target}: {'PASS' if rep.passed else 'FAIL'}")
    return 0 if rep.passed else 1


def _cmd_list(cfg: RunConfig) -> int:
    for name, exp in REGISTRY.items():
        print(f"{name}\t{exp.anchor}")
    return 0


def _cmd_verify_all(cfg: RunConfig) -> int:
    scale = acceptance.Scale(cfg.horizon, cfg.steps, cfg.paths, cfg.seed, cfg.shard_size, cfg.tol_scale)
    results = []
    for crit in acceptance.CRITERIA:
        r = acceptance.run_criterion(crit.number, scale)
        print(r.line(), flush=True)
        results.append(r)
    summary = [{"criterion": r.number, "title": r.title, "passed": r.passed, "detail": r.detail}
               for r in results]
    _write(_out_dir(cfg) / "acceptance.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if all(r.passed for r in results) else 1


_DISPATCH = {
    "simulate": _cmd_simulate,
    "localtime": _cmd_localtime,
    "experiment": _cmd_experiment,
    "list": _cmd_list,
    "verify-all": _cmd_verify_all,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = build_config(argv)
        return _DISPATCH[cfg.command](cfg)
    except UsageError as e:
        print(f"semilt: error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"semilt: error: {str(e).splitlines()[0]}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
