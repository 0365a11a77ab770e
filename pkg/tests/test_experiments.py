import json
import math
import re

import numpy as np
import pytest

from conftest import SEED
from semilt.experiments import (
    REGISTRY,
    Check,
    ExperimentSpec,
    damp_excursions,
    experiment_names,
    lattice_jitter,
    run,
)
from semilt.paths import SeedSpec

SMALL = dict(steps=512, paths=128, shard_size=64)


@pytest.fixture(scope="module")
def small_reports():
    return {name: run(ExperimentSpec(name, **SMALL)) for name in experiment_names()}


def test_registry_size():
    assert len(experiment_names()) >= 12
    assert len(set(experiment_names())) == len(experiment_names())


def test_anchors_are_plain():
    banned = re.compile(r"spec|paper|arxiv|section|\u00a7|eq\.|equation \(|theorem \d|\u2014", re.I)
    for exp in REGISTRY.values():
        assert exp.anchor and not banned.search(exp.anchor), exp.name
        for note in exp.notes:
            assert not banned.search(note), exp.name


@pytest.mark.parametrize("name", experiment_names())
def test_small_run_is_well_formed(small_reports, name):
    rep = small_reports[name]
    d = json.loads(rep.to_json())
    assert d["experiment"] == name
    assert d["checks"], "every experiment must carry at least one check"
    assert d["passed"] == all(c["passed"] for c in d["checks"])
    csv = rep.residual_csv().splitlines()
    if rep.residuals:
        assert len(csv) == SMALL["paths"] + 1
        assert csv[0].startswith("path_index")
    # the echoed config rebuilds the same spec
    echo = d["config"]
    again = ExperimentSpec(echo["name"], float(echo["horizon"]), int(echo["steps"]),
                           int(echo["paths"]), int(echo["seed"]), int(echo["shard_size"]),
                           float(echo["tol_scale"]), echo["params"])
    assert again.echo() == echo


@pytest.mark.parametrize("name", ["skew_law", "gen_tanaka", "comparison_main", "mn_bracket"])
def test_rerun_identical(small_reports, name):
    again = run(ExperimentSpec(name, **SMALL))
    assert again.to_json() == small_reports[name].to_json()
    assert again.residual_csv() == small_reports[name].residual_csv()


@pytest.mark.parametrize("name", ["skew_law", "lt_calibration", "comparison_norms", "barlow"])
@pytest.mark.parametrize("shard", [1, 50, 128])
def test_shard_invariance(small_reports, name, shard):
    other = run(ExperimentSpec(name, **(SMALL | {"shard_size": shard})))
    base = small_reports[name]
    assert other.aggregate_fingerprint() == base.aggregate_fingerprint()
    assert other.residual_csv() == base.residual_csv()


def test_threads_do_not_change_results(small_reports, monkeypatch):
    monkeypatch.setenv("SEMILT_THREADS", "3")
    other = run(ExperimentSpec("reflected_sde", **SMALL))
    assert other.to_json() == small_reports["reflected_sde"].to_json()


def test_seed_changes_results(small_reports):
    other = run(ExperimentSpec("lt_calibration", seed=SEED + 1, **SMALL))
    assert other.aggregate_fingerprint() != small_reports["lt_calibration"].aggregate_fingerprint()


@pytest.mark.parametrize("name", ["lt_calibration", "barlow", "comparison_main"])
def test_tol_scale_is_monotone(name):
    passes = []
    for scale in (0.25, 1.0, 4.0):
        rep = run(ExperimentSpec(name, tol_scale=scale, **SMALL))
        passes.append([c.passed for c in rep.checks])
    for lo, hi in zip(passes, passes[1:]):
        assert all(h or not l for l, h in zip(lo, hi))


class TestCheck:
    def test_bounds(self):
        assert Check("x", 1.0, 0.0, 1.0).passed
        assert not Check("x", 1.0, 0.0, 1.0, strict=True).passed
        assert not Check("x", math.nan, None, 1.0).passed
        assert Check("x", -5.0).passed

    def test_report_cannot_be_forced_green(self, small_reports):
        rep = small_reports["lt_calibration"]
        d = rep.to_dict()
        assert all(c["passed"] == Check(c["name"], c["value"], c["lower"], c["upper"],
                                        c["strict"]).passed for c in d["checks"])


class TestSpecValidation:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            ExperimentSpec("no_such_experiment")

    def test_unknown_param(self):
        with pytest.raises(ValueError):
            ExperimentSpec("skew_law", params={"gamma": "1"})

    def test_bad_param_value(self):
        with pytest.raises(ValueError):
            ExperimentSpec("skew_law", params={"beta": "half"}).resolved_params()

    @pytest.mark.parametrize("kw", [{"paths": 1}, {"shard_size": 0}, {"tol_scale": 0.0},
                                    {"steps": 0}, {"horizon": -1.0}, {"seed": -3}])
    def test_bad_fields(self, kw):
        with pytest.raises(ValueError):
            ExperimentSpec("lt_calibration", **kw)

    def test_skew_beta_out_of_range(self):
        with pytest.raises(ValueError):
            run(ExperimentSpec("skew_law", params={"beta": "1.5"}, **SMALL))

    def test_canonical_echo(self):
        a = ExperimentSpec("skew_law", params={"beta": "0.50"}).echo()
        b = ExperimentSpec("skew_law", params={"beta": 0.5}).echo()
        assert a == b


class TestHelpers:
    def test_jitter_stays_in_cell(self):
        v = np.arange(-5, 6) * 0.1
        j = lattice_jitter(v, 0.1, SeedSpec(SEED))
        assert np.all(np.abs(j - v) <= 0.1)
        assert np.array_equal(j, lattice_jitter(v, 0.1, SeedSpec(SEED)))
        assert np.all(lattice_jitter(v, 0.1, SeedSpec(SEED), fold=True) >= 0)

    def test_damping(self):
        v = np.array([0.0, 0.5, 0.0, 2.0])
        assert list(damp_excursions(v, 0.7)) == [0.0, 0.35, 0.0, 1.4]
        with pytest.raises(ValueError):
            damp_excursions(v, 0.0)


def test_uniqueness_reports_state_proxy(small_reports):
    for name in ("perturbed_tanaka_uniqueness", "tanaka_nonuniqueness"):
        assert small_reports[name].notes
