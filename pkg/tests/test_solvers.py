import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import SEED, mean_se
from semilt.coefficients import Coefficient, CoefficientSpec, parse_coefficient
from semilt.localtime import lt_occupation
from semilt.measure import SignedMeasure
from semilt.paths import SamplePath, SeedSpec, TimeGrid, sample_brownian, sample_correlated_pair, cross_variation
from semilt.solvers import (
    SolverConfig,
    barlow_phi,
    barlow_residual,
    euler_maruyama,
    lipschitz_envelope,
    lipschitz_ladder,
    local_time_drift_solver,
    min_max_solutions,
    mn_transform,
    perturbed_tanaka_solver,
    reflected_euler,
    skew_walk,
    sup_envelope,
)

ONE = Coefficient.constant(1.0)
ZERO = Coefficient.constant(0.0)
G = TimeGrid(1.0, 1024)


def ks_one(n):
    return stats.kstwo.ppf(0.99, n)


def ks_two(n, m):
    return 1.628 * math.sqrt((n + m) / (n * m))


@pytest.fixture(scope="module")
def drivers():
    return sample_brownian(G, SeedSpec(SEED), 4096)


def test_solver_config():
    assert SolverConfig("skew_walk").scheme == "skew_walk"
    with pytest.raises(ValueError):
        SolverConfig("milstein")


class TestEuler:
    def test_pure_drift(self, bm_small):
        sol = euler_maruyama((ZERO, ONE), bm_small, x0=0.5)
        assert np.allclose(sol.values, 0.5 + bm_small.grid.times, rtol=0, atol=1e-12)

    def test_pure_noise(self, bm_small):
        sol = euler_maruyama((ONE, ZERO), bm_small, x0=-1.0)
        assert np.allclose(sol.values, bm_small.values - 1.0, rtol=0, atol=1e-12)

    def test_linear_martingale(self, drivers):
        sol = euler_maruyama((Coefficient("linear", (1.0,)), ZERO), drivers, x0=1.0)
        m, se = mean_se(sol.values[:, -1])
        assert abs(m - 1.0) <= 3 * se

    def test_failure_flagged(self, bm_small):
        bad = Coefficient("linear", (1e300,))
        sol = euler_maruyama((bad, ZERO), bm_small, x0=1e10)
        assert sol.any_failed
        assert np.all(np.isfinite(sol.values))

    def test_grid_mismatch(self, bm_small):
        with pytest.raises(ValueError):
            euler_maruyama((ONE, ZERO), bm_small, grid=TimeGrid(1.0, 8))

    def test_bad_coeff(self, bm_small):
        with pytest.raises(TypeError):
            euler_maruyama(ONE, bm_small)

    def test_deterministic(self, bm_small):
        c = (parse_coefficient("sqrt_cap(1.0)"), parse_coefficient("0.3"))
        a = euler_maruyama(c, bm_small).values
        b = euler_maruyama(c, bm_small).values
        assert np.array_equal(a, b)


class TestReflected:
    def test_law_halfnormal(self, drivers):
        sol = reflected_euler((ONE, ZERO), drivers)
        d = stats.kstest(sol.values[:, -1], stats.halfnorm.cdf).statistic
        assert d < ks_one(4096)

    def test_nonnegative_and_support(self, drivers):
        sol = reflected_euler((ONE, ZERO), drivers)
        assert np.all(sol.values >= 0)
        inc = np.diff(sol.local_time.values, axis=-1)
        assert np.all(inc >= 0)
        # the tally only grows on steps that end on the boundary
        assert np.all(sol.values[:, 1:][inc > 0] == 0)

    def test_increasing_driver(self):
        B = SamplePath(G, G.times ** 0.5)
        sol = reflected_euler((ONE, ZERO), B)
        assert np.array_equal(sol.values, B.values)
        assert np.all(sol.local_time.values == 0)

    def test_tally_matches_skorokhod(self, drivers):
        sol = reflected_euler((ONE, ZERO), drivers)
        half = 0.5 * sol.local_time.terminal
        K = np.maximum(np.max(-drivers.values, axis=-1), 0.0)
        # exact on the grid: the projection is the discrete Skorokhod map
        assert np.allclose(half, K, rtol=0, atol=1e-12)
        assert abs(half.mean() - K.mean()) <= 0.05 * K.mean()

    def test_negative_start(self, bm_small):
        with pytest.raises(ValueError):
            reflected_euler((ONE, ZERO), bm_small, x0=-0.1)


class TestDriftSolver:
    def test_zero_measure_is_euler(self, bm_small):
        a = local_time_drift_solver(SignedMeasure(), ONE, bm_small, x0=0.2).values
        b = euler_maruyama((ONE, ZERO), bm_small, x0=0.2).values
        assert np.array_equal(a, b)

    def test_skew_probability(self, drivers):
        X = local_time_drift_solver(SignedMeasure.dirac(0.5), ONE, drivers).values[:, -1]
        p = np.mean(X > 0)
        se = math.sqrt(0.75 * 0.25 / X.size)
        assert abs(p - 0.75) <= 3 * se

    def test_sigma_must_be_callable(self, bm_small):
        with pytest.raises(TypeError):
            local_time_drift_solver(SignedMeasure.dirac(0.5), 1.0, bm_small)


class TestSkewWalk:
    @pytest.mark.parametrize("beta", [1.01, -2.0, math.nan])
    def test_rejects(self, beta):
        with pytest.raises(ValueError):
            skew_walk(beta, G, SeedSpec(SEED), 4)

    def test_symmetric(self):
        X = skew_walk(0.0, G, SeedSpec(SEED), 4096).values[:, -1]
        # even number of steps: the walk sits at 0 with positive probability
        p = np.mean(X > 0) + 0.5 * np.mean(X == 0)
        assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / X.size)

    def test_reflecting(self):
        X = skew_walk(1.0, G, SeedSpec(SEED), 256).values
        assert np.all(X >= 0)

    def test_on_lattice(self):
        sol = skew_walk(0.3, G, SeedSpec(SEED), 8)
        k = sol.values / sol.meta["lattice_step"]
        assert np.allclose(k, np.round(k), atol=1e-9)

    @pytest.mark.parametrize("beta", [-0.5, 0.0, 0.5])
    def test_agrees_with_drift_solver(self, beta):
        # on a 1024-step grid the scale-transform Euler scheme still carries a
        # visible bias at t = 0.25, so the law comparison uses the finer grid
        from semilt.experiments import lattice_jitter
        g = TimeGrid(1.0, 4096)
        B = sample_brownian(g, SeedSpec(SEED), 4096)
        X = local_time_drift_solver(SignedMeasure.dirac(beta), ONE, B).values
        walk = skew_walk(beta, g, SeedSpec(SEED, 10_000), 4096)
        for t in (0.25, 0.5, 1.0):
            i = g.index_of(t)
            jit = lattice_jitter(walk.values[:, i], walk.meta["lattice_step"], SeedSpec(SEED, 10_000))
            assert stats.ks_2samp(jit, X[:, i]).statistic < ks_two(4096, 4096)


class TestBarlow:
    def test_identity_map(self, bm_small):
        assert np.array_equal(barlow_phi(bm_small, 1.0, 1.0).values, np.abs(bm_small.values))

    def test_phi_formula(self):
        x = SamplePath(TimeGrid(1.0, 2), np.array([-2.0, 0.0, 3.0]))
        assert list(barlow_phi(x, 2.0, 4.0).values) == [0.5, 0.0, 1.5]

    @pytest.mark.parametrize("a, b", [(0.0, 1.0), (1.0, -1.0)])
    def test_rejects(self, a, b, bm_small):
        with pytest.raises(ValueError):
            barlow_phi(bm_small, a, b)

    def test_residual_on_reflected_brownian(self, drivers):
        # for a = b = 1 the Barlow solution satisfies |X| = B + L/2 in law
        sol = reflected_euler((ONE, ZERO), drivers)
        r = barlow_residual(sol.state, drivers)
        assert np.median(r) <= 3 * G.dt ** 0.25


class TestPerturbedTanaka:
    @given(st.floats(-3, 3), st.floats(-2, 2), st.integers(0, 100))
    def test_constant_sigma_exact(self, c, x0, i):
        W = sample_brownian(TimeGrid(1.0, 256), SeedSpec(SEED, i))
        V = sample_brownian(TimeGrid(1.0, 256), SeedSpec(SEED, i + 1000))
        sol = perturbed_tanaka_solver(Coefficient.constant(c), W, V, x0)
        assert np.allclose(sol.values, x0 + c * W.values + V.values, rtol=0, atol=1e-12)

    def test_tanaka_nonuniqueness(self):
        W = sample_brownian(G, SeedSpec(SEED), 256)
        zero = SamplePath(G, np.zeros((256, G.steps + 1)))
        sign = parse_coefficient("sign")
        up = perturbed_tanaka_solver(sign, W, zero, 1e-3).values
        dn = perturbed_tanaka_solver(sign, W, zero, -1e-3).values
        assert np.median(np.max(np.abs(up - dn), axis=-1)) >= 0.5

    def test_grid_mismatch(self, bm_small):
        other = sample_brownian(TimeGrid(1.0, 8), SeedSpec(SEED), 256)
        with pytest.raises(ValueError):
            perturbed_tanaka_solver(ONE, bm_small, other)


class TestMN:
    def test_zero(self):
        z = SamplePath(G, np.zeros(G.steps + 1))
        M, N = mn_transform(z, z, 2.0)
        assert np.all(M.values == 0) and np.all(N.values == 0)

    def test_bracket_mode(self):
        W, V = sample_correlated_pair(G, SeedSpec(SEED), "bracket", 2.0, 4096).channels
        M, N = mn_transform(W, V, 2.0)
        mn = cross_variation(M, N).values[:, -1]
        nn = cross_variation(N, N).values[:, -1]
        m, se = mean_se(mn)
        assert abs(m) <= 3 * se + 1e-3
        m, se = mean_se(nn)
        assert abs(m - 0.75) <= 3 * se + 1e-3

    def test_independent_mode(self):
        W, V = sample_correlated_pair(G, SeedSpec(SEED), "independent", None, 4096).channels
        M, N = mn_transform(W, V, 1.0)
        m, se = mean_se(cross_variation(M, N).values[:, -1])
        assert abs(m - 0.25) <= 3 * se

    def test_eta_finite(self, bm_small):
        with pytest.raises(ValueError):
            mn_transform(bm_small, bm_small, math.inf)


class TestEnvelope:
    def test_constant(self):
        env = lipschitz_envelope(lambda x: np.full(np.shape(x), 0.7), 3.0, (-2, 2), points=401)
        assert np.allclose(env(np.linspace(-2, 2, 50)), 0.7)
        # beyond the box the infimum runs over the box only
        assert env(np.array([3.0]))[0] == pytest.approx(0.7 + 3.0)

    @pytest.mark.parametrize("n", [1.0, 4.0, 16.0])
    def test_step_ramp(self, n):
        step = parse_coefficient("step(0,0,1)")
        env = lipschitz_envelope(step, n, (-2, 2), points=4001)
        x = np.linspace(-1.5, 1.5, 1000)
        assert np.allclose(env(x), np.clip(n * x, 0, 1), atol=n * 1e-3 + 1e-12)

    def test_monotone_in_n(self):
        b = parse_coefficient("step(0.3,-1,2)")
        x = np.random.default_rng(1).uniform(-3, 3, 1000)
        envs = [lipschitz_envelope(b, n, (-4, 4), points=8001)(x) for n in lipschitz_ladder(6)]
        for lo, hi in zip(envs, envs[1:]):
            assert np.all(lo <= hi + 1e-12)
        assert np.all(envs[-1] <= b(x) + 1e-12)

    def test_sup_mirror(self):
        b = parse_coefficient("step(0,0,1)")
        env = sup_envelope(b, 2.0, (-2, 2), points=4001)
        x = np.linspace(-1.5, 1.5, 301)
        assert np.allclose(env(x), np.clip(1 + 2 * x, 0, 1), atol=2e-3)
        assert np.all(env(x) >= b(x) - 1e-12)

    def test_adaptive_refinement(self):
        env = lipschitz_envelope(np.sin, 0.5, (-3, 3))
        slopes = np.abs(np.diff(env.values)) / np.diff(env.nodes)
        assert slopes.max() <= 0.5 + 1e-9

    @pytest.mark.parametrize("kw", [{"n": 0.0}, {"n": math.inf}, {"eval_box": (1, 1)}, {"points": 1}])
    def test_rejects(self, kw):
        args = {"b": np.cos, "n": 1.0, "eval_box": (-1, 1)} | kw
        with pytest.raises(ValueError):
            lipschitz_envelope(**args)

    def test_unbounded_below(self):
        with pytest.raises(ValueError):
            lipschitz_envelope(lambda x: np.where(x > 0, -np.inf, 0.0), 1.0, (-1, 1), points=11)

    def test_ladder(self):
        assert lipschitz_ladder(4) == [1.0, 2.0, 4.0, 8.0]
        with pytest.raises(ValueError):
            lipschitz_ladder(0)


class TestMinMax:
    def test_lipschitz_drift_closes_gap(self, bm_small):
        spec = CoefficientSpec(ONE, parse_coefficient("linear(-0.5,0.2)"))
        res = min_max_solutions(spec, bm_small, 0.0, None, 3, eval_box=(-8, 8), points=4097)
        assert np.max(res.gap) <= 1e-2

    def test_ordering(self, bm_small):
        spec = CoefficientSpec(parse_coefficient("sqrt_cap(1.0)"), parse_coefficient("step(0,0.5,1)"))
        res = min_max_solutions(spec, bm_small, 0.0, None, 4, eval_box=(-8, 8), points=4097)
        frac = np.mean(res.lower.values > res.upper.values + 1e-12)
        assert frac <= 0.01
        assert res.gaps.shape == (4, 256)

    def test_zero_occupation(self, bm_small):
        spec = CoefficientSpec(parse_coefficient("sqrt_cap(1.0)"), ONE)
        res = min_max_solutions(spec, bm_small, 0.0, None, 4, eval_box=(-8, 8), points=4097)
        X = res.upper.values
        # time spent in a band around 0 shrinks linearly with the band
        frac = [np.mean(np.abs(X[:, 1:]) <= eps) for eps in (0.016, 0.004, 0.001)]
        assert frac[2] <= 0.01
        assert frac[2] / 0.001 <= 2 * frac[0] / 0.016
