import csv
import math

import numpy as np
import pytest

from delayrisk import (
    DivergenceError,
    FailureScenario,
    InsufficientAcceptanceError,
    NoiseDelayConfig,
    ParameterError,
    RiskParams,
    SimConfig,
    StabilityError,
    build_graph,
    cascading_risk,
    conditional_exceedance_oracle,
    conditional_risk_oracle,
    conditional_stats,
    exceedance_probability,
    laplacian,
    max_stable_delay,
    sample_steady_state,
    simulate,
    spectral,
    steady_state_covariance,
)
from delayrisk.simulation import trial_generator


def setup(kind, n, b, frac, p=None):
    g = build_graph(kind, n, p=p)
    s = spectral(laplacian(g))
    cfg = NoiseDelayConfig(b, frac * max_stable_delay(s))
    return g, cfg, steady_state_covariance(s, cfg)


class TestSimulate:
    def test_consensus_history_stays_put(self):
        g = build_graph("pcycle", 6, p=2)
        cfg = NoiseDelayConfig(0.0, 0.1)
        emp = simulate(g, cfg, SimConfig(dt=0.005, horizon=5, burn_in=1, initial_history=3.0))
        assert not np.any(emp.cov_hat) and not np.any(emp.mean_hat)

    def test_noiseless_disagreement_decays(self, tmp_path):
        g = build_graph("path", 5)
        tau = 0.5 * max_stable_delay(spectral(laplacian(g)))
        sim = SimConfig(dt=tau / 20, horizon=60, burn_in=1, initial_history=[3.0, -1.0, 0.0, 2.0, -4.0],
                        trajectory_dir=str(tmp_path))
        simulate(g, NoiseDelayConfig(0.0, tau), sim)
        with open(tmp_path / "trial_00000.csv", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["t", "y_1", "y_2", "y_3", "y_4", "y_5"]
        first = np.abs(np.array(rows[1][1:], dtype=float)).max()
        last = np.abs(np.array(rows[-1][1:], dtype=float)).max()
        assert first > 1.0 and last < 1e-6

    def test_two_node_covariance(self):
        g = build_graph("path", 2)
        emp = simulate(g, NoiseDelayConfig(2.0, 0.0), SimConfig(dt=1e-3, horizon=2000, burn_in=100, seed=1))
        expected = np.array([[0.5, -0.5], [-0.5, 0.5]])
        assert np.all(np.abs(emp.cov_hat - expected) < 3 * emp.cov_se)
        assert np.all(np.abs(emp.mean_hat) < 5 * emp.mean_se)
        assert emp.samples == 1_900_000

    def test_small_graph_matches_analytical(self):
        g, cfg, cov = setup("path", 4, 1.0, 0.3)
        emp = simulate(g, cfg, SimConfig(dt=cfg.tau / 200, horizon=420, burn_in=20, trials=20, seed=7))
        z = np.abs(emp.cov_hat - cov.sigma) / emp.cov_se
        assert z.max() < 3.0
        assert np.array_equal(emp.cov_hat, emp.cov_hat.T)
        assert np.all(np.abs(emp.mean_hat) < 5 * emp.mean_se)

    def test_deterministic_across_runs_and_workers(self):
        g, cfg, _ = setup("pcycle", 7, 1.0, 0.5, p=2)
        base = dict(dt=cfg.tau / 20, horizon=30, burn_in=5, trials=6, seed=99, block_trials=2)
        a = simulate(g, cfg, SimConfig(**base))
        b = simulate(g, cfg, SimConfig(**base))
        c = simulate(g, cfg, SimConfig(**base, workers=3))
        for other in (b, c):
            assert np.array_equal(a.cov_hat, other.cov_hat)
            assert np.array_equal(a.cov_se, other.cov_se)
            assert np.array_equal(a.mean_hat, other.mean_hat)
        d = simulate(g, cfg, SimConfig(**{**base, "seed": 100}))
        assert not np.array_equal(a.cov_hat, d.cov_hat)

    def test_trial_streams_follow_spawn_rule(self):
        spawned = np.random.SeedSequence(42).spawn(4)[3]
        expected = np.random.Generator(np.random.PCG64(spawned)).standard_normal(5)
        np.testing.assert_array_equal(trial_generator(42, 3).standard_normal(5), expected)

    def test_stability_and_step_checks(self):
        g = build_graph("path", 2)
        bound = math.pi / 4
        with pytest.raises(StabilityError):
            simulate(g, NoiseDelayConfig(1.0, bound), SimConfig(dt=bound / 40, horizon=10, burn_in=1))
        with pytest.raises(ParameterError, match="tau/20"):
            simulate(g, NoiseDelayConfig(1.0, 0.2), SimConfig(dt=0.02, horizon=10, burn_in=1))
        with pytest.raises(ParameterError, match="lambda_max"):
            simulate(g, NoiseDelayConfig(1.0, 0.0), SimConfig(dt=0.05, horizon=10, burn_in=1))

    def test_config_invariants(self):
        with pytest.raises(ParameterError):
            SimConfig(dt=0.01, horizon=10, burn_in=10)
        with pytest.raises(ParameterError):
            SimConfig(dt=0.0, horizon=10, burn_in=1)

    def test_divergence_reports_step_and_trial(self):
        g = build_graph("path", 2)
        tau = 3 * math.pi / 4
        sim = SimConfig(dt=tau / 50, horizon=500, burn_in=1, trials=2)
        with pytest.raises(DivergenceError) as info:
            simulate(g, NoiseDelayConfig(1.0, tau), sim, check_stability=False)
        assert info.value.step > 0 and info.value.trial in (0, 1)

    def test_delay_bound_sharpness_probe(self):
        # diagnostic: just past the bound the scheme either blows up or its variance grows with the horizon
        g = build_graph("path", 2)
        tau = 1.05 * math.pi / 4
        cfg = NoiseDelayConfig(1.0, tau)
        outcome = []
        for horizon in (100, 200):
            try:
                emp = simulate(g, cfg, SimConfig(dt=tau / 20, horizon=horizon, burn_in=10), check_stability=False)
                outcome.append(emp.cov_hat[0, 0])
            except DivergenceError as err:
                outcome.append(math.inf)
                print(f"diverged at step {err.step}")
        print(f"variance by horizon: {outcome}")
        assert outcome[1] > outcome[0]

    def test_step_refinement(self):
        g, cfg, _ = setup("path", 4, 1.0, 0.5)
        runs = [
            simulate(g, cfg, SimConfig(dt=cfg.tau / d, horizon=220, burn_in=20, trials=4, seed=5 + d))
            for d in (40, 80)
        ]
        diff = np.abs(runs[0].cov_hat - runs[1].cov_hat)
        combined = np.hypot(runs[0].cov_se, runs[1].cov_se)
        assert np.all(diff < 2 * combined)

    def test_trajectory_rows_are_centered(self, tmp_path):
        g, cfg, _ = setup("complete", 3, 1.0, 0.4)
        simulate(g, cfg, SimConfig(dt=cfg.tau / 20, horizon=2, burn_in=0.5, trials=2, trajectory_dir=str(tmp_path)))
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["trial_00000.csv", "trial_00001.csv"]
        data = np.loadtxt(tmp_path / "trial_00001.csv", delimiter=",", skiprows=1)
        assert np.all(np.abs(data[:, 1:].sum(axis=1)) < 1e-12)
        assert np.all(np.diff(data[:, 0]) > 0)


class TestSampleSteadyState:
    def test_empty(self):
        _, _, cov = setup("path", 4, 1.0, 0.5)
        assert sample_steady_state(cov, 0, 1).shape == (0, 4)

    def test_zero_noise(self):
        _, _, cov = setup("path", 4, 0.0, 0.5)
        assert not np.any(sample_steady_state(cov, 10, 1))

    def test_two_nodes_perfectly_anticorrelated(self):
        _, _, cov = setup("path", 2, 2.0, 0.0)
        draws = sample_steady_state(cov, 10**6, 3)
        assert np.corrcoef(draws.T)[0, 1] == pytest.approx(-1.0, abs=1e-3)

    def test_covariance_of_draws(self):
        _, _, cov = setup("pcycle", 7, 1.5, 0.6, p=2)
        N = 10**6
        draws = sample_steady_state(cov, N, 4)
        emp = draws.T @ draws / N
        s = cov.sigma
        se = np.sqrt((np.outer(np.diag(s), np.diag(s)) + s**2) / N)
        assert np.all(np.abs(emp - s) < 5 * se)

    def test_deterministic(self):
        _, _, cov = setup("path", 5, 1.0, 0.5)
        np.testing.assert_array_equal(sample_steady_state(cov, 50, 8), sample_steady_state(cov, 50, 8))


class TestConditionalOracle:
    P = RiskParams(0.1, 0.1)

    def test_no_failures_is_marginal(self):
        _, _, cov = setup("path", 8, 1.0, 0.5)
        sc = FailureScenario()
        deltas = {j: 0.3 for j in range(1, 9)}
        est = conditional_exceedance_oracle(cov, sc, 0.1, deltas, count=200_000, seed=2)
        for j, e in est.items():
            exact = exceedance_probability(conditional_stats(cov, j, sc), 0.1, 0.3)
            assert abs(e.probability - exact) < 3 * math.sqrt(exact * (1 - exact) / e.accepted)
            assert e.acceptance_rate == 1.0

    def _path_case(self):
        s = spectral(laplacian(build_graph("path", 20)))
        cov = steady_state_covariance(s, NoiseDelayConfig(4.0, 0.05))
        return cov, FailureScenario.uniform([6, 14], 2.0)

    def test_root_gives_epsilon(self):
        cov, sc = self._path_case()
        j = 2
        r = cascading_risk(conditional_stats(cov, j, sc), self.P)
        est = conditional_risk_oracle(cov, j, sc, self.P, r.value, count=400_000, seed=6)
        assert abs(est.probability - 0.1) < 3 * math.sqrt(0.09 / est.accepted)

    def test_band_halving_insensitive(self):
        cov, sc = self._path_case()
        j = 15
        r = cascading_risk(conditional_stats(cov, j, sc), self.P)
        band = 0.05 * min(cov.std()[8:12])
        wide = conditional_risk_oracle(cov, j, sc, self.P, r.value, band=band, count=400_000, seed=1)
        narrow = conditional_risk_oracle(cov, j, sc, self.P, r.value, band=band / 2, count=800_000, seed=2)
        assert abs(wide.probability - narrow.probability) < 3 * wide.std_error

    def test_sequential_and_brute_agree(self):
        _, _, cov = setup("pcycle", 6, 1.0, 0.5, p=1)
        sc = FailureScenario((2, 4), (0.5, -0.4))
        band = 0.1
        deltas = {1: 0.0, 5: 0.2}
        seq = conditional_exceedance_oracle(cov, sc, 0.1, deltas, band=band, count=300_000, seed=3)
        brute = conditional_exceedance_oracle(cov, sc, 0.1, deltas, band=band, count=3_000_000, seed=4, method="brute")
        for j in deltas:
            assert abs(seq[j].probability - brute[j].probability) < 3 * math.hypot(seq[j].std_error, brute[j].std_error)
        assert seq[1].acceptance_rate == pytest.approx(brute[1].acceptance_rate, rel=0.1)

    def test_insufficient_acceptance(self):
        cov, sc = self._path_case()
        with pytest.raises(InsufficientAcceptanceError) as info:
            conditional_risk_oracle(cov, 1, sc, self.P, 0.5, band=1e-4, count=20_000, seed=0)
        assert info.value.accepted < 1000
        assert 0.0 <= info.value.acceptance_rate < 1e-3

    def test_failed_agent_cannot_be_queried(self):
        cov, sc = self._path_case()
        with pytest.raises(ParameterError):
            conditional_risk_oracle(cov, 14, sc, self.P, 0.5, count=20_000)
