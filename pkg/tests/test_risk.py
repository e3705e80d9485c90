import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.stats import norm

from delayrisk import (
    ConditionalStats,
    FailureScenario,
    NoiseDelayConfig,
    ParameterError,
    RiskParams,
    SteadyStateCovariance,
    build_graph,
    cascading_risk,
    conditional_stats,
    exceedance_probability,
    laplacian,
    most_vulnerable_sequence,
    risk_profile,
    single_agent_risk,
    spectral,
    steady_state_covariance,
)

from .helpers import random_instance, random_stats

CASE = dict(c=0.1, y_f=2.0, b=4.0, tau=0.05, epsilon=0.1)


def case_cov(kind, p=None, n=20):
    s = spectral(laplacian(build_graph(kind, n, p=p)))
    return steady_state_covariance(s, NoiseDelayConfig(CASE["b"], CASE["tau"]))


def tail_oracle(mu, s, c, delta):
    """Two-sided exceedance through the normal survival function."""
    if s == 0:
        return float(abs(mu) > delta + c)
    return norm.sf((delta + c - mu) / s) + norm.cdf((-delta - c - mu) / s)


def erfinv_newton(y):
    x = 0.0
    for _ in range(100):
        step = (math.erf(x) - y) / (2 / math.sqrt(math.pi) * math.exp(-x * x))
        x -= step
        if abs(step) < 1e-16:
            break
    return x


def grid_root(mu, s, c, eps, step=1e-6, chunk=2_000_000):
    """First grid point where the exceedance drops below eps, by exhaustive scan."""
    start = 0
    while True:
        grid = (start + np.arange(chunk)) * step
        below = np.flatnonzero(norm.sf((grid + c - mu) / s) + norm.cdf((-grid - c - mu) / s) < eps)
        if len(below):
            return grid[below[0]]
        start += chunk


def brentq_risk(cs, c, eps):
    f = lambda d: tail_oracle(cs.mu_tilde, cs.sigma_tilde, c, d) - eps  # noqa: E731
    if f(0.0) <= 0:
        return 0.0
    hi = 1.0
    while f(hi) > 0:
        hi *= 2
    return brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-15)


class TestExceedance:
    def test_standard_normal_against_quadrature(self):
        dens = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)  # noqa: E731
        expected = 2 * quad(dens, 0.1, np.inf, epsabs=1e-14)[0]
        got = exceedance_probability(ConditionalStats(0.0, 1.0), 0.1, 0.0)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.9203, abs=5e-5)

    def test_tail_limit(self):
        assert exceedance_probability(ConditionalStats(0.0, 1.0), 0.1, 40.0) < 1e-300

    def test_point_mass(self):
        assert exceedance_probability(ConditionalStats(2.0, 0.0), 0.1, 1.0) == 1.0
        assert exceedance_probability(ConditionalStats(2.0, 0.0), 0.1, 2.0) == 0.0

    def test_matches_oracle_on_random_inputs(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            cs = random_stats(rng)
            c, d = rng.uniform(0.01, 1), rng.uniform(0, 5)
            assert exceedance_probability(cs, c, d) == pytest.approx(
                tail_oracle(cs.mu_tilde, cs.sigma_tilde, c, d), rel=1e-11, abs=1e-15
            )


class TestCascadingRisk:
    def test_symmetric_reference_value(self):
        p = RiskParams(0.1, 0.1)
        r = cascading_risk(ConditionalStats(0.0, 1.0), p)
        expected = math.sqrt(2) * erfinv_newton(0.9) - 0.1
        assert r.classification == "positive"
        assert r.value == pytest.approx(expected, abs=1e-10)
        assert r.value == pytest.approx(1.5449, abs=5e-5)
        g = grid_root(0.0, 1.0, 0.1, 0.1)
        assert g - 1e-6 <= r.value <= g

    def test_zero_branch_boundary(self):
        p = RiskParams(0.1, 0.1)
        edge = 0.1 / (math.sqrt(2) * erfinv_newton(0.9))
        assert cascading_risk(ConditionalStats(0.0, (0.999 * edge) ** 2), p).classification == "zero"
        assert cascading_risk(ConditionalStats(0.0, (1.001 * edge) ** 2), p).classification == "positive"

    def test_point_mass_limit(self):
        p = RiskParams(0.1, 0.1)
        assert cascading_risk(ConditionalStats(2.0, 0.0), p).value == pytest.approx(1.9, abs=1e-15)
        tiny = cascading_risk(ConditionalStats(2.0, 1e-24), p)
        assert tiny.value == pytest.approx(1.9, abs=1e-10)

    def test_invalid_epsilon(self):
        for eps in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ParameterError):
                RiskParams(0.1, eps)
        with pytest.raises(ParameterError):
            RiskParams(0.0, 0.1)

    def test_ceiling_gives_infinite(self):
        r = cascading_risk(ConditionalStats(0.0, 100.0), RiskParams(0.1, 0.1, delta_max=1.0))
        assert r.is_inf and r.trigger == "delta_max" and r.value == math.inf

    def test_root_validity_and_brentq_agreement(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            cs = random_stats(rng)
            p = RiskParams(float(rng.uniform(0.01, 0.5)), float(rng.uniform(0.01, 0.6)))
            r = cascading_risk(cs, p)
            ref = brentq_risk(cs, p.c, p.epsilon)
            assert r.value == pytest.approx(ref, abs=1e-9)
            if r.classification == "positive":
                assert abs(exceedance_probability(cs, p.c, r.value) - p.epsilon) <= 1e-9
            assert (r.classification == "zero") == (exceedance_probability(cs, p.c, 0.0) <= p.epsilon)

    def test_bisection_vs_grid_scan(self):
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 50:
            cs = ConditionalStats(float(rng.uniform(-1.5, 1.5)), float(rng.uniform(0.1, 0.8)) ** 2)
            p = RiskParams(0.1, float(rng.uniform(0.05, 0.5)))
            r = cascading_risk(cs, p)
            if r.classification != "positive":
                continue
            g = grid_root(cs.mu_tilde, cs.sigma_tilde, p.c, p.epsilon)
            assert abs(r.value - g) < 1e-5
            checked += 1

    def test_monotone_in_epsilon(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            cs = random_stats(rng)
            e1, e2 = sorted(rng.uniform(0.01, 0.99, size=2))
            assert cascading_risk(cs, RiskParams(0.1, e1)).value >= cascading_risk(cs, RiskParams(0.1, e2)).value

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
    def test_noise_scaling_symmetric_case(self, alpha):
        p = RiskParams(0.1, 0.1)
        base = cascading_risk(ConditionalStats(0.0, 1.3**2), p).value
        scaled = cascading_risk(ConditionalStats(0.0, (alpha * 1.3) ** 2), p).value
        assert scaled == pytest.approx(alpha * (base + 0.1) - 0.1, abs=1e-9)


class TestSingleAgent:
    def test_boundary_zero(self):
        p = RiskParams(0.1, 0.1)
        assert single_agent_risk(0.1 / (math.sqrt(2) * p.iota), p).classification == "zero"

    def test_reference(self):
        p = RiskParams(0.1, 0.1)
        assert single_agent_risk(1.0, p).value == pytest.approx(math.sqrt(2) * erfinv_newton(0.9) - 0.1, abs=1e-12)

    def test_zero_sigma(self):
        assert single_agent_risk(0.0, RiskParams(0.1, 0.1)).value == 0.0

    def test_matches_cascading(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            s = float(rng.uniform(0, 5))
            p = RiskParams(float(rng.uniform(0.01, 1)), float(rng.uniform(0.01, 0.9)))
            assert single_agent_risk(s, p).value == pytest.approx(
                cascading_risk(ConditionalStats(0.0, s * s), p).value, abs=1e-10
            )

    def test_uncorrelated_failures_reduce_to_single_agent(self):
        sigma = np.diag([2.5, 1.0, 1.0])
        sigma[1, 2] = sigma[2, 1] = 0.4
        cov = SteadyStateCovariance(sigma, 1.0, 0.0)
        p = RiskParams(0.1, 0.1)
        cs = conditional_stats(cov, 1, FailureScenario((2, 3), (1.0, 3.0)))
        assert cascading_risk(cs, p).value == pytest.approx(single_agent_risk(math.sqrt(2.5), p).value, abs=1e-10)


class TestProfile:
    def test_no_failures_equals_single_agent(self):
        cov = case_cov("path")
        p = RiskParams(0.1, 0.1)
        prof = risk_profile(cov, FailureScenario(), p)
        for j, r in enumerate(prof.values, 1):
            assert r.value == pytest.approx(single_agent_risk(math.sqrt(cov.variance(j)), p).value, abs=1e-10)

    def test_complete_graph_constant(self):
        cov = case_cov("complete")
        prof = risk_profile(cov, FailureScenario.uniform([9, 10, 11, 12], 2.0), RiskParams(0.1, 0.1))
        vals = prof.as_array()
        assert np.all(vals[8:12] == 0.0)
        alive = np.delete(vals, [8, 9, 10, 11])
        assert np.ptp(alive) < 1e-9
        cs = prof.stats[1]
        g = grid_root(cs.mu_tilde, cs.sigma_tilde, 0.1, 0.1)
        assert g - 1e-6 - 1e-9 <= alive[0] <= g + 1e-9

    def test_path_riskiest_at_ends(self):
        prof = risk_profile(case_cov("path"), FailureScenario.uniform([9, 10, 11, 12], 2.0), RiskParams(0.1, 0.1))
        vals = prof.as_array()
        top = set(np.flatnonzero(vals == vals.max()) + 1)
        assert top <= {1, 20} and vals[0] == pytest.approx(vals[19], abs=1e-9)

    def test_ill_posed_marks_infinite(self):
        sigma = np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0]])
        prof = risk_profile(SteadyStateCovariance(sigma, 1.0, 0.0), FailureScenario((1, 2), (1.0, 1.0)), RiskParams(0.1, 0.1))
        assert prof.values[0].value == 0.0 and prof.values[1].value == 0.0
        assert prof.values[2].is_inf and prof.values[2].trigger == "ill_posed"

    def test_failure_values_must_exceed_c(self):
        with pytest.raises(ParameterError):
            risk_profile(case_cov("path"), FailureScenario((3,), (0.05,)), RiskParams(0.1, 0.1))

    def test_random_profiles_match_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            cov, sc = random_instance(rng)
            p = RiskParams(0.1, float(rng.uniform(0.05, 0.5)))
            prof = risk_profile(cov, sc, p)
            for j in range(1, cov.n + 1):
                if j in sc:
                    assert prof.values[j - 1].value == 0.0
                    continue
                ref = brentq_risk(conditional_stats(cov, j, sc), p.c, p.epsilon)
                assert prof.values[j - 1].value == pytest.approx(ref, abs=1e-9)


class TestVulnerableSequence:
    def test_complete_graph_tie_break(self):
        seq = most_vulnerable_sequence(case_cov("complete"), RiskParams(0.1, 0.1), 2.0, 5)
        assert seq.order == (1, 2, 3, 4, 5)

    def test_length_one_is_argmax_sigma(self):
        cov = case_cov("path", n=11)
        seq = most_vulnerable_sequence(cov, RiskParams(0.1, 0.1), 2.0, 1)
        assert seq.order == (int(np.argmax(np.diag(cov.sigma))) + 1,)

    def test_path_starts_at_an_end(self):
        seq = most_vulnerable_sequence(case_cov("path"), RiskParams(0.1, 0.1), 2.0, 6)
        assert seq.order[0] in (1, 20)
        assert len(set(seq.order)) == 6

    @pytest.mark.parametrize("kind,p", [("path", None), ("pcycle", 2), ("pcycle", 5)])
    def test_matches_exhaustive_scan(self, kind, p):
        cov = case_cov(kind, p=p)
        params = RiskParams(0.1, 0.1)
        seq = most_vulnerable_sequence(cov, params, 2.0, 8)
        sc = FailureScenario()
        for step, agent in enumerate(seq.order):
            risks = {
                j: brentq_risk(conditional_stats(cov, j, sc), 0.1, 0.1)
                for j in range(1, 21)
                if j not in sc
            }
            best = max(risks.values())
            near = [j for j, r in risks.items() if r >= best - 1e-9]
            assert agent == min(near), f"step {step}"
            assert seq.risks[step].value == pytest.approx(best, abs=1e-9)
            sc = sc.with_failure(agent, 2.0)

    def test_seeded_scenario_excluded(self):
        seq = most_vulnerable_sequence(
            case_cov("path"), RiskParams(0.1, 0.1), 2.0, 3, FailureScenario.uniform([1, 20], 2.0)
        )
        assert not {1, 20} & set(seq.order)

    def test_infinite_outranks_finite(self):
        sigma = np.array([[1.0, 1.0, 0.5, 0.0], [1.0, 1.0, 0.5, 0.0], [0.5, 0.5, 1.0, 0.0], [0.0, 0.0, 0.0, 4.0]])
        cov = SteadyStateCovariance(sigma, 1.0, 0.0)
        seq = most_vulnerable_sequence(cov, RiskParams(0.1, 0.1), 2.0, 2, FailureScenario((1,), (2.0,)))
        # agent 4 has the largest finite risk first; then {1, 4} is fine but adding 2 would be singular
        assert seq.order[0] == 4

    def test_parameter_checks(self):
        cov = case_cov("path", n=5)
        with pytest.raises(ParameterError):
            most_vulnerable_sequence(cov, RiskParams(0.1, 0.1), 0.05, 2)
        with pytest.raises(ParameterError):
            most_vulnerable_sequence(cov, RiskParams(0.1, 0.1), 2.0, 6)
        assert len(most_vulnerable_sequence(cov, RiskParams(0.1, 0.1), 2.0, 5).order) == 5
