"""Value-at-risk of cascading large fluctuations.

For an agent whose conditional observable is ``N(mu, s^2)``, the risk is the
smallest margin ``delta >= 0`` such that the two-sided exceedance
``P{|y| > delta + c}`` drops to the confidence level ``epsilon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfinv

from .errors import ParameterError, SingularConditioningError
from .stats import (
    ConditionalStats,
    FailureScenario,
    SteadyStateCovariance,
    conditional_stats_all,
)

ZERO, POSITIVE, INFINITE = "zero", "positive", "infinite"
DELTA_MAX_FACTOR = 1e6
# finite risks closer than this (relative to max(1, |risk|)) count as tied
TIE_TOL = 1e-9
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class RiskParams:
    """Tolerance ``c``, confidence ``epsilon`` and an optional search ceiling.

    ``delta_max=None`` means ``1e6`` times the largest relevant standard
    deviation (filled in per call).
    """

    c: float
    epsilon: float
    delta_max: float | None = None

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ParameterError(f"c must be positive and finite, got {self.c}")
        if self.delta_max is not None and not (self.delta_max > 0.0 and math.isfinite(self.delta_max)):
            raise ParameterError(f"delta_max must be positive and finite, got {self.delta_max}")

    @property
    def iota(self) -> float:
        """``erfinv(1 - epsilon)``."""
        return float(erfinv(1.0 - self.epsilon))


@dataclass(frozen=True)
class RiskValue:
    value: float
    classification: str
    trigger: str | None = None

    @classmethod
    def zero(cls):
        return cls(0.0, ZERO)

    @classmethod
    def infinite(cls, trigger):
        return cls(math.inf, INFINITE, trigger)

    @property
    def is_inf(self) -> bool:
        return self.classification == INFINITE


@dataclass(frozen=True)
class RiskProfile:
    """Per-agent risks; ``values[j-1]`` is agent ``j``. Failed agents hold exact zeros."""

    values: tuple[RiskValue, ...]
    stats: dict = field(default_factory=dict)

    def as_array(self) -> np.ndarray:
        return np.array([r.value for r in self.values])


@dataclass(frozen=True)
class VulnerableSequence:
    order: tuple[int, ...]
    risks: tuple[RiskValue, ...]


def exceedance_probability(cs: ConditionalStats, c: float, delta: float) -> float:
    """``P{|y| > delta + c}`` for ``y ~ N(mu, s^2)``.

    Written with ``erfc`` so the far tail keeps full relative precision; a
    point mass (``s = 0``) gives the indicator ``|mu| > delta + c``.
    """
    mu, s = cs.mu_tilde, cs.sigma_tilde
    edge = delta + c
    if s == 0.0:
        return 1.0 if abs(mu) > edge else 0.0
    scale = SQRT2 * s
    return float(0.5 * (erfc((edge + mu) / scale) + erfc((edge - mu) / scale)))


def cascading_risk(cs: ConditionalStats, p: RiskParams, xtol: float = 1e-10) -> RiskValue:
    """Risk of a large fluctuation given the conditional law ``cs``.

    Zero when the exceedance at ``delta = 0`` is already at most ``epsilon``;
    otherwise the unique root of ``exceedance(delta) = epsilon``, found by
    bisection on a doubling bracket. A bracket that outgrows ``delta_max``
    yields an infinite risk.
    """
    eps, c = p.epsilon, p.c
    mu, s = cs.mu_tilde, cs.sigma_tilde
    if exceedance_probability(cs, c, 0.0) <= eps:
        return RiskValue.zero()
    if s == 0.0:
        # point mass: exceedance is 1 up to |mu| - c and 0 beyond
        return RiskValue(abs(mu) - c, POSITIVE)

    delta_max = p.delta_max if p.delta_max is not None else DELTA_MAX_FACTOR * max(s, abs(mu), c)
    if exceedance_probability(cs, c, delta_max) >= eps:
        return RiskValue.infinite("delta_max")
    lo = 0.0
    hi = min(SQRT2 * s * p.iota + abs(mu) + c, delta_max)
    while exceedance_probability(cs, c, hi) >= eps:
        lo, hi = hi, min(2.0 * hi, delta_max)

    # keep halving past xtol until the residual is at round-off level, since a
    # steep exceedance curve (small s) amplifies a 1e-10 step in delta
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if exceedance_probability(cs, c, mid) >= eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol and abs(exceedance_probability(cs, c, 0.5 * (lo + hi)) - eps) <= 1e-13:
            break
    return RiskValue(0.5 * (lo + hi), POSITIVE)


def single_agent_risk(sigma_j: float, p: RiskParams) -> RiskValue:
    """Closed form for an unconditioned agent: ``sqrt(2) sigma_j iota - c`` or 0."""
    if sigma_j < 0.0:
        raise ParameterError(f"standard deviation must be non-negative, got {sigma_j}")
    if sigma_j == 0.0 or not sigma_j > p.c / (SQRT2 * p.iota):
        return RiskValue.zero()
    return RiskValue(SQRT2 * sigma_j * p.iota - p.c, POSITIVE)


def _with_default_ceiling(cov: SteadyStateCovariance, p: RiskParams) -> RiskParams:
    if p.delta_max is not None:
        return p
    ceiling = DELTA_MAX_FACTOR * max(float(cov.std().max()), p.c)
    return RiskParams(p.c, p.epsilon, ceiling)


def risk_profile(cov: SteadyStateCovariance, scenario: FailureScenario, p: RiskParams) -> RiskProfile:
    """Cascading risk of every agent given a failure scenario.

    Failed agents get exactly 0. If the failed-agent covariance block cannot
    be inverted every surviving agent is reported as infinite risk with the
    trigger ``"ill_posed"``. ``profile.stats`` maps agent -> ConditionalStats
    (absent when ill-posed).
    """
    scenario.check(cov.n, p.c)
    p = _with_default_ceiling(cov, p)
    try:
        stats = conditional_stats_all(cov, scenario)
    except SingularConditioningError:
        values = tuple(
            RiskValue.zero() if j in scenario else RiskValue.infinite("ill_posed")
            for j in range(1, cov.n + 1)
        )
        return RiskProfile(values, {})
    values = tuple(
        RiskValue.zero() if j in scenario else cascading_risk(stats[j], p)
        for j in range(1, cov.n + 1)
    )
    return RiskProfile(values, stats)


def _outranks(a: RiskValue, b: RiskValue) -> bool:
    if a.is_inf:
        return not b.is_inf
    return not b.is_inf and a.value > b.value + TIE_TOL * max(1.0, abs(b.value))


def most_vulnerable_sequence(
    cov: SteadyStateCovariance,
    p: RiskParams,
    y_f_value: float,
    length: int,
    seed_scenario: FailureScenario | None = None,
) -> VulnerableSequence:
    """Greedy ordering of agents by successive maximal cascading risk.

    At each step the surviving agent with the largest risk is selected and
    added to the failure set with observable ``y_f_value``. Infinite risk
    beats any finite risk; ties (within ``TIE_TOL``) go to the lowest label.
    """
    scenario = seed_scenario if seed_scenario is not None else FailureScenario()
    if not abs(y_f_value) > p.c:
        raise ParameterError(f"|y_f_value|={abs(y_f_value)} must exceed c={p.c}")
    if not isinstance(length, (int, np.integer)) or not 1 <= length <= cov.n - scenario.m:
        raise ParameterError(f"length must be in 1..{cov.n - scenario.m}, got {length!r}")
    order, risks = [], []
    for _ in range(length):
        profile = risk_profile(cov, scenario, p)
        best, best_risk = None, None
        for j in range(1, cov.n + 1):
            if j in scenario:
                continue
            r = profile.values[j - 1]
            if best is None or _outranks(r, best_risk):
                best, best_risk = j, r
        order.append(best)
        risks.append(best_risk)
        if len(order) < length:
            scenario = scenario.with_failure(best, y_f_value)
    return VulnerableSequence(tuple(order), tuple(risks))
