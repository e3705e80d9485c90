"""Steady-state Gaussian statistics of the centered consensus observables.

The observable vector ``y = M x`` (deviation from the network average) of the
delayed noisy consensus network settles to ``N(0, Sigma)``. This module builds
``Sigma`` from the Laplacian spectrum, conditions it on agents observed in a
failure state, and updates the conditional law when one more agent fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    AgentIndexError,
    DegenerateError,
    DegenerateUpdateError,
    NumericalError,
    ParameterError,
    SingularConditioningError,
    StabilityError,
)
from .graphs import SpectralData, max_stable_delay

COND_LIMIT = 1e12
CLAMP_WINDOW = 1e-12


@dataclass(frozen=True)
class NoiseDelayConfig:
    """Noise diffusion coefficient ``b`` and communication delay ``tau``."""

    b: float
    tau: float

    def __post_init__(self):
        if not math.isfinite(self.b):
            raise ParameterError(f"b must be finite, got {self.b}")
        if not (self.tau >= 0.0 and math.isfinite(self.tau)):
            raise ParameterError(f"tau must be a finite non-negative number, got {self.tau}")


@dataclass(frozen=True)
class SteadyStateCovariance:
    sigma: np.ndarray
    b: float
    tau: float

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    def variance(self, j: int) -> float:
        return float(self.sigma[j - 1, j - 1])

    def std(self) -> np.ndarray:
        """Per-agent steady-state standard deviations."""
        return np.sqrt(np.clip(np.diag(self.sigma), 0.0, None))


@dataclass(frozen=True)
class FailureScenario:
    """Failed agents (1-based, strictly increasing) and their observed values."""

    indices: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        vals = tuple(float(v) for v in self.values)
        if len(idx) != len(vals):
            raise ParameterError(f"{len(idx)} failed agents but {len(vals)} failure values")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ParameterError(f"failed agent indices must be strictly increasing, got {idx}")
        if any(i < 1 for i in idx):
            raise AgentIndexError(f"agent labels start at 1, got {idx}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, indices, value) -> FailureScenario:
        indices = sorted(int(i) for i in indices)
        return cls(tuple(indices), tuple(float(value) for _ in indices))

    @property
    def m(self) -> int:
        return len(self.indices)

    def __contains__(self, j) -> bool:
        return j in self.indices

    def with_failure(self, k: int, value: float) -> FailureScenario:
        """Scenario enlarged by agent ``k`` failing with observable ``value``."""
        if k in self.indices:
            raise AgentIndexError(f"agent {k} has already failed")
        pairs = sorted(zip(self.indices + (k,), self.values + (value,)))
        return FailureScenario(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def check(self, n: int, c: float | None = None) -> None:
        """Raise if labels exceed ``n``, ``m >= n`` or a value is not beyond ``c``."""
        if self.m >= n:
            raise ParameterError(f"{self.m} failures leave no surviving agent among {n}")
        if self.indices and self.indices[-1] > n:
            raise AgentIndexError(f"failed agent {self.indices[-1]} outside 1..{n}")
        if c is not None:
            bad = [v for v in self.values if not abs(v) > c]
            if bad:
                raise ParameterError(f"failure values {bad} do not exceed the tolerance c={c}")


@dataclass(frozen=True)
class ConditionalStats:
    """Conditional mean and variance of one agent's observable."""

    mu_tilde: float
    sigma_tilde_sq: float

    @property
    def sigma_tilde(self) -> float:
        return math.sqrt(self.sigma_tilde_sq)


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def mode_weights(lambdas, tau: float) -> np.ndarray:
    """Stationary variance factor ``cos(l tau) / (l (1 - sin(l tau)))`` per non-zero mode."""
    lam = np.asarray(lambdas, dtype=float)
    return np.cos(lam * tau) / (lam * (1.0 - np.sin(lam * tau)))


def steady_state_covariance(s: SpectralData, cfg: NoiseDelayConfig) -> SteadyStateCovariance:
    """Covariance of the stationary observables.

    ``sigma_ij = b^2/2 * sum_{k>=2} w_k (m_i . q_k)(m_j . q_k)`` with
    ``w_k = cos(l_k tau) / (l_k (1 - sin(l_k tau)))`` and ``m_i`` the columns
    of the centering matrix. Terms are accumulated in ascending ``k``.
    """
    n = s.n
    if n < 2:
        raise DegenerateError("a single agent has no observable fluctuations")
    if s.lambdas[1] <= 0.0:
        raise DegenerateError("second Laplacian eigenvalue is zero; graph is disconnected")
    bound = max_stable_delay(s)
    if not cfg.tau < bound:
        raise StabilityError(f"tau={cfg.tau} violates the stability bound tau < {bound}")
    weights = mode_weights(s.lambdas[1:], cfg.tau)
    projected = centering_matrix(n) @ s.Q[:, 1:]
    sigma = np.zeros((n, n))
    for k in range(n - 1):
        sigma += weights[k] * np.outer(projected[:, k], projected[:, k])
    sigma *= 0.5 * cfg.b * cfg.b
    sigma.setflags(write=False)
    return SteadyStateCovariance(sigma, float(cfg.b), float(cfg.tau))


def correlation(cov: SteadyStateCovariance, i: int, j: int) -> float:
    """Correlation coefficient of agents ``i`` and ``j``; independent of ``b``."""
    _check_agent(cov.n, i)
    _check_agent(cov.n, j)
    si, sj = cov.sigma[i - 1, i - 1], cov.sigma[j - 1, j - 1]
    if not (si > 0.0 and sj > 0.0):
        raise DegenerateError(f"agents {i}, {j} have zero variance; correlation undefined")
    if i == j:
        return 1.0
    rho = cov.sigma[i - 1, j - 1] / math.sqrt(si * sj)
    return float(min(1.0, max(-1.0, rho)))


def _check_agent(n, j):
    if not (isinstance(j, (int, np.integer)) and 1 <= j <= n):
        raise AgentIndexError(f"agent {j!r} outside 1..{n}")


class _FailedBlock:
    """Cholesky factor of the failed-agent covariance block with a condition guard."""

    def __init__(self, sigma, scenario: FailureScenario):
        self.idx = np.array(scenario.indices, dtype=int) - 1
        self.y = np.array(scenario.values, dtype=float)
        self.sigma = sigma
        if len(self.idx) == 0:
            self.factor = None
            return
        block = sigma[np.ix_(self.idx, self.idx)]
        cond = np.linalg.cond(block) if np.any(block) else math.inf
        if not cond < COND_LIMIT:
            raise SingularConditioningError(
                f"failed-agent covariance block has condition number {cond:.3e}", cond
            )
        try:
            self.factor = cho_factor(block, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularConditioningError(f"failed-agent block is not positive definite: {exc}", cond)

    def cross(self, j):
        """Row ``Sigma[j, I]`` for 0-based ``j``."""
        return self.sigma[j, self.idx]

    def solve(self, rhs):
        return cho_solve(self.factor, rhs)

    def stats(self, j) -> tuple[float, float]:
        if self.factor is None:
            return 0.0, float(self.sigma[j, j])
        s12 = self.cross(j)
        mu = float(s12 @ self.solve(self.y))
        var = float(self.sigma[j, j] - s12 @ self.solve(s12))
        return mu, var

    def cross_cov(self, j, k) -> float:
        if self.factor is None:
            return float(self.sigma[j, k])
        return float(self.sigma[j, k] - self.cross(j) @ self.solve(self.cross(k)))


def _clamp_variance(var, scale):
    if var >= 0.0:
        return var
    if var >= -CLAMP_WINDOW * max(1.0, scale):
        return 0.0
    raise NumericalError(f"conditional variance {var:.3e} is negative beyond round-off")


def conditional_stats(cov: SteadyStateCovariance, j: int, scenario: FailureScenario) -> ConditionalStats:
    """Law of agent ``j``'s observable given the failed agents' observed values.

    ``mu = S12 S22^{-1} y_f`` and ``var = S11 - S12 S22^{-1} S21`` with the
    blocks taken from ``Sigma``. An empty scenario yields ``(0, sigma_j^2)``.
    """
    _check_agent(cov.n, j)
    scenario.check(cov.n)
    if j in scenario:
        raise AgentIndexError(f"agent {j} is one of the failed agents")
    mu, var = _FailedBlock(cov.sigma, scenario).stats(j - 1)
    return ConditionalStats(mu, _clamp_variance(var, cov.sigma[j - 1, j - 1]))


def conditional_stats_all(cov: SteadyStateCovariance, scenario: FailureScenario) -> dict[int, ConditionalStats]:
    """Conditional statistics of every surviving agent, sharing one factorisation."""
    scenario.check(cov.n)
    block = _FailedBlock(cov.sigma, scenario)
    out = {}
    for j in range(1, cov.n + 1):
        if j in scenario:
            continue
        mu, var = block.stats(j - 1)
        out[j] = ConditionalStats(mu, _clamp_variance(var, cov.sigma[j - 1, j - 1]))
    return out


def incremental_update(
    cov: SteadyStateCovariance, j: int, scenario: FailureScenario, k: int, y_fk: float
) -> ConditionalStats:
    """Conditional law of agent ``j`` after agent ``k`` also fails with value ``y_fk``.

    Uses only quantities conditioned on the old failure set::

        mu'  = mu_j - s_jk / s_k^2 * (mu_k - y_fk)
        var' = s_j^2 - s_jk^2 / s_k^2

    where ``s_jk`` is the conditional cross-covariance of ``j`` and ``k``.
    """
    _check_agent(cov.n, j)
    _check_agent(cov.n, k)
    scenario.check(cov.n)
    if j in scenario or k in scenario:
        raise AgentIndexError(f"agents {j} and {k} must both be outside the failed set")
    if j == k:
        raise AgentIndexError("the queried agent cannot be the newly failed agent")
    block = _FailedBlock(cov.sigma, scenario)
    mu_j, var_j = block.stats(j - 1)
    mu_k, var_k = block.stats(k - 1)
    s_jk = block.cross_cov(j - 1, k - 1)
    if not var_k > CLAMP_WINDOW * max(1.0, cov.sigma[k - 1, k - 1]):
        raise DegenerateUpdateError(
            f"agent {k} has conditional variance {var_k:.3e}; its failure value is already determined"
        )
    gain = s_jk / var_k
    mu = mu_j - gain * (mu_k - y_fk)
    var = var_j - s_jk * gain
    return ConditionalStats(mu, _clamp_variance(var, cov.sigma[j - 1, j - 1]))
