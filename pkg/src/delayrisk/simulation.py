"""Monte Carlo oracles for the analytical pipeline.

Two independent routes are provided:

* :func:`simulate` integrates the delayed stochastic consensus dynamics
  ``dx = -L x(t - tau) dt + b dW`` with Euler-Maruyama and estimates the
  stationary covariance of ``y = M x`` with batch-means standard errors.
* :func:`sample_steady_state` and :func:`conditional_exceedance_oracle` draw
  from ``N(0, Sigma)`` directly and estimate conditional exceedance
  probabilities by rejection inside a band around the failure values.

Seeding rule: trial ``t`` of a simulation with seed ``s`` draws from
``PCG64(SeedSequence(s, spawn_key=(t,)))``, the same stream
``SeedSequence(s).spawn(...)[t]`` yields. Trials run in fixed blocks of
``SimConfig.block_trials`` and are reduced in ascending trial order, so the
result does not depend on ``workers``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtr
from scipy.stats import truncnorm

from .errors import (
    DivergenceError,
    InsufficientAcceptanceError,
    NumericalError,
    ParameterError,
    StabilityError,
)
from .graphs import WeightedGraph, laplacian, max_stable_delay, spectral
from .stats import FailureScenario, NoiseDelayConfig, SteadyStateCovariance

DIVERGENCE_LIMIT = 1e8
NOISE_CHUNK = 2048
MIN_ACCEPTED = 1000


@dataclass(frozen=True)
class SimConfig:
    """Discretisation and Monte Carlo settings (time in the model's units).

    ``initial_history`` is the constant state on ``[-tau, 0]``: ``None`` for
    zeros, a scalar, or a length-``n`` vector.
    """

    dt: float
    horizon: float
    burn_in: float
    trials: int = 1
    seed: int = 0
    initial_history: object = None
    batches: int = 20
    block_trials: int = 50
    workers: int = 1
    trajectory_dir: str | None = None

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0 and self.burn_in >= 0):
            raise ParameterError("dt and horizon must be positive and burn_in non-negative")
        if not self.burn_in < self.horizon:
            raise ParameterError(f"burn_in={self.burn_in} must be below horizon={self.horizon}")
        if self.trials < 1 or self.batches < 2 or self.block_trials < 1 or self.workers < 1:
            raise ParameterError("trials, block_trials and workers must be >= 1 and batches >= 2")


@dataclass(frozen=True)
class EmpiricalStats:
    """Empirical moments of the observables after burn-in.

    ``cov_se`` and ``mean_se`` are batch-means standard errors from
    ``batch_covs`` (one covariance per batch).
    """

    cov_hat: np.ndarray
    mean_hat: np.ndarray
    samples: int
    cov_se: np.ndarray
    mean_se: np.ndarray
    batch_covs: np.ndarray


def trial_generator(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))


def _check_sim(L_max, cfg: NoiseDelayConfig, sim: SimConfig, bound, check_stability=True):
    if check_stability and not cfg.tau < bound:
        raise StabilityError(f"tau={cfg.tau} violates the stability bound tau < {bound}")
    problems = []
    if cfg.tau > 0 and sim.dt > cfg.tau / 20 * (1 + 1e-12):
        problems.append(f"dt={sim.dt} exceeds tau/20={cfg.tau / 20}")
    if not sim.dt * L_max < 0.1:
        problems.append(f"dt*lambda_max={sim.dt * L_max:.4g} is not below 0.1")
    if problems:
        raise ParameterError("; ".join(problems))


class _Plan:
    """Step counts and sample-to-batch bookkeeping shared by all trial blocks."""

    def __init__(self, cfg: NoiseDelayConfig, sim: SimConfig):
        dt = sim.dt
        self.delay_steps = int(round(cfg.tau / dt))
        self.n_steps = int(round(sim.horizon / dt))
        self.burn_steps = int(round(sim.burn_in / dt))
        self.stride = max(1, int(round(0.1 * cfg.tau / dt)))
        self.n_samples = (self.n_steps - self.burn_steps) // self.stride
        if self.n_samples < 1:
            raise ParameterError("no post-burn-in samples; lengthen the horizon")
        # time blocks per trial so that there are at least `batches` units overall
        self.blocks_per_trial = max(1, math.ceil(sim.batches / sim.trials))
        if self.blocks_per_trial > self.n_samples:
            raise ParameterError("too few samples per trial to form the requested batches")
        edges = np.cumsum([len(a) for a in np.array_split(np.arange(self.n_samples), self.blocks_per_trial)])
        self.block_edges = np.concatenate([[0], edges])

    def sample_index(self, step):
        """Sample number of a step (1-based step), or -1 if the step is not sampled."""
        offset = step - self.burn_steps
        if offset <= 0 or offset % self.stride:
            return -1
        idx = offset // self.stride - 1
        return idx if idx < self.n_samples else -1


class _Accumulator:
    """Per-(trial, time block) running sums of sampled observables."""

    def __init__(self, plan, trials, n, sim):
        self.plan = plan
        self.trials = trials
        self.dt = sim.dt
        B, nb = len(trials), plan.blocks_per_trial
        self.counts = np.zeros((B, nb), dtype=np.int64)
        self.s1 = np.zeros((B, nb, n))
        self.s2 = np.zeros((B, nb, n, n))
        self.files = self.writers = None
        if sim.trajectory_dir is not None:
            out = Path(sim.trajectory_dir)
            out.mkdir(parents=True, exist_ok=True)
            self.files = [open(out / f"trial_{t:05d}.csv", "w", newline="", encoding="utf-8") for t in trials]
            self.writers = [csv.writer(f) for f in self.files]
            for w in self.writers:
                w.writerow(["t"] + [f"y_{i}" for i in range(1, n + 1)])

    def close(self):
        for f in self.files or ():
            f.close()

    def add(self, first_step, states):
        """Record ``states[:, i]`` = state after step ``first_step + i``, shape (B, S, n)."""
        plan = self.plan
        last = states[:, -1]
        if not np.all(np.abs(last) <= DIVERGENCE_LIMIT):
            bad = ~(np.abs(states).max(axis=2) <= DIVERGENCE_LIMIT)
            first = np.argwhere(bad.any(axis=0))[0][0]
            b = np.argmax(bad[:, first])
            step, trial = first_step + int(first), self.trials[int(b)]
            raise DivergenceError(f"state exceeded {DIVERGENCE_LIMIT:g} at step {step} of trial {trial}", step, trial)
        steps = first_step + np.arange(states.shape[1])
        if self.writers is not None:
            for i in np.flatnonzero(steps % plan.stride == 0):
                y = states[:, i] - states[:, i].mean(axis=1, keepdims=True)
                t = repr(float(steps[i] * self.dt))
                for w, row in zip(self.writers, y):
                    w.writerow([t] + [repr(float(v)) for v in row])
        offset = steps - plan.burn_steps
        sampled = (offset > 0) & (offset % plan.stride == 0) & (offset // plan.stride <= plan.n_samples)
        rows = np.flatnonzero(sampled)
        if len(rows) == 0:
            return
        units = np.searchsorted(plan.block_edges, offset[rows] // plan.stride - 1, side="right") - 1
        ys = states[:, rows]
        ys = ys - ys.mean(axis=2, keepdims=True)
        for u in np.unique(units):
            block = ys[:, units == u]
            self.counts[:, u] += block.shape[1]
            self.s1[:, u] += block.sum(axis=1)
            self.s2[:, u] += np.einsum("bri,brj->bij", block, block)


def _noise(gens, size, n):
    """Standard normals of shape (trials, size, n); trial ``b`` from ``gens[b]``."""
    out = np.empty((len(gens), size, n))
    for b, g in enumerate(gens):
        g.standard_normal(out=out[b])
    return out


def _run_block(L, cfg, sim, plan, phi, trials):
    """Integrate one block of trials; returns the per-unit sums.

    Arrays are trial-major, shape (trials, steps, n). With delay ``D >= 1``
    steps, the states after steps ``k+1 .. k+D+1``
    depend only on states up to ``k``, so a whole window of ``D + 1`` Euler
    steps is advanced with one matrix product and a running sum along time.
    Without delay the scheme is a first-order recursion per Laplacian mode and
    is run through ``lfilter`` in the eigenbasis.
    """
    n = L.shape[0]
    B = len(trials)
    gens = [trial_generator(sim.seed, t) for t in trials]
    D = plan.delay_steps
    drift = sim.dt * L
    kick = cfg.b * math.sqrt(sim.dt)
    acc = _Accumulator(plan, trials, n, sim)
    try:
        if D == 0:
            lam, Q = np.linalg.eigh(L)
            pole = 1.0 - sim.dt * lam
            z = np.broadcast_to(phi @ Q, (B, n)).copy()
            for start in range(0, plan.n_steps, NOISE_CHUNK):
                size = min(NOISE_CHUNK, plan.n_steps - start)
                forcing = kick * (_noise(gens, size, n) @ Q)
                # z[k+1] = pole * z[k] + forcing[k], per mode and trial
                zs = np.empty_like(forcing)
                for mode in range(n):
                    zs[:, :, mode], _ = lfilter(
                        [1.0], [1.0, -pole[mode]], forcing[:, :, mode], axis=1,
                        zi=(pole[mode] * z[:, mode])[:, None],
                    )
                z = zs[:, -1]
                acc.add(start + 1, zs @ Q.T)
        else:
            window = np.empty((B, D + 1, n))
            window[:] = phi
            step = 0
            while step < plan.n_steps:
                size = min(D + 1, plan.n_steps - step)
                inc = _noise(gens, size, n)
                inc *= kick
                inc -= (window[:, :size].reshape(-1, n) @ drift).reshape(B, size, n)
                inc[:, 0] += window[:, -1]
                new = np.cumsum(inc, axis=1, out=inc)
                if size == D + 1:
                    window = new
                else:
                    window = np.concatenate([window[:, size:], new], axis=1)
                acc.add(step + 1, new)
                step += size
    finally:
        acc.close()
    return acc.counts, acc.s1, acc.s2


def _moments(count, s1, s2):
    mean = s1 / count
    return mean, s2 / count - np.outer(mean, mean)


def simulate(
    g: WeightedGraph, cfg: NoiseDelayConfig, sim: SimConfig, check_stability: bool = True
) -> EmpiricalStats:
    """Euler-Maruyama simulation of the delayed consensus network.

    ``x[k+1] = x[k] - dt L x[k - D] + b sqrt(dt) g[k]`` with ``D = round(tau/dt)``
    read from a ring buffer. Observables are sampled every
    ``max(1, round(0.1 tau / dt))`` steps after burn-in.

    ``check_stability=False`` lets a delay at or past the stability bound
    through, for probing divergence; the divergence detector still applies.
    """
    L = laplacian(g)
    s = spectral(L)
    _check_sim(s.lambda_max, cfg, sim, max_stable_delay(s), check_stability)
    plan = _Plan(cfg, sim)
    n = g.n
    phi = np.zeros(n) if sim.initial_history is None else np.broadcast_to(
        np.asarray(sim.initial_history, dtype=float), (n,)
    )

    blocks = [list(range(a, min(a + sim.block_trials, sim.trials))) for a in range(0, sim.trials, sim.block_trials)]
    run = lambda trials: _run_block(L, cfg, sim, plan, phi, trials)  # noqa: E731
    if sim.workers > 1:
        with ThreadPoolExecutor(sim.workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]

    # units ordered by (trial, time block), reduced in that order
    counts = np.concatenate([r[0] for r in results]).reshape(-1)
    s1 = np.concatenate([r[1] for r in results]).reshape(-1, n)
    s2 = np.concatenate([r[2] for r in results]).reshape(-1, n, n)

    total = int(counts.sum())
    mean_hat, cov_hat = _moments(total, s1.sum(axis=0), s2.sum(axis=0))
    batch_means, batch_covs = [], []
    for units in np.array_split(np.arange(len(counts)), sim.batches):
        m, c = _moments(counts[units].sum(), s1[units].sum(axis=0), s2[units].sum(axis=0))
        batch_means.append(m)
        batch_covs.append(c)
    batch_means = np.array(batch_means)
    batch_covs = np.array(batch_covs)
    root = math.sqrt(sim.batches)
    cov_se = batch_covs.std(axis=0, ddof=1) / root
    mean_se = batch_means.std(axis=0, ddof=1) / root
    cov_hat = 0.5 * (cov_hat + cov_hat.T)
    return EmpiricalStats(cov_hat, mean_hat, total, cov_se, mean_se, batch_covs)


def _factor(cov: SteadyStateCovariance):
    """Spectral factor ``F`` with ``F F^T = Sigma``, dropping the null direction(s)."""
    w, V = np.linalg.eigh(cov.sigma)
    top = max(w.max(), 0.0)
    if w.min() < -1e-9 * max(top, 1e-300) and top > 0:
        raise NumericalError(f"covariance has eigenvalue {w.min():.3e} below round-off")
    keep = w > 1e-12 * top
    return V[:, keep] * np.sqrt(w[keep])


def sample_steady_state(cov: SteadyStateCovariance, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws from ``N(0, Sigma)``, one per row."""
    n = cov.n
    if count < 0:
        raise ParameterError(f"count must be non-negative, got {count}")
    F = _factor(cov)
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.empty((0, n))
    if F.shape[1] == 0:
        return np.zeros((count, n))
    return rng.standard_normal((count, F.shape[1])) @ F.T


@dataclass(frozen=True)
class OracleEstimate:
    """Rejection estimate of a conditional exceedance probability."""

    probability: float
    std_error: float
    accepted: int
    acceptance_rate: float
    delta: float


def default_band(cov: SteadyStateCovariance, scenario: FailureScenario) -> float:
    return 0.05 * float(min(cov.std()[i - 1] for i in scenario.indices))


def _accepted_samples(cov, scenario, band, count, seed, method, chunk=1_000_000):
    """Draws of ``N(0, Sigma)`` whose failed coordinates all fall within ``band``.

    ``method="brute"`` samples the full vector and rejects. ``"sequential"``
    (default) rotates the latent normal vector so that the failed coordinates
    form a lower-triangular map of the first ``m`` latent components, samples
    the first of them directly inside its band (its band probability is known
    exactly), rejects on the remaining ones one at a time and completes the
    survivors with fresh latent draws. Both produce exactly the banded law;
    ``count`` is the number of candidates considered and the returned rate is
    the fraction of unconstrained draws that would be accepted.
    """
    F = _factor(cov)
    rng = np.random.default_rng(seed)
    idx = np.array(scenario.indices) - 1
    y_f = np.array(scenario.values)
    r = F.shape[1]
    out = []
    if method == "brute" or scenario.m == 0:
        for start in range(0, count, chunk):
            size = min(chunk, count - start)
            y = rng.standard_normal((size, r)) @ F.T
            if scenario.m:
                y = y[np.all(np.abs(y[:, idx] - y_f) < band, axis=1)]
            out.append(y)
        ys = np.concatenate(out) if out else np.empty((0, cov.n))
        return ys, len(ys) / count if count else 0.0
    if method != "sequential":
        raise ParameterError(f"unknown sampling method {method!r}")
    m = scenario.m
    if r < m:
        raise NumericalError("failed agents' covariance block is rank deficient")
    W, R = np.linalg.qr(F[idx].T, mode="complete")
    lower = R[:m, :m].T
    G = F @ W
    d0 = lower[0, 0]
    if d0 == 0.0:
        raise NumericalError(f"failed agent {scenario.indices[0]} has zero variance")
    a, b = sorted(((y_f[0] - band) / d0, (y_f[0] + band) / d0))
    first_mass = float(ndtr(b) - ndtr(a))
    for start in range(0, count, chunk):
        size = min(chunk, count - start)
        w = np.empty((size, r))
        w[:, 0] = truncnorm.rvs(a, b, size=size, random_state=rng)
        alive = np.arange(size)
        for q in range(1, m):
            w[alive, q] = rng.standard_normal(len(alive))
            yq = w[alive, : q + 1] @ lower[q, : q + 1]
            alive = alive[np.abs(yq - y_f[q]) < band]
        if r > m:
            w[alive, m:] = rng.standard_normal((len(alive), r - m))
        out.append(w[alive] @ G.T)
    ys = np.concatenate(out)
    return ys, first_mass * len(ys) / count


def conditional_exceedance_oracle(
    cov: SteadyStateCovariance,
    scenario: FailureScenario,
    c: float,
    deltas: dict,
    band: float | None = None,
    count: int = 1_000_000,
    seed: int = 0,
    method: str = "sequential",
    min_accepted: int = MIN_ACCEPTED,
) -> dict[int, OracleEstimate]:
    """Banded-rejection estimates of ``P{|y_j| > delta_j + c}`` for several agents.

    All agents share one set of accepted samples. ``deltas`` maps agent label
    to the margin to test.
    """
    scenario.check(cov.n)
    for j in deltas:
        if j in scenario:
            raise ParameterError(f"agent {j} is a failed agent")
    if band is None:
        band = default_band(cov, scenario) if scenario.m else 0.0
    if scenario.m and not band > 0:
        raise ParameterError(f"band must be positive, got {band}")
    ys, rate = _accepted_samples(cov, scenario, band, count, seed, method)
    accepted = len(ys)
    if accepted < min_accepted:
        raise InsufficientAcceptanceError(
            f"only {accepted} of {count} candidates accepted (rate {rate:.3e}); "
            "raise count or widen the band",
            accepted,
            rate,
        )
    out = {}
    for j, delta in deltas.items():
        hits = np.abs(ys[:, j - 1]) > delta + c
        p_hat = float(hits.mean())
        se = math.sqrt(p_hat * (1.0 - p_hat) / accepted)
        out[j] = OracleEstimate(p_hat, se, accepted, rate, float(delta))
    return out


def conditional_risk_oracle(
    cov: SteadyStateCovariance,
    j: int,
    scenario: FailureScenario,
    p,
    delta: float,
    band: float | None = None,
    count: int = 1_000_000,
    seed: int = 0,
    method: str = "sequential",
) -> OracleEstimate:
    """Single-agent form of :func:`conditional_exceedance_oracle` using ``p.c``."""
    return conditional_exceedance_oracle(cov, scenario, p.c, {j: delta}, band, count, seed, method)[j]
