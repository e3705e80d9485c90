"""Shared random-instance generators for the test-suite."""

import numpy as np

from delayrisk import (
    ConditionalStats,
    FailureScenario,
    NoiseDelayConfig,
    WeightedGraph,
    laplacian,
    max_stable_delay,
    spectral,
    steady_state_covariance,
)


def random_connected_graph(rng, n_min=3, n_max=12, weighted=True):
    n = int(rng.integers(n_min, n_max + 1))
    order = rng.permutation(n) + 1
    edges = {}
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges[(min(a, b), max(a, b))] = 1.0
    for _ in range(int(rng.integers(0, n))):
        a, b = (int(v) for v in rng.integers(1, n + 1, size=2))
        if a != b:
            edges[(min(a, b), max(a, b))] = 1.0
    if weighted:
        edges = {e: float(rng.uniform(0.2, 2.0)) for e in edges}
    return WeightedGraph(n, tuple((i, j, w) for (i, j), w in edges.items()))


def random_instance(rng, n_max=12, c=0.1, min_survivors=3):
    """Random (covariance, scenario) pair with failure values beyond ``c``."""
    g = random_connected_graph(rng, max(min_survivors + 1, 4), n_max)
    s = spectral(laplacian(g))
    cfg = NoiseDelayConfig(float(rng.uniform(0.3, 4.0)), float(rng.uniform(0.0, 0.9)) * max_stable_delay(s))
    cov = steady_state_covariance(s, cfg)
    m = int(rng.integers(0, g.n - min_survivors + 1))
    idx = sorted(int(i) for i in rng.choice(np.arange(1, g.n + 1), size=m, replace=False))
    vals = [float(rng.choice([-1, 1]) * rng.uniform(c * 1.01, 4.0)) for _ in idx]
    return cov, FailureScenario(tuple(idx), tuple(vals))


def random_stats(rng):
    return ConditionalStats(float(rng.uniform(-3.0, 3.0)), float(rng.uniform(0.05, 2.0)) ** 2)
