"""
How many failures, and where
============================

The same network under a growing number of failed agents, first packed
together in the middle and then spread evenly around the ring.
"""

import numpy as np

from delayrisk import (
    FailureScenario,
    NoiseDelayConfig,
    RiskParams,
    build_graph,
    laplacian,
    risk_profile,
    spectral,
    steady_state_covariance,
)
from delayrisk.config import placement_indices

params = RiskParams(c=0.1, epsilon=0.1)


def covariance(kind, p=None, n=20):
    s = spectral(laplacian(build_graph(kind, n, p=p)))
    return steady_state_covariance(s, NoiseDelayConfig(4.0, 0.05))


for kind, p in [("pcycle", 2), ("complete", None)]:
    cov = covariance(kind, p)
    print(f"\n{kind}{'' if p is None else f' p={p}'}: mean / max survivor risk")
    for placement in ("contiguous", "spread"):
        cells = []
        for k in (0, 2, 4, 6, 8):
            sc = FailureScenario.uniform(placement_indices(20, k, placement), 2.0)
            alive = np.delete(risk_profile(cov, sc, params).as_array(), [i - 1 for i in sc.indices])
            cells.append(f"{alive.mean():6.3f}/{alive.max():6.3f}")
        print(f"  {placement:>10}: " + "  ".join(cells))

# On the complete graph the numbers do not depend on placement at all.
cov = covariance("complete")
a = risk_profile(cov, FailureScenario.uniform([1, 2, 3, 4], 2.0), params).as_array()[4:]
b = risk_profile(cov, FailureScenario.uniform([5, 9, 13, 17], 2.0), params).as_array()
b = np.delete(b, [4, 8, 12, 16])
print("\ncomplete graph, two placements of four failures differ by", np.abs(np.sort(a) - np.sort(b)).max())
