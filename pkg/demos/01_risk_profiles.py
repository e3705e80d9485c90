"""
Risk profiles on three topologies
=================================

Twenty agents agree on a meeting time through a noisy consensus protocol
with a communication delay. Agents 9 to 12 have drifted to an observable of
2 (outside the tolerance band c). How far beyond the band could each of the
others be pushed, at 90% confidence?
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

noise = NoiseDelayConfig(b=4.0, tau=0.05)
params = RiskParams(c=0.1, epsilon=0.1)
failed = FailureScenario.uniform([9, 10, 11, 12], 2.0)

# The steady-state law of the observables is Gaussian with a covariance fixed
# by the Laplacian spectrum, the noise level and the delay.
profiles = {}
for label, kind, p in [("path", "path", None), ("2-cycle", "pcycle", 2), ("complete", "complete", None)]:
    s = spectral(laplacian(build_graph(kind, 20, p=p)))
    cov = steady_state_covariance(s, noise)
    profiles[label] = risk_profile(cov, failed, params).as_array()

print("agent " + "".join(f"{k:>11}" for k in profiles))
for j in range(20):
    print(f"{j + 1:5d} " + "".join(f"{v[j]:11.4f}" for v in profiles.values()))

# On the path the ends are the most exposed: they sit furthest from the
# averaging effect of their neighbours. On the complete graph every survivor
# carries the same risk.
path = profiles["path"]
print("\npath maximisers:", np.flatnonzero(np.isclose(path, path.max(), rtol=0, atol=1e-9)) + 1)
print("complete-graph spread:", np.ptp(np.delete(profiles["complete"], [8, 9, 10, 11])))
