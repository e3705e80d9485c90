"""
Who goes next
=============

Starting from a healthy network, repeatedly mark the riskiest agent as
failed (at observable 2) and recompute. The order in which agents are picked
is the most vulnerable sequence.
"""

from delayrisk import (
    NoiseDelayConfig,
    RiskParams,
    build_graph,
    laplacian,
    most_vulnerable_sequence,
    spectral,
    steady_state_covariance,
)

params = RiskParams(c=0.1, epsilon=0.1)

for kind, p in [("path", None), ("pcycle", 1), ("pcycle", 5), ("complete", None)]:
    s = spectral(laplacian(build_graph(kind, 20, p=p)))
    cov = steady_state_covariance(s, NoiseDelayConfig(4.0, 0.05))
    seq = most_vulnerable_sequence(cov, params, y_f_value=2.0, length=8)
    risks = ", ".join(f"{r.value:.3f}" for r in seq.risks)
    print(f"{kind:>8} {'' if p is None else p!s:>2}: order {seq.order}\n{'':12}risks {risks}")

# Every ordering of the complete graph is equally vulnerable, so the lowest
# label wins each tie and the sequence reads 1, 2, 3, ...
