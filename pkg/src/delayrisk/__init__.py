"""Value-at-risk of cascading fluctuations in noisy time-delay consensus networks."""

from .errors import *  # noqa: F401,F403
from .graphs import (
    SpectralData,
    WeightedGraph,
    build_graph,
    laplacian,
    max_stable_delay,
    read_edge_list,
    spectral,
    write_edge_list,
)
from .risk import (
    RiskParams,
    RiskProfile,
    RiskValue,
    VulnerableSequence,
    cascading_risk,
    exceedance_probability,
    most_vulnerable_sequence,
    risk_profile,
    single_agent_risk,
)
from .simulation import (
    EmpiricalStats,
    OracleEstimate,
    SimConfig,
    conditional_exceedance_oracle,
    conditional_risk_oracle,
    sample_steady_state,
    simulate,
)
from .stats import (
    ConditionalStats,
    FailureScenario,
    NoiseDelayConfig,
    SteadyStateCovariance,
    conditional_stats,
    conditional_stats_all,
    correlation,
    incremental_update,
    steady_state_covariance,
)

__version__ = "0.1.0"
