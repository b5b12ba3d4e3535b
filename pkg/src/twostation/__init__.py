"""Two-station service system: simulation and likelihood-based estimation of demand,
service-value tail and switching cost from workload jumps."""

from .estimator import EstimationResult, EstimatorOptions, estimate, lower_bound_c
from .likelihood import (
    CaseKind,
    LogLikelihoodReport,
    classify_case,
    density_total_mass,
    log_density,
    log_likelihood,
)
from .simulator import (
    EffectiveArrival,
    Observations,
    ServerConfig,
    SimRunOutput,
    WorkloadState,
    reconstruct_states,
    simulate_multiserver_throughput,
    simulate_run,
    workload_after,
)
from .values import (
    Decision,
    ModelParams,
    ParetoValue,
    ServiceDistribution,
    ValueDistribution,
    decide,
    sample_service,
    sample_value,
)

__version__ = "0.1.0"
