"""Commuter-coupled small-world epidemic simulation and rate fitting.

The package builds per-region residence networks joined by a daily
workplace network over active commuters, propagates a six-status epidemic
across them in two contact windows per day, fits a daily transmission
probability to observed hospital admissions, and sweeps network shortcut
probabilities to find structures consistent with the data.
"""

__version__ = "0.1.0"

from .epidemic import (  # noqa: F401
    DailyCounts,
    SimState,
    Status,
    TransitionThresholds,
    contagion_step,
    initial_state,
    progression_step,
    restore,
    simulate_day,
    simulate_horizon,
    snapshot,
)
from .inference import (  # noqa: F401
    BetaSeries,
    InferenceConfig,
    forward_loss,
    infer_beta_day,
    infer_beta_series,
)
from .sweep import SweepGrid, SweepResult, run_sweep  # noqa: F401
from .topology import (  # noqa: F401
    Graph,
    MetroTopology,
    NetworkParams,
    RegionSpec,
    active_work_network,
    build_metro,
    generate_newman_watts,
)
