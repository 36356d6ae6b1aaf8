"""Pipeline glue: build the pieces a RunConfig describes and run them.

Shared by the command-line entry points and the sweep worker, so a sweep
cell with the same parameters and seed reproduces a standalone run
exactly.
"""
from __future__ import annotations

import numpy as np

from .config import RunConfig
from .epidemic import DailyCounts, HistoryRecorder, SimState, initial_state, simulate_horizon
from .inference import BetaSeries, infer_beta_series
from .rng import TAG_TOPOLOGY, derive_key
from .topology import MetroTopology, build_metro


def build_topology(config: RunConfig, p_residence: float | None = None,
                   p_work: float | None = None,
                   base_seed: int | None = None) -> MetroTopology:
    """Construct the metro networks, optionally overriding shortcut rates."""
    base = config.seed if base_seed is None else base_seed
    return build_metro(
        list(config.regions),
        (config.k_residence,
         config.p_residence if p_residence is None else p_residence),
        (config.k_work, config.p_work if p_work is None else p_work),
        seed=derive_key(base, TAG_TOPOLOGY),
    )


def build_state(config: RunConfig, topology: MetroTopology,
                base_seed: int | None = None) -> SimState:
    base = config.seed if base_seed is None else base_seed
    exposed = config.exposed_per_region
    if isinstance(exposed, tuple):
        exposed = list(exposed)
    return initial_state(topology, seed_key=base, exposed_per_region=exposed)


def run_simulation(config: RunConfig, days: int, beta_series, indicator_series,
                   record_history: bool = False,
                   base_seed: int | None = None,
                   ) -> tuple[list[DailyCounts], MetroTopology, HistoryRecorder | None]:
    """Build topology and state from the config, then run the horizon."""
    topology = build_topology(config, base_seed=base_seed)
    state = build_state(config, topology, base_seed=base_seed)
    recorder = state.attach_history() if record_history else None
    counts = simulate_horizon(
        state, topology, config.thresholds, beta_series, indicator_series, days
    )
    return counts, topology, recorder


def run_inference(config: RunConfig, observed_values, indicator_values,
                  dates=None, base_seed: int | None = None,
                  p_residence: float | None = None,
                  p_work: float | None = None) -> BetaSeries:
    """Build everything from the config and fit the daily rate series."""
    topology = build_topology(config, p_residence=p_residence, p_work=p_work,
                              base_seed=base_seed)
    state = build_state(config, topology, base_seed=base_seed)
    return infer_beta_series(
        topology, config.thresholds, observed_values, indicator_values,
        state, config.inference, dates=dates,
    )


def one_step_rmse(series: BetaSeries, observed_values) -> float:
    """Root-mean-square gap between the canonical admissions and observed."""
    obs = np.asarray(observed_values, dtype=float)
    fitted = np.asarray(series.fitted_new_h, dtype=float)
    if len(obs) != len(fitted):
        raise ValueError("fitted and observed series differ in length")
    return float(np.sqrt(np.mean((fitted - obs) ** 2)))
