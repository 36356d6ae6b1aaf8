"""Synthetic dataset generation.

Real admission and commuting feeds are out of scope, so tests and demos
run on data produced by the simulator itself under a known ground-truth
rate schedule.  The fixture seed chain is tagged separately from the
inference chain, so fitting a fixture never shares streams with the run
that produced it.
"""
from __future__ import annotations

import datetime as dt

import numpy as np

from .data_io import IndicatorSeries, ObservedSeries
from .epidemic import TransitionThresholds, initial_state, simulate_horizon
from .errors import ParameterError
from .rng import TAG_FIXTURE, derive_key
from .topology import MetroTopology

DEFAULT_START = dt.date(2020, 3, 1)


def piecewise_beta(days: int, base: float, shifts: list[tuple[int, float]] | None = None) -> np.ndarray:
    """Constant rate ``base`` with step changes: (day, new_rate) pairs."""
    betas = np.full(days, float(base))
    for day, value in sorted(shifts or []):
        if not 0 <= day < days:
            raise ParameterError(f"shift day {day} outside [0, {days})")
        betas[day:] = float(value)
    return betas


def synthetic_dataset(
    topology: MetroTopology,
    thresholds: TransitionThresholds,
    beta_series,
    days: int,
    seed: int,
    indicator=1.0,
    exposed_per_region: int | list[int] = 5,
    start_date: dt.date = DEFAULT_START,
) -> tuple[ObservedSeries, IndicatorSeries, np.ndarray]:
    """One ground-truth run turned into (observed, indicator, true betas).

    The observed series is the daily admission count of a single
    realization; the indicator series echoes what the run used, expanded
    to the same date axis.
    """
    betas = np.asarray(beta_series, dtype=float)
    if betas.ndim == 0:
        betas = np.full(days, float(betas))
    if len(betas) < days:
        raise ParameterError(f"beta series shorter than horizon ({len(betas)} < {days})")

    inds = np.asarray(indicator, dtype=float)
    if inds.ndim == 0:
        inds = np.full(days, float(inds))
    if inds.shape[0] < days:
        raise ParameterError(
            f"indicator series shorter than horizon ({inds.shape[0]} < {days})"
        )

    state = initial_state(
        topology, seed_key=derive_key(seed, TAG_FIXTURE),
        exposed_per_region=exposed_per_region,
    )
    counts = simulate_horizon(state, topology, thresholds, betas, inds, days)

    dates = [start_date + dt.timedelta(days=i) for i in range(days)]
    observed = ObservedSeries(dates, np.array([c.new_h for c in counts], dtype=np.int64))
    ind_out = inds[:days] if inds.ndim == 1 else inds[:days, :]
    regions = topology.region_names if inds.ndim == 2 else None
    indicator_series = IndicatorSeries(dates, np.array(ind_out, dtype=float), regions)
    return observed, indicator_series, betas[:days]
