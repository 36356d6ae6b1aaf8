"""Daily transmission-rate estimation from observed hospital admissions.

For each day t the estimator brackets the transmission probability in
[0, 1] and narrows the bracket by comparing forward-simulated admission
windows against the observed ones.  The candidate inherited from the
previous day seeds the search, so consecutive days converge quickly when
the underlying rate moves slowly.  Days with no exposed, asymptomatic or
infected nodes short-circuit to zero without running any simulation: with
nobody contagious the rate is unidentifiable and transmission is off.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .epidemic import (
    SimState,
    StateSnapshot,
    TransitionThresholds,
    restore,
    simulate_day,
    simulate_horizon,
    snapshot,
)
from .errors import ParameterError
from .rng import TAG_REPLICATE, derive_key
from .topology import MetroTopology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs of the per-day rate search.

    window: days ahead (inclusive of t) compared against observations, so
    each loss sums window + 1 squared errors.  replicates: forward runs
    averaged per candidate, sharing one sub-seed list across candidates so
    candidates face common randomness.  beta_prior: starting candidate on
    day 0.  epsilon: bracket width at which the search stops.
    """

    epsilon: float = 0.01
    window: int = 7
    replicates: int = 20
    beta_prior: float = 0.5
    max_iterations: int = 40

    def validate(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.window < 0:
            raise ParameterError(f"window must be >= 0, got {self.window}")
        if self.replicates < 1:
            raise ParameterError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 <= self.beta_prior <= 1.0:
            raise ParameterError(
                f"beta_prior must lie in [0, 1], got {self.beta_prior}"
            )
        if self.max_iterations < 1:
            raise ParameterError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )


@dataclass
class DayEstimate:
    """Diagnostics for one day's search."""

    beta: float
    loss: float
    iterations: int
    evaluations: int
    converged: bool
    zero_branch: bool
    predicted: np.ndarray | None


@dataclass
class BetaSeries:
    """Per-day fitted rates plus the canonical trajectory they produced.

    ``fitted_new_h`` is the admissions series of the canonical state
    advanced one day at a time under each accepted rate; ``predicted``
    holds each day's replicate-averaged forward window at the accepted
    candidate (None on zero-branch days).
    """

    beta: np.ndarray
    loss: np.ndarray
    iterations: np.ndarray
    evaluations: np.ndarray
    converged: np.ndarray
    zero_branch: np.ndarray
    fitted_new_h: np.ndarray
    predicted: list[np.ndarray | None] = field(default_factory=list)
    dates: list | None = None

    def __len__(self) -> int:
        return len(self.beta)


def _mean_forward_window(snap: StateSnapshot, topology: MetroTopology,
                         thresholds: TransitionThresholds, beta: float,
                         indicator_window: np.ndarray,
                         config: InferenceConfig) -> np.ndarray:
    """Replicate-averaged admissions over the window, rate held constant.

    Replicate r reseeds the restored state from (snapshot seed, snapshot
    day, r); the list depends only on the snapshot, so every candidate
    evaluated from the same snapshot sees the same randomness.
    """
    horizon = len(indicator_window)
    acc = np.zeros(horizon, dtype=float)
    for r in range(config.replicates):
        st = restore(snap, topology)
        st.reseed(derive_key(snap.seed_key, TAG_REPLICATE, snap.day, r))
        counts = simulate_horizon(
            st, topology, thresholds, beta, indicator_window, horizon
        )
        acc += np.array([c.new_h for c in counts], dtype=float)
    return acc / config.replicates


def forward_loss(snap: StateSnapshot, topology: MetroTopology,
                 thresholds: TransitionThresholds, beta: float,
                 observed_window: np.ndarray, indicator_window: np.ndarray,
                 config: InferenceConfig) -> float:
    """Sum of squared errors between mean forward admissions and observed.

    The snapshot is only ever restored from, never consumed.
    """
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"transmission probability must lie in [0, 1], got {beta}")
    obs = np.asarray(observed_window, dtype=float)
    ind = np.asarray(indicator_window, dtype=float)
    if len(obs) != len(ind):
        raise ParameterError(
            f"observed window ({len(obs)}) and indicator window ({len(ind)}) "
            "must have equal length"
        )
    if len(obs) == 0:
        raise ParameterError("empty comparison window")
    mean_h = _mean_forward_window(snap, topology, thresholds, beta, ind, config)
    return float(np.sum((mean_h - obs) ** 2))


def _bracket_search(evaluate, prior: float, epsilon: float,
                    max_iterations: int) -> tuple[float, float, int, int, bool, np.ndarray]:
    """Loss-guided bracket narrowing on [0, 1].

    ``evaluate(beta) -> (loss, window)``.  Each pass compares the endpoint
    losses, folds the worse endpoint onto the current candidate, then moves
    the candidate to the bracket midpoint and evaluates it.  On an exact
    endpoint tie the endpoint farther from the candidate folds, so the
    bracket always shrinks.  The starting candidate is nudged strictly
    inside the bracket for the same reason.  Returns (beta, loss,
    iterations, evaluations, converged, window-at-beta); when the iteration
    cap is hit first, the best candidate seen so far is returned instead of
    the last midpoint.
    """
    lo, hi = 0.0, 1.0
    cand = min(max(prior, lo + epsilon / 2), hi - epsilon / 2)

    loss_lo, _ = evaluate(lo)
    loss_hi, _ = evaluate(hi)
    loss_cand, win_cand = evaluate(cand)
    evaluations = 3
    best = min(
        [(loss_lo, lo, None), (loss_hi, hi, None), (loss_cand, cand, win_cand)],
        key=lambda t: t[0],
    )

    iterations = 0
    while abs(hi - lo) > epsilon and iterations < max_iterations:
        if loss_lo > loss_hi:
            lo, loss_lo = cand, loss_cand
        elif loss_lo < loss_hi:
            hi, loss_hi = cand, loss_cand
        else:
            if abs(lo - cand) >= abs(hi - cand):
                lo, loss_lo = cand, loss_cand
            else:
                hi, loss_hi = cand, loss_cand
        cand = 0.5 * (lo + hi)
        loss_cand, win_cand = evaluate(cand)
        evaluations += 1
        iterations += 1
        if loss_cand < best[0]:
            best = (loss_cand, cand, win_cand)

    converged = abs(hi - lo) <= epsilon
    if converged:
        return cand, loss_cand, iterations, evaluations, True, win_cand
    loss_b, beta_b, win_b = best
    return beta_b, loss_b, iterations, evaluations, False, win_b


def infer_beta_day(state: SimState, topology: MetroTopology,
                   thresholds: TransitionThresholds,
                   observed: np.ndarray, indicator: np.ndarray,
                   beta_prev: float, config: InferenceConfig) -> tuple[float, DayEstimate]:
    """Estimate the transmission rate for the state's current day.

    ``observed`` and ``indicator`` are the full aligned series; the
    comparison window starts at index ``state.day``.  A window running past
    the end of the observations is truncated with a logged warning.  The
    state itself is left untouched: all forward runs start from a snapshot.
    """
    config.validate()
    t = state.day
    T = len(observed)
    if not 0 <= t < T:
        raise ParameterError(f"state day {t} outside observed series of length {T}")

    if state.infectious_count() == 0:
        return 0.0, DayEstimate(
            beta=0.0, loss=float("nan"), iterations=0, evaluations=0,
            converged=True, zero_branch=True, predicted=None,
        )

    end = t + config.window + 1
    if end > T:
        log.warning(
            "day %d: comparison window truncated to %d of %d days",
            t, T - t, config.window + 1,
        )
        end = T
    obs_win = np.asarray(observed[t:end], dtype=float)
    ind = np.asarray(indicator, dtype=float)
    ind_win = ind[t:end] if ind.ndim == 1 else ind[t:end, :]

    snap = snapshot(state)
    counter = {"n": 0}

    def evaluate(beta: float):
        counter["n"] += 1
        mean_h = _mean_forward_window(
            snap, topology, thresholds, beta, ind_win, config
        )
        return float(np.sum((mean_h - obs_win) ** 2)), mean_h

    beta_t, loss, iters, _, converged, window = _bracket_search(
        evaluate, beta_prev, config.epsilon, config.max_iterations
    )
    if not converged:
        log.warning("day %d: bracket search hit the iteration cap", t)
    est = DayEstimate(
        beta=beta_t, loss=loss, iterations=iters, evaluations=counter["n"],
        converged=converged, zero_branch=False, predicted=window,
    )
    return beta_t, est


def infer_beta_series(topology: MetroTopology, thresholds: TransitionThresholds,
                      observed: np.ndarray, indicator: np.ndarray,
                      state: SimState, config: InferenceConfig,
                      dates: list | None = None) -> BetaSeries:
    """Fit one transmission rate per observed day, walking the state forward.

    For each day the search runs from the canonical state, then the
    canonical state advances exactly one day under the accepted rate (on
    its own master stream, independent of the disposable replicate runs).
    The observed and indicator series must be aligned, and the state must
    enter at day 0.
    """
    config.validate()
    obs = np.asarray(observed, dtype=float)
    ind = np.asarray(indicator, dtype=float)
    if state.day != 0:
        raise ParameterError(f"initial state must start at day 0, got {state.day}")
    T = len(obs)
    if T == 0:
        raise ParameterError("observed series is empty")
    if (ind.shape[0] if ind.ndim else 0) < T:
        raise ParameterError(
            f"indicator series shorter than observed series ({ind.shape[0]} < {T})"
        )
    if dates is not None and len(dates) != T:
        raise ParameterError("dates must match the observed series length")

    betas = np.zeros(T)
    losses = np.zeros(T)
    iters = np.zeros(T, dtype=np.int64)
    evals = np.zeros(T, dtype=np.int64)
    conv = np.zeros(T, dtype=bool)
    zero = np.zeros(T, dtype=bool)
    fitted = np.zeros(T, dtype=np.int64)
    predicted: list[np.ndarray | None] = []

    beta_prev = config.beta_prior
    for t in range(T):
        beta_t, est = infer_beta_day(
            state, topology, thresholds, obs, ind, beta_prev, config
        )
        day_ind = ind[t] if ind.ndim == 1 else ind[t, :]
        counts = simulate_day(state, topology, thresholds, beta_t, day_ind)
        betas[t] = beta_t
        losses[t] = est.loss
        iters[t] = est.iterations
        evals[t] = est.evaluations
        conv[t] = est.converged
        zero[t] = est.zero_branch
        fitted[t] = counts.new_h
        predicted.append(est.predicted)
        beta_prev = beta_t

    return BetaSeries(
        beta=betas, loss=losses, iterations=iters, evaluations=evals,
        converged=conv, zero_branch=zero, fitted_new_h=fitted,
        predicted=predicted, dates=list(dates) if dates is not None else None,
    )
