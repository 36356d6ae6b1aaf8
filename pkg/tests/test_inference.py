"""Daily rate estimation: loss evaluation, bracket narrowing, the driver."""

import math

import numpy as np
import pytest

from metroepi.epidemic import (
    Status,
    TransitionThresholds,
    initial_state,
    simulate_horizon,
    snapshot,
)
from metroepi.errors import ParameterError
from metroepi.inference import (
    InferenceConfig,
    _bracket_search,
    forward_loss,
    infer_beta_day,
    infer_beta_series,
)

from conftest import fresh_state, toy_metro


def vshape(target):
    def f(beta):
        return abs(beta - target), None
    return f


def test_config_validation():
    InferenceConfig().validate()
    for bad in (
        InferenceConfig(epsilon=0.0),
        InferenceConfig(epsilon=1.0),
        InferenceConfig(window=-1),
        InferenceConfig(replicates=0),
        InferenceConfig(beta_prior=1.5),
        InferenceConfig(max_iterations=0),
    ):
        with pytest.raises(ParameterError):
            bad.validate()


@pytest.mark.parametrize("target,prior", [
    # the first pass folds the worse endpoint onto the candidate, so the
    # minimum is captured when the candidate sits between the minimum and
    # the better endpoint's far side, i.e. on the worse-endpoint side
    (0.1, 0.2), (0.1, 0.5), (0.1, 0.8),
    (0.3, 0.5), (0.3, 0.8),
    (0.62, 0.2), (0.62, 0.5),
    (0.9, 0.2), (0.9, 0.5), (0.9, 0.8),
])
def test_bracket_finds_vshape_minimum(target, prior):
    beta, loss, iters, evals, conv, _ = _bracket_search(
        vshape(target), prior, epsilon=0.01, max_iterations=40
    )
    assert conv
    assert abs(beta - target) <= 0.01
    assert evals == iters + 3  # two endpoints + starting candidate + one per pass


@pytest.mark.parametrize("target,prior", [(0.3, 0.2), (0.62, 0.8)])
def test_bracket_prior_on_better_side_clips_at_prior(target, prior):
    # with the candidate between the better endpoint and the minimum, the
    # first fold discards the region holding the minimum and the search
    # settles at the prior-side bracket edge instead.  This prior-tracking
    # is a real property of the scheme, pinned here on a synthetic loss.
    beta, _, _, _, conv, _ = _bracket_search(
        vshape(target), prior, epsilon=0.01, max_iterations=40
    )
    assert conv
    assert abs(beta - prior) <= 0.01
    assert abs(beta - target) > 0.01


def test_bracket_iteration_bound():
    # each pass at least halves the bracket after the first, so epsilon=0.01
    # needs at most 1 + ceil(log2(1/epsilon)) = 8 passes
    for target in np.linspace(0.0, 1.0, 21):
        for prior in (0.01, 0.25, 0.5, 0.75, 0.99):
            _, _, iters, _, conv, _ = _bracket_search(
                vshape(float(target)), prior, epsilon=0.01, max_iterations=40
            )
            assert conv and iters <= 8


def test_bracket_boundary_minima():
    beta, _, _, _, conv, _ = _bracket_search(vshape(0.0), 0.5, 0.01, 40)
    assert conv and beta <= 0.01
    beta, _, _, _, conv, _ = _bracket_search(vshape(1.0), 0.5, 0.01, 40)
    assert conv and beta >= 0.99


def test_bracket_flat_loss_drifts_from_prior():
    # exactly tied endpoint losses exercise the deterministic tie fold: the
    # bracket collapses without a gradient, below the prior for priors
    # under one half and toward the upper end otherwise
    flat = lambda beta: (1.0, None)
    beta_lo, _, _, _, conv, _ = _bracket_search(flat, 0.3, 0.01, 40)
    assert conv and 0.15 <= beta_lo < 0.3
    beta_hi, _, _, _, conv, _ = _bracket_search(flat, 0.8, 0.01, 40)
    assert conv and beta_hi > 0.9


def test_bracket_prior_near_edge_can_trap():
    # a prior within epsilon of an endpoint whose loss beats the far end
    # collapses the bracket in one pass; the true minimum further inside
    # is lost.  This pins the fold-onto-candidate semantics.
    beta, _, iters, _, conv, _ = _bracket_search(vshape(0.07), 0.01, 0.01, 40)
    assert conv and iters == 1
    assert beta == pytest.approx(0.005)


def test_bracket_cap_returns_best_seen():
    beta, loss, iters, _, conv, _ = _bracket_search(
        vshape(0.3), 0.9, epsilon=0.01, max_iterations=2
    )
    assert not conv
    assert iters == 2
    # evaluated: 0, 1, 0.9, 0.45, 0.225; the best of those is 0.225
    assert beta == pytest.approx(0.225)
    assert loss == pytest.approx(abs(0.225 - 0.3))


def small_scene(days_run=3, commuting=20):
    topo = toy_metro(n_regions=2, nodes=120, commuting=commuting, seed=51)
    state = fresh_state(topo, seed=52, exposed=4)
    thresholds = TransitionThresholds()
    simulate_horizon(state, topo, thresholds, 0.2, 1.0, days=days_run)
    return topo, state, thresholds


def test_forward_loss_deterministic_and_crn():
    topo, state, thresholds = small_scene()
    snap = snapshot(state)
    cfg = InferenceConfig(replicates=5, window=4)
    obs = np.array([2.0, 3.0, 1.0, 4.0, 2.0])
    ind = np.ones(5)
    l1 = forward_loss(snap, topo, thresholds, 0.2, obs, ind, cfg)
    l2 = forward_loss(snap, topo, thresholds, 0.2, obs, ind, cfg)
    assert l1 == l2  # replicate streams come from the snapshot, not a cursor
    l3 = forward_loss(snap, topo, thresholds, 0.5, obs, ind, cfg)
    assert l3 != l1


def test_forward_loss_leaves_state_untouched():
    topo, state, thresholds = small_scene()
    before_statuses = state.statuses.copy()
    before_rng = repr(state.rng.bit_generator.state)
    snap = snapshot(state)
    cfg = InferenceConfig(replicates=3, window=2)
    forward_loss(snap, topo, thresholds, 0.3, np.zeros(3), np.ones(3), cfg)
    assert np.array_equal(state.statuses, before_statuses)
    assert repr(state.rng.bit_generator.state) == before_rng
    assert state.day == 3


def test_forward_loss_validation():
    topo, state, thresholds = small_scene()
    snap = snapshot(state)
    cfg = InferenceConfig(replicates=2)
    with pytest.raises(ParameterError):
        forward_loss(snap, topo, thresholds, 1.2, np.zeros(3), np.ones(3), cfg)
    with pytest.raises(ParameterError):
        forward_loss(snap, topo, thresholds, 0.2, np.zeros(3), np.ones(2), cfg)
    with pytest.raises(ParameterError):
        forward_loss(snap, topo, thresholds, 0.2, np.zeros(0), np.ones(0), cfg)


def test_zero_infectious_shortcircuits(monkeypatch):
    import metroepi.inference as inf

    topo = toy_metro(n_regions=2, nodes=80, commuting=10, seed=60)
    state = initial_state(topo, seed_key=61, exposed_per_region=0)
    calls = {"n": 0}
    real = inf._mean_forward_window

    def spy(*args, **kwargs):
        calls["n"] += 1
        return real(*args, **kwargs)

    monkeypatch.setattr(inf, "_mean_forward_window", spy)
    obs = np.array([0.0, 0.0, 0.0])
    beta, est = infer_beta_day(state, topo, TransitionThresholds(), obs,
                               np.ones(3), beta_prev=0.5,
                               config=InferenceConfig(replicates=2))
    assert beta == 0.0
    assert est.zero_branch and est.converged
    assert est.evaluations == 0 and est.iterations == 0
    assert calls["n"] == 0  # not a single forward run
    assert math.isnan(est.loss)


def test_infer_beta_day_runs_search():
    topo, state, thresholds = small_scene()
    cfg = InferenceConfig(replicates=3, window=3, epsilon=0.05)
    obs = np.zeros(10)
    obs[state.day:state.day + 4] = [3, 4, 5, 6]
    beta, est = infer_beta_day(state, topo, thresholds, obs, np.ones(10),
                               beta_prev=0.4, config=cfg)
    assert 0.0 <= beta <= 1.0
    assert not est.zero_branch
    assert est.evaluations == est.iterations + 3
    assert est.predicted is not None and len(est.predicted) == 4
    assert state.day == 3  # search must not advance the canonical state


def test_infer_beta_day_truncates_window(caplog):
    topo, state, thresholds = small_scene(days_run=0)
    cfg = InferenceConfig(replicates=2, window=7, epsilon=0.2)
    obs = np.array([1.0, 2.0])  # only 2 days observed, window asks for 8
    with caplog.at_level("WARNING"):
        beta, est = infer_beta_day(state, topo, thresholds, obs, np.ones(2),
                                   beta_prev=0.3, config=cfg)
    assert any("truncated" in r.message for r in caplog.records)
    assert est.predicted is not None and len(est.predicted) == 2


def test_infer_beta_day_rejects_day_out_of_range():
    topo, state, thresholds = small_scene(days_run=3)
    with pytest.raises(ParameterError):
        infer_beta_day(state, topo, thresholds, np.zeros(2), np.ones(2),
                       beta_prev=0.5, config=InferenceConfig(replicates=2))


def test_series_requires_day_zero_state():
    topo, state, thresholds = small_scene(days_run=2)
    with pytest.raises(ParameterError):
        infer_beta_series(topo, thresholds, np.zeros(5), np.ones(5), state,
                          InferenceConfig(replicates=2))


def test_series_rejects_bad_lengths():
    topo = toy_metro(n_regions=2, nodes=80, commuting=10, seed=70)
    thresholds = TransitionThresholds()
    state = initial_state(topo, seed_key=71, exposed_per_region=2)
    cfg = InferenceConfig(replicates=2)
    with pytest.raises(ParameterError):
        infer_beta_series(topo, thresholds, np.zeros(0), np.ones(0), state, cfg)
    with pytest.raises(ParameterError):
        infer_beta_series(topo, thresholds, np.zeros(5), np.ones(3), state, cfg)
    with pytest.raises(ParameterError):
        infer_beta_series(topo, thresholds, np.zeros(5), np.ones(5), state, cfg,
                          dates=[1, 2, 3])


def test_series_all_zero_when_nothing_seeded():
    topo = toy_metro(n_regions=2, nodes=80, commuting=10, seed=72)
    thresholds = TransitionThresholds()
    state = initial_state(topo, seed_key=73, exposed_per_region=0)
    obs = np.zeros(6)
    series = infer_beta_series(topo, thresholds, obs, np.ones(6), state,
                               InferenceConfig(replicates=2))
    assert len(series) == 6
    assert np.all(series.beta == 0.0)
    assert np.all(series.zero_branch)
    assert np.all(series.evaluations == 0)
    assert np.all(series.fitted_new_h == 0)


def test_series_walks_canonical_state_forward():
    topo = toy_metro(n_regions=2, nodes=120, commuting=30, seed=74)
    thresholds = TransitionThresholds()
    state = initial_state(topo, seed_key=75, exposed_per_region=3)
    obs = np.array([1.0, 2.0, 2.0, 3.0, 3.0, 2.0, 1.0, 1.0])
    cfg = InferenceConfig(replicates=3, window=2, epsilon=0.05)
    series = infer_beta_series(topo, thresholds, obs, np.ones(8), state, cfg,
                               dates=list(range(8)))
    assert state.day == 8
    assert len(series) == 8
    assert series.dates == list(range(8))
    assert np.all((series.beta >= 0) & (series.beta <= 1))
    assert series.fitted_new_h.dtype.kind == "i"


def test_series_deterministic():
    def run():
        topo = toy_metro(n_regions=2, nodes=100, commuting=20, seed=76)
        state = initial_state(topo, seed_key=77, exposed_per_region=3)
        obs = np.array([0.0, 1.0, 2.0, 2.0, 1.0])
        return infer_beta_series(topo, TransitionThresholds(), obs, np.ones(5),
                                 state, InferenceConfig(replicates=3, window=2,
                                                        epsilon=0.05))

    a, b = run(), run()
    assert np.array_equal(a.beta, b.beta)
    assert np.array_equal(a.fitted_new_h, b.fitted_new_h)
    assert np.array_equal(a.loss, b.loss)
