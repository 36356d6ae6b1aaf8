"""Figure rendering: files appear, are valid PNGs, and rerun identically."""

import datetime as dt
import hashlib

import numpy as np

from metroepi.epidemic import TransitionThresholds, simulate_horizon
from metroepi.inference import BetaSeries
from metroepi.plots import (
    save_beta_series,
    save_class_curves,
    save_fit_overlay,
    save_sweep_map,
)
from metroepi.sweep import CellResult, SweepGrid, SweepResult

from conftest import fresh_state, toy_metro

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def run_counts(days=12):
    topo = toy_metro(nodes=100, commuting=20, seed=201)
    state = fresh_state(topo, seed=202)
    return simulate_horizon(state, topo, TransitionThresholds(), 0.2, 1.0, days)


def toy_series(n=6):
    return BetaSeries(
        beta=np.linspace(0.3, 0.1, n),
        loss=np.full(n, 2.0),
        iterations=np.full(n, 5, dtype=int),
        evaluations=np.full(n, 8, dtype=int),
        converged=np.ones(n, dtype=bool),
        zero_branch=np.array([True] + [False] * (n - 1)),
        fitted_new_h=np.arange(n),
        dates=[dt.date(2020, 3, 1) + dt.timedelta(days=i) for i in range(n)],
    )


def test_class_curves(tmp_path):
    counts = run_counts()
    p = tmp_path / "curves.png"
    save_class_curves(counts, p)
    assert p.read_bytes()[:8] == PNG_MAGIC
    dates = [dt.date(2020, 3, 1) + dt.timedelta(days=i) for i in range(len(counts))]
    save_class_curves(counts, tmp_path / "curves_dated.png", dates=dates)
    assert (tmp_path / "curves_dated.png").stat().st_size > 0


def test_beta_series_plot(tmp_path):
    p = tmp_path / "beta.png"
    save_beta_series(toy_series(), p)
    assert p.read_bytes()[:8] == PNG_MAGIC


def test_fit_overlay(tmp_path):
    p = tmp_path / "fit.png"
    save_fit_overlay(np.array([1, 3, 2, 5.0]), np.array([1.5, 2.5, 2.0, 4.0]), p)
    assert p.read_bytes()[:8] == PNG_MAGIC


def test_sweep_map(tmp_path):
    result = SweepResult(
        grid=SweepGrid((0.0, 0.5), (0.1,)),
        rmse_threshold=3.0,
        cells=[
            CellResult(0.0, 0.1, 2.0, 0.2, True, [2.0]),
            CellResult(0.5, 0.1, float("nan"), float("nan"), False, [],
                       error="failed"),
        ],
    )
    p = tmp_path / "map.png"
    save_sweep_map(result, p)
    assert p.read_bytes()[:8] == PNG_MAGIC


def test_png_bytes_stable(tmp_path):
    counts = run_counts(8)
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_class_curves(counts, a)
    save_class_curves(counts, b)
    assert hashlib.sha256(a.read_bytes()).digest() == \
           hashlib.sha256(b.read_bytes()).digest()
