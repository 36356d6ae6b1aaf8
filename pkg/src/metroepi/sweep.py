"""Shortcut-probability grid sweep.

Each cell rebuilds the topology with its own (residence, work) shortcut
probabilities, refits the daily rate series against the same observed
data, and is scored by the root-mean-square gap between the canonical
one-step-ahead admissions and the observations.  Cells are independent,
share the same per-repeat base seeds (common randomness makes cell scores
comparable), and run on a bounded process pool when workers > 1.  A
failing cell is recorded and the sweep continues.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, SweepSettings
from .errors import ParameterError
from .rng import TAG_SWEEP, derive_key
from .run import one_step_rmse, run_inference

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepGrid:
    """Axes of the sweep plus the number of seeded repeats per cell."""

    p_residence: tuple[float, ...]
    p_work: tuple[float, ...]
    seeds_per_cell: int = 1

    @staticmethod
    def from_settings(settings: SweepSettings) -> "SweepGrid":
        return SweepGrid(tuple(settings.p_residence), tuple(settings.p_work),
                         settings.seeds_per_cell)

    def validate(self) -> None:
        if not self.p_residence or not self.p_work:
            raise ParameterError("sweep axes must be non-empty")
        for axis in (self.p_residence, self.p_work):
            for v in axis:
                if not 0.0 <= v <= 1.0:
                    raise ParameterError(f"sweep probability {v} outside [0, 1]")
        if self.seeds_per_cell < 1:
            raise ParameterError("seeds_per_cell must be >= 1")

    def cells(self) -> list[tuple[float, float]]:
        return [(pr, pw) for pr in self.p_residence for pw in self.p_work]


@dataclass
class CellResult:
    p_residence: float
    p_work: float
    rmse: float
    mean_beta: float
    appropriate: bool
    per_seed_rmse: list[float]
    error: str | None = None


@dataclass
class SweepResult:
    grid: SweepGrid
    rmse_threshold: float
    cells: list[CellResult]

    def cell(self, p_residence: float, p_work: float) -> CellResult:
        for c in self.cells:
            if c.p_residence == p_residence and c.p_work == p_work:
                return c
        raise KeyError(f"no cell ({p_residence}, {p_work})")


def _repeat_seeds(master: int, count: int) -> list[int]:
    """Base seeds shared by every cell: repeat 0 is the master itself, so a
    one-cell sweep reproduces the standalone run bit for bit."""
    return [master if s == 0 else derive_key(master, TAG_SWEEP, s)
            for s in range(count)]


def _run_cell(args) -> CellResult:
    (config, p_r, p_w, observed, indicator, seeds, threshold) = args
    try:
        rmses = []
        beta_means = []
        for seed in seeds:
            series = run_inference(
                config, observed, indicator, base_seed=seed,
                p_residence=p_r, p_work=p_w,
            )
            rmses.append(one_step_rmse(series, observed))
            beta_means.append(float(np.mean(series.beta)))
        rmse = float(np.mean(rmses))
        return CellResult(
            p_residence=p_r, p_work=p_w, rmse=rmse,
            mean_beta=float(np.mean(beta_means)),
            appropriate=bool(rmse <= threshold),
            per_seed_rmse=[float(x) for x in rmses],
        )
    except Exception as e:  # a broken cell must not sink the sweep
        log.warning("sweep cell (%s, %s) failed: %s", p_r, p_w, e)
        return CellResult(
            p_residence=p_r, p_work=p_w, rmse=float("nan"),
            mean_beta=float("nan"), appropriate=False,
            per_seed_rmse=[], error=str(e),
        )


def run_sweep(grid: SweepGrid, config: RunConfig, observed_values,
              indicator_values, rmse_threshold: float,
              workers: int = 1) -> SweepResult:
    """Score every grid cell; deterministic for a fixed config seed.

    Results are independent of ``workers`` because each cell's randomness
    is fully determined by (config seed, repeat index).
    """
    grid.validate()
    if rmse_threshold <= 0:
        raise ParameterError("rmse_threshold must be positive")
    observed = np.asarray(observed_values)
    indicator = np.asarray(indicator_values)
    seeds = _repeat_seeds(config.seed, grid.seeds_per_cell)
    jobs = [(config, pr, pw, observed, indicator, seeds, rmse_threshold)
            for pr, pw in grid.cells()]

    if workers <= 1 or len(jobs) == 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    return SweepResult(grid=grid, rmse_threshold=float(rmse_threshold),
                       cells=results)


def export_sweep_csv(result: SweepResult, path) -> None:
    """One row per cell: p_residence, p_work, rmse, mean_beta, appropriate."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_residence", "p_work", "rmse", "mean_beta", "appropriate"])
        for c in result.cells:
            w.writerow([
                repr(float(c.p_residence)), repr(float(c.p_work)),
                repr(float(c.rmse)), repr(float(c.mean_beta)),
                int(c.appropriate),
            ])


def export_sweep_json(result: SweepResult, path) -> None:
    """Run summary with per-seed scores and any cell failures."""

    def harden(x: float):
        return None if np.isnan(x) else float(x)

    payload = {
        "rmse_threshold": result.rmse_threshold,
        "seeds_per_cell": result.grid.seeds_per_cell,
        "p_residence_axis": list(result.grid.p_residence),
        "p_work_axis": list(result.grid.p_work),
        "cells": [
            {
                "p_residence": c.p_residence,
                "p_work": c.p_work,
                "rmse": harden(c.rmse),
                "mean_beta": harden(c.mean_beta),
                "appropriate": c.appropriate,
                "per_seed_rmse": c.per_seed_rmse,
                "error": c.error,
            }
            for c in result.cells
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
