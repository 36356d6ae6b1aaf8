"""Report figures rendered next to the delimited outputs.

Headless Agg backend; PNG metadata is stripped so reruns with the same
seed produce byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def _day_axis(n: int, dates=None):
    if dates is not None:
        return list(dates)
    return np.arange(n)


def save_class_curves(counts, path, dates=None) -> None:
    """Status totals over time with daily admissions on a second axis."""
    days = _day_axis(len(counts), dates)
    fig, ax = plt.subplots(figsize=(9, 4.8))
    for attr, label, color in (
        ("s", "susceptible", "tab:blue"),
        ("e", "exposed", "tab:orange"),
        ("i", "infected", "tab:red"),
        ("a", "asymptomatic", "tab:purple"),
        ("h", "hospitalised", "tab:brown"),
        ("r", "recovered", "tab:green"),
    ):
        ax.plot(days, [getattr(c, attr) for c in counts], label=label,
                color=color, lw=1.4)
    ax2 = ax.twinx()
    ax2.bar(days, [c.new_h for c in counts], color="0.6", alpha=0.35,
            label="daily admissions")
    ax2.set_ylabel("daily admissions")
    ax.set_xlabel("day")
    ax.set_ylabel("nodes")
    ax.legend(loc="center right", fontsize=8)
    ax.grid(alpha=0.3)
    if dates is not None:
        fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_beta_series(series, path, dates=None) -> None:
    """Fitted daily transmission rate, zero-shortcut days marked."""
    days = _day_axis(len(series), dates if dates is not None else series.dates)
    fig, ax = plt.subplots(figsize=(9, 4.2))
    ax.plot(days, series.beta, marker="o", ms=3, lw=1.2, color="tab:red",
            label="fitted rate")
    zero = np.asarray(series.zero_branch, dtype=bool)
    if zero.any():
        ax.plot(np.asarray(days, dtype=object)[zero], series.beta[zero],
                linestyle="none", marker="x", color="0.4",
                label="no contagious nodes")
    ax.set_xlabel("day")
    ax.set_ylabel("transmission probability per contact")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    if dates is not None or series.dates is not None:
        fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_fit_overlay(observed_values, fitted_values, path, dates=None) -> None:
    """Observed daily admissions against the one-step-ahead fit."""
    days = _day_axis(len(observed_values), dates)
    fig, ax = plt.subplots(figsize=(9, 4.2))
    ax.bar(days, observed_values, color="0.7", alpha=0.6, label="observed")
    ax.plot(days, fitted_values, color="tab:red", lw=1.4, marker="o", ms=3,
            label="simulated under fitted rate")
    ax.set_xlabel("day")
    ax.set_ylabel("daily admissions")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    if dates is not None:
        fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_sweep_map(result, path) -> None:
    """Grid scatter: filled dots where the fit beat the threshold."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ok = [c for c in result.cells if c.appropriate]
    bad = [c for c in result.cells if not c.appropriate]
    if ok:
        ax.scatter([c.p_residence for c in ok], [c.p_work for c in ok],
                   s=70, color="tab:red", label="appropriate")
    if bad:
        ax.scatter([c.p_residence for c in bad], [c.p_work for c in bad],
                   s=60, marker="x", color="0.5", label="not appropriate")
    for c in result.cells:
        if not np.isnan(c.rmse):
            ax.annotate(f"{c.rmse:.1f}", (c.p_residence, c.p_work),
                        textcoords="offset points", xytext=(6, 4), fontsize=7)
    ax.set_xlabel("residence shortcut probability")
    ax.set_ylabel("work shortcut probability")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
