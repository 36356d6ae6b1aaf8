"""File formats: observed admissions, commuter indicator, run outputs.

All delimited files are UTF-8 CSV with ISO-8601 dates.  Loaders validate
aggressively and report the offending line; exporters write floats at full
precision so a round trip is lossless.
"""
from __future__ import annotations

import csv
import datetime as dt
import gzip
import json
import logging
from dataclasses import dataclass

import numpy as np

from .epidemic import (
    LEGAL_TRANSITIONS,
    STATUS_LETTERS,
    DailyCounts,
    HistoryRecorder,
    Status,
)
from .errors import DataFormatError
from .inference import BetaSeries
from .topology import MetroTopology

log = logging.getLogger(__name__)

TIMESERIES_HEADER = ["date", "s", "e", "i", "r", "a", "h", "new_h", "beta"]
_LETTER_TO_STATUS = {s: i for i, s in enumerate(STATUS_LETTERS)}


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise DataFormatError(f"bad ISO date {text!r}", line=line) from None


def _open_text(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


@dataclass
class ObservedSeries:
    """Daily hospital-admission counts on a gap-free ascending date axis."""

    dates: list[dt.date]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if len(self.dates) != len(self.values):
            raise DataFormatError("dates and values differ in length")
        for i in range(1, len(self.dates)):
            if self.dates[i] != self.dates[i - 1] + dt.timedelta(days=1):
                raise DataFormatError(
                    f"dates not consecutive at {self.dates[i].isoformat()}"
                )
        if len(self.values) and self.values.min() < 0:
            raise DataFormatError("negative admission count")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class IndicatorSeries:
    """Daily commuting fraction, either one column or one per region.

    ``values`` is (days,) for a uniform indicator or (days, n_regions)
    with ``regions`` naming the columns.
    """

    dates: list[dt.date]
    values: np.ndarray
    regions: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.dates) != self.values.shape[0]:
            raise DataFormatError("dates and values differ in length")
        for i in range(1, len(self.dates)):
            if self.dates[i] != self.dates[i - 1] + dt.timedelta(days=1):
                raise DataFormatError(
                    f"dates not consecutive at {self.dates[i].isoformat()}"
                )
        if self.values.ndim == 2 and self.regions is None:
            raise DataFormatError("per-region indicator needs region names")

    def __len__(self) -> int:
        return self.values.shape[0]


def load_observed(path, fill_missing: bool = False) -> ObservedSeries:
    """Read a ``date,h`` CSV of daily admission counts.

    Rows may arrive unsorted; duplicates are an error.  Interior calendar
    gaps are an error unless ``fill_missing`` is set, in which case missing
    days are zero-filled with a logged notice.
    """
    rows: dict[dt.date, int] = {}
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file") from None
        if [h.strip().lower() for h in header] != ["date", "h"]:
            raise DataFormatError(
                f"expected header 'date,h', got {','.join(header)!r}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataFormatError(f"expected 2 fields, got {len(row)}", line=lineno)
            d = _parse_date(row[0], lineno)
            try:
                v = int(row[1])
            except ValueError:
                raise DataFormatError(
                    f"bad count {row[1]!r}", line=lineno
                ) from None
            if v < 0:
                raise DataFormatError(f"negative count {v}", line=lineno)
            if d in rows:
                raise DataFormatError(f"duplicate date {d.isoformat()}", line=lineno)
            rows[d] = v
    if not rows:
        raise DataFormatError("no data rows")

    dates = sorted(rows)
    full = [dates[0] + dt.timedelta(days=i)
            for i in range((dates[-1] - dates[0]).days + 1)]
    missing = [d for d in full if d not in rows]
    if missing:
        if not fill_missing:
            raise DataFormatError(
                f"missing dates, first gap {missing[0].isoformat()} "
                "(pass fill_missing to zero-fill)"
            )
        log.info("zero-filling %d missing dates", len(missing))
        for d in missing:
            rows[d] = 0
    return ObservedSeries(full, np.array([rows[d] for d in full], dtype=np.int64))


def load_indicator(path) -> IndicatorSeries:
    """Read a commuting-fraction CSV.

    Header ``date,indicator`` gives a uniform series; ``date,<name>,...``
    gives one column per region.  Values outside [0, 2] draw a warning but
    load anyway; negatives are rejected.
    """
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0].lower() != "date":
            raise DataFormatError(
                f"expected header 'date,indicator' or 'date,<region>,...', "
                f"got {','.join(header)!r}", line=1
            )
        regions = None if [h.lower() for h in header] == ["date", "indicator"] \
            else header[1:]
        width = len(header) - 1
        rows: dict[dt.date, list[float]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != width + 1:
                raise DataFormatError(
                    f"expected {width + 1} fields, got {len(row)}", line=lineno
                )
            d = _parse_date(row[0], lineno)
            try:
                vals = [float(x) for x in row[1:]]
            except ValueError:
                raise DataFormatError(f"bad fraction in {row[1:]!r}", line=lineno) from None
            for v in vals:
                if v < 0:
                    raise DataFormatError(f"negative fraction {v}", line=lineno)
                if v > 2:
                    log.warning(
                        "indicator %.3f on %s outside the plausible range [0, 2]",
                        v, d.isoformat(),
                    )
            if d in rows:
                raise DataFormatError(f"duplicate date {d.isoformat()}", line=lineno)
            rows[d] = vals
    if not rows:
        raise DataFormatError("no data rows")
    dates = sorted(rows)
    values = np.array([rows[d] for d in dates], dtype=float)
    if regions is None:
        values = values[:, 0]
    return IndicatorSeries(dates, values, regions)


def align_series(observed: ObservedSeries, indicator: IndicatorSeries,
                 region_names: list[str] | None = None) -> np.ndarray:
    """Return indicator values aligned to the observed dates, or fail loudly.

    The indicator must cover every observed date.  A per-region indicator
    is re-ordered to ``region_names``; a missing region is an error.
    """
    if not observed.dates:
        raise DataFormatError("observed series is empty")
    pos = {d: i for i, d in enumerate(indicator.dates)}
    try:
        idx = [pos[d] for d in observed.dates]
    except KeyError as e:
        raise DataFormatError(
            f"indicator series does not cover observed date {e.args[0].isoformat()}"
        ) from None
    vals = indicator.values[idx]
    if vals.ndim == 2:
        if region_names is None:
            raise DataFormatError(
                "per-region indicator given but no region names to match"
            )
        col = {name: j for j, name in enumerate(indicator.regions or [])}
        try:
            order = [col[name] for name in region_names]
        except KeyError as e:
            raise DataFormatError(f"indicator missing region {e.args[0]!r}") from None
        vals = vals[:, order]
    return vals


def export_timeseries(counts: list[DailyCounts], betas, dates: list[dt.date], path) -> None:
    """Write the per-day totals with the rate in force each day."""
    betas = np.asarray(betas, dtype=float)
    if not (len(counts) == len(betas) == len(dates)):
        raise DataFormatError("counts, betas and dates must have equal length")
    with _open_text(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_HEADER)
        for c, b, d in zip(counts, betas, dates):
            w.writerow([d.isoformat(), c.s, c.e, c.i, c.r, c.a, c.h,
                        c.new_h, repr(float(b))])


def load_timeseries(path) -> tuple[list[DailyCounts], np.ndarray, list[dt.date]]:
    """Inverse of :func:`export_timeseries`; exact round trip."""
    counts: list[DailyCounts] = []
    betas: list[float] = []
    dates: list[dt.date] = []
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TIMESERIES_HEADER:
            raise DataFormatError(
                f"expected header {','.join(TIMESERIES_HEADER)!r}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 9:
                raise DataFormatError(f"expected 9 fields, got {len(row)}", line=lineno)
            d = _parse_date(row[0], lineno)
            try:
                s, e, i, r, a, h, nh = (int(x) for x in row[1:8])
                b = float(row[8])
            except ValueError:
                raise DataFormatError(f"bad numeric field in {row!r}", line=lineno) from None
            dates.append(d)
            counts.append(DailyCounts(day=len(counts), s=s, e=e, i=i, r=r,
                                      a=a, h=h, new_h=nh))
            betas.append(b)
    return counts, np.array(betas), dates


@dataclass(frozen=True)
class NodeHistoryRecord:
    """One row of the run-length node history.

    The first row for a node states its status when recording began; every
    later row is a change taking effect in that day's given contact window
    (progression changes are attributed to window 2, the end of the day).
    """

    node: int
    region: str
    day: int
    zone: int
    status: str


def history_records(recorder: HistoryRecorder,
                    topology: MetroTopology) -> list[NodeHistoryRecord]:
    """Flatten a recorder into rows: one initial row per node, then events."""
    names = topology.region_names
    offsets = topology.offsets

    def regions_of(nodes: np.ndarray) -> list[str]:
        idx = np.searchsorted(offsets, nodes, side="right") - 1
        return [names[i] for i in idx.tolist()]

    out: list[NodeHistoryRecord] = []
    start = recorder.start_day
    all_nodes = np.arange(len(recorder.initial), dtype=np.int64)
    for node, region, code in zip(
        all_nodes.tolist(), regions_of(all_nodes), recorder.initial.tolist()
    ):
        out.append(NodeHistoryRecord(
            node=node, region=region, day=start, zone=1,
            status=STATUS_LETTERS[code],
        ))
    for day, zone, nodes, status in recorder.events:
        letter = STATUS_LETTERS[status]
        for node, region in zip(nodes.tolist(), regions_of(nodes)):
            out.append(NodeHistoryRecord(
                node=node, region=region, day=day, zone=zone, status=letter,
            ))
    return out


def export_node_history(records: list[NodeHistoryRecord], path) -> None:
    """Write the history CSV (gzip when the path ends in .gz).

    Validates that each node's row sequence forms a legal status path
    before anything is written.
    """
    _validate_history(records)
    with _open_text(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "region", "day", "zone", "status"])
        for r in records:
            w.writerow([r.node, r.region, r.day, r.zone, r.status])


def load_node_history(path) -> list[NodeHistoryRecord]:
    out: list[NodeHistoryRecord] = []
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != \
                ["node", "region", "day", "zone", "status"]:
            raise DataFormatError("expected header 'node,region,day,zone,status'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataFormatError(f"expected 5 fields, got {len(row)}", line=lineno)
            try:
                node, day, zone = int(row[0]), int(row[2]), int(row[3])
            except ValueError:
                raise DataFormatError(f"bad integer field in {row!r}", line=lineno) from None
            status = row[4].strip()
            if status not in _LETTER_TO_STATUS:
                raise DataFormatError(f"unknown status {status!r}", line=lineno)
            if zone not in (1, 2):
                raise DataFormatError(f"zone must be 1 or 2, got {zone}", line=lineno)
            out.append(NodeHistoryRecord(node, row[1], day, zone, status))
    _validate_history(out)
    return out


def _validate_history(records: list[NodeHistoryRecord]) -> None:
    last: dict[int, Status] = {}
    for r in records:
        status = Status(_LETTER_TO_STATUS[r.status])
        prev = last.get(r.node)
        if prev is not None and (prev, status) not in LEGAL_TRANSITIONS:
            raise DataFormatError(
                f"illegal transition {prev.name}->{status.name} for node {r.node}"
            )
        last[r.node] = status


def reconstruct_daily_counts(records: list[NodeHistoryRecord],
                             days: int) -> list[DailyCounts]:
    """Replay a node history into end-of-day totals and daily admissions.

    ``days`` are counted from the history's start day.  Useful as an
    independent cross-check that exported histories carry the whole run.
    """
    _validate_history(records)
    seen: set[int] = set()
    initial: dict[int, int] = {}
    events: list[tuple[int, int, int]] = []
    start_day = None
    for r in records:
        code = _LETTER_TO_STATUS[r.status]
        if r.node not in seen:
            seen.add(r.node)
            initial[r.node] = code
            if start_day is None:
                start_day = r.day
        else:
            events.append((r.day, r.node, code))
    if start_day is None:
        raise DataFormatError("no records")

    statuses = {node: code for node, code in initial.items()}
    out: list[DailyCounts] = []
    by_day: dict[int, list[tuple[int, int]]] = {}
    for day, node, code in events:
        by_day.setdefault(day, []).append((node, code))
    for offset in range(days):
        day = start_day + offset
        new_h = 0
        for node, code in by_day.get(day, ()):
            statuses[node] = code
            if code == Status.H:
                new_h += 1
        tot = np.zeros(6, dtype=np.int64)
        for code in statuses.values():
            tot[code] += 1
        out.append(DailyCounts(
            day=day, s=int(tot[Status.S]), e=int(tot[Status.E]),
            i=int(tot[Status.I]), r=int(tot[Status.R]), a=int(tot[Status.A]),
            h=int(tot[Status.H]), new_h=new_h,
        ))
    return out


def export_beta_series(series: BetaSeries, path, dates: list[dt.date] | None = None) -> None:
    """Write the fitted rates CSV: date, beta, loss, iterations.

    Dates come from the series itself unless overridden; without either,
    the day index stands in for the date column.
    """
    dates = dates if dates is not None else series.dates
    with _open_text(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "beta", "loss", "iterations"])
        for t in range(len(series)):
            label = dates[t].isoformat() if dates is not None else t
            w.writerow([label, repr(float(series.beta[t])),
                        repr(float(series.loss[t])), int(series.iterations[t])])


def export_beta_diagnostics(series: BetaSeries, path,
                            dates: list[dt.date] | None = None) -> None:
    """JSON sidecar: per-day search diagnostics and predicted windows."""
    dates = dates if dates is not None else series.dates
    payload = []
    for t in range(len(series)):
        payload.append({
            "date": dates[t].isoformat() if dates is not None else t,
            "beta": float(series.beta[t]),
            "loss": None if np.isnan(series.loss[t]) else float(series.loss[t]),
            "iterations": int(series.iterations[t]),
            "evaluations": int(series.evaluations[t]),
            "converged": bool(series.converged[t]),
            "zero_branch": bool(series.zero_branch[t]),
            "fitted_new_h": int(series.fitted_new_h[t]),
            "predicted_window": (
                None if series.predicted[t] is None
                else [float(x) for x in series.predicted[t]]
            ),
        })
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_beta_csv(path) -> tuple[list[dt.date], np.ndarray]:
    """Read a daily rate series from any CSV whose first columns are
    date and beta (the exported series format qualifies)."""
    dates: list[dt.date] = []
    betas: list[float] = []
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or \
                [h.strip().lower() for h in header[:2]] != ["date", "beta"]:
            raise DataFormatError("expected columns starting 'date,beta'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            d = _parse_date(row[0], lineno)
            try:
                b = float(row[1])
            except ValueError:
                raise DataFormatError(f"bad rate {row[1]!r}", line=lineno) from None
            if not 0.0 <= b <= 1.0:
                raise DataFormatError(f"rate {b} outside [0, 1]", line=lineno)
            dates.append(d)
            betas.append(b)
    if not dates:
        raise DataFormatError("no data rows")
    return dates, np.array(betas)


def export_observed(series: ObservedSeries, path) -> None:
    with _open_text(path, "w") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "h"])
        for d, v in zip(series.dates, series.values):
            w.writerow([d.isoformat(), int(v)])


def export_indicator(series: IndicatorSeries, path) -> None:
    with _open_text(path, "w") as fh:
        w = csv.writer(fh)
        if series.values.ndim == 1:
            w.writerow(["date", "indicator"])
            for d, v in zip(series.dates, series.values):
                w.writerow([d.isoformat(), repr(float(v))])
        else:
            w.writerow(["date"] + list(series.regions or []))
            for i, d in enumerate(series.dates):
                w.writerow([d.isoformat()] + [repr(float(v)) for v in series.values[i]])
