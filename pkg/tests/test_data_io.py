"""CSV formats: loaders, exporters, exact round trips, history replay."""

import datetime as dt
import gzip

import numpy as np
import pytest

from metroepi.data_io import (
    IndicatorSeries,
    NodeHistoryRecord,
    ObservedSeries,
    align_series,
    export_beta_diagnostics,
    export_beta_series,
    export_indicator,
    export_node_history,
    export_observed,
    export_timeseries,
    history_records,
    load_beta_csv,
    load_indicator,
    load_node_history,
    load_observed,
    load_timeseries,
    reconstruct_daily_counts,
)
from metroepi.epidemic import TransitionThresholds, simulate_horizon
from metroepi.errors import DataFormatError
from metroepi.inference import BetaSeries

from conftest import fresh_state, toy_metro

D0 = dt.date(2020, 3, 1)


def days_from(start, n):
    return [start + dt.timedelta(days=i) for i in range(n)]


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_observed_basic(tmp_path):
    p = write(tmp_path, "obs.csv",
              "date,h\n2020-03-01,3\n2020-03-02,5\n2020-03-03,0\n")
    s = load_observed(p)
    assert s.dates == days_from(D0, 3)
    assert s.values.tolist() == [3, 5, 0]


def test_load_observed_sorts_rows(tmp_path):
    p = write(tmp_path, "obs.csv",
              "date,h\n2020-03-03,1\n2020-03-01,2\n2020-03-02,3\n")
    s = load_observed(p)
    assert s.values.tolist() == [2, 3, 1]


def test_load_observed_rejects_bad_header(tmp_path):
    p = write(tmp_path, "obs.csv", "day,count\n2020-03-01,3\n")
    with pytest.raises(DataFormatError) as e:
        load_observed(p)
    assert "line 1" in str(e.value)


def test_load_observed_line_numbers_in_errors(tmp_path):
    p = write(tmp_path, "obs.csv", "date,h\n2020-03-01,3\n2020-03-02,x\n")
    with pytest.raises(DataFormatError) as e:
        load_observed(p)
    assert "line 3" in str(e.value)
    p2 = write(tmp_path, "obs2.csv", "date,h\nnot-a-date,3\n")
    with pytest.raises(DataFormatError) as e2:
        load_observed(p2)
    assert "line 2" in str(e2.value)


def test_load_observed_rejects_negative_and_duplicate(tmp_path):
    with pytest.raises(DataFormatError):
        load_observed(write(tmp_path, "a.csv", "date,h\n2020-03-01,-1\n"))
    with pytest.raises(DataFormatError):
        load_observed(write(
            tmp_path, "b.csv", "date,h\n2020-03-01,1\n2020-03-01,2\n"))


def test_load_observed_gap_handling(tmp_path):
    p = write(tmp_path, "obs.csv", "date,h\n2020-03-01,1\n2020-03-04,2\n")
    with pytest.raises(DataFormatError):
        load_observed(p)
    s = load_observed(p, fill_missing=True)
    assert s.values.tolist() == [1, 0, 0, 2]
    assert len(s.dates) == 4


def test_load_observed_empty_cases(tmp_path):
    with pytest.raises(DataFormatError):
        load_observed(write(tmp_path, "a.csv", ""))
    with pytest.raises(DataFormatError):
        load_observed(write(tmp_path, "b.csv", "date,h\n"))


def test_load_observed_gzip(tmp_path):
    p = tmp_path / "obs.csv.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("date,h\n2020-03-01,7\n2020-03-02,8\n")
    s = load_observed(p)
    assert s.values.tolist() == [7, 8]


def test_load_indicator_uniform(tmp_path):
    p = write(tmp_path, "ind.csv",
              "date,indicator\n2020-03-01,1.0\n2020-03-02,0.5\n")
    s = load_indicator(p)
    assert s.values.ndim == 1
    assert s.regions is None
    assert s.values.tolist() == [1.0, 0.5]


def test_load_indicator_per_region(tmp_path):
    p = write(tmp_path, "ind.csv",
              "date,east,west\n2020-03-01,1.0,0.8\n2020-03-02,0.9,0.7\n")
    s = load_indicator(p)
    assert s.values.shape == (2, 2)
    assert s.regions == ["east", "west"]


def test_load_indicator_rejects_negative(tmp_path):
    p = write(tmp_path, "ind.csv", "date,indicator\n2020-03-01,-0.1\n")
    with pytest.raises(DataFormatError):
        load_indicator(p)


def test_load_indicator_warns_above_two(tmp_path, caplog):
    p = write(tmp_path, "ind.csv", "date,indicator\n2020-03-01,3.5\n")
    with caplog.at_level("WARNING"):
        s = load_indicator(p)
    assert s.values.tolist() == [3.5]  # loaded anyway
    assert any("outside" in r.message for r in caplog.records)


def test_align_series_uniform():
    obs = ObservedSeries(days_from(D0 + dt.timedelta(days=1), 2), [1, 2])
    ind = IndicatorSeries(days_from(D0, 4), [0.1, 0.2, 0.3, 0.4])
    vals = align_series(obs, ind)
    assert vals.tolist() == [0.2, 0.3]


def test_align_series_reorders_regions():
    obs = ObservedSeries(days_from(D0, 2), [1, 2])
    ind = IndicatorSeries(days_from(D0, 2),
                          [[0.1, 0.9], [0.2, 0.8]], regions=["b", "a"])
    vals = align_series(obs, ind, region_names=["a", "b"])
    assert vals.tolist() == [[0.9, 0.1], [0.8, 0.2]]
    with pytest.raises(DataFormatError):
        align_series(obs, ind, region_names=["a", "missing"])
    with pytest.raises(DataFormatError):
        align_series(obs, ind)  # per-region data needs names


def test_align_series_requires_coverage():
    obs = ObservedSeries(days_from(D0, 3), [1, 2, 3])
    ind = IndicatorSeries(days_from(D0, 2), [1.0, 1.0])
    with pytest.raises(DataFormatError):
        align_series(obs, ind)


def test_observed_indicator_round_trip(tmp_path):
    obs = ObservedSeries(days_from(D0, 3), [4, 0, 9])
    p = tmp_path / "obs.csv"
    export_observed(obs, p)
    back = load_observed(p)
    assert back.dates == obs.dates and back.values.tolist() == obs.values.tolist()

    ind = IndicatorSeries(days_from(D0, 2), [[1.0, 0.25], [0.5, 0.125]],
                          regions=["a", "b"])
    q = tmp_path / "ind.csv"
    export_indicator(ind, q)
    back2 = load_indicator(q)
    assert back2.regions == ["a", "b"]
    assert np.array_equal(back2.values, ind.values)


def test_timeseries_round_trip(tmp_path):
    topo = toy_metro(nodes=100, commuting=20, seed=91)
    state = fresh_state(topo, seed=92)
    counts = simulate_horizon(state, topo, TransitionThresholds(), 0.2, 1.0, 10)
    betas = np.linspace(0.05, 1.0 / 3.0, 10)  # exercise non-terminating decimals
    dates = days_from(D0, 10)
    p = tmp_path / "ts.csv"
    export_timeseries(counts, betas, dates, p)
    got_counts, got_betas, got_dates = load_timeseries(p)
    assert got_dates == dates
    assert np.array_equal(got_betas, betas)  # repr() floats survive exactly
    for a, b in zip(got_counts, counts):
        assert (a.s, a.e, a.i, a.r, a.a, a.h, a.new_h) == \
               (b.s, b.e, b.i, b.r, b.a, b.h, b.new_h)


def test_timeseries_header_fixed(tmp_path):
    p = tmp_path / "ts.csv"
    export_timeseries([], [], [], p)
    assert p.read_text().splitlines()[0] == "date,s,e,i,r,a,h,new_h,beta"


def test_node_history_round_trip_and_replay(tmp_path):
    topo = toy_metro(nodes=80, commuting=20, seed=93)
    state = fresh_state(topo, seed=94, exposed=3)
    rec = state.attach_history()
    days = 15
    counts = simulate_horizon(state, topo, TransitionThresholds(), 0.3, 1.0, days)
    records = history_records(rec, topo)

    # first row per node states the initial status
    first_rows = records[:topo.n_total]
    assert [r.node for r in first_rows] == list(range(topo.n_total))
    assert sum(1 for r in first_rows if r.status == "E") == 9
    assert {r.region for r in records} <= set(topo.region_names)

    p = tmp_path / "hist.csv.gz"
    export_node_history(records, p)
    back = load_node_history(p)
    assert back == records

    # independent replay of the run-length log reproduces every daily total
    replay = reconstruct_daily_counts(back, days)
    for got, want in zip(replay, counts):
        assert (got.s, got.e, got.i, got.r, got.a, got.h, got.new_h) == \
               (want.s, want.e, want.i, want.r, want.a, want.h, want.new_h)


def test_node_history_rejects_illegal_transition(tmp_path):
    bad = [
        NodeHistoryRecord(0, "a", 0, 1, "S"),
        NodeHistoryRecord(0, "a", 1, 2, "H"),  # S -> H is not a legal move
    ]
    with pytest.raises(DataFormatError):
        export_node_history(bad, tmp_path / "x.csv")
    p = write(tmp_path, "bad.csv",
              "node,region,day,zone,status\n0,a,0,1,S\n0,a,1,2,H\n")
    with pytest.raises(DataFormatError):
        load_node_history(p)


def test_node_history_rejects_bad_rows(tmp_path):
    p = write(tmp_path, "h.csv",
              "node,region,day,zone,status\n0,a,0,3,S\n")
    with pytest.raises(DataFormatError) as e:
        load_node_history(p)
    assert "zone" in str(e.value)
    p2 = write(tmp_path, "h2.csv",
               "node,region,day,zone,status\n0,a,0,1,Q\n")
    with pytest.raises(DataFormatError):
        load_node_history(p2)


def test_beta_series_export_and_reload(tmp_path):
    series = BetaSeries(
        beta=np.array([0.0, 0.3, 1.0 / 7.0]),
        loss=np.array([np.nan, 4.5, 2.25]),
        iterations=np.array([0, 7, 6]),
        evaluations=np.array([0, 10, 9]),
        converged=np.array([True, True, False]),
        zero_branch=np.array([True, False, False]),
        fitted_new_h=np.array([0, 3, 2]),
        predicted=[None, np.array([1.0, 2.0]), np.array([2.0, 2.5])],
        dates=days_from(D0, 3),
    )
    p = tmp_path / "beta.csv"
    export_beta_series(series, p)
    dates, betas = load_beta_csv(p)
    assert dates == series.dates
    assert np.array_equal(betas, series.beta)

    q = tmp_path / "beta.json"
    export_beta_diagnostics(series, q)
    import json
    payload = json.loads(q.read_text())
    assert len(payload) == 3
    assert payload[0]["zero_branch"] is True
    assert payload[0]["loss"] is None  # NaN serialises as null
    assert payload[1]["predicted_window"] == [1.0, 2.0]
    assert payload[2]["converged"] is False


def test_load_beta_csv_validates(tmp_path):
    with pytest.raises(DataFormatError):
        load_beta_csv(write(tmp_path, "a.csv", "date,loss\n2020-03-01,0.5\n"))
    with pytest.raises(DataFormatError) as e:
        load_beta_csv(write(tmp_path, "b.csv",
                            "date,beta\n2020-03-01,0.5\n2020-03-02,1.5\n"))
    assert "line 3" in str(e.value)


def test_series_dataclasses_validate():
    with pytest.raises(DataFormatError):
        ObservedSeries(days_from(D0, 3), [1, 2])
    with pytest.raises(DataFormatError):
        ObservedSeries([D0, D0 + dt.timedelta(days=2)], [1, 2])
    with pytest.raises(DataFormatError):
        ObservedSeries(days_from(D0, 2), [1, -2])
    with pytest.raises(DataFormatError):
        IndicatorSeries(days_from(D0, 2), [[1.0], [0.5]])  # 2-D needs names
