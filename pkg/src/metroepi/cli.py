"""Command-line entry points.

Subcommands: generate, simulate, infer, sweep, export-fixtures.  Every
run takes a YAML config (flags override it), writes its outputs plus a
manifest into the output directory, and exits 0 on success, 1 on a
validation problem, 2 on a runtime failure.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, data_io, plots
from .config import RunConfig, load_config
from .errors import ConfigError, DataFormatError, ParameterError
from .fixtures import DEFAULT_START, piecewise_beta, synthetic_dataset
from .run import build_state, build_topology, one_step_rmse, run_inference, run_simulation
from .sweep import SweepGrid, export_sweep_csv, export_sweep_json, run_sweep
from .topology import export_edge_list

log = logging.getLogger("metroepi")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    common.add_argument("--out-dir", default=None,
                        help="override the config output directory")
    common.add_argument("--workers", type=int, default=1,
                        help="worker processes for parallel stages")
    common.add_argument("--quiet", action="store_true",
                        help="suppress progress logging")

    parser = argparse.ArgumentParser(
        prog="metroepi",
        description="Commuter-coupled network epidemic simulator and rate fitter",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common],
                   help="build the networks and export edge lists plus a summary")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="run a forward simulation and export the time series")
    p_sim.add_argument("--days", type=int, default=None,
                       help="horizon (defaults to simulation.days in the config)")
    p_sim.add_argument("--beta", type=float, default=None,
                       help="constant transmission probability "
                            "(defaults to simulation.beta)")
    p_sim.add_argument("--beta-file", default=None,
                       help="CSV with date,beta columns giving a daily rate series")
    p_sim.add_argument("--start-date", default=None,
                       help="ISO date of day 0 when no indicator file supplies dates")
    p_sim.add_argument("--no-history", action="store_true",
                       help="skip the per-node status history export")

    p_inf = sub.add_parser("infer", parents=[common],
                           help="fit the daily transmission rate to observed admissions")
    p_inf.add_argument("--observed", default=None,
                       help="observed admissions CSV (defaults to paths.observed)")
    p_inf.add_argument("--indicator", default=None,
                       help="commuting indicator CSV (defaults to paths.indicator)")

    p_swp = sub.add_parser("sweep", parents=[common],
                           help="score a grid of shortcut probabilities")
    p_swp.add_argument("--observed", default=None)
    p_swp.add_argument("--indicator", default=None)

    p_fix = sub.add_parser("export-fixtures", parents=[common],
                           help="generate a synthetic observed/indicator dataset")
    p_fix.add_argument("--days", type=int, default=None)
    p_fix.add_argument("--beta", type=float, default=None,
                       help="ground-truth rate (defaults to simulation.beta)")
    p_fix.add_argument("--beta-shift", action="append", default=[],
                       metavar="DAY:RATE",
                       help="step change, e.g. 15:0.1 (repeatable)")
    p_fix.add_argument("--start-date", default=None)
    return parser


def _out_dir(config: RunConfig) -> Path:
    if config.out_dir is None:
        raise ConfigError("no output directory: set paths.out_dir or pass --out-dir")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: RunConfig,
                    outputs: list[str], extra: dict | None = None) -> None:
    payload = {
        "command": command,
        "config_sha256": config.config_sha256,
        "seed": config.seed,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    if extra:
        payload.update(extra)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_observed_indicator(config: RunConfig, observed_arg, indicator_arg):
    obs_path = observed_arg or config.observed_path
    if obs_path is None:
        raise ConfigError("no observed series: set paths.observed or pass --observed")
    observed = data_io.load_observed(obs_path)
    ind_path = indicator_arg or config.indicator_path
    region_names = [r.name for r in config.regions]
    if ind_path is None:
        log.info("no indicator file; using constant %.3f", config.indicator_constant)
        indicator = np.full(len(observed), config.indicator_constant)
    else:
        indicator = data_io.align_series(
            observed, data_io.load_indicator(ind_path), region_names
        )
    return observed, indicator


def _dates_for_horizon(config: RunConfig, days: int, start_arg):
    if config.indicator_path is not None:
        series = data_io.load_indicator(config.indicator_path)
        if len(series) < days:
            raise DataFormatError(
                f"indicator file covers {len(series)} days, need {days}"
            )
        region_names = [r.name for r in config.regions]
        values = series.values[:days]
        if values.ndim == 2:
            observed_like = data_io.ObservedSeries(
                series.dates[:days], np.zeros(days, dtype=np.int64)
            )
            values = data_io.align_series(observed_like, series, region_names)
        return series.dates[:days], values
    start = dt.date.fromisoformat(start_arg) if start_arg else DEFAULT_START
    dates = [start + dt.timedelta(days=i) for i in range(days)]
    return dates, np.full(days, config.indicator_constant)


def cmd_generate(args, config: RunConfig) -> int:
    out = _out_dir(config)
    topology = build_topology(config)
    outputs = []
    summary_regions = []
    for spec, graph, pool, off in zip(config.regions, topology.residence,
                                      topology.pools, topology.offsets[:-1]):
        fname = f"edges_residence_{spec.name}.txt"
        export_edge_list(graph, out / fname,
                         id_map=np.arange(off, off + graph.n))
        outputs.append(fname)
        deg = graph.degrees()
        summary_regions.append({
            "name": spec.name,
            "nodes": graph.n,
            "edges": graph.edge_count,
            "commuter_pool": int(len(pool)),
            "degree_min": int(deg.min()) if graph.n else 0,
            "degree_mean": round(float(deg.mean()), 4) if graph.n else 0.0,
            "degree_max": int(deg.max()) if graph.n else 0,
        })
    summary = {
        "total_nodes": topology.n_total,
        "total_commuter_pool": topology.pool_total,
        "k_residence": config.k_residence,
        "p_residence": config.p_residence,
        "k_work": config.k_work,
        "p_work": config.p_work,
        "regions": summary_regions,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    outputs.append("summary.json")
    _write_manifest(out, "generate", config, outputs)
    log.info("wrote %d files to %s (total nodes %d)",
             len(outputs) + 1, out, topology.n_total)
    return 0


def cmd_simulate(args, config: RunConfig) -> int:
    out = _out_dir(config)
    if args.beta_file:
        b_dates, betas = data_io.load_beta_csv(args.beta_file)
        days = args.days or config.days or len(betas)
        if len(betas) < days:
            raise DataFormatError(
                f"beta file covers {len(betas)} days, need {days}"
            )
        betas = betas[:days]
    else:
        beta = args.beta if args.beta is not None else config.beta
        if beta is None:
            raise ConfigError(
                "no rate given: pass --beta/--beta-file or set simulation.beta"
            )
        days = args.days or config.days
        if days is None:
            raise ConfigError("no horizon given: pass --days or set simulation.days")
        betas = np.full(days, float(beta))

    dates, indicator = _dates_for_horizon(config, days, args.start_date)
    counts, topology, recorder = run_simulation(
        config, days, betas, indicator, record_history=not args.no_history
    )
    outputs = []
    data_io.export_timeseries(counts, betas, dates, out / "timeseries.csv")
    outputs.append("timeseries.csv")
    if recorder is not None:
        records = data_io.history_records(recorder, topology)
        data_io.export_node_history(records, out / "node_history.csv")
        outputs.append("node_history.csv")
    plots.save_class_curves(counts, out / "class_curves.png", dates=dates)
    outputs.append("class_curves.png")
    _write_manifest(out, "simulate", config, outputs, extra={"days": days})
    log.info("simulated %d days over %d nodes", days, topology.n_total)
    return 0


def cmd_infer(args, config: RunConfig) -> int:
    out = _out_dir(config)
    observed, indicator = _load_observed_indicator(
        config, args.observed, args.indicator
    )
    series = run_inference(config, observed.values, indicator,
                           dates=observed.dates)
    outputs = []
    data_io.export_beta_series(series, out / "beta_series.csv")
    outputs.append("beta_series.csv")
    data_io.export_beta_diagnostics(series, out / "beta_diagnostics.json")
    outputs.append("beta_diagnostics.json")
    plots.save_beta_series(series, out / "beta_series.png")
    outputs.append("beta_series.png")
    plots.save_fit_overlay(observed.values, series.fitted_new_h,
                           out / "fit_overlay.png", dates=observed.dates)
    outputs.append("fit_overlay.png")
    rmse = one_step_rmse(series, observed.values)
    _write_manifest(out, "infer", config, outputs,
                    extra={"rmse": round(rmse, 6)})
    log.info("fitted %d days, one-step rmse %.3f", len(series), rmse)
    return 0


def cmd_sweep(args, config: RunConfig) -> int:
    out = _out_dir(config)
    if config.sweep is None:
        raise ConfigError("config has no sweep section")
    observed, indicator = _load_observed_indicator(
        config, args.observed, args.indicator
    )
    grid = SweepGrid.from_settings(config.sweep)
    result = run_sweep(grid, config, observed.values, indicator,
                       rmse_threshold=config.sweep.rmse_threshold,
                       workers=args.workers)
    outputs = []
    export_sweep_csv(result, out / "sweep.csv")
    outputs.append("sweep.csv")
    export_sweep_json(result, out / "sweep_summary.json")
    outputs.append("sweep_summary.json")
    plots.save_sweep_map(result, out / "sweep_map.png")
    outputs.append("sweep_map.png")
    _write_manifest(out, "sweep", config, outputs)
    n_ok = sum(c.appropriate for c in result.cells)
    log.info("swept %d cells, %d within threshold", len(result.cells), n_ok)
    return 0


def cmd_export_fixtures(args, config: RunConfig) -> int:
    out = _out_dir(config)
    days = args.days or config.days
    if days is None:
        raise ConfigError("no horizon given: pass --days or set simulation.days")
    base = args.beta if args.beta is not None else config.beta
    if base is None:
        raise ConfigError("no rate given: pass --beta or set simulation.beta")
    shifts = []
    for spec in args.beta_shift:
        try:
            day_s, rate_s = spec.split(":", 1)
            shifts.append((int(day_s), float(rate_s)))
        except ValueError:
            raise ConfigError(
                f"bad --beta-shift {spec!r}, expected DAY:RATE"
            ) from None
    betas = piecewise_beta(days, base, shifts)
    start = dt.date.fromisoformat(args.start_date) if args.start_date else DEFAULT_START

    topology = build_topology(config)
    exposed = config.exposed_per_region
    observed, indicator, truth = synthetic_dataset(
        topology, config.thresholds, betas, days, seed=config.seed,
        indicator=config.indicator_constant,
        exposed_per_region=list(exposed) if isinstance(exposed, tuple) else exposed,
        start_date=start,
    )
    outputs = []
    data_io.export_observed(observed, out / "observed.csv")
    outputs.append("observed.csv")
    data_io.export_indicator(indicator, out / "indicator.csv")
    outputs.append("indicator.csv")
    with open(out / "truth_beta.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("date,beta\n")
        for d, b in zip(observed.dates, truth):
            fh.write(f"{d.isoformat()},{float(b)!r}\n")
    outputs.append("truth_beta.csv")
    _write_manifest(out, "export-fixtures", config, outputs,
                    extra={"days": days})
    log.info("wrote synthetic dataset of %d days", days)
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "infer": cmd_infer,
    "sweep": cmd_sweep,
    "export-fixtures": cmd_export_fixtures,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed, out_dir=args.out_dir
        )
        return _COMMANDS[args.command](args, config)
    except (ConfigError, DataFormatError, ParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
