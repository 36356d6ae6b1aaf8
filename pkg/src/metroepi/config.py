"""Run configuration: one YAML file drives every subcommand.

The schema is strict: unknown keys are rejected with their full path, and
every value is range-checked at load time so a bad config dies before any
compute starts.  Relative paths inside the file resolve against the file's
own directory.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .epidemic import TransitionThresholds
from .errors import ConfigError
from .inference import InferenceConfig
from .topology import RegionSpec

DEFAULT_K_RESIDENCE = 4
DEFAULT_K_WORK = 10


@dataclass(frozen=True)
class SweepSettings:
    """Grid axes and scoring threshold for the shortcut-probability sweep."""

    p_residence: tuple[float, ...]
    p_work: tuple[float, ...]
    seeds_per_cell: int = 1
    rmse_threshold: float = 5.0

    def validate(self) -> None:
        if not self.p_residence or not self.p_work:
            raise ConfigError("sweep axes must be non-empty")
        for name, axis in (("p_residence", self.p_residence), ("p_work", self.p_work)):
            for v in axis:
                if not 0.0 <= v <= 1.0:
                    raise ConfigError(f"sweep.{name} value {v} outside [0, 1]")
        if self.seeds_per_cell < 1:
            raise ConfigError("sweep.seeds_per_cell must be >= 1")
        if self.rmse_threshold <= 0:
            raise ConfigError("sweep.rmse_threshold must be positive")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, already validated."""

    regions: tuple[RegionSpec, ...]
    scale: float
    k_residence: int
    p_residence: float
    k_work: int
    p_work: float
    thresholds: TransitionThresholds
    exposed_per_region: int | tuple[int, ...]
    inference: InferenceConfig
    seed: int
    days: int | None = None
    beta: float | None = None
    indicator_constant: float = 1.0
    observed_path: str | None = None
    indicator_path: str | None = None
    out_dir: str | None = None
    sweep: SweepSettings | None = None
    config_sha256: str | None = field(default=None, compare=False)

    def with_overrides(self, seed: int | None = None,
                       out_dir: str | None = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        return cfg


def _require_keys(section: dict, allowed: set[str], path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path}{key!r}")


def _get_number(section: dict, key: str, path: str, default=None,
                required: bool = False, integer: bool = False):
    if key not in section or section[key] is None:
        if required:
            raise ConfigError(f"missing required config key {path}{key!r}")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"config key {path}{key!r} must be a number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"config key {path}{key!r} must be an integer, got {v!r}")
        return int(v)
    return float(v)


def config_from_dict(data: dict, base_dir: Path | str = ".",
                     sha256: str | None = None) -> RunConfig:
    """Validate a parsed config mapping and build a RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    base = Path(base_dir)
    _require_keys(data, {
        "regions", "scale", "network", "thresholds", "seeding",
        "simulation", "inference", "sweep", "paths", "seed",
    }, "")

    seed = _get_number(data, "seed", "", required=True, integer=True)
    scale = _get_number(data, "scale", "", default=1.0)
    if scale <= 0:
        raise ConfigError("scale must be positive")

    raw_regions = data.get("regions")
    if not isinstance(raw_regions, list) or not raw_regions:
        raise ConfigError("regions must be a non-empty list")
    regions = []
    names = set()
    for i, entry in enumerate(raw_regions):
        path = f"regions[{i}]."
        if not isinstance(entry, dict):
            raise ConfigError(f"regions[{i}] must be a mapping")
        _require_keys(entry, {"name", "population", "commuting"}, path)
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{path}name must be a non-empty string")
        if name in names:
            raise ConfigError(f"duplicate region name {name!r}")
        names.add(name)
        pop = _get_number(entry, "population", path, required=True, integer=True)
        com = _get_number(entry, "commuting", path, required=True, integer=True)
        spec = RegionSpec(name=name, population=pop, commuting=com, scale=scale)
        try:
            spec.validate()
        except Exception as e:
            raise ConfigError(f"regions[{i}]: {e}") from None
        regions.append(spec)

    net = data.get("network") or {}
    if not isinstance(net, dict):
        raise ConfigError("network must be a mapping")
    _require_keys(net, {"k_residence", "p_residence", "k_work", "p_work"}, "network.")
    k_r = _get_number(net, "k_residence", "network.", default=DEFAULT_K_RESIDENCE, integer=True)
    k_w = _get_number(net, "k_work", "network.", default=DEFAULT_K_WORK, integer=True)
    p_r = _get_number(net, "p_residence", "network.", required=True)
    p_w = _get_number(net, "p_work", "network.", required=True)
    for label, p in (("p_residence", p_r), ("p_work", p_w)):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"network.{label} must lie in [0, 1], got {p}")
    if k_r < 1 or k_w < 1:
        raise ConfigError("network k values must be >= 1")

    thr = data.get("thresholds") or {}
    if not isinstance(thr, dict):
        raise ConfigError("thresholds must be a mapping")
    allowed_thr = {"e_to_a", "e_to_i", "a_to_h", "a_to_r", "i_to_h", "h_to_r",
                   "literal_exceeds"}
    _require_keys(thr, allowed_thr, "thresholds.")
    kwargs = {}
    for key in allowed_thr - {"literal_exceeds"}:
        v = _get_number(thr, key, "thresholds.")
        if v is not None:
            kwargs[key] = v
    if "literal_exceeds" in thr:
        flag = thr["literal_exceeds"]
        if not isinstance(flag, bool):
            raise ConfigError("thresholds.literal_exceeds must be a boolean")
        kwargs["literal_exceeds"] = flag
    thresholds = TransitionThresholds(**kwargs)
    try:
        thresholds.validate()
    except Exception as e:
        raise ConfigError(f"thresholds: {e}") from None

    seeding = data.get("seeding") or {}
    if not isinstance(seeding, dict):
        raise ConfigError("seeding must be a mapping")
    _require_keys(seeding, {"exposed_per_region"}, "seeding.")
    exposed_raw = seeding.get("exposed_per_region", 5)
    if isinstance(exposed_raw, list):
        if len(exposed_raw) != len(regions):
            raise ConfigError(
                "seeding.exposed_per_region list must have one entry per region"
            )
        exposed = tuple(int(x) for x in exposed_raw)
        if any(x < 0 for x in exposed):
            raise ConfigError("seeding.exposed_per_region entries must be >= 0")
    else:
        if isinstance(exposed_raw, bool) or not isinstance(exposed_raw, int) or exposed_raw < 0:
            raise ConfigError("seeding.exposed_per_region must be a non-negative integer")
        exposed = int(exposed_raw)

    sim = data.get("simulation") or {}
    if not isinstance(sim, dict):
        raise ConfigError("simulation must be a mapping")
    _require_keys(sim, {"days", "beta", "indicator"}, "simulation.")
    days = _get_number(sim, "days", "simulation.", integer=True)
    if days is not None and days < 1:
        raise ConfigError("simulation.days must be >= 1")
    beta = _get_number(sim, "beta", "simulation.")
    if beta is not None and not 0.0 <= beta <= 1.0:
        raise ConfigError(f"simulation.beta must lie in [0, 1], got {beta}")
    indicator_constant = _get_number(sim, "indicator", "simulation.", default=1.0)
    if indicator_constant < 0:
        raise ConfigError("simulation.indicator must be >= 0")

    inf = data.get("inference") or {}
    if not isinstance(inf, dict):
        raise ConfigError("inference must be a mapping")
    _require_keys(inf, {"epsilon", "window", "replicates", "beta_prior",
                        "max_iterations"}, "inference.")
    inf_kwargs = {}
    for key, integer in (("epsilon", False), ("window", True), ("replicates", True),
                         ("beta_prior", False), ("max_iterations", True)):
        v = _get_number(inf, key, "inference.", integer=integer)
        if v is not None:
            inf_kwargs[key] = v
    inference = InferenceConfig(**inf_kwargs)
    try:
        inference.validate()
    except Exception as e:
        raise ConfigError(f"inference: {e}") from None

    sweep_raw = data.get("sweep")
    sweep = None
    if sweep_raw is not None:
        if not isinstance(sweep_raw, dict):
            raise ConfigError("sweep must be a mapping")
        _require_keys(sweep_raw, {"p_residence", "p_work", "seeds_per_cell",
                                  "rmse_threshold"}, "sweep.")
        for axis in ("p_residence", "p_work"):
            if not isinstance(sweep_raw.get(axis), list):
                raise ConfigError(f"sweep.{axis} must be a list")
        sweep = SweepSettings(
            p_residence=tuple(float(x) for x in sweep_raw["p_residence"]),
            p_work=tuple(float(x) for x in sweep_raw["p_work"]),
            seeds_per_cell=int(_get_number(sweep_raw, "seeds_per_cell", "sweep.",
                                           default=1, integer=True)),
            rmse_threshold=float(_get_number(sweep_raw, "rmse_threshold", "sweep.",
                                             default=5.0)),
        )
        sweep.validate()

    paths = data.get("paths") or {}
    if not isinstance(paths, dict):
        raise ConfigError("paths must be a mapping")
    _require_keys(paths, {"observed", "indicator", "out_dir"}, "paths.")

    def resolve(key):
        v = paths.get(key)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigError(f"paths.{key} must be a string")
        return str((base / v) if not Path(v).is_absolute() else Path(v))

    return RunConfig(
        regions=tuple(regions),
        scale=float(scale),
        k_residence=int(k_r),
        p_residence=float(p_r),
        k_work=int(k_w),
        p_work=float(p_w),
        thresholds=thresholds,
        exposed_per_region=exposed,
        inference=inference,
        seed=int(seed),
        days=days,
        beta=beta,
        indicator_constant=float(indicator_constant),
        observed_path=resolve("observed"),
        indicator_path=resolve("indicator"),
        out_dir=resolve("out_dir"),
        sweep=sweep,
        config_sha256=sha256,
    )


def load_config(path) -> RunConfig:
    """Parse and validate a YAML config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    if data is None:
        raise ConfigError(f"config file {path} is empty")
    sha = hashlib.sha256(raw).hexdigest()
    return config_from_dict(data, base_dir=path.parent, sha256=sha)
