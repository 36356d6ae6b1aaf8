"""Residence and workplace network construction.

The metro area is modelled as one small-world graph per residence region
plus a workplace graph that is rebuilt every simulated day over the
commuters who are active that day.  Residence graphs never share edges with
each other; commuting is the only channel between regions.

Graphs are plain edge arrays rather than an adjacency structure because the
epidemic step only ever iterates edges, and at full scale (hundreds of
thousands of nodes) edge arrays keep the per-day cost linear.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .rng import make_rng

log = logging.getLogger(__name__)


def round_half_up(x: float) -> int:
    """Round with ties away from zero (0.5 -> 1), never banker's rounding."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class NetworkParams:
    """Parameters of one ring-with-shortcuts graph.

    n: node count, k: nearest-neighbour count (an odd k connects k-1
    neighbours), shortcut_prob: per-lattice-edge probability of adding one
    random shortcut.
    """

    n: int
    k: int
    shortcut_prob: float

    def validate(self) -> None:
        if self.n < 3:
            raise ParameterError(f"node count must be >= 3, got n={self.n}")
        if not 1 <= self.k < self.n:
            raise ParameterError(
                f"neighbour count must satisfy 1 <= k < n, got k={self.k}, n={self.n}"
            )
        if not 0.0 <= self.shortcut_prob <= 1.0:
            raise ParameterError(
                f"shortcut probability must lie in [0, 1], got {self.shortcut_prob}"
            )


@dataclass(eq=False)
class Graph:
    """Undirected simple graph: ``edges`` is an (m, 2) int64 array, u < v."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edge_count:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def validate(self) -> None:
        """Check simplicity: no self-loops, no duplicates, ids in range."""
        e = self.edges
        if e.size == 0:
            return
        if e.min() < 0 or e.max() >= self.n:
            raise ParameterError("edge endpoint outside [0, n)")
        if np.any(e[:, 0] >= e[:, 1]):
            raise ParameterError("edges must be canonical u < v (and loop-free)")
        keys = e[:, 0] * self.n + e[:, 1]
        if np.unique(keys).size != keys.size:
            raise ParameterError("duplicate edges present")


def generate_newman_watts(params: NetworkParams, seed) -> Graph:
    """Build a ring lattice and superpose random shortcuts; removes nothing.

    Each node is wired to its ``k`` nearest ring neighbours (``k - 1`` when
    ``k`` is odd, keeping the lattice symmetric).  Then, independently for
    every lattice edge, with probability ``shortcut_prob`` one extra edge is
    drawn between two uniformly chosen nodes; a draw that would create a
    self-loop or duplicate an existing edge is skipped, not retried.

    Deterministic for a fixed seed.  ``seed`` may also be a Generator, in
    which case the caller's stream is continued.
    """
    params.validate()
    rng = make_rng(seed)
    n = params.n
    k_eff = params.k if params.k % 2 == 0 else params.k - 1
    half = k_eff // 2

    if half == 0:
        return Graph(n, np.empty((0, 2), dtype=np.int64))

    # Ring lattice: chords at offsets 1..half.  half < n/2 holds for all
    # valid (n, k), so every chord is a distinct edge.
    base = np.repeat(np.arange(n, dtype=np.int64), half)
    offs = np.tile(np.arange(1, half + 1, dtype=np.int64), n)
    other = (base + offs) % n
    ring = np.stack([np.minimum(base, other), np.maximum(base, other)], axis=1)
    m_ring = ring.shape[0]

    # One accept/reject attempt per lattice edge that fires.
    fire = rng.random(m_ring) < params.shortcut_prob
    n_attempts = int(fire.sum())
    extra_u: list[int] = []
    extra_v: list[int] = []
    if n_attempts:
        pairs = rng.integers(0, n, size=(n_attempts, 2))
        existing = set((ring[:, 0] * n + ring[:, 1]).tolist())
        pa = pairs[:, 0].tolist()
        pb = pairs[:, 1].tolist()
        for a, b in zip(pa, pb):
            if a == b:
                continue
            if a > b:
                a, b = b, a
            key = a * n + b
            if key in existing:
                continue
            existing.add(key)
            extra_u.append(a)
            extra_v.append(b)

    if extra_u:
        extra = np.stack(
            [np.array(extra_u, dtype=np.int64), np.array(extra_v, dtype=np.int64)],
            axis=1,
        )
        edges = np.concatenate([ring, extra], axis=0)
    else:
        edges = ring
    return Graph(n, edges)


@dataclass(frozen=True)
class RegionSpec:
    """One residence region before scaling.

    population and commuting are head counts; ``scale`` divides both when
    the node-level model is built (scale 100 => one node per 100 people).
    """

    name: str
    population: int
    commuting: int
    scale: float = 1.0

    def validate(self) -> None:
        if not self.name:
            raise ParameterError("region name must be non-empty")
        if self.population <= 0:
            raise ParameterError(f"region {self.name}: population must be positive")
        if self.commuting < 0:
            raise ParameterError(f"region {self.name}: commuting must be >= 0")
        if self.commuting > self.population:
            raise ParameterError(
                f"region {self.name}: commuting exceeds population"
            )
        if self.scale <= 0:
            raise ParameterError(f"region {self.name}: scale must be positive")

    @property
    def node_count(self) -> int:
        return max(1, round_half_up(self.population / self.scale))

    @property
    def pool_size(self) -> int:
        return round_half_up(self.commuting / self.scale)


@dataclass(eq=False)
class MetroTopology:
    """Residence graphs plus commuter pools under one global id space.

    Region r owns the contiguous id block [offsets[r], offsets[r+1]).
    ``pools[r]`` holds the global ids of that region's commuter pool.  The
    workplace graph is not stored here; it is a per-day object built by
    :func:`active_work_network`.
    """

    regions: list[RegionSpec]
    residence: list[Graph]
    pools: list[np.ndarray]
    work_k: int
    work_p: float
    offsets: np.ndarray
    n_total: int
    _residence_global: np.ndarray | None = field(default=None, repr=False)

    def region_of(self, node: int) -> int:
        return int(np.searchsorted(self.offsets, node, side="right") - 1)

    @property
    def region_names(self) -> list[str]:
        return [r.name for r in self.regions]

    @property
    def pool_total(self) -> int:
        return int(sum(len(p) for p in self.pools))

    def residence_edges_global(self) -> np.ndarray:
        """All residence edges as one (m, 2) array of global ids (cached)."""
        if self._residence_global is None:
            parts = [
                g.edges + off
                for g, off in zip(self.residence, self.offsets[:-1])
                if g.edge_count
            ]
            if parts:
                self._residence_global = np.concatenate(parts, axis=0)
            else:
                self._residence_global = np.empty((0, 2), dtype=np.int64)
        return self._residence_global

    def region_slices(self) -> list[slice]:
        return [
            slice(int(self.offsets[r]), int(self.offsets[r + 1]))
            for r in range(len(self.regions))
        ]


def build_metro(
    regions: list[RegionSpec],
    residence_params: tuple[int, float],
    work_params: tuple[int, float],
    seed,
) -> MetroTopology:
    """Assemble the residence graphs and commuter pools for a metro area.

    ``residence_params`` is (k, shortcut_prob) applied to every region's
    graph; ``work_params`` is the (k, shortcut_prob) template for the daily
    workplace graph.  Commuter pool members are drawn uniformly without
    replacement inside each region.  Deterministic for a fixed seed.
    """
    if not regions:
        raise ParameterError("at least one region is required")
    k_r, p_r = residence_params
    k_w, p_w = work_params
    if not 0.0 <= p_w <= 1.0:
        raise ParameterError(f"work shortcut probability must lie in [0, 1], got {p_w}")
    if k_w < 1:
        raise ParameterError(f"work neighbour count must be >= 1, got {k_w}")

    rng = make_rng(seed)
    graphs: list[Graph] = []
    pools: list[np.ndarray] = []
    offsets = [0]
    for spec in regions:
        spec.validate()
        n_r = spec.node_count
        pool_n = spec.pool_size
        if pool_n > n_r:
            raise ParameterError(
                f"region {spec.name}: scaled commuter pool ({pool_n}) exceeds "
                f"scaled region size ({n_r})"
            )
        graphs.append(generate_newman_watts(NetworkParams(n_r, k_r, p_r), rng))
        members = rng.choice(n_r, size=pool_n, replace=False) if pool_n else np.empty(0, dtype=np.int64)
        members = np.sort(members.astype(np.int64)) + offsets[-1]
        pools.append(members)
        offsets.append(offsets[-1] + n_r)

    return MetroTopology(
        regions=list(regions),
        residence=graphs,
        pools=pools,
        work_k=int(k_w),
        work_p=float(p_w),
        offsets=np.array(offsets, dtype=np.int64),
        n_total=offsets[-1],
    )


def active_work_network(
    topology: MetroTopology, indicator, day_seed
) -> tuple[np.ndarray, Graph]:
    """Sample the day's active commuters and wire their workplace graph.

    ``indicator`` is the fraction of each pool that commutes today: either
    a scalar applied to all regions or one value per region.  Values above
    1 are clamped to 1 with a logged warning; negatives are rejected.  The
    active counts are rounded half-up and capped at the pool size.

    The ring order of the workplace graph is a seeded shuffle of the active
    set, so commuters from different regions genuinely interleave even with
    no shortcuts.  Returns (active global ids in ring order, graph over
    local ids 0..len-1).  Deterministic for a fixed day seed.
    """
    n_regions = len(topology.regions)
    fracs = np.asarray(indicator, dtype=float)
    if fracs.ndim == 0:
        fracs = np.full(n_regions, float(fracs))
    if fracs.shape != (n_regions,):
        raise ParameterError(
            f"indicator must be scalar or one value per region "
            f"({n_regions}), got shape {fracs.shape}"
        )
    if np.any(fracs < 0):
        raise ParameterError("indicator values must be >= 0")
    if np.any(fracs > 1):
        log.warning(
            "indicator above 1 clamped to 1 (max %.3f)", float(fracs.max())
        )
        fracs = np.minimum(fracs, 1.0)

    rng = make_rng(day_seed)
    chosen: list[np.ndarray] = []
    for frac, pool in zip(fracs, topology.pools):
        m = min(len(pool), round_half_up(frac * len(pool)))
        if m:
            chosen.append(rng.choice(pool, size=m, replace=False))
    if not chosen:
        return np.empty(0, dtype=np.int64), Graph(0, np.empty((0, 2), dtype=np.int64))

    active = np.concatenate(chosen).astype(np.int64)
    rng.shuffle(active)
    n_active = len(active)
    if n_active < 3:
        return active, Graph(n_active, np.empty((0, 2), dtype=np.int64))
    # A small active set cannot support the configured k; clamp rather than
    # fail so lockdown-like indicator values stay simulable.
    k_day = min(topology.work_k, n_active - 1)
    graph = generate_newman_watts(NetworkParams(n_active, k_day, topology.work_p), rng)
    return active, graph


def export_edge_list(graph: Graph, path, id_map: np.ndarray | None = None) -> None:
    """Write one "u v" pair per line; ``id_map`` translates to global ids."""
    edges = graph.edges
    if id_map is not None:
        edges = np.stack([id_map[edges[:, 0]], id_map[edges[:, 1]]], axis=1)
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in edges:
            fh.write(f"{u} {v}\n")
