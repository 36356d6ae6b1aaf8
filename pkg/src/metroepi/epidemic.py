"""Stochastic epidemic propagation on the metro networks.

Six statuses: susceptible, exposed, infected (symptomatic), recovered,
asymptomatic, hospitalised.  Exposed, asymptomatic and infected nodes all
transmit; hospitalised nodes are contact-isolated and neither transmit nor
receive.  Each simulated day has two contact windows: residence contacts
first, then working-hour contacts among the day's active commuters (with
residence edges between two non-commuters staying live), followed by one
status-progression pass.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ParameterError
from .rng import TAG_SEEDING, TAG_SIM, TAG_WORKNET, derive_key, make_rng
from .topology import Graph, MetroTopology, active_work_network

log = logging.getLogger(__name__)


class Status(IntEnum):
    S = 0
    E = 1
    I = 2
    R = 3
    A = 4
    H = 5


N_STATUS = 6
STATUS_LETTERS = ["S", "E", "I", "R", "A", "H"]

# Statuses that can pass the contagion on.  H is excluded: isolation.
_INFECTIOUS = np.zeros(N_STATUS, dtype=bool)
_INFECTIOUS[[Status.E, Status.I, Status.A]] = True

LEGAL_TRANSITIONS = {
    (Status.S, Status.E),
    (Status.E, Status.A),
    (Status.E, Status.I),
    (Status.A, Status.H),
    (Status.A, Status.R),
    (Status.I, Status.H),
    (Status.H, Status.R),
}


@dataclass(frozen=True)
class TransitionThresholds:
    """Daily per-node transition probabilities between statuses.

    Progression draws one uniform per node and carves [0, 1) into disjoint
    intervals, so e_to_a + e_to_i and a_to_h + a_to_r must each stay <= 1.
    ``literal_exceeds`` flips the trigger to "uniform draw exceeds the
    threshold" for sensitivity runs, turning each value v into an effective
    probability 1 - v.
    """

    e_to_a: float = 0.036
    e_to_i: float = 0.164
    a_to_h: float = 0.028
    a_to_r: float = 0.08
    i_to_h: float = 0.950
    h_to_r: float = 0.100
    literal_exceeds: bool = False

    def validate(self) -> None:
        for name in ("e_to_a", "e_to_i", "a_to_h", "a_to_r", "i_to_h", "h_to_r"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"threshold {name} must lie in [0, 1], got {v}")
        ea, ei, ah, ar, ih, hr = self.effective()
        if ea + ei > 1.0 + 1e-12:
            raise ParameterError(
                f"effective e_to_a + e_to_i must be <= 1, got {ea + ei}"
            )
        if ah + ar > 1.0 + 1e-12:
            raise ParameterError(
                f"effective a_to_h + a_to_r must be <= 1, got {ah + ar}"
            )

    def effective(self) -> tuple[float, float, float, float, float, float]:
        """The six per-day probabilities actually applied."""
        vals = (self.e_to_a, self.e_to_i, self.a_to_h,
                self.a_to_r, self.i_to_h, self.h_to_r)
        if self.literal_exceeds:
            return tuple(1.0 - v for v in vals)  # type: ignore[return-value]
        return vals


@dataclass
class DailyCounts:
    """End-of-day status totals plus that day's new hospital admissions."""

    day: int
    s: int
    e: int
    i: int
    r: int
    a: int
    h: int
    new_h: int

    @staticmethod
    def from_state(state: "SimState", new_h: int) -> "DailyCounts":
        c = state.counts
        return DailyCounts(
            day=state.day,
            s=int(c[Status.S]), e=int(c[Status.E]), i=int(c[Status.I]),
            r=int(c[Status.R]), a=int(c[Status.A]), h=int(c[Status.H]),
            new_h=new_h,
        )


class HistoryRecorder:
    """Collects per-node status changes in run-length form.

    One initial entry per node at attach time, then one entry per change.
    Kept as batched arrays; flattening to records happens at export.
    """

    def __init__(self, state: "SimState"):
        self.start_day = state.day
        self.initial = state.statuses.copy()
        self.events: list[tuple[int, int, np.ndarray, int]] = []

    def log(self, day: int, zone: int, nodes: np.ndarray, status: int) -> None:
        if len(nodes):
            self.events.append((day, zone, np.asarray(nodes, dtype=np.int64), int(status)))


class SimState:
    """Mutable epidemic state over one topology's global id space.

    Holds the per-node status array, the simulation day, cached status
    totals, the master RNG stream and the integer key it was derived from
    (day-keyed streams such as the workplace build derive from that key, so
    a restored snapshot replays identically).
    """

    def __init__(self, statuses: np.ndarray, day: int, seed_key: int,
                 rng: np.random.Generator | None = None):
        self.statuses = np.asarray(statuses, dtype=np.int8)
        self.day = int(day)
        self.seed_key = int(seed_key)
        self.rng = rng if rng is not None else make_rng(self.seed_key)
        self.counts = np.bincount(self.statuses, minlength=N_STATUS).astype(np.int64)
        self.fresh = np.zeros(len(self.statuses), dtype=bool)
        self.recorder: HistoryRecorder | None = None

    @property
    def n(self) -> int:
        return len(self.statuses)

    def infectious_count(self) -> int:
        return int(self.counts[Status.E] + self.counts[Status.I] + self.counts[Status.A])

    def attach_history(self) -> HistoryRecorder:
        self.recorder = HistoryRecorder(self)
        return self.recorder

    def reseed(self, seed_key: int) -> None:
        """Swap in a fresh RNG stream (and stream key) for replicate runs."""
        self.seed_key = int(seed_key)
        self.rng = make_rng(self.seed_key)

    def apply_transitions(self, nodes: np.ndarray, status: Status,
                          zone: int, mark_fresh: bool = False) -> None:
        if not len(nodes):
            return
        old = np.bincount(self.statuses[nodes], minlength=N_STATUS)
        self.counts -= old
        self.statuses[nodes] = np.int8(status)
        self.counts[status] += len(nodes)
        if mark_fresh:
            self.fresh[nodes] = True
        if self.recorder is not None:
            self.recorder.log(self.day, zone, nodes, int(status))

    def recount(self) -> np.ndarray:
        return np.bincount(self.statuses, minlength=N_STATUS).astype(np.int64)

    def check(self) -> None:
        """Assert cached totals agree with a recount (used by tests)."""
        fresh_count = np.bincount(self.statuses, minlength=N_STATUS)
        if not np.array_equal(fresh_count, self.counts):
            raise AssertionError("cached status totals diverged from recount")


def initial_state(topology: MetroTopology, seed_key: int,
                  exposed_per_region: int | list[int] = 5) -> SimState:
    """All-susceptible state with exposed nodes planted uniformly per region.

    The plants are drawn from a seeding stream derived from ``seed_key``;
    the state's own simulation stream is derived from the same key, so one
    integer reproduces the whole run.
    """
    n_regions = len(topology.regions)
    if isinstance(exposed_per_region, int):
        per_region = [exposed_per_region] * n_regions
    else:
        per_region = list(exposed_per_region)
        if len(per_region) != n_regions:
            raise ParameterError(
                f"exposed_per_region needs one entry per region ({n_regions})"
            )

    statuses = np.zeros(topology.n_total, dtype=np.int8)
    seed_rng = make_rng(derive_key(seed_key, TAG_SEEDING))
    for count, sl in zip(per_region, topology.region_slices()):
        n_r = sl.stop - sl.start
        if count < 0 or count > n_r:
            raise ParameterError(
                f"exposed count {count} outside [0, {n_r}] for region block {sl}"
            )
        if count:
            picks = seed_rng.choice(n_r, size=count, replace=False) + sl.start
            statuses[picks] = np.int8(Status.E)

    state = SimState(statuses, day=0, seed_key=derive_key(seed_key, TAG_SIM))
    return state


def _contagion_edges(state: SimState, eu: np.ndarray, ev: np.ndarray,
                     beta: float, zone: int) -> int:
    """One Bernoulli(beta) trial per infectious-susceptible edge side.

    Trial order is fixed (all u->v sides, then all v->u sides, in edge
    array order) so draws replay identically for a given stream state.
    Returns the number of nodes newly exposed.
    """
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"transmission probability must lie in [0, 1], got {beta}")
    if len(eu) == 0:
        return 0
    st = state.statuses
    su = st[eu]
    sv = st[ev]
    inf_u = _INFECTIOUS[su]
    inf_v = _INFECTIOUS[sv]
    sus_u = su == Status.S
    sus_v = sv == Status.S
    targets = np.concatenate([ev[inf_u & sus_v], eu[inf_v & sus_u]])
    if targets.size == 0:
        return 0
    hits = targets[state.rng.random(targets.size) < beta]
    if hits.size == 0:
        return 0
    new = np.unique(hits)
    state.apply_transitions(new, Status.E, zone=zone, mark_fresh=True)
    return int(new.size)


def contagion_step(state: SimState, graph: Graph, beta: float,
                   id_map: np.ndarray | None = None, zone: int = 1) -> int:
    """Run one contact window over ``graph``.

    ``id_map`` translates graph-local node ids to state ids (identity when
    omitted).  Newly exposed nodes are flagged so the day's progression
    pass skips them; they do transmit in any later window the same day.
    """
    edges = graph.edges
    if edges.shape[0] == 0:
        return 0
    if id_map is None:
        if graph.n > state.n:
            raise ParameterError("graph has more nodes than the state")
        eu, ev = edges[:, 0], edges[:, 1]
    else:
        eu, ev = id_map[edges[:, 0]], id_map[edges[:, 1]]
    return _contagion_edges(state, eu, ev, beta, zone=zone)


def progression_step(state: SimState, thresholds: TransitionThresholds) -> dict[str, int]:
    """Advance every node one day through the status machine.

    One uniform per occupied node, disjoint intervals per competing exit:
    an exposed draw below e_to_a turns asymptomatic, below e_to_a + e_to_i
    symptomatic, otherwise stays put; similarly for the other classes.
    All moves are based on the statuses at entry, so a node never chains
    two transitions in one pass.  Nodes exposed earlier the same day are
    skipped (and unflagged).  Returns per-transition tallies with the day's
    new hospital admissions under ``new_h``.
    """
    thresholds.validate()
    ea, ei, ah, ar, ih, hr = thresholds.effective()
    snap = state.statuses.copy()
    fresh = state.fresh
    rng = state.rng
    tally = {"e_to_a": 0, "e_to_i": 0, "a_to_h": 0, "a_to_r": 0,
             "i_to_h": 0, "h_to_r": 0, "new_h": 0}

    idx_e = np.flatnonzero((snap == Status.E) & ~fresh)
    if idx_e.size:
        u = rng.random(idx_e.size)
        to_a = idx_e[u < ea]
        to_i = idx_e[(u >= ea) & (u < ea + ei)]
        state.apply_transitions(to_a, Status.A, zone=2)
        state.apply_transitions(to_i, Status.I, zone=2)
        tally["e_to_a"] = len(to_a)
        tally["e_to_i"] = len(to_i)

    idx_a = np.flatnonzero(snap == Status.A)
    if idx_a.size:
        u = rng.random(idx_a.size)
        to_h = idx_a[u < ah]
        to_r = idx_a[(u >= ah) & (u < ah + ar)]
        state.apply_transitions(to_h, Status.H, zone=2)
        state.apply_transitions(to_r, Status.R, zone=2)
        tally["a_to_h"] = len(to_h)
        tally["a_to_r"] = len(to_r)

    idx_i = np.flatnonzero(snap == Status.I)
    if idx_i.size:
        u = rng.random(idx_i.size)
        to_h = idx_i[u < ih]
        state.apply_transitions(to_h, Status.H, zone=2)
        tally["i_to_h"] = len(to_h)

    idx_h = np.flatnonzero(snap == Status.H)
    if idx_h.size:
        u = rng.random(idx_h.size)
        to_r = idx_h[u < hr]
        state.apply_transitions(to_r, Status.R, zone=2)
        tally["h_to_r"] = len(to_r)

    state.fresh[:] = False
    tally["new_h"] = tally["a_to_h"] + tally["i_to_h"]
    return tally


def simulate_day(state: SimState, topology: MetroTopology,
                 thresholds: TransitionThresholds, beta: float,
                 indicator) -> DailyCounts:
    """One full simulated day: residence window, work window, progression.

    The workplace graph is rebuilt from a seed keyed by (state seed, day),
    so replaying from a snapshot reproduces the same commuter draw.  During
    the work window, residence edges both of whose endpoints stayed home
    remain active; any edge touching an active commuter is suspended.
    """
    if state.n != topology.n_total:
        raise ParameterError(
            f"state covers {state.n} nodes but topology has {topology.n_total}"
        )
    res_edges = topology.residence_edges_global()
    _contagion_edges(state, res_edges[:, 0], res_edges[:, 1], beta, zone=1)

    day_seed = derive_key(state.seed_key, TAG_WORKNET, state.day)
    active_ids, work = active_work_network(topology, indicator, day_seed)
    if active_ids.size:
        commuting = np.zeros(state.n, dtype=bool)
        commuting[active_ids] = True
        keep = ~(commuting[res_edges[:, 0]] | commuting[res_edges[:, 1]])
        if work.edge_count:
            eu = np.concatenate([res_edges[keep, 0], active_ids[work.edges[:, 0]]])
            ev = np.concatenate([res_edges[keep, 1], active_ids[work.edges[:, 1]]])
        else:
            eu, ev = res_edges[keep, 0], res_edges[keep, 1]
    else:
        eu, ev = res_edges[:, 0], res_edges[:, 1]
    _contagion_edges(state, eu, ev, beta, zone=2)

    tally = progression_step(state, thresholds)
    counts = DailyCounts.from_state(state, new_h=tally["new_h"])
    state.day += 1
    return counts


def simulate_horizon(state: SimState, topology: MetroTopology,
                     thresholds: TransitionThresholds,
                     beta_series, indicator_series,
                     days: int) -> list[DailyCounts]:
    """Run ``days`` consecutive days, reading beta and indicator per day.

    Scalars are broadcast; series must cover the horizon or the call is
    rejected before anything runs.
    """
    betas = np.asarray(beta_series, dtype=float)
    if betas.ndim == 0:
        betas = np.full(days, float(betas))
    inds = np.asarray(indicator_series, dtype=float)
    if inds.ndim == 0:
        inds = np.full(days, float(inds))
    if len(betas) < days:
        raise ParameterError(f"beta series shorter than horizon ({len(betas)} < {days})")
    if len(inds) < days:
        raise ParameterError(
            f"indicator series shorter than horizon ({len(inds)} < {days})"
        )
    out = []
    for d in range(days):
        ind = inds[d] if inds.ndim == 1 else inds[d, :]
        out.append(simulate_day(state, topology, thresholds, float(betas[d]), ind))
    return out


@dataclass
class StateSnapshot:
    """Value copy of a SimState sufficient for bit-identical replay."""

    statuses: np.ndarray
    day: int
    seed_key: int
    rng_state: dict
    fresh: np.ndarray


def snapshot(state: SimState) -> StateSnapshot:
    return StateSnapshot(
        statuses=state.statuses.copy(),
        day=state.day,
        seed_key=state.seed_key,
        rng_state=copy.deepcopy(state.rng.bit_generator.state),
        fresh=state.fresh.copy(),
    )


def restore(snap: StateSnapshot, topology: MetroTopology | None = None) -> SimState:
    """Rebuild a SimState from a snapshot; the recorder does not carry over."""
    if topology is not None and topology.n_total != len(snap.statuses):
        raise ParameterError(
            f"snapshot covers {len(snap.statuses)} nodes but topology has "
            f"{topology.n_total}"
        )
    state = SimState(snap.statuses.copy(), day=snap.day, seed_key=snap.seed_key)
    state.rng.bit_generator.state = copy.deepcopy(snap.rng_state)
    state.fresh = snap.fresh.copy()
    return state
