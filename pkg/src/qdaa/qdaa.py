"""States, successors and the weighted automaton.

A state pairs a rectangle with an entry set.  Successors are estimated by
simulation: sample the entry set, integrate forward, tile the exit points
on each crossed facet, optionally confirm each tile by backward simulation,
and weight each successor by its share of the samples.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import (EMPTY, WHOLE, EntrySet, Facet, Tile, bits_to_indices, facet_tile_indices, facets,
                       free_axes, indices_to_bits, neighbour_through, rect_box)
from .model import BiochemicalSystem
from .sim import BACKWARD, FORWARD, IntegrationError, SimParams, derive_seed, integrate_batch, sample_points


class QdaaState(NamedTuple):
    rectangle: tuple | None
    entry: EntrySet

    @property
    def is_special(self) -> bool:
        """True for the rectangle-less SINK and LOST states."""
        return self.rectangle is None

    @property
    def absorbing(self) -> bool:
        return self.rectangle is None or self.entry.kind == "empty"

    def sort_key(self):
        if self.rectangle is None:
            return (1, (), self.entry.sort_key())
        return (0, tuple(self.rectangle), self.entry.sort_key())

    def seed_parts(self):
        if self.rectangle is None:
            return (self.entry.kind,)
        e = self.entry
        facet = None if e.facet is None else (e.facet.axis, e.facet.side)
        return (tuple(int(j) for j in self.rectangle), e.kind, facet, hex(e.tiles))

    def __str__(self):
        if self.rectangle is None:
            return self.entry.kind.upper()
        e = self.entry
        if e.kind != "tiles":
            return f"<{tuple(self.rectangle)}, {e.kind}>"
        side = "lo" if e.facet.side == 0 else "hi"
        return f"<{tuple(self.rectangle)}, {side}{e.facet.axis}:{bits_to_indices(e.tiles)}>"


# Absorbing state collecting trajectories that leave the analysed domain.
SINK = QdaaState(None, EntrySet("sink"))
# Absorbing state collecting mass whose every successor was rejected by the backward check.
LOST = QdaaState(None, EntrySet("lost"))


class Transition(NamedTuple):
    source: QdaaState
    target: QdaaState
    weight: float


def state_bound(n: int, kappa: int) -> int:
    """Largest possible number of states sharing one rectangle."""
    return 2 * n * (2 ** (kappa ** (n - 1)) - 1) + 2


def simulation_bound(n: int, kappa: int, M: int) -> int:
    """Worst-case simulations for one successor computation with backward checks."""
    return 2 * n * kappa ** (n - 1) * M


def initial_states(system: BiochemicalSystem) -> list[QdaaState]:
    return [QdaaState(tuple(r), WHOLE) for r in system.initial]


def exit_set_tiles(partition, facet: Facet, kappa: int, points, inert=()) -> int:
    """Bitset of the facet tiles that contain at least one of ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return 0
    return indices_to_bits(np.unique(facet_tile_indices(partition, facet, kappa, pts, inert)))


def _accepts(state: QdaaState, facet: Facet, kappa: int, partition, res, dt: float, inert=()) -> np.ndarray:
    """Which backward runs started on ``facet`` trace back into ``state``'s entry set."""
    entry = state.entry
    if entry.kind == "whole":
        # any stretch inside the rectangle counts; an immediate return through the start facet does not
        immediate = res.exited & (res.axis == facet.axis) & (res.side == facet.side) & (res.time <= dt)
        return ~immediate
    ef = entry.facet
    hit = res.exited & (res.axis == ef.axis) & (res.side == ef.side)
    ok = np.zeros(len(res), dtype=bool)
    if hit.any():
        idx = facet_tile_indices(partition, ef, kappa, res.points[hit], inert)
        ok[hit] = [(entry.tiles >> int(k)) & 1 == 1 for k in idx]
    return ok


def backward_filter_tile(system: BiochemicalSystem, tile: Tile, state: QdaaState, kappa: int,
                         params: SimParams, seed) -> bool:
    """Keep a candidate entry tile iff at least half of ``M`` backward runs reach the source entry set.

    ``tile`` lies on a facet of the source rectangle; runs integrate ``-f``
    inside that rectangle.
    """
    partition = system.partition
    facet = tile.parent
    inert = system.inert_axes
    pts = sample_points(partition, tile, params.M, seed, kappa=kappa, inert=inert)
    lo, hi = rect_box(partition, state.rectangle)
    res = integrate_batch(system.field, pts, lo, hi, params, BACKWARD)
    count = int(np.count_nonzero(_accepts(state, facet, kappa, partition, res, params.dt, inert)))
    return count >= params.M / 2


def successors(state: QdaaState, system: BiochemicalSystem, kappa: int, params: SimParams,
               backward_filter: bool = True, seed: int = 0) -> list[Transition]:
    """Weighted successors of one state.

    Exits through facets on the domain boundary go to :data:`SINK`.  A
    transition whose tiles are all rejected by the backward check is
    dropped and its weight spread proportionally over the survivors; if
    nothing survives the whole mass goes to :data:`LOST`.
    """
    if state.absorbing:
        return [Transition(state, state, 1.0)]
    partition = system.partition
    inert = system.inert_axes
    M = params.M
    rect = tuple(state.rectangle)
    lo, hi = rect_box(partition, rect)
    pts = sample_points(partition, state.entry, M, derive_seed(seed, *state.seed_parts(), "forward"),
                        kappa=kappa, rect=rect, inert=inert)
    try:
        res = integrate_batch(system.field, pts, lo, hi, params, FORWARD)
    except IntegrationError as exc:
        raise IntegrationError(f"{exc} in state {state}", exc.last_state, state) from None

    out: list[Transition] = []
    sink_w = 0.0
    dropped = 0.0
    for facet in facets(rect):
        on = res.exited & (res.axis == facet.axis) & (res.side == facet.side)
        count = int(np.count_nonzero(on))
        if count == 0:
            continue
        weight = count / M
        nb = neighbour_through(partition, facet)
        if nb is None:
            sink_w += weight
            continue
        bits = exit_set_tiles(partition, facet, kappa, res.points[on], inert)
        if backward_filter:
            kept = 0
            for k in bits_to_indices(bits):
                coords = tuple(int(c) for c in np.unravel_index(k, (kappa,) * len(free_axes(facet, inert))))
                tile = Tile(facet, coords)
                tseed = derive_seed(seed, *state.seed_parts(), "backward", facet.axis, facet.side, k)
                if backward_filter_tile(system, tile, state, kappa, params, tseed):
                    kept |= 1 << k
            bits = kept
        if bits == 0:
            dropped += weight
            continue
        target = QdaaState(nb, EntrySet.on_facet(Facet(nb, facet.axis, 1 - facet.side), bits))
        out.append(Transition(state, target, weight))
    stays = int(np.count_nonzero(~res.exited))
    if stays:
        out.append(Transition(state, QdaaState(rect, EMPTY), stays / M))
    if sink_w:
        out.append(Transition(state, SINK, sink_w))
    if dropped and not out:
        return [Transition(state, LOST, 1.0)]
    return _normalise(out)


def _normalise(trans: list[Transition]) -> list[Transition]:
    """Rescale onto the survivors; dividing by their own sum keeps every weight within [0, 1]."""
    total = math.fsum(t.weight for t in trans)
    if total != 1.0:
        trans = [Transition(t.source, t.target, t.weight / total) for t in trans]
    return trans


@dataclass
class Qdaa:
    """Reachable part of the automaton: states, initial states and weighted edges."""

    system: BiochemicalSystem
    kappa: int
    states: list[QdaaState] = field(default_factory=list)
    initial: list[QdaaState] = field(default_factory=list)
    transitions: dict = field(default_factory=dict)  # state -> list[Transition]

    def __len__(self):
        return len(self.states)

    def out(self, state: QdaaState) -> list[Transition]:
        return self.transitions.get(state, [])

    def weight(self, src: QdaaState, dst: QdaaState) -> float:
        return sum(t.weight for t in self.out(src) if t.target == dst)

    @property
    def rectangles(self) -> set:
        return {s.rectangle for s in self.states if not s.is_special}

    def index(self) -> dict:
        return {s: k for k, s in enumerate(self.states)}

    def matrix(self):
        """Sparse row-stochastic transition matrix in ``states`` order."""
        from scipy.sparse import csr_matrix

        idx = self.index()
        rows, cols, vals = [], [], []
        for s in self.states:
            for t in self.out(s):
                rows.append(idx[s])
                cols.append(idx[t.target])
                vals.append(t.weight)
        n = len(self.states)
        return csr_matrix((vals, (rows, cols)), shape=(n, n))

    def check(self, tol: float = 1e-12) -> list[str]:
        """Violated automaton invariants, empty when all hold."""
        problems = []
        for s in self.initial:
            if s.entry.kind != "whole":
                problems.append(f"initial state {s} is not a whole-rectangle state")
        for s in self.states:
            trans = self.out(s)
            targets = [t.target for t in trans]
            if len(set(targets)) != len(targets):
                problems.append(f"{s}: repeated target")
            if any(not 0.0 <= t.weight <= 1.0 for t in trans):
                problems.append(f"{s}: weight outside [0, 1]")
            if trans and abs(sum(t.weight for t in trans) - 1.0) > tol:
                problems.append(f"{s}: weights sum to {sum(t.weight for t in trans)!r}")
            if s.absorbing and (len(trans) != 1 or trans[0].target != s or trans[0].weight != 1.0):
                problems.append(f"{s}: {s.entry.kind} state is not absorbing")
        return problems

    # -- export ---------------------------------------------------------------

    def to_dict(self) -> dict:
        idx = self.index()
        states = []
        for s in self.states:
            if s.is_special:
                states.append({"id": idx[s], "rectangle": None, "entry": s.entry.kind})
                continue
            e = s.entry
            entry = e.kind if e.kind != "tiles" else {
                "facet": {"axis": e.facet.axis, "side": "lower" if e.facet.side == 0 else "upper"},
                "tiles": e.tile_indices,
            }
            states.append({"id": idx[s], "rectangle": list(s.rectangle), "entry": entry})
        transitions = [{"src": idx[s], "dst": idx[t.target], "weight": t.weight}
                       for s in self.states for t in self.out(s)]
        return {"kappa": self.kappa, "states": states, "initial": [idx[s] for s in self.initial],
                "transitions": transitions}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def to_dot(self) -> str:
        idx = self.index()
        lines = ["digraph qdaa {", "  rankdir=LR;"]
        init = set(self.initial)
        for s in self.states:
            shape = "doublecircle" if s.entry.kind == "empty" else ("box" if s.is_special else "circle")
            extra = ", style=bold" if s in init else ""
            lines.append(f'  s{idx[s]} [label="{s}", shape={shape}{extra}];')
        for s in self.states:
            for t in self.out(s):
                lines.append(f'  s{idx[s]} -> s{idx[t.target]} [label="{t.weight:.4g}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build(system: BiochemicalSystem, kappa: int, params: SimParams, backward_filter: bool = True,
          seed: int = 0, **kwargs) -> Qdaa:
    """Automaton induced by closing the initial states under :func:`successors`."""
    from .reach import reachable

    automaton, _ = reachable(system, kappa, params, backward_filter, seed, **kwargs)
    return automaton
