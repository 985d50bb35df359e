"""Breadth-first reachability over automaton states and its analysis products."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .geometry import rect_box
from .model import BiochemicalSystem
from .qdaa import LOST, SINK, Qdaa, QdaaState, initial_states, successors
from .sim import SimParams

log = logging.getLogger(__name__)


class StateLimitError(RuntimeError):
    pass


def reachable(system: BiochemicalSystem, kappa: int, params: SimParams, backward_filter: bool = True,
              seed: int = 0, n_jobs: int = 1, max_states: int | None = None):
    """Explore the automaton from ``<H, H>`` for every initial rectangle ``H``.

    Each frontier level is expanded in lexicographic state order, and every
    state draws its samples from a seed derived from its own value, so the
    result does not depend on ``n_jobs``.  Returns ``(automaton, visited)``.
    """
    init = sorted(initial_states(system), key=QdaaState.sort_key)
    visited = set(init)
    order = list(init)
    transitions = {}
    frontier = init
    expansions = 0

    def expand(s):
        return successors(s, system, kappa, params, backward_filter, seed)

    pool = ThreadPoolExecutor(n_jobs) if n_jobs > 1 else None
    try:
        while frontier:
            results = list(pool.map(expand, frontier)) if pool else [expand(s) for s in frontier]
            expansions += len(frontier)
            nxt = []
            for s, trans in zip(frontier, results):
                transitions[s] = trans
                for t in trans:
                    if t.target not in visited:
                        visited.add(t.target)
                        nxt.append(t.target)
            if max_states is not None and len(visited) > max_states:
                raise StateLimitError(f"more than {max_states} states reached")
            frontier = sorted(nxt, key=QdaaState.sort_key)
            order.extend(frontier)
            log.debug("frontier %d states, %d visited", len(frontier), len(visited))
    finally:
        if pool:
            pool.shutdown()
    assert expansions == len(visited)
    states = sorted(order, key=QdaaState.sort_key)
    automaton = Qdaa(system, kappa, states, init, {s: transitions[s] for s in states})
    automaton.expansions = expansions
    return automaton, visited


# ---------------------------------------------------------------------------
# analysis

def rho(states) -> float:
    """Mean number of states per reachable rectangle."""
    counts: dict = {}
    for s in states:
        if not s.is_special:
            counts[s.rectangle] = counts.get(s.rectangle, 0) + 1
    if not counts:
        raise ValueError("no reachable rectangles")
    return float(np.mean(list(counts.values())))


def rectangle_set_bounds(system: BiochemicalSystem, rects) -> list[tuple[float, float]]:
    ths = system.partition.thresholds
    rects = list(rects)
    out = []
    for i in range(system.dimension):
        if not rects:
            out.append((float("nan"), float("nan")))
            continue
        out.append((min(ths[i][r[i]] for r in rects), max(ths[i][r[i] + 1] for r in rects)))
    return out


def variable_bounds(system: BiochemicalSystem, rects, i: int) -> tuple[float, float]:
    if not 0 <= i < system.dimension:
        raise IndexError(f"variable index {i} out of range")
    return rectangle_set_bounds(system, rects)[i]


def _can_reach(P_T: sp.csr_matrix, targets: np.ndarray) -> np.ndarray:
    """Boolean mask of states with a path into ``targets`` (``P_T`` is the transposed graph)."""
    mask = np.zeros(P_T.shape[0], dtype=bool)
    mask[targets] = True
    stack = list(np.flatnonzero(mask))
    indptr, indices = P_T.indptr, P_T.indices
    while stack:
        j = stack.pop()
        for i in indices[indptr[j]:indptr[j + 1]]:
            if not mask[i]:
                mask[i] = True
                stack.append(i)
    return mask


def hitting_probabilities(P: sp.csr_matrix, targets: np.ndarray) -> np.ndarray:
    """Probability of ever entering ``targets`` from every state (time 0 included)."""
    n = P.shape[0]
    h = np.zeros(n)
    h[targets] = 1.0
    reach = _can_reach(P.T.tocsr(), targets)
    unknown = reach.copy()
    unknown[targets] = False
    U = np.flatnonzero(unknown)
    if len(U):
        T = np.zeros(n, dtype=bool)
        T[targets] = True
        P_UU = P[U][:, U]
        b = np.asarray(P[U][:, T].sum(axis=1)).ravel()
        A = sp.identity(len(U), format="csc") - P_UU.tocsc()
        h[U] = np.atleast_1d(spsolve(A, b))
    return np.clip(h, 0.0, 1.0)


def _heatmap_mc(automaton: Qdaa, rects: list, walks: int, seed: int) -> dict:
    """First-passage frequencies from random walks on the chain."""
    idx = automaton.index()
    n = len(automaton.states)
    rect_id = {r: k for k, r in enumerate(rects)}
    state_rect = np.array([rect_id.get(s.rectangle, -1) for s in automaton.states])
    nxt = []
    for s in automaton.states:
        trans = automaton.out(s)
        nxt.append((np.array([idx[t.target] for t in trans], dtype=np.int64),
                    np.cumsum([t.weight for t in trans])))
    # rectangles still reachable from each state, as int bitmasks over rect ids
    P = automaton.matrix()
    reach_bits = [0] * n
    PT = P.T.tocsr()
    for k, r in enumerate(rects):
        targets = np.flatnonzero(state_rect == k)
        for i in np.flatnonzero(_can_reach(PT, targets)):
            reach_bits[i] |= 1 << k
    rng = np.random.default_rng(seed)
    hits = np.zeros(len(rects))
    starts = [idx[s] for s in automaton.initial]
    for w in range(walks):
        cur = starts[w % len(starts)]
        seen = 0
        while True:
            if state_rect[cur] >= 0:
                seen |= 1 << int(state_rect[cur])
            if reach_bits[cur] & ~seen == 0:
                break
            targets, cum = nxt[cur]
            cur = int(targets[min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), len(targets) - 1)])
        for k in range(len(rects)):
            if seen >> k & 1:
                hits[k] += 1
    return {r: float(hits[k] / walks) for k, r in enumerate(rects)}


def rectangle_heatmap(automaton: Qdaa, exact_limit: int = 20000, walks: int = 100_000,
                      seed: int = 0) -> dict:
    """First-passage probability of every reachable rectangle.

    The chain starts from the uniform mixture over initial states; initial
    rectangles score 1.  Exact sparse solves are used up to
    ``exact_limit`` states, random walks beyond.
    """
    rects = sorted(automaton.rectangles)
    if not automaton.states or not automaton.initial:
        return {}
    initial_rects = {s.rectangle for s in automaton.initial}
    if len(automaton.states) > exact_limit:
        heat = _heatmap_mc(automaton, rects, walks, seed)
    else:
        P = automaton.matrix()
        idx = automaton.index()
        start = np.array([idx[s] for s in automaton.initial])
        heat = {}
        by_rect: dict = {}
        for k, s in enumerate(automaton.states):
            if not s.is_special:
                by_rect.setdefault(s.rectangle, []).append(k)
        for r in rects:
            h = hitting_probabilities(P, np.array(by_rect[r]))
            heat[r] = float(np.mean(h[start]))
    for r in initial_rects:
        heat[r] = 1.0
    return heat


def absorption_mass(automaton: Qdaa, state=SINK) -> float:
    """Probability that the chain started from the initial mixture ends in ``state``."""
    if state not in set(automaton.states) or not automaton.initial:
        return 0.0
    idx = automaton.index()
    h = hitting_probabilities(automaton.matrix(), np.array([idx[state]]))
    return float(np.mean(h[[idx[s] for s in automaton.initial]]))


@dataclass
class ReachReport:
    system: BiochemicalSystem
    automaton: Qdaa
    states: list
    rectangles: list
    bounds: list
    rho: float
    heatmap: dict
    sink_mass: float
    lost_mass: float = 0.0
    settings: dict = field(default_factory=dict)

    @property
    def n_rectangles(self) -> int:
        return len(self.rectangles)

    def memory(self) -> dict:
        counts: dict = {}
        for s in self.states:
            if not s.is_special:
                counts[s.rectangle] = counts.get(s.rectangle, 0) + 1
        return counts

    def to_dict(self) -> dict:
        sp_ = self.system.species
        mem = self.memory()
        return {
            "model": self.system.name,
            "settings": self.settings,
            "species": list(sp_),
            "n_states": len(self.states),
            "n_rectangles": len(self.rectangles),
            "rho": self.rho,
            "sink_mass": self.sink_mass,
            "lost_mass": self.lost_mass,
            "bounds": {name: list(b) for name, b in zip(sp_, self.bounds)},
            "rectangles": [
                {"index": list(r), "box": [list(map(float, v)) for v in zip(*rect_box(self.system.partition, r))],
                 "memory": mem[r], "heat": self.heatmap.get(r, 0.0)}
                for r in self.rectangles
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def bounds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["species", "lower", "upper"])
        for name, (lo, hi) in zip(self.system.species, self.bounds):
            w.writerow([name, repr(float(lo)), repr(float(hi))])
        return buf.getvalue()


def analyse(system: BiochemicalSystem, kappa: int, params: SimParams, backward_filter: bool = True,
            seed: int = 0, n_jobs: int = 1, max_states: int | None = None,
            heatmap_limit: int = 20000) -> ReachReport:
    """Run the reachability search and derive every report quantity."""
    automaton, visited = reachable(system, kappa, params, backward_filter, seed, n_jobs, max_states)
    rects = sorted(automaton.rectangles)
    return ReachReport(
        system=system,
        automaton=automaton,
        states=automaton.states,
        rectangles=rects,
        bounds=rectangle_set_bounds(system, rects),
        rho=rho(automaton.states) if rects else float("nan"),
        heatmap=rectangle_heatmap(automaton, heatmap_limit, seed=seed),
        sink_mass=absorption_mass(automaton, SINK),
        lost_mass=absorption_mass(automaton, LOST),
        settings={"kappa": kappa, "samples": params.M, "seed": seed, "backward": backward_filter,
                  "dt": params.dt, "t_max": params.t_max, "crossing_tol": params.crossing_tol},
    )


@dataclass
class ContainmentReport:
    qdaa_rectangles: set
    rats_rectangles: set
    spurious: set          # reached by the rectangular abstraction only
    violations: set        # reached by the automaton only (should be empty)

    @property
    def contained(self) -> bool:
        return not self.violations


def compare_with_rats(system: BiochemicalSystem, kappa: int, params: SimParams, backward_filter: bool = True,
                      seed: int = 0, qdaa_rectangles=None) -> ContainmentReport:
    """Check the automaton's rectangles against the rectangular abstraction."""
    from .rats import rats_reach

    if qdaa_rectangles is None:
        automaton, _ = reachable(system, kappa, params, backward_filter, seed)
        qdaa_rectangles = automaton.rectangles
    q = set(map(tuple, qdaa_rectangles))
    r = rats_reach(system)
    return ContainmentReport(q, r, r - q, q - r)
