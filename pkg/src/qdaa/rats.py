"""Rectangular abstraction transition system.

A multi-affine function restricted to a box takes its extreme values at
the box vertices, so the sign of ``f_i`` at the vertices of a facet decides
whether any trajectory can cross that facet outward.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import UPPER, facets, neighbour_through, rect_box
from .model import BiochemicalSystem, eval_field
from .reach import rectangle_set_bounds

EPS_SIGN = 1e-12


def _vertex_values(system: BiochemicalSystem, rect):
    lo, hi = rect_box(system.partition, rect)
    n = len(lo)
    corners = np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool)
    verts = np.where(corners, hi, lo)
    return corners, eval_field(system.field, verts)


def rats_successors(system: BiochemicalSystem, rect, eps: float = EPS_SIGN) -> set:
    """Successor rectangles of ``rect``, including ``rect`` itself when a self-loop is kept.

    Upper facet on axis ``i``: successor iff ``f_i > eps`` at some vertex of
    that facet; lower facet symmetric with ``f_i < -eps``.  The self-loop is
    dropped only when some component has one strict sign on every vertex of
    the rectangle, which forces every trajectory out.
    """
    rect = tuple(rect)
    corners, vals = _vertex_values(system, rect)
    out = set()
    for f in facets(rect):
        on = corners[:, f.axis] == (f.side == UPPER)
        v = vals[on, f.axis]
        crosses = np.any(v > eps) if f.side == UPPER else np.any(v < -eps)
        if crosses:
            nb = neighbour_through(system.partition, f)
            if nb is not None:
                out.add(nb)
    transient = any(np.all(vals[:, i] > eps) or np.all(vals[:, i] < -eps) for i in range(len(rect)))
    if not transient:
        out.add(rect)
    return out


@dataclass
class RatsSystem:
    system: BiochemicalSystem
    rectangles: list
    transitions: dict = field(default_factory=dict)  # rect -> sorted list of successor rects

    def to_dot(self) -> str:
        ids = {r: k for k, r in enumerate(self.rectangles)}
        init = set(self.system.initial)
        lines = ["digraph rats {"]
        for r in self.rectangles:
            style = ", style=bold" if r in init else ""
            lines.append(f'  r{ids[r]} [label="{r}", shape=box{style}];')
        for r in self.rectangles:
            for t in self.transitions[r]:
                lines.append(f"  r{ids[r]} -> r{ids[t]};")
        lines.append("}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        sp_ = self.system.species
        bounds = rectangle_set_bounds(self.system, self.rectangles)
        return {
            "model": self.system.name,
            "settings": {"method": "rats"},
            "species": list(sp_),
            "n_rectangles": len(self.rectangles),
            "bounds": {name: list(b) for name, b in zip(sp_, bounds)},
            "rectangles": [
                {"index": list(r), "box": [list(map(float, v)) for v in zip(*rect_box(self.system.partition, r))]}
                for r in self.rectangles
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def build_rats(system: BiochemicalSystem, initial=None, eps: float = EPS_SIGN) -> RatsSystem:
    """Transition graph restricted to the rectangles reachable from ``initial``."""
    start = sorted(set(map(tuple, system.initial if initial is None else initial)))
    seen = set(start)
    queue = deque(start)
    trans = {}
    while queue:
        r = queue.popleft()
        succ = sorted(rats_successors(system, r, eps))
        trans[r] = succ
        for s in succ:
            if s not in seen:
                seen.add(s)
                queue.append(s)
    rects = sorted(seen)
    return RatsSystem(system, rects, {r: trans[r] for r in rects})


def rats_reach(system: BiochemicalSystem, initial=None, eps: float = EPS_SIGN) -> set:
    return set(build_rats(system, initial, eps).rectangles)
