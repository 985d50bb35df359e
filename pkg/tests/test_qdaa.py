import json

import numpy as np
import pytest
from oracles.fig2_exit_ratio import exit_ratio

from qdaa.geometry import EMPTY, UPPER, WHOLE, EntrySet, Facet, Tile, indices_to_bits, tile_center, tiles
from qdaa.model import MultiAffineField, MultiAffineTerm, parse_model
from qdaa.qdaa import (LOST, SINK, QdaaState, backward_filter_tile, build, exit_set_tiles, state_bound,
                       successors)
from qdaa.sim import SimParams

H, S = (0, 0), (1, 0)
E_FACET = Facet(S, 0, 0)  # lower A facet of S, shared with H


def _targets(trans):
    return {t.target: t.weight for t in trans}


def test_empty_state_self_loop(fig2, fig2_params):
    s = QdaaState(H, EMPTY)
    (t,) = successors(s, fig2, 8, fig2_params)
    assert t.target == s and t.weight == 1.0


def test_special_states_absorb(fig2, fig2_params):
    for s in (SINK, LOST):
        assert successors(s, fig2, 8, fig2_params) == [(s, s, 1.0)]


def test_fig2_whole_successors(fig2, fig2_params):
    trans = successors(QdaaState(H, WHOLE), fig2, 8, fig2_params, seed=3)
    out = _targets(trans)
    assert len(out) == 2 and QdaaState(H, EMPTY) in out
    (entry,) = [s for s in out if s.rectangle == S]
    assert entry.entry.facet == E_FACET
    assert sum(out.values()) == pytest.approx(1.0, abs=1e-12)


def test_fig2_weight_matches_oracle(fig2):
    ratio = exit_ratio()
    assert ratio == pytest.approx(0.0703, abs=5e-4)
    params = SimParams(dt=0.01, t_max=50.0, crossing_tol=1e-9, M=1000)
    out = _targets(successors(QdaaState(H, WHOLE), fig2, 8, params, seed=0))
    w = sum(v for s, v in out.items() if s.rectangle == S)
    assert abs(w - ratio) <= 0.02


def test_fig2_top_facet_entry_single_successor(fig2, fig2_params):
    # R = [0,2.5]x[2.5,5] entered through its upper B facet
    R = (0, 1)
    f = Facet(R, 1, UPPER)
    state = QdaaState(R, EntrySet.on_facet(f, indices_to_bits(range(8))))
    (t,) = successors(state, fig2, 8, fig2_params, seed=1)
    assert t.weight == pytest.approx(1.0)
    assert t.target.rectangle == (1, 1) and t.target.entry.facet == Facet((1, 1), 0, 0)


def test_exit_set_tiles(fig2):
    f = Facet(H, 0, UPPER)
    assert exit_set_tiles(fig2.partition, f, 5, [[2.5, 0.1], [2.5, 2.4]]) == indices_to_bits([0, 4])
    assert exit_set_tiles(fig2.partition, f, 5, np.empty((0, 2))) == 0
    centres = [tile_center(fig2.partition, t, 5) for t in tiles(f, 5)]
    assert exit_set_tiles(fig2.partition, f, 5, centres) == 2**5 - 1


def test_backward_filter_keep_and_drop(fig2, fig2_params):
    f = Facet(H, 0, UPPER)
    whole = QdaaState(H, WHOLE)
    # B near 2.5 is inside the exit set of the A facet, B near 0 is not reachable from inside
    assert backward_filter_tile(fig2, Tile(f, (7,)), whole, 8, fig2_params, 0)
    assert not backward_filter_tile(fig2, Tile(f, (0,)), whole, 8, fig2_params, 0)


def test_coarse_kappa_drops_the_transition(fig2, fig2_params):
    # the true entry region covers about 0.37 of the single facet tile at kappa 1
    out = successors(QdaaState(H, WHOLE), fig2, 1, fig2_params, backward_filter=True, seed=2)
    assert S not in {t.target.rectangle for t in out}
    assert sum(t.weight for t in out) == pytest.approx(1.0)


def test_all_dropped_goes_to_lost():
    # x' = 1 with an entry on the upper x facet: runs leave through that same facet at once,
    # and backward runs from there cross the lower facet instead of the entry tile
    system = parse_model(json.dumps({
        "dimension": 2, "species": ["x", "y"], "odes": [[{"coeff": 1.0, "vars": []}], []],
        "thresholds": [[0, 1, 2], [0, 1]], "initial": [[[0, 1], [0, 1]]]}))
    assert system.field == MultiAffineField(2, ((MultiAffineTerm(1.0, ()),), ()))
    params = SimParams(dt=0.01, t_max=10.0, M=50)
    entry = EntrySet.on_facet(Facet((0, 0), 0, UPPER), 1)
    out = successors(QdaaState((0, 0), entry), system, 1, params, backward_filter=True)
    assert out == [(QdaaState((0, 0), entry), LOST, 1.0)]


def test_boundary_exit_goes_to_sink():
    system = parse_model(json.dumps({
        "dimension": 1, "species": ["x"], "odes": [[{"coeff": 1.0, "vars": []}]],
        "thresholds": [[0, 1]], "initial": [[[0, 1]]]}))
    out = successors(QdaaState((0,), WHOLE), system, 4, SimParams(dt=0.01, t_max=10.0, M=20))
    assert out == [(QdaaState((0,), WHOLE), SINK, 1.0)]


def test_build_fig2(fig2, fig2_params):
    a = build(fig2, 8, fig2_params, seed=5)
    assert len(a) == 4
    assert set(a.states) >= {QdaaState(H, WHOLE), QdaaState(H, EMPTY), QdaaState(S, EMPTY)}
    assert a.check() == []
    assert a.rectangles == {H, S}
    P = a.matrix()
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)


def test_build_empty_initial(fig2, fig2_params):
    from qdaa.model import with_initial
    a = build(with_initial(fig2, ()), 8, fig2_params)
    assert len(a) == 0 and a.initial == []


def test_state_bound_respected(fig2, fig2_params):
    a = build(fig2, 4, fig2_params, backward_filter=False, seed=1)
    per = {}
    for s in a.states:
        if not s.is_special:
            per[s.rectangle] = per.get(s.rectangle, 0) + 1
    assert max(per.values()) <= state_bound(2, 4)
    assert state_bound(2, 1) == 2 * 2 * 1 + 2


def test_exports(fig2, fig2_params):
    a = build(fig2, 8, fig2_params, seed=5)
    doc = json.loads(a.to_json())
    assert len(doc["states"]) == 4 and doc["initial"] == [0]
    assert all(0 <= t["weight"] <= 1 for t in doc["transitions"])
    dot = a.to_dot()
    assert dot.startswith("digraph") and dot.count("->") == len(doc["transitions"])
