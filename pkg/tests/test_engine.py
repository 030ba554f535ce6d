import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import (DATA, check_against_oracle, correction_valid, walkthrough_graph, memory, random_instance,
                      uf_oracle)
from lcd.engine import CycleCosts, DecoderError, DecodingEngine, cycle_model, decode
from lcd.graph import BOUNDARY, DecodingGraph, Edge
from lcd.pe_array import compile_pe_array


def _engine(d, layers=None, vpe=2):
    g = memory(d)[2]
    if layers is not None:
        g = g.layer_subgraph(layers)
    return g, DecodingEngine(g, compile_pe_array(g, vpe))


@pytest.mark.parametrize("d", [3, 5, 7])
@pytest.mark.parametrize("single_layer", [False, True])
def test_partition_matches_serial_union_find(d, single_layer):
    g, eng = _engine(d, [d // 2] if single_layer else None)
    rng = np.random.default_rng(100 * d + single_layer)
    for trial in range(200):
        syn, pre = random_instance(rng, g, trial % 2 == 1)
        _, ok = check_against_oracle(eng, g, syn, pre)
        assert ok, (d, single_layer, sorted(syn), sorted(pre))


def test_empty_syndrome_is_free():
    g, eng = _engine(3)
    res = eng.decode([])
    assert res.correction.size == 0 and res.logical_flip == 0 and res.converged
    assert res.stage_iterations["growing"] == 0
    assert res.emulated_cycles == CycleCosts().init


def test_line_graph_cycle_hand_count():
    # B - 0 - 1 - B, one vertex per PE: two PEs, one part, two slots.
    # init 4; pass 1: grow 3, merge 2+(1+1)+(1+0)=5, pick 3, sync 5;
    # pass 2: grow 3, merge 6 twice (boundary adoption then a quiet rerun), pick 3, sync 6.
    g = DecodingGraph([(0, 0, 0), (0, 1, 0)], [Edge(0, 0, 1, False), Edge(1, 0, BOUNDARY, False),
                                               Edge(2, 1, BOUNDARY, False)])
    arr = compile_pe_array(g, 1)
    assert arr.num_slots == 2 and len(arr.parts) == 1
    res = decode(arr, g, [0])
    assert res.emulated_cycles == 4 + (3 + 5 + 3 + 5) + (3 + 6 + 6 + 3 + 6)
    assert res.stage_iterations == {"init": 1, "growing": 2, "merging": 3, "picking": 2, "syncing": 2}
    assert res.correction.tolist() == [1]


def _cycles_from_trace(trace, arr, costs):
    """Recount cycles from the execution log alone."""
    pe_of = arr.pe_of_vertex
    total = costs.init
    passes = {}
    for rec in trace:
        if "vertices" in rec:
            passes.setdefault(rec["pass"], {"stage": rec["stage"], "recs": []})["recs"].append(rec)
        elif rec["stage"] != "init":
            passes.setdefault(rec["pass"], {"stage": rec["stage"], "recs": []})
    for p in passes.values():
        per_pe = {}
        for rec in p["recs"]:
            for v in rec["vertices"]:
                per_pe[pe_of[v]] = per_pe.get(pe_of[v], 0) + 1
        total += costs.stage
        if p["stage"] in ("growing", "picking"):
            total += costs.vertex * max(per_pe.values(), default=0)
        else:
            for slot in arr.schedule():
                total += costs.slot + costs.vertex * max((per_pe.get(pe, 0) for pe in slot), default=0)
    return total


@pytest.mark.parametrize("vertex", [0, 3, 7])
def test_single_defect_d3_cycles_match_trace_recount(vertex):
    g = memory(3)[2]
    arr = compile_pe_array(g, 2)
    res = DecodingEngine(g, arr).decode([vertex], trace=True)
    assert res.emulated_cycles == _cycles_from_trace(res.trace, arr, CycleCosts())


def test_walkthrough_golden_trace():
    g = walkthrough_graph()
    arr = compile_pe_array(g, 2)
    res = DecodingEngine(g, arr).decode([0, 4, 5], [1], trace=True)
    golden = [json.loads(line) for line in (DATA / "walkthrough_trace.jsonl").read_text().splitlines()]
    assert res.trace == golden


def test_walkthrough_first_growth_pass():
    g = walkthrough_graph()
    res = DecodingEngine(g, compile_pe_array(g, 2)).decode([0, 4, 5], [1], trace=True)
    snaps = [r for r in res.trace if "state" in r]
    grow = next(i for i, s in enumerate(snaps) if s["stage"] == "growing")
    grown = snaps[grow]["state"]
    assert [v for v in range(6) if grown["radius"][v] == 1] == [0, 2, 4, 5]
    merged = next(s for s in snaps[grow:] if s["stage"] == "picking")
    # the snapshot before picking holds the settled merge
    settled = snaps[snaps.index(merged) - 1]["state"]
    assert [settled["cindex"][v] for v in (0, 2, 4, 5)] == [0, 0, 0, 0]
    assert settled["parent"][4] == 2 and settled["parent"][5] == 2 and settled["parent"][2] == 0
    assert [settled["parity"][v] for v in (0, 2, 4, 5)] == [1, 0, 0, 0]
    picked = merged["state"]
    assert [picked["active"][v] for v in (0, 2, 4, 5)] == [1, 0, 0, 0]
    synced = next(s for s in snaps[snaps.index(merged):] if s["stage"] == "syncing")
    assert [synced["state"]["active"][v] for v in (0, 2, 4, 5)] == [1, 1, 1, 1]
    # syncing propagates 0 -> 2 in one slot, then 2 -> 4, 5 in the next
    sync_pass = synced["pass"]
    recs = [r for r in res.trace if r.get("stage") == "syncing" and r["pass"] == sync_pass and "vertices" in r]
    assert [r["slot"] for r in recs] == [0, 1, 2]


def test_cindex_is_cluster_minimum_and_parents_form_forest():
    g, eng = _engine(5)
    rng = np.random.default_rng(5)
    for _ in range(50):
        syn, pre = random_instance(rng, g, True)
        res = eng.decode(syn, pre)
        for c, verts in res.clusters().items():
            if c >= 0:
                assert c == min(verts)
        for v in np.flatnonzero(res.in_cluster):
            seen, u = set(), int(v)
            while res.parent[u] != u and u not in seen:
                seen.add(u)
                u = int(res.parent[u])
                if u == g.num_vertices:
                    break
            assert u == g.num_vertices or res.parent[u] == u


def test_empty_pregrown_is_identical_to_plain():
    g, eng = _engine(5)
    rng = np.random.default_rng(2)
    for _ in range(30):
        syn, _ = random_instance(rng, g, False)
        a, b = eng.decode(syn), eng.decode(syn, [])
        assert a.correction.tolist() == b.correction.tolist() and a.emulated_cycles == b.emulated_cycles


def test_batch_agrees_with_single_decodes():
    g, eng = _engine(5)
    rng = np.random.default_rng(9)
    det = (rng.random((200, g.num_vertices)) < 0.02).astype(np.uint8)
    pre = [rng.choice(len(g.edges), size=int(rng.integers(0, 3)), replace=False) for _ in range(200)]
    out = eng.decode_batch(det, pre)
    for s in range(200):
        r = eng.decode(np.flatnonzero(det[s]), pre[s])
        assert out["logical_flip"][s] == r.logical_flip
        assert out["cycles"][s] == r.emulated_cycles
        assert out["counts"][s, :5].tolist() == list(r.stage_iterations.values())


def test_input_validation():
    g, eng = _engine(3)
    with pytest.raises(ValueError):
        eng.decode([g.num_vertices])
    with pytest.raises(ValueError):
        eng.decode([0], [len(g.edges)])
    with pytest.raises(ValueError):
        eng.decode_batch(np.zeros((2, g.num_vertices + 1), np.uint8))
    other = compile_pe_array(walkthrough_graph(), 2)
    with pytest.raises(ValueError):
        DecodingEngine(g, other)


def test_cap_raises_with_trace():
    g, eng = _engine(3)
    eng.cap = 1
    with pytest.raises(DecoderError) as info:
        eng.decode([0, 5, 9])
    assert info.value.trace


def test_cycle_model_per_round():
    g, eng = _engine(5)
    res = eng.decode([3])
    out = cycle_model(res, eng.array, 250e6)
    assert res.rounds == 5
    assert out["cycles_per_round"] == pytest.approx(res.emulated_cycles / 5)
    assert out["us_per_round"] == pytest.approx(res.emulated_cycles / 5 / 250e6 * 1e6)
    with pytest.raises(ValueError):
        cycle_model(res, eng.array, 0)


@st.composite
def _graphs(draw):
    n = draw(st.integers(1, 9))
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(-1, n - 1)), min_size=1, max_size=18))
    seen, edges = set(), []
    for u, v in pairs:
        if u == v:
            continue
        key = (min(u, v), max(u, v)) if v >= 0 else (u, -1)
        if key in seen:
            continue
        seen.add(key)
        a, b = (max(u, v), min(u, v)) if min(u, v) < 0 else key
        edges.append(Edge(len(edges), a, BOUNDARY if b < 0 else b, draw(st.booleans())))
    # give every vertex a path to the boundary so every syndrome is decodable
    for v in range(n):
        if (v, -1) not in seen:
            edges.append(Edge(len(edges), v, BOUNDARY, False))
    g = DecodingGraph([(0, i, 0) for i in range(n)], edges)
    syn = draw(st.lists(st.integers(0, n - 1), unique=True))
    pre = draw(st.lists(st.integers(0, len(edges) - 1), unique=True, max_size=3))
    vpe = draw(st.integers(1, 3))
    return g, syn, pre, vpe


@settings(max_examples=200, deadline=None)
@given(_graphs())
def test_random_graphs_agree_with_oracle(case):
    g, syn, pre, vpe = case
    eng = DecodingEngine(g, compile_pe_array(g, vpe))
    res, ok = check_against_oracle(eng, g, syn, pre)
    assert ok
    flip = sum(g.edges[e].logical for e in res.correction) % 2
    assert res.logical_flip == flip


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_radius_bound_and_determinism(seed):
    g, eng = _engine(3)
    rng = np.random.default_rng(seed)
    syn, pre = random_instance(rng, g, True)
    a, b = eng.decode(syn, pre), eng.decode(syn, pre)
    assert a.correction.tolist() == b.correction.tolist() and a.emulated_cycles == b.emulated_cycles
    _, radius = uf_oracle(g, syn, pre)
    assert radius.max() <= 2
    assert correction_valid(g, syn, a.correction)
