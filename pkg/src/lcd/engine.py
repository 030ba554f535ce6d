"""Emulation of the clustering decoder on a PE array.

Vertex state lives in flat arrays indexed by vertex, with one extra slot at
index ``n`` for the virtual boundary. The boundary never executes a kernel;
its cluster index is -1, lower than any real vertex, so any cluster that
reaches it is rooted there and hands it its parity.

Serial stages (merging, syncing) walk the slots in order and, inside a
slot, the parts in order and each PE's vertices in ascending index. Every
kernel sees the state left by the kernels before it. Parallel stages
(growing, picking) touch only the vertex they run on, so their order is
irrelevant.

Only vertices inside a cluster execute: defects, and vertices with a fully
grown or pregrown incident edge. That set only ever grows, so it is kept
incrementally together with per-PE counts for the cycle model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from .graph import DecodingGraph
from .pe_array import PEArray

INIT, GROWING, MERGING, PICKING, SYNCING, EXITING = range(6)
STAGE_NAMES = ("init", "growing", "merging", "picking", "syncing", "exiting")

OK, CAP_EXCEEDED, UNPEELABLE = 0, 1, 2


class DecoderError(RuntimeError):
    """Raised when the controller fails to settle; ``trace`` holds the tail."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class CycleCosts:
    """Cycle costs of the emulated hardware.

    A serial pass costs ``stage`` plus, per slot, ``slot`` plus ``vertex``
    times the largest in-cluster vertex count among the PEs in that slot.
    A parallel pass costs ``stage`` plus ``vertex`` times the busiest PE.
    """

    init: int = 4
    stage: int = 2
    slot: int = 1
    vertex: int = 1

    def as_array(self) -> np.ndarray:
        return np.array([self.init, self.stage, self.slot, self.vertex], dtype=np.int64)


@dataclass
class DecodeResult:
    correction: np.ndarray
    logical_flip: int
    converged: bool
    stage_iterations: dict
    emulated_cycles: int
    cindex: np.ndarray = field(default=None, repr=False)
    parent: np.ndarray = field(default=None, repr=False)
    in_cluster: np.ndarray = field(default=None, repr=False)
    trace: list = field(default=None, repr=False)
    rounds: int = 1

    def clusters(self) -> list:
        """Vertex sets of clusters, keyed by cluster index (-1 is the boundary)."""
        out: dict = {}
        for v in np.flatnonzero(self.in_cluster):
            out.setdefault(int(self.cindex[v]), []).append(int(v))
        return dict(sorted(out.items()))


# -- numba core -----------------------------------------------------------------


@numba.njit(cache=True, inline="always")
def _accessible(u, w, e, radius, pre):
    return pre[e] or radius[u] + radius[w] >= 2


@numba.njit(cache=True)
def _rec(buf, i, stage, stage_pass, part, slot, u):
    if i < buf.shape[0]:
        buf[i, 0] = stage
        buf[i, 1] = stage_pass
        buf[i, 2] = part
        buf[i, 3] = slot
        buf[i, 4] = u
    return i + 1


@numba.njit(cache=True)
def _snap(buf, i, stage, stage_pass, cindex, parent, radius, parity, active, busy):
    if i < buf.shape[0]:
        buf[i, 0, 0] = stage
        buf[i, 0, 1] = stage_pass
        for v in range(cindex.shape[0]):
            buf[i, 1, v] = cindex[v]
            buf[i, 2, v] = parent[v]
            buf[i, 3, v] = radius[v]
            buf[i, 4, v] = parity[v]
            buf[i, 5, v] = active[v]
            buf[i, 6, v] = busy[v]
    return i + 1


@numba.njit(cache=True)
def _join(w, incl, pe_count, pe_of):
    if not incl[w]:
        incl[w] = 1
        pe_count[pe_of[w]] += 1


@numba.njit(cache=True)
def _controller(
    n, adj_ptr, adj_nbr, adj_edge,
    slot_ptr, slot_pe, pe_ptr, pe_vert, pe_part, pe_of,
    syndrome, pre_edges, costs, cap,
    cindex, parent, radius, defect, parity, active, busy, incl, pre, pe_count,
    counts, tr_exec, tr_state, tr_sizes,
):
    """Run the stage FSM for one syndrome. Returns (status, cycles)."""
    nb = n + 1
    n_pes = pe_ptr.shape[0] - 1
    n_slots = slot_ptr.shape[0] - 1
    for v in range(nb):
        cindex[v] = v
        parent[v] = v
        radius[v] = 0
        defect[v] = 0
        parity[v] = 0
        active[v] = 0
        busy[v] = 0
        incl[v] = 0
    cindex[n] = -1
    pre[:] = 0
    pe_count[:] = 0
    counts[:] = 0
    trace = tr_exec.shape[0] > 0
    n_exec = 0
    n_state = 0

    for i in range(syndrome.shape[0]):
        v = syndrome[i]
        defect[v] = 1
        parity[v] = 1
        active[v] = 1
        _join(v, incl, pe_count, pe_of)
    for i in range(pre_edges.shape[0]):
        pre[pre_edges[i]] = 1
    for v in range(n):
        for j in range(adj_ptr[v], adj_ptr[v + 1]):
            if pre[adj_edge[j]]:
                _join(v, incl, pe_count, pe_of)

    cycles = costs[0]
    counts[INIT] = 1
    stage_pass = 0
    if trace:
        n_state = _snap(tr_state, n_state, INIT, 0, cindex, parent, radius, parity, active, busy)

    if pre_edges.shape[0] > 0:
        stage = MERGING
    elif syndrome.shape[0] > 0:
        stage = GROWING
    else:
        stage = EXITING

    status = OK
    fsm_passes = 0
    reruns = 0
    while stage != EXITING:
        stage_pass += 1
        counts[stage] += 1
        ran = stage
        if stage == GROWING or stage == PICKING:
            worst = 0
            for p in range(n_pes):
                if pe_count[p] > worst:
                    worst = pe_count[p]
            cycles += costs[1] + costs[3] * worst
            # growing can add vertices to the cluster set; they join after this pass
            for p in range(n_pes):
                if pe_count[p] == 0:
                    continue
                for k in range(pe_ptr[p], pe_ptr[p + 1]):
                    u = pe_vert[k]
                    if not incl[u]:
                        continue
                    if trace:
                        n_exec = _rec(tr_exec, n_exec, stage, stage_pass, pe_part[p], -1, u)
                    if stage == GROWING:
                        if active[u] and radius[u] < 2:
                            radius[u] += 1
                    else:
                        active[u] = parity[u]
            if stage == GROWING:
                for k in range(pe_vert.shape[0]):
                    u = pe_vert[k]
                    if incl[u] and active[u]:
                        for j in range(adj_ptr[u], adj_ptr[u + 1]):
                            w = adj_nbr[j]
                            if w < n and radius[u] + radius[w] >= 2:
                                _join(w, incl, pe_count, pe_of)
                stage = MERGING
                reruns = 0
            else:
                stage = SYNCING
                reruns = 0
        else:
            for v in range(nb):
                busy[v] = 0
            any_busy = False
            cycles += costs[1]
            for t in range(n_slots):
                worst = 0
                for s in range(slot_ptr[t], slot_ptr[t + 1]):
                    if pe_count[slot_pe[s]] > worst:
                        worst = pe_count[slot_pe[s]]
                cycles += costs[2] + costs[3] * worst
                for s in range(slot_ptr[t], slot_ptr[t + 1]):
                    p = slot_pe[s]
                    if pe_count[p] == 0:
                        continue
                    for k in range(pe_ptr[p], pe_ptr[p + 1]):
                        u = pe_vert[k]
                        if not incl[u]:
                            continue
                        if trace:
                            n_exec = _rec(tr_exec, n_exec, stage, stage_pass, pe_part[p], t, u)
                        if stage == MERGING:
                            for j in range(adj_ptr[u], adj_ptr[u + 1]):
                                w = adj_nbr[j]
                                if cindex[u] > cindex[w] and _accessible(u, w, adj_edge[j], radius, pre):
                                    cindex[u] = cindex[w]
                                    parent[u] = w
                                    busy[u] = 1
                            if parity[u] and parent[u] != u:
                                parity[parent[u]] ^= 1
                                parity[u] = 0
                                busy[u] = 1
                        else:
                            b = 0
                            if not active[u]:
                                for j in range(adj_ptr[u], adj_ptr[u + 1]):
                                    w = adj_nbr[j]
                                    if active[w] and _accessible(u, w, adj_edge[j], radius, pre):
                                        b = 1
                                        break
                            busy[u] = b
                            if b:
                                active[u] = 1
                        if busy[u]:
                            any_busy = True
            reruns += 1
            if any_busy:
                if reruns > cap:
                    status = CAP_EXCEEDED
                    stage = EXITING
            elif stage == MERGING:
                stage = PICKING
            else:
                any_active = False
                for v in range(n):
                    if active[v]:
                        any_active = True
                        break
                if not any_active:
                    stage = EXITING
                else:
                    fsm_passes += 1
                    if fsm_passes >= cap:
                        status = CAP_EXCEEDED
                        stage = EXITING
                    else:
                        stage = GROWING
        if trace:
            n_state = _snap(tr_state, n_state, ran, stage_pass, cindex, parent, radius, parity, active, busy)
    tr_sizes[0] = n_exec
    tr_sizes[1] = n_state
    return status, cycles


@numba.njit(cache=True)
def _peel(n, adj_ptr, adj_nbr, adj_edge, edge_logical, radius, pre, defect, incl,
          visited, order, tparent, tedge, mark, corr):
    """Spanning-forest peeling over accessible edges. Returns (flip, ok)."""
    nb = n + 1
    visited[:] = 0
    corr[:] = 0
    for v in range(n):
        mark[v] = defect[v]
    mark[n] = 0
    ok = True
    for k in range(nb):
        r = n if k == 0 else k - 1  # boundary first, then ascending
        if visited[r] or (r < n and not incl[r]):
            continue
        visited[r] = 1
        order[0] = r
        head = 0
        tail = 1
        while head < tail:
            u = order[head]
            head += 1
            for j in range(adj_ptr[u], adj_ptr[u + 1]):
                w = adj_nbr[j]
                if not visited[w] and _accessible(u, w, adj_edge[j], radius, pre):
                    visited[w] = 1
                    tparent[w] = u
                    tedge[w] = adj_edge[j]
                    order[tail] = w
                    tail += 1
        for i in range(tail - 1, 0, -1):
            v = order[i]
            if mark[v]:
                corr[tedge[v]] ^= 1
                mark[v] = 0
                mark[tparent[v]] ^= 1
        if r < n and mark[r]:
            ok = False
    flip = 0
    for e in range(corr.shape[0]):
        if corr[e]:
            flip ^= edge_logical[e]
    return flip, ok


@numba.njit(cache=True)
def _decode_many(
    n, adj_ptr, adj_nbr, adj_edge, edge_logical,
    slot_ptr, slot_pe, pe_ptr, pe_vert, pe_part, pe_of,
    det, pre_ptr, pre_edges, costs, cap,
    flips, cycles_out, status_out, counts_out,
):
    nb = n + 1
    m = edge_logical.shape[0]
    n_pes = pe_ptr.shape[0] - 1
    cindex = np.zeros(nb, np.int64)
    parent = np.zeros(nb, np.int64)
    radius = np.zeros(nb, np.int64)
    defect = np.zeros(nb, np.uint8)
    parity = np.zeros(nb, np.uint8)
    active = np.zeros(nb, np.uint8)
    busy = np.zeros(nb, np.uint8)
    incl = np.zeros(nb, np.uint8)
    pre = np.zeros(m, np.uint8)
    pe_count = np.zeros(n_pes, np.int64)
    counts = np.zeros(6, np.int64)
    syn = np.zeros(n, np.int64)
    visited = np.zeros(nb, np.uint8)
    order = np.zeros(nb, np.int64)
    tparent = np.zeros(nb, np.int64)
    tedge = np.zeros(nb, np.int64)
    mark = np.zeros(nb, np.uint8)
    corr = np.zeros(m, np.uint8)
    no_exec = np.zeros((0, 5), np.int64)
    no_state = np.zeros((0, 7, nb), np.int64)
    sizes = np.zeros(2, np.int64)
    for s in range(det.shape[0]):
        k = 0
        for v in range(n):
            if det[s, v]:
                syn[k] = v
                k += 1
        status, cyc = _controller(
            n, adj_ptr, adj_nbr, adj_edge, slot_ptr, slot_pe, pe_ptr, pe_vert, pe_part, pe_of,
            syn[:k], pre_edges[pre_ptr[s]:pre_ptr[s + 1]], costs, cap,
            cindex, parent, radius, defect, parity, active, busy, incl, pre, pe_count,
            counts, no_exec, no_state, sizes,
        )
        flip, ok = _peel(n, adj_ptr, adj_nbr, adj_edge, edge_logical, radius, pre, defect, incl,
                         visited, order, tparent, tedge, mark, corr)
        if status == OK and not ok:
            status = UNPEELABLE
        flips[s] = flip
        cycles_out[s] = cyc
        status_out[s] = status
        counts_out[s, :] = counts


# -- python front end -------------------------------------------------------------


class DecodingEngine:
    """A decoding graph bound to a PE array, ready to decode syndromes."""

    def __init__(self, graph: DecodingGraph, array: PEArray, costs: CycleCosts | None = None):
        if array.num_vertices != graph.num_vertices:
            raise ValueError("PE array was compiled for a different graph")
        self.graph = graph
        self.array = array
        self.costs = costs or CycleCosts()
        self.n = graph.num_vertices
        self.cap = 4 * max(self.n, 1)
        sched = array.schedule()
        self.slot_ptr = np.zeros(len(sched) + 1, dtype=np.int64)
        self.slot_ptr[1:] = np.cumsum([len(s) for s in sched])
        self.slot_pe = np.array([p for s in sched for p in s], dtype=np.int64)
        self.pe_ptr = np.zeros(len(array.pes) + 1, dtype=np.int64)
        self.pe_ptr[1:] = np.cumsum([len(p.vertices) for p in array.pes])
        self.pe_vert = np.array([v for p in array.pes for v in sorted(p.vertices)], dtype=np.int64)
        part_of = array.part_of_pe()
        self.pe_part = np.array([part_of[p.pe_id] for p in array.pes], dtype=np.int64)
        self.pe_of = np.asarray(array.pe_of_vertex, dtype=np.int64)
        layers = np.unique(graph.coords[:, 0]) if self.n else np.zeros(1)
        self.rounds = max(1, len(layers) - 1)

    def _graph_args(self):
        g = self.graph
        return (self.n, g.adj_ptr, g.adj_nbr, g.adj_edge)

    def _check(self, syndrome, pregrown):
        syn = np.unique(np.asarray(list(syndrome), dtype=np.int64))
        if syn.size and (syn[0] < 0 or syn[-1] >= self.n):
            raise ValueError(f"syndrome vertex out of range 0..{self.n - 1}")
        pre = np.unique(np.asarray(list(pregrown), dtype=np.int64))
        if pre.size and (pre[0] < 0 or pre[-1] >= len(self.graph.edges)):
            raise ValueError(f"pregrown edge id out of range 0..{len(self.graph.edges) - 1}")
        return syn, pre

    def decode(self, syndrome, pregrown=(), *, trace: bool = False) -> DecodeResult:
        syn, pre = self._check(syndrome, pregrown)
        n, nb, m = self.n, self.n + 1, len(self.graph.edges)
        st = {name: np.zeros(nb, dt) for name, dt in (
            ("cindex", np.int64), ("parent", np.int64), ("radius", np.int64), ("defect", np.uint8),
            ("parity", np.uint8), ("active", np.uint8), ("busy", np.uint8), ("incl", np.uint8))}
        pre_flag = np.zeros(m, np.uint8)
        pe_count = np.zeros(len(self.array.pes), np.int64)
        counts = np.zeros(6, np.int64)
        sizes = np.zeros(2, np.int64)
        rows, snaps = (4096, 256) if trace else (0, 0)
        while True:
            tr_exec = np.zeros((rows, 5), np.int64)
            tr_state = np.zeros((snaps, 7, nb), np.int64)
            status, cycles = _controller(
                *self._graph_args(), self.slot_ptr, self.slot_pe, self.pe_ptr, self.pe_vert, self.pe_part,
                self.pe_of, syn, pre, self.costs.as_array(), self.cap,
                st["cindex"], st["parent"], st["radius"], st["defect"], st["parity"], st["active"],
                st["busy"], st["incl"], pre_flag, pe_count, counts, tr_exec, tr_state, sizes,
            )
            if not trace or (sizes[0] <= rows and sizes[1] <= snaps):
                break
            rows, snaps = max(rows, int(sizes[0])), max(snaps, int(sizes[1]))
        lines = _trace_lines(tr_exec[: sizes[0]], tr_state[: sizes[1]], n) if trace else None
        if status == CAP_EXCEEDED:
            if lines is None:
                return self.decode(syndrome, pregrown, trace=True)
            raise DecoderError(
                f"controller did not settle within {self.cap} passes "
                f"(syndrome {syn.tolist()}, pregrown {pre.tolist()})",
                trace=lines[-50:],
            )
        corr = np.zeros(m, np.uint8)
        flip, ok = _peel(n, self.graph.adj_ptr, self.graph.adj_nbr, self.graph.adj_edge, self.graph.edge_logical,
                         st["radius"], pre_flag, st["defect"], st["incl"], np.zeros(nb, np.uint8),
                         np.zeros(nb, np.int64), np.zeros(nb, np.int64), np.zeros(nb, np.int64),
                         np.zeros(nb, np.uint8), corr)
        return DecodeResult(
            correction=np.flatnonzero(corr),
            logical_flip=int(flip),
            converged=bool(ok),
            stage_iterations={STAGE_NAMES[i]: int(counts[i]) for i in range(5)},
            emulated_cycles=int(cycles),
            cindex=st["cindex"][:n].copy(),
            parent=st["parent"][:n].copy(),
            in_cluster=st["incl"][:n].astype(bool),
            trace=lines,
            rounds=self.rounds,
        )

    def decode_batch(self, detectors: np.ndarray, pregrown=None) -> dict:
        """Decode every row of a (shots, n) 0/1 detector matrix.

        ``pregrown`` is an optional per-shot sequence of edge-id collections.
        Returns arrays ``logical_flip``, ``cycles``, ``status`` and per-stage
        pass ``counts``.
        """
        det = np.ascontiguousarray(detectors, dtype=np.uint8)
        if det.ndim != 2 or det.shape[1] != self.n:
            raise ValueError(f"detector matrix must have {self.n} columns")
        shots = det.shape[0]
        ptr = np.zeros(shots + 1, np.int64)
        flat = []
        if pregrown is not None:
            if len(pregrown) != shots:
                raise ValueError("need one pregrown set per shot")
            for s, edges in enumerate(pregrown):
                _, pre = self._check((), edges)
                flat.extend(pre.tolist())
                ptr[s + 1] = len(flat)
        pre_edges = np.array(flat, dtype=np.int64)
        flips = np.zeros(shots, np.uint8)
        cycles = np.zeros(shots, np.int64)
        status = np.zeros(shots, np.int64)
        counts = np.zeros((shots, 6), np.int64)
        g = self.graph
        _decode_many(self.n, g.adj_ptr, g.adj_nbr, g.adj_edge, g.edge_logical,
                     self.slot_ptr, self.slot_pe, self.pe_ptr, self.pe_vert, self.pe_part, self.pe_of,
                     det, ptr, pre_edges, self.costs.as_array(), self.cap, flips, cycles, status, counts)
        bad = np.flatnonzero(status != OK)
        if bad.size:
            s = int(bad[0])
            syn = np.flatnonzero(det[s])
            self.decode(syn, pre_edges[ptr[s]:ptr[s + 1]])  # raises with a trace when the cap is hit
            raise DecoderError(f"shot {s}: decoder left an odd cluster unresolved")
        return {"logical_flip": flips, "cycles": cycles, "status": status, "counts": counts}


def _trace_lines(tr_exec, tr_state, n) -> list:
    """Group raw trace rows into JSON-ready records in execution order."""
    out = []
    by_pass: dict = {}
    for stage, sp, part, slot, u in tr_exec.tolist():
        key = (sp, stage, part, slot)
        if key not in by_pass:
            by_pass[key] = {"pass": sp, "stage": STAGE_NAMES[stage], "part": part,
                            "slot": None if slot < 0 else slot, "vertices": []}
            out.append(by_pass[key])
        by_pass[key]["vertices"].append(u)
    snaps = []
    for buf in tr_state:
        stage, sp = int(buf[0, 0]), int(buf[0, 1])
        parent = [("B" if p == n else int(p)) for p in buf[2, :n]]
        snaps.append({
            "pass": sp, "stage": STAGE_NAMES[stage], "state": {
                "cindex": buf[1, :n].tolist(), "parent": parent, "radius": buf[3, :n].tolist(),
                "parity": buf[4, :n].tolist(), "active": buf[5, :n].tolist(), "busy": buf[6, :n].tolist(),
            }})
    # each stage pass: its execution records, then the state it left behind
    merged = []
    i = 0
    for snap in snaps:
        while i < len(out) and out[i]["pass"] <= snap["pass"]:
            merged.append(out[i])
            i += 1
        merged.append(snap)
    merged.extend(out[i:])
    return merged


def dump_trace(lines, path) -> None:
    with open(path, "w") as fh:
        for rec in lines:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def decode(array: PEArray, graph: DecodingGraph, syndrome, pregrown=(), *, trace=False,
           costs: CycleCosts | None = None) -> DecodeResult:
    return DecodingEngine(graph, array, costs).decode(syndrome, pregrown, trace=trace)


def cycle_model(result: DecodeResult, array: PEArray, frequency_hz: float) -> dict:
    """Per-round cycle count and wall time of one decoded window.

    A window of ``rounds`` rounds spans ``rounds + 1`` graph layers; a
    single-layer graph counts as one round.
    """
    if not result.converged:
        raise ValueError("cycle model needs a converged decode")
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    if result.cindex is not None and len(result.cindex) != array.num_vertices:
        raise ValueError("result and PE array describe different graphs")
    per_round = result.emulated_cycles / result.rounds
    return {"cycles": result.emulated_cycles, "rounds": result.rounds, "cycles_per_round": per_round,
            "us_per_round": per_round / frequency_hz * 1e6}
