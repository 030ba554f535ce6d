"""Unweighted decoding graphs extracted from noisy circuits.

Extraction walks the circuit backwards keeping, for every qubit, the set of
detectors (plus the observable) that an X or a Z error at that point would
flip. Each noise channel then reads off the signature of every Pauli it can
apply. Mechanisms touching one or two detectors become edges; larger ones
must split into edges that already exist.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numba
import numpy as np

from .circuit import Circuit, CircuitError

BOUNDARY = -1
W_MAX = 2
MAX_DEGREE = 12
_MAXK = 8  # detectors kept per component before a mechanism is called hopeless


@dataclass(frozen=True)
class Edge:
    id: int
    u: int
    v: int  # BOUNDARY for a boundary edge
    logical: bool
    source: str = ""

    @property
    def is_boundary(self) -> bool:
        return self.v == BOUNDARY


@dataclass
class DecodingGraph:
    """Detectors as vertices, graphlike error mechanisms as edges.

    The virtual boundary is not a vertex; boundary edges have ``v == -1``.
    For the decoder the boundary is materialised as index ``num_vertices``.
    """

    coords: np.ndarray  # (n, 3): layer, x, y
    edges: list[Edge]
    decompositions: dict = field(default_factory=dict)
    w_max: int = W_MAX

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        n = self.num_vertices
        for e in self.edges:
            if not (0 <= e.u < n) or not (e.v == BOUNDARY or 0 <= e.v < n) or e.u == e.v:
                raise ValueError(f"edge {e} has invalid endpoints")
        self._build_index()

    @property
    def num_vertices(self) -> int:
        return self.coords.shape[0]

    @property
    def boundary_index(self) -> int:
        return self.num_vertices

    def _build_index(self):
        n = self.num_vertices
        nb = n + 1
        self.edge_u = np.array([e.u for e in self.edges], dtype=np.int64)
        self.edge_v = np.array([nb - 1 if e.v == BOUNDARY else e.v for e in self.edges], dtype=np.int64)
        self.edge_logical = np.array([e.logical for e in self.edges], dtype=np.uint8)
        deg = np.zeros(nb, dtype=np.int64)
        np.add.at(deg, self.edge_u, 1)
        np.add.at(deg, self.edge_v, 1)
        self.adj_ptr = np.zeros(nb + 1, dtype=np.int64)
        self.adj_ptr[1:] = np.cumsum(deg)
        self.adj_nbr = np.zeros(self.adj_ptr[-1], dtype=np.int64)
        self.adj_edge = np.zeros(self.adj_ptr[-1], dtype=np.int64)
        fill = self.adj_ptr[:-1].copy()
        # ascending edge id within each vertex, then sorted by neighbour
        for i, (u, v) in enumerate(zip(self.edge_u, self.edge_v)):
            for a, b in ((u, v), (v, u)):
                self.adj_nbr[fill[a]] = b
                self.adj_edge[fill[a]] = i
                fill[a] += 1
        for a in range(nb):
            lo, hi = self.adj_ptr[a], self.adj_ptr[a + 1]
            order = np.lexsort((self.adj_edge[lo:hi], self.adj_nbr[lo:hi]))
            self.adj_nbr[lo:hi] = self.adj_nbr[lo:hi][order]
            self.adj_edge[lo:hi] = self.adj_edge[lo:hi][order]

    def degree(self, v: int) -> int:
        return int(self.adj_ptr[v + 1] - self.adj_ptr[v])

    def max_degree(self) -> int:
        n = self.num_vertices
        return int(np.max(np.diff(self.adj_ptr[: n + 1]))) if n else 0

    def neighbours(self, v: int):
        lo, hi = self.adj_ptr[v], self.adj_ptr[v + 1]
        return list(zip(self.adj_nbr[lo:hi].tolist(), self.adj_edge[lo:hi].tolist()))

    def edge_key(self, u, v, logical) -> tuple:
        a, b = (u, v) if v == BOUNDARY else (min(u, v), max(u, v))
        return (a, b, bool(logical))

    def edge_lookup(self) -> dict:
        return {self.edge_key(e.u, e.v, e.logical): e.id for e in self.edges}

    def layer_subgraph(self, layers) -> "DecodingGraph":
        """Vertices of the given layers, with edges that stay inside them.

        Edges that leave the selection are turned into boundary edges, which
        is how a window of a longer experiment sees its cut.
        """
        keep = np.flatnonzero(np.isin(self.coords[:, 0], list(layers)))
        remap = {int(v): i for i, v in enumerate(keep)}
        seen = {}
        edges = []
        for e in self.edges:
            u, v = remap.get(e.u), (BOUNDARY if e.v == BOUNDARY else remap.get(e.v))
            if u is None and v is None:
                continue
            if u is None:
                u, v = v, BOUNDARY
            elif v is None:
                v = BOUNDARY
            if v == BOUNDARY and u == BOUNDARY:
                continue
            key = self.edge_key(u, v, e.logical)
            if key in seen:
                continue
            seen[key] = len(edges)
            edges.append(Edge(len(edges), u, v, e.logical, e.source))
        return DecodingGraph(self.coords[keep], edges)

    # -- serialisation --------------------------------------------------------

    def to_json(self) -> str:
        verts = [
            {"id": i, "round": int(c[0]), "x": float(c[1]), "y": float(c[2])} for i, c in enumerate(self.coords)
        ]
        edges = [
            {"id": e.id, "u": e.u, "v": "B" if e.v == BOUNDARY else e.v, "logical": int(e.logical)}
            for e in self.edges
        ]
        return json.dumps({"vertices": verts, "edges": edges}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "DecodingGraph":
        data = json.loads(text)
        verts = sorted(data["vertices"], key=lambda v: v["id"])
        coords = [(v["round"], v["x"], v["y"]) for v in verts]
        edges = [
            Edge(int(e["id"]), int(e["u"]), BOUNDARY if e["v"] == "B" else int(e["v"]), bool(e["logical"]))
            for e in data["edges"]
        ]
        edges.sort(key=lambda e: e.id)
        if [e.id for e in edges] != list(range(len(edges))):
            raise ValueError("edge ids must be 0..m-1")
        return cls(coords, edges)


# -- extraction -------------------------------------------------------------------

_KIND = {"DEPOLARIZE1": 1, "LEAK": 1, "DEPOLARIZE2": 2, "MZ": 3}


def _locations(circuit: Circuit):
    """Noise locations in circuit order.

    Returns op arrays for the backward sweep and a parallel list of
    location tags. Gate ops are encoded 0=H, 1=CZ, 2=RZ, 3=MZ; channel ops
    are 10 + kind and carry an index into the tag list.
    """
    ops, qa, qb, loc = [], [], [], []
    tags = []
    moment = 0
    rec = 0
    for idx, ins in enumerate(circuit.instructions):
        name = ins.name
        if name == "TICK":
            moment += 1
        elif name == "H":
            for q in ins.targets:
                ops.append(0), qa.append(q), qb.append(-1), loc.append(-1)
        elif name == "CZ":
            for a, b in ins.pairs():
                ops.append(1), qa.append(a), qb.append(b), loc.append(-1)
        elif name == "RZ":
            for q in ins.targets:
                ops.append(2), qa.append(q), qb.append(-1), loc.append(-1)
        elif name == "MZ":
            for q in ins.targets:
                if ins.prob > 0:
                    ops.append(13), qa.append(q), qb.append(rec), loc.append(len(tags))
                    tags.append((moment, "MZ", (q,), idx))
                ops.append(3), qa.append(q), qb.append(rec), loc.append(-1)
                rec += 1
        elif name in ("DEPOLARIZE1", "LEAK") and ins.prob > 0:
            for q in ins.targets:
                ops.append(11), qa.append(q), qb.append(-1), loc.append(len(tags))
                tags.append((moment, name, (q,), idx))
        elif name == "DEPOLARIZE2" and ins.prob > 0:
            for a, b in ins.pairs():
                ops.append(12), qa.append(a), qb.append(b), loc.append(len(tags))
                tags.append((moment, name, (a, b), idx))
    arr = lambda x: np.array(x, dtype=np.int64)  # noqa: E731
    return arr(ops), arr(qa), arr(qb), arr(loc), tags


@numba.njit(cache=True)
def _sweep(ops, qa, qb, loc, nq, rec_sens, n_loc, nw):
    """Backward sensitivity sweep.

    Returns ``sig[l, k]`` for location ``l`` and basis Pauli ``k``:
    k=0 X on first qubit, 1 Z on first, 2 X on second, 3 Z on second,
    or for a measurement flip k=0 is the flipped record.
    """
    sx = np.zeros((nq, nw), dtype=np.uint64)
    sz = np.zeros((nq, nw), dtype=np.uint64)
    sig = np.zeros((n_loc, 4, nw), dtype=np.uint64)
    for i in range(ops.shape[0] - 1, -1, -1):
        o = ops[i]
        a = qa[i]
        if o == 0:
            for w in range(nw):
                t = sx[a, w]
                sx[a, w] = sz[a, w]
                sz[a, w] = t
        elif o == 1:
            b = qb[i]
            for w in range(nw):
                xa = sx[a, w] ^ sz[b, w]
                xb = sx[b, w] ^ sz[a, w]
                sx[a, w] = xa
                sx[b, w] = xb
        elif o == 2:
            for w in range(nw):
                sx[a, w] = 0
                sz[a, w] = 0
        elif o == 3:
            r = qb[i]
            for w in range(nw):
                sx[a, w] ^= rec_sens[r, w]
        elif o == 11:
            l = loc[i]
            for w in range(nw):
                sig[l, 0, w] = sx[a, w]
                sig[l, 1, w] = sz[a, w]
        elif o == 12:
            l = loc[i]
            b = qb[i]
            for w in range(nw):
                sig[l, 0, w] = sx[a, w]
                sig[l, 1, w] = sz[a, w]
                sig[l, 2, w] = sx[b, w]
                sig[l, 3, w] = sz[b, w]
        elif o == 13:
            l = loc[i]
            r = qb[i]
            for w in range(nw):
                sig[l, 0, w] = rec_sens[r, w]
    return sig


# Pauli components as bitmasks over the basis signatures above
_ONE_Q = ((1, "X"), (2, "Z"), (3, "Y"))
_TWO_Q = tuple(
    (m, "IXZY"[m & 3] + "IXZY"[m >> 2]) for m in range(1, 16)
)


@numba.njit(cache=True)
def _components(sig, kinds, n_det):
    """Enumerate the Pauli components of every location.

    Output rows: location, component mask, number of detectors, observable
    bit, then up to _MAXK detector indices.
    """
    nw = sig.shape[2]
    count = 0
    for l in range(sig.shape[0]):
        k = kinds[l]
        count += 3 if k == 1 else (15 if k == 2 else 1)
    out = np.full((count, 4 + 8), -1, dtype=np.int64)
    buf = np.zeros(nw, dtype=np.uint64)
    row = 0
    for l in range(sig.shape[0]):
        k = kinds[l]
        top = 4 if k == 1 else (16 if k == 2 else 2)
        for m in range(1, top):
            for w in range(nw):
                v = np.uint64(0)
                for j in range(4):
                    if (m >> j) & 1:
                        v ^= sig[l, j, w]
                buf[w] = v
            nd = 0
            obs = 0
            for w in range(nw):
                v = buf[w]
                while v:
                    low = v & (~v + np.uint64(1))
                    bit = 0
                    t = low
                    while t > np.uint64(1):
                        t >>= np.uint64(1)
                        bit += 1
                    idx = w * 64 + bit
                    if idx == n_det:
                        obs = 1
                    else:
                        if nd < 8:
                            out[row, 4 + nd] = idx
                        nd += 1
                    v ^= low
            out[row, 0] = l
            out[row, 1] = m
            out[row, 2] = nd
            out[row, 3] = obs
            row += 1
    return out


def _tag_text(tag, mask, kind) -> str:
    moment, name, qs, _ = tag
    if kind == 3:
        pauli = "flip"
    elif kind == 1:
        pauli = dict(_ONE_Q)[mask] + str(qs[0])
    else:
        p = dict(_TWO_Q)[mask]
        pauli = "*".join(f"{c}{q}" for c, q in zip(p, qs) if c != "I")
    return f"m{moment}:{name}:{pauli}"


@dataclass
class Mechanism:
    """One Pauli component of one noise location, as seen by the detectors."""

    tag: str
    location: int
    detectors: tuple
    logical: bool


def error_mechanisms(circuit: Circuit, *, extra=None):
    """All nontrivial mechanisms of a noisy circuit.

    ``extra`` optionally injects additional full-depolarising locations,
    given as (moment, qubits) pairs placed at the end of that moment.
    Returns the mechanisms and the raw location tags.
    """
    if extra:
        circuit = _with_extra_channels(circuit, extra)
    ops, qa, qb, loc, tags = _locations(circuit)
    defs = circuit.detector_defs
    n_det = len(defs)
    nw = max(1, (n_det + 1 + 63) // 64)
    rec_sens = np.zeros((max(circuit.num_measurements, 1), nw), dtype=np.uint64)

    def setbit(r, i):
        rec_sens[r, i // 64] ^= np.uint64(1) << np.uint64(i % 64)

    for i, recs in defs:
        for r in recs:
            setbit(r, i)
    for r in circuit.observable_def:
        setbit(r, n_det)
    if not tags:
        return [], tags, n_det
    sig = _sweep(ops, qa, qb, loc, circuit.qubit_count, rec_sens, len(tags), nw)
    kinds = np.array([_KIND[t[1]] for t in tags], dtype=np.int64)
    rows = _components(sig, kinds, n_det)
    mechs = []
    for row in rows:
        l, mask, nd, obs = (int(v) for v in row[:4])
        if nd == 0 and obs == 0:
            continue
        if nd > _MAXK:
            raise CircuitError(f"error at {_tag_text(tags[l], mask, kinds[l])} flips {nd} detectors")
        dets = tuple(sorted(int(v) for v in row[4 : 4 + nd]))
        mechs.append(Mechanism(_tag_text(tags[l], mask, kinds[l]), l, dets, bool(obs)))
    return mechs, tags, n_det


def _with_extra_channels(circuit: Circuit, extra) -> Circuit:
    from .circuit import Instruction

    by_moment: dict[int, list[int]] = {}
    for m, qs in extra:
        by_moment.setdefault(int(m), []).extend(int(q) for q in qs)
    out = circuit.copy()
    out.instructions = []
    moment = 0

    def flush(m):
        if m in by_moment:
            out.instructions.append(Instruction("DEPOLARIZE1", tuple(by_moment[m]), (0.75,)))

    for ins in circuit.instructions:
        if ins.name == "TICK":
            flush(moment)
            moment += 1
        out.instructions.append(ins)
    flush(moment)
    return out


def _decompose(dets, logical, lookup):
    """Split a detector set into known edges whose logical bits XOR right."""
    dets = list(dets)

    def rec(rest, want):
        if not rest:
            return [] if not want else None
        u = rest[0]
        options = [((u, BOUNDARY), rest[1:])]
        options += [((min(u, v), max(u, v)), [w for w in rest[1:] if w != v]) for v in rest[1:]]
        for (a, b), remaining in options:
            for lg in (False, True):
                eid = lookup.get((a, b, lg))
                if eid is None:
                    continue
                sub = rec(remaining, want ^ lg)
                if sub is not None:
                    return [eid] + sub
        return None

    return rec(dets, logical)


def extract_graph(circuit: Circuit) -> DecodingGraph:
    """Graphlike decoding graph of a noisy circuit."""
    if not circuit.is_noisy:
        raise CircuitError("circuit has no noise channels; apply a noise model first")
    mechs, _, n_det = error_mechanisms(circuit)
    coords = _vertex_coords(circuit)
    edges: list[Edge] = []
    lookup: dict = {}
    hyper = []
    for mech in mechs:
        d = mech.detectors
        if len(d) == 0:
            raise CircuitError(f"undetectable logical error at {mech.tag}")
        if len(d) > 2:
            hyper.append(mech)
            continue
        u, v = (d[0], BOUNDARY) if len(d) == 1 else d
        key = (u, v, mech.logical)
        if key not in lookup:
            lookup[key] = len(edges)
            edges.append(Edge(len(edges), u, v, mech.logical, mech.tag))
    decomp = {}
    for mech in hyper:
        parts = _decompose(mech.detectors, mech.logical, lookup)
        if parts is None:
            raise CircuitError(
                f"error at {mech.tag} flips detectors {list(mech.detectors)} and does not split into known edges"
            )
        decomp[mech.tag] = parts
    graph = DecodingGraph(coords, edges, decomp)
    if graph.max_degree() > MAX_DEGREE:
        raise CircuitError(f"decoding graph has degree {graph.max_degree()} > {MAX_DEGREE}")
    return graph


def _vertex_coords(circuit: Circuit) -> np.ndarray:
    rows = []
    for i, c in enumerate(circuit.detector_coords()):
        if len(c) >= 3:
            rows.append((c[2], c[0], c[1]))
        elif len(c) == 2:
            rows.append((0.0, c[0], c[1]))
        else:
            rows.append((0.0, float(i), 0.0))
    return np.array(rows, dtype=np.float64).reshape(-1, 3)
