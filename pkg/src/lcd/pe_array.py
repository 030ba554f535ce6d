"""Mapping a decoding graph onto an array of processing elements.

Vertices are batched into PEs, PEs holding adjacent vertices are linked,
and PEs are scheduled into parts and time slots. Two PEs that share a slot
(necessarily in different parts) must be at least three links apart, so a
slot is an independent set of the squared link graph and the slot
assignment is a proper colouring of that square.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .graph import BOUNDARY, DecodingGraph


@dataclass(frozen=True)
class PE:
    pe_id: int
    vertices: tuple


@dataclass(frozen=True)
class Part:
    part_id: int
    slots: tuple  # slot -> pe_id, or None when this part idles in that slot


@dataclass
class PEArray:
    pes: list
    links: list
    parts: list
    vertices_per_pe: int
    num_vertices: int = 0
    pe_of_vertex: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.pe_of_vertex is None:
            self.pe_of_vertex = np.full(self.num_vertices, -1, dtype=np.int64)
            for pe in self.pes:
                self.pe_of_vertex[list(pe.vertices)] = pe.pe_id

    @property
    def num_slots(self) -> int:
        return len(self.parts[0].slots) if self.parts else 0

    def slot_of_pe(self) -> dict:
        return {pe: t for part in self.parts for t, pe in enumerate(part.slots) if pe is not None}

    def part_of_pe(self) -> dict:
        return {pe: part.part_id for part in self.parts for pe in part.slots if pe is not None}

    def schedule(self) -> list:
        """Serial execution order: for each slot, the PEs active in it."""
        return [[p.slots[t] for p in self.parts if p.slots[t] is not None] for t in range(self.num_slots)]

    def link_distances(self) -> np.ndarray:
        """All-pairs hop counts over the link graph (BFS from every PE)."""
        n = len(self.pes)
        adj = [[] for _ in range(n)]
        for a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        dist = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            dist[s, s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for v in adj[u]:
                    if dist[s, v] < 0:
                        dist[s, v] = dist[s, u] + 1
                        queue.append(v)
        return dist

    def conflict_free(self) -> bool:
        dist = self.link_distances()
        for group in self.schedule():
            for i, a in enumerate(group):
                for b in group[i + 1 :]:
                    if 0 <= dist[a, b] < 3:
                        return False
        return True

    def to_json(self) -> str:
        return json.dumps(
            {
                "vertices_per_pe": self.vertices_per_pe,
                "num_vertices": self.num_vertices,
                "pes": [{"id": p.pe_id, "vertices": list(p.vertices)} for p in self.pes],
                "links": [list(link) for link in self.links],
                "parts": [{"id": p.part_id, "slots": list(p.slots)} for p in self.parts],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "PEArray":
        data = json.loads(text)
        pes = [PE(int(p["id"]), tuple(p["vertices"])) for p in data["pes"]]
        links = [tuple(link) for link in data["links"]]
        parts = [Part(int(p["id"]), tuple(p["slots"])) for p in data["parts"]]
        return cls(pes, links, parts, int(data["vertices_per_pe"]), int(data["num_vertices"]))


def layer_normalised(coords: np.ndarray) -> np.ndarray:
    """Shift each layer so its smallest x and y are zero.

    A wiggling patch moves by half a lattice step every round; normalising
    puts every layer on the same grid so columns line up in time.
    """
    out = np.array(coords, dtype=np.float64, copy=True)
    for layer in np.unique(out[:, 0]):
        m = out[:, 0] == layer
        out[m, 1] -= out[m, 1].min()
        out[m, 2] -= out[m, 2].min()
    return out


def column_batches(graph: DecodingGraph, vertices_per_pe: int) -> list:
    """Default batching: per layer, walk columns left to right and chunk."""
    co = layer_normalised(graph.coords)
    order = sorted(range(graph.num_vertices), key=lambda v: (co[v, 0], co[v, 1], co[v, 2], v))
    batches = []
    current_layer = None
    for v in order:
        if co[v, 0] != current_layer or len(batches[-1]) == vertices_per_pe:
            batches.append([])
            current_layer = co[v, 0]
        batches[-1].append(v)
    return batches


def welsh_powell(adj: list) -> list:
    """Greedy colouring, largest degree first, ties by index."""
    order = sorted(range(len(adj)), key=lambda v: (-len(adj[v]), v))
    colour = [-1] * len(adj)
    for v in order:
        used = {colour[u] for u in adj[v]}
        c = 0
        while c in used:
            c += 1
        colour[v] = c
    return colour


def rebalance(adj: list, colour: list) -> list:
    """Move vertices out of oversized colour classes where that stays proper.

    The number of parts equals the largest class, so evening the classes out
    shortens nothing but removes mostly-empty parts.
    """
    colour = list(colour)
    k = max(colour, default=-1) + 1
    if k == 0:
        return colour
    target = -(-len(colour) // k)
    changed = True
    while changed:
        changed = False
        sizes = np.bincount(colour, minlength=k)
        if sizes.max() <= target:
            break
        for big in np.flatnonzero(sizes == sizes.max()):
            for v in sorted(i for i, c in enumerate(colour) if c == big):
                banned = {colour[u] for u in adj[v]}
                for small in np.argsort(sizes, kind="stable"):
                    if sizes[small] + 1 < sizes[big] and small not in banned:
                        colour[v] = int(small)
                        changed = True
                        break
                if changed:
                    break
            if changed:
                break
    return colour


def compile_pe_array(
    graph: DecodingGraph,
    vertices_per_pe: int,
    batcher: Optional[Callable[[DecodingGraph, int], list]] = None,
) -> PEArray:
    if not isinstance(vertices_per_pe, (int, np.integer)) or vertices_per_pe < 1:
        raise ValueError(f"vertices_per_pe must be a positive integer, got {vertices_per_pe!r}")
    batches = (batcher or column_batches)(graph, int(vertices_per_pe))
    pe_of = np.full(graph.num_vertices, -1, dtype=np.int64)
    for i, batch in enumerate(batches):
        if len(batch) > vertices_per_pe:
            raise ValueError(f"batch {i} holds {len(batch)} > {vertices_per_pe} vertices")
        for v in batch:
            if pe_of[v] >= 0:
                raise ValueError(f"vertex {v} is in two batches")
            pe_of[v] = i
    if (pe_of < 0).any():
        raise ValueError("batching left some vertices unassigned")
    n = len(batches)
    links = set()
    for e in graph.edges:
        if e.v != BOUNDARY and pe_of[e.u] != pe_of[e.v]:
            a, b = sorted((int(pe_of[e.u]), int(pe_of[e.v])))
            links.add((a, b))
    adj = [set() for _ in range(n)]
    for a, b in links:
        adj[a].add(b)
        adj[b].add(a)
    square = [set(adj[v]) for v in range(n)]
    for v in range(n):
        for u in adj[v]:
            square[v] |= adj[u]
        square[v].discard(v)
    colour = rebalance(square, welsh_powell(square))
    k = max(colour, default=-1) + 1
    classes = [sorted(v for v in range(n) if colour[v] == c) for c in range(k)]
    n_parts = max((len(c) for c in classes), default=0)
    parts = [
        Part(i, tuple(cls[i] if i < len(cls) else None for cls in classes)) for i in range(n_parts)
    ]
    pes = [PE(i, tuple(sorted(int(v) for v in b))) for i, b in enumerate(batches)]
    return PEArray(pes, sorted(links), parts, int(vertices_per_pe), graph.num_vertices, pe_of)
