"""Herald-driven pregrowing.

A qubit found leaked at a measurement may have been leaked since its last
reset. While leaked, every CZ it took part in scrambled the partner, and
its own readout is random. Each of those spots is modelled as a full
depolarising channel; whatever graph edges their Pauli components flip are
the edges to pregrow when that measurement heralds.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit
from .graph import BOUNDARY, DecodingGraph, _decompose, error_mechanisms
from .noise import strip_noise

_KEY = re.compile(r"^\(\s*(\d+)\s*,\s*(\d+)\s*\)$")


def exposure_sites(circuit: Circuit) -> dict:
    """For each measurement, the (moment, qubit) spots a leak would scramble.

    Keys are (qubit, round). A channel at (m, q) sits at the end of moment m.
    """
    last_reset: dict[int, int] = {}
    touched: dict[int, list] = {}
    out = {}
    sites = {(s.moment, s.qubit): s for s in circuit.measurement_sites()}
    for m, moment in enumerate(circuit.moments()):
        for ins in moment:
            if ins.name == "RZ":
                for q in ins.targets:
                    last_reset[q] = m
                    touched[q] = []
            elif ins.name == "CZ":
                for a, b in ins.pairs():
                    touched.setdefault(a, []).append((m, b))
                    touched.setdefault(b, []).append((m, a))
            elif ins.name == "MZ":
                for q in ins.targets:
                    s = sites[(m, q)]
                    spots = list(touched.get(q, []))
                    if m > 0:
                        spots.append((m - 1, q))
                    out[(q, s.round)] = sorted(set(spots))
    return out


@dataclass
class AdaptiveMap:
    """Herald key (qubit, round) to the edge ids it pregrows."""

    entries: dict
    audit: list = field(default_factory=list)

    def pregrow(self, heralds) -> list:
        edges: set = set()
        for key in heralds:
            key = (int(key[0]), int(key[1]))
            if key not in self.entries:
                raise KeyError(f"no measurement ({key[0]},{key[1]}) in the adaptive map")
            edges.update(self.entries[key])
        return sorted(edges)

    def record_table(self, circuit: Circuit) -> list:
        """Edge ids per measurement record, for batch lookups."""
        return [tuple(self.entries[(s.qubit, s.round)]) for s in circuit.measurement_sites()]

    def to_json(self) -> str:
        return json.dumps({f"({q},{r})": list(v) for (q, r), v in sorted(self.entries.items())},
                          separators=(",", ":"))

    def audit_json(self) -> str:
        return json.dumps(self.audit, default=list, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AdaptiveMap":
        entries = {}
        for k, v in json.loads(text).items():
            m = _KEY.match(k)
            if not m:
                raise ValueError(f"bad herald key {k!r}")
            entries[(int(m.group(1)), int(m.group(2)))] = tuple(sorted(int(e) for e in v))
        return cls(entries)


def pregrow(amap: AdaptiveMap, heralds) -> list:
    """Union of the map entries of every heralded measurement."""
    return amap.pregrow(heralds)


def build_map(circuit: Circuit, graph: DecodingGraph) -> AdaptiveMap:
    ideal = strip_noise(circuit) if circuit.is_noisy else circuit
    exposure = exposure_sites(ideal)
    spots = sorted({s for v in exposure.values() for s in v})
    index = {s: i for i, s in enumerate(spots)}
    mechs, tags, _ = error_mechanisms(ideal, extra=[(m, (q,)) for m, q in spots])
    # every extra channel is its own location, in the order the spots were injected
    loc_spot = {}
    for l, (moment, _, qs, _) in enumerate(tags):
        loc_spot[l] = index[(moment, qs[0])]
    lookup = graph.edge_lookup()
    per_spot: list[set] = [set() for _ in spots]
    audit = []
    for mech in mechs:
        i = loc_spot[mech.location]
        d = mech.detectors
        if len(d) == 0:
            audit.append({"spot": spots[i], "tag": mech.tag, "detectors": [], "reason": "undetectable"})
            continue
        ids = None
        if len(d) <= 2:
            u, v = (d[0], BOUNDARY) if len(d) == 1 else d
            eid = lookup.get((u, v, mech.logical))
            ids = None if eid is None else [eid]
        if ids is None:
            ids = _decompose(d, mech.logical, lookup)
        if ids is None:
            audit.append({"spot": spots[i], "tag": mech.tag, "detectors": list(d), "reason": "no matching edges"})
            continue
        per_spot[i].update(ids)
    entries = {}
    for key, ss in exposure.items():
        edges: set = set()
        for s in ss:
            edges |= per_spot[index[s]]
        entries[key] = tuple(sorted(edges))
    return AdaptiveMap(entries, audit)


def batch_pregrown(amap: AdaptiveMap, circuit: Circuit, heralds: np.ndarray, shots: int) -> list:
    """Per-shot pregrown edge lists from (shot, record) herald rows."""
    table = amap.record_table(circuit)
    out: list = [set() for _ in range(shots)]
    for s, m in heralds:
        out[int(s)].update(table[int(m)])
    return [sorted(x) for x in out]
