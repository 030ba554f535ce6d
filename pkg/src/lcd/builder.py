"""Patch-wiggled rotated surface code memory circuits.

The patch alternates between two layouts, A and B = A + (1/2, 1/2). Each
round moves the logical state from one layout to the other, so every
physical qubit is a data qubit in one round and an auxiliary qubit in the
next, and gets reset at least once every two rounds.

Positions are kept in doubled integer coordinates internally: layout A has
data at even points ``(2i, 2j)`` and checks at odd points. The y axis points
down, so "north" is ``-y``.

How a round moves the patch by ``s`` (either ``+h`` or ``-h``, ``h = (1, 1)``)

==============  ==========================================================
check kind      action
==============  ==========================================================
Z, partner      CNOT(n -> c) for the first three neighbours, then
                CNOT(c -> p) on the partner p = c - s and MZ(p).
                c now holds the data of p.
X, partner      c starts in |+>, CNOT(c -> n) for three neighbours, then
                CNOT(p -> c) and MX(p).
no partner      ordinary syndrome extraction, measure c.
gap qubit e     e is outside the check set but inside the target data set.
                CNOT(q -> e) from q = e - s in the last layer, then MX(q).
==============  ==========================================================

The partner is always the neighbour visited last, so the CZ order of the
two kinds of round is mirrored:

=======  ==========================  ==========================
shift    Z-check order               X-check order
=======  ==========================  ==========================
``+h``   SE, NE, SW, NW              SE, SW, NE, NW
``-h``   NW, SW, NE, SE              NW, NE, SW, SE
=======  ==========================  ==========================

The last two qubits of a Z check form a vertical pair and those of an X
check a horizontal pair, so hook errors run across the logical operators
they could otherwise shorten. Reversing the order each round is what flips
the hook edges of the decoding graph from one round to the next.

Moving data through a swap-style Z check leaves the moved bit XORed with
that check's outcome. The detectors and the observable below undo these
flips in software, so no feed-forward is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuit import Circuit, CircuitError

H = (1, 1)
NW, NE, SW, SE = (-1, -1), (1, -1), (-1, 1), (1, 1)
ORDERS = {
    (1, "Z"): (SE, NE, SW, NW),
    (1, "X"): (SE, SW, NE, NW),
    (-1, "Z"): (NW, SW, NE, SE),
    (-1, "X"): (NW, NE, SW, SE),
}


def _add(a, b, k=1):
    return (a[0] + k * b[0], a[1] + k * b[1])


@dataclass(frozen=True)
class Layout:
    data: frozenset
    checks: dict  # position -> "X" | "Z"

    def support(self, c):
        return [n for n in (_add(c, o) for o in (NW, NE, SW, SE)) if n in self.data]


def base_layout(d: int) -> Layout:
    data = frozenset((2 * i, 2 * j) for i in range(d) for j in range(d))
    checks = {}
    hi = 2 * d - 1
    for x in range(-1, hi + 1, 2):
        for y in range(-1, hi + 1, 2):
            kind = "Z" if ((x + 1) // 2 + (y + 1) // 2) % 2 else "X"
            inside_x = 0 < x < hi
            inside_y = 0 < y < hi
            if inside_x and inside_y:
                checks[(x, y)] = kind
            elif inside_y and not inside_x and kind == "Z":
                checks[(x, y)] = kind  # left and right edges
            elif inside_x and not inside_y and kind == "X":
                checks[(x, y)] = kind  # top and bottom edges
    return Layout(data, checks)


def layout(d: int, k: int) -> Layout:
    """Layout A (``k`` even) or B (``k`` odd)."""
    base = base_layout(d)
    if k % 2 == 0:
        return base
    return Layout(
        frozenset(_add(p, H) for p in base.data),
        {_add(c, H): t for c, t in base.checks.items()},
    )


@dataclass
class RoundPlan:
    """Everything a single round does, in position space."""

    index: int
    shift: tuple
    src: Layout
    dst: Layout
    partner: dict = field(default_factory=dict)  # check -> partner data
    gaps: dict = field(default_factory=dict)  # gap e -> source q
    layers: list = field(default_factory=list)  # 4 lists of (control, target)
    resets: list = field(default_factory=list)
    x_prep: list = field(default_factory=list)
    measure_z: list = field(default_factory=list)
    measure_x: list = field(default_factory=list)

    def check_site(self, c):
        """The qubit whose outcome is check ``c``'s syndrome bit."""
        return self.partner.get(c, c)

    def z_swaps(self):
        return [c for c in self.partner if self.src.checks[c] == "Z"]

    def x_swaps(self):
        return [c for c in self.partner if self.src.checks[c] == "X"]


def plan_round(d: int, r: int) -> RoundPlan:
    """Round ``r`` (1-based) moves the patch from layout ``r-1`` to ``r``."""
    sign = 1 if (r - 1) % 2 == 0 else -1
    s = (sign, sign)
    src, dst = layout(d, r - 1), layout(d, r)
    plan = RoundPlan(r, s, src, dst)
    for c in src.checks:
        p = _add(c, s, -1)
        if p in src.data:
            plan.partner[c] = p
    for e in sorted(dst.data):
        if e not in src.checks:
            plan.gaps[e] = _add(e, s, -1)

    layers = [[] for _ in range(4)]
    for c, kind in sorted(src.checks.items()):
        for li, off in enumerate(ORDERS[(sign, kind)]):
            n = _add(c, off)
            if n not in src.data:
                continue
            swap = li == 3 and plan.partner.get(c) == n
            if kind == "Z":
                layers[li].append((c, n) if swap else (n, c))
            else:
                layers[li].append((n, c) if swap else (c, n))
    for e, q in plan.gaps.items():
        layers[3].append((q, e))
    plan.layers = layers

    plan.resets = sorted(list(src.checks) + list(plan.gaps))
    plan.x_prep = sorted(c for c, t in src.checks.items() if t == "X")
    for c, kind in src.checks.items():
        site = plan.check_site(c)
        (plan.measure_z if kind == "Z" else plan.measure_x).append(site)
    plan.measure_x.extend(plan.gaps.values())
    plan.measure_z.sort()
    plan.measure_x.sort()
    return plan


def all_positions(d: int) -> list:
    pos = set()
    for k in (0, 1):
        lay = layout(d, k)
        pos |= set(lay.data) | set(lay.checks)
    return sorted(pos, key=lambda p: (p[1], p[0]))


def build_wiggled_memory(d: int, rounds: int, basis: str = "Z", *, x_detectors: bool = False) -> Circuit:
    """Z-basis memory experiment on a wiggling patch.

    Parameters
    ----------
    d : int
        Code distance, odd and at least 3.
    rounds : int
        Number of syndrome extraction rounds.
    basis : str
        Only ``"Z"`` is supported.
    x_detectors : bool
        Also annotate X-type comparison detectors from round 2 on. These are
        not part of the decoding problem; they exist so tests can check that
        the construction is a valid stabiliser circuit in both bases.

    Returns
    -------
    Circuit
        Ideal circuit, one detector per Z check per round plus one final
        layer from data readout, and one logical observable.
    """
    if not isinstance(d, int) or d < 3 or d % 2 == 0:
        raise CircuitError(f"distance must be an odd integer >= 3, got {d!r}")
    if not isinstance(rounds, int) or rounds < 1:
        raise CircuitError(f"rounds must be a positive integer, got {rounds!r}")
    if basis != "Z":
        raise CircuitError(f"unsupported basis {basis!r}; only Z memory is built")

    positions = all_positions(d)
    qid = {p: i for i, p in enumerate(positions)}
    coords = {i: (p[0] / 2, p[1] / 2) for p, i in qid.items()}
    circ = Circuit(len(positions), metadata={"distance": d, "rounds": rounds, "basis": "Z", "coords": coords})

    plans = [plan_round(d, r) for r in range(1, rounds + 1)]
    n_rec = 0
    records: dict = {}  # (round, position) -> absolute record index

    def emit_mz(rnd, sites):
        nonlocal n_rec
        sites = sorted(sites)
        if not sites:
            return
        circ.append("MZ", [qid[p] for p in sites])
        for p in sites:
            records[(rnd, p)] = n_rec
            n_rec += 1

    def emit_detector(recs, xy, t):
        recs = sorted(recs)
        circ.append("DETECTOR", [r - n_rec for r in recs], (xy[0] / 2, xy[1] / 2, t))

    def h_moment(qubits):
        circ.append("TICK")
        if qubits:
            circ.append("H", sorted(qid[p] for p in qubits))

    def check_rec(rnd, c):
        return records[(rnd, plans[rnd - 1].check_site(c))]

    def carried(rnd, supp, kind):
        # record flips picked up by data that moved during round ``rnd``
        plan = plans[rnd - 1]
        out = set()
        swaps = set(plan.z_swaps() if kind == "Z" else plan.x_swaps())
        for y in supp:
            if y in swaps:
                out ^= {check_rec(rnd, y)}
            if kind == "X" and y in plan.gaps:
                out ^= {records[(rnd, plan.gaps[y])]}
        return out

    def round_detectors(rnd):
        plan = plans[rnd - 1]
        kinds = ("Z", "X") if x_detectors else ("Z",)
        for kind in kinds:
            for c in sorted(plan.src.checks, key=lambda p: (p[1], p[0])):
                if plan.src.checks[c] != kind:
                    continue
                recs = {check_rec(rnd, c)}
                if rnd > 1:
                    prev = plans[rnd - 2]
                    recs ^= {check_rec(rnd - 1, _add(c, prev.shift, -1))}
                    recs ^= carried(rnd - 1, plan.src.support(c), kind)
                elif kind == "X":
                    continue
                emit_detector(recs, c, rnd - 1)

    # initial moment: data in |0>, round-one auxiliaries reset
    first = plans[0]
    circ.append("RZ", sorted(qid[p] for p in set(first.src.data) | set(first.resets)))

    for plan in plans:
        if plan.index > 1:
            circ.append("TICK")
            prev = plans[plan.index - 2]
            emit_mz(prev.index, prev.measure_z + prev.measure_x)
            circ.append("RZ", sorted(qid[p] for p in plan.resets))
            round_detectors(prev.index)
        targets = [{t for _, t in layer} for layer in plan.layers]
        h_moment(set(plan.x_prep) ^ targets[0])
        for li, layer in enumerate(plan.layers):
            circ.append("TICK")
            pairs = sorted((qid[a], qid[b]) for a, b in layer)
            circ.append("CZ", [q for pr in pairs for q in pr])
            after = targets[li + 1] if li < 3 else set(plan.measure_x)
            h_moment(targets[li] ^ after)

    # final moment: last syndrome plus data readout
    last = plans[-1]
    circ.append("TICK")
    emit_mz(last.index, last.measure_z + last.measure_x)
    final = rounds + 1
    emit_mz(final, sorted(last.dst.data))
    round_detectors(last.index)
    for c in sorted(last.dst.checks, key=lambda p: (p[1], p[0])):
        if last.dst.checks[c] != "Z":
            continue
        supp = last.dst.support(c)
        recs = {records[(final, y)] for y in supp}
        recs ^= {check_rec(last.index, _add(c, last.shift, -1))}
        recs ^= carried(last.index, supp, "Z")
        emit_detector(recs, c, rounds)

    obs: set = set()
    for plan in plans:
        top = min(y for _, y in plan.dst.data)
        row = [p for p in plan.dst.data if p[1] == top]
        obs ^= carried(plan.index, row, "Z")
    top = min(y for _, y in last.dst.data)
    obs ^= {records[(final, p)] for p in last.dst.data if p[1] == top}
    circ.append("OBSERVABLE_INCLUDE", [r - n_rec for r in sorted(obs)])
    circ.validate()
    return circ


def qubit_positions(circuit: Circuit) -> dict:
    """Map qubit id to its doubled-integer position."""
    return {q: (round(2 * x), round(2 * y)) for q, (x, y) in circuit.metadata["coords"].items()}
