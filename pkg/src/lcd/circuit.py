"""Timed instruction sequences over the native gate set.

A :class:`Circuit` is a flat list of :class:`Instruction` objects in time
order, with ``TICK`` separating moments. Detector and observable
annotations use stim-style negative record offsets, so ``rec[-1]`` is the
most recent measurement at the point the annotation appears.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

GATES = ("H", "CZ", "RZ", "MZ")
NOISE = ("DEPOLARIZE1", "DEPOLARIZE2", "LEAK", "RELAX", "HERALD_ERR")
ANNOTATIONS = ("DETECTOR", "OBSERVABLE_INCLUDE", "TICK")
KINDS = GATES + NOISE + ANNOTATIONS


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    """One line of a circuit.

    ``targets`` are qubit ids, except for DETECTOR and OBSERVABLE_INCLUDE
    where they are negative measurement-record offsets. ``args`` hold the
    channel probability for noise instructions, the classical flip
    probability for MZ, and coordinates for DETECTOR.
    """

    name: str
    targets: tuple[int, ...] = ()
    args: tuple[float, ...] = ()

    def __post_init__(self):
        if self.name not in KINDS:
            raise CircuitError(f"unknown instruction {self.name!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "args", tuple(float(a) for a in self.args))
        if self.name in NOISE or self.name == "MZ":
            if self.name in NOISE and len(self.args) != 1:
                raise CircuitError(f"{self.name} takes exactly one probability")
            if len(self.args) > 1:
                raise CircuitError("MZ takes at most one flip probability")
            for a in self.args:
                if not 0.0 <= a <= 1.0:
                    raise CircuitError(f"{self.name} probability {a} outside [0, 1]")
        if self.name in ("CZ", "DEPOLARIZE2") and len(self.targets) % 2:
            raise CircuitError(f"{self.name} needs an even number of targets")
        if self.name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
            if any(t >= 0 for t in self.targets):
                raise CircuitError("record offsets must be negative")

    @property
    def is_noise(self) -> bool:
        return self.name in NOISE or (self.name == "MZ" and bool(self.args))

    @property
    def prob(self) -> float:
        return self.args[0] if self.args else 0.0

    def pairs(self):
        return list(zip(self.targets[::2], self.targets[1::2]))

    def __str__(self):
        head = self.name
        if self.args:
            head += "(" + ", ".join(_fmt(a) for a in self.args) + ")"
        if self.name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
            body = [f"rec[{t}]" for t in self.targets]
        else:
            body = [str(t) for t in self.targets]
        return " ".join([head, *body])


def _fmt(x: float) -> str:
    # repr round-trips floats exactly; trim the noise of integral values
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class MeasurementSite:
    """Where a measurement record came from."""

    record: int
    qubit: int
    moment: int
    round: int


@dataclass
class Circuit:
    qubit_count: int
    instructions: list[Instruction] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    # -- construction helpers -------------------------------------------------

    def append(self, name, targets=(), args=()):
        self.instructions.append(Instruction(name, tuple(targets), tuple(args)))

    def copy(self) -> "Circuit":
        meta = dict(self.metadata)
        if "coords" in meta:
            meta["coords"] = dict(meta["coords"])
        return Circuit(self.qubit_count, list(self.instructions), meta)

    # -- derived views ----------------------------------------------------------

    @property
    def num_measurements(self) -> int:
        return sum(len(ins.targets) for ins in self.instructions if ins.name == "MZ")

    @property
    def num_moments(self) -> int:
        return 1 + sum(ins.name == "TICK" for ins in self.instructions)

    @property
    def is_noisy(self) -> bool:
        return any(ins.is_noise for ins in self.instructions)

    def moments(self) -> list[list[Instruction]]:
        out = [[]]
        for ins in self.instructions:
            if ins.name == "TICK":
                out.append([])
            else:
                out[-1].append(ins)
        return out

    def _resolve(self, kind: str) -> list[list[int]]:
        """Absolute record indices of every annotation of ``kind``."""
        n = 0
        out = []
        for ins in self.instructions:
            if ins.name == "MZ":
                n += len(ins.targets)
            elif ins.name == kind:
                recs = [n + t for t in ins.targets]
                if any(r < 0 for r in recs):
                    raise CircuitError(f"{ins} references a measurement before the start")
                out.append(recs)
        return out

    @property
    def detector_defs(self) -> list[tuple[int, list[int]]]:
        """(detector id, absolute measurement-record indices)."""
        return list(enumerate(self._resolve("DETECTOR")))

    @property
    def observable_def(self) -> list[int]:
        recs: set[int] = set()
        for r in self._resolve("OBSERVABLE_INCLUDE"):
            recs.symmetric_difference_update(r)
        return sorted(recs)

    @property
    def num_detectors(self) -> int:
        return sum(ins.name == "DETECTOR" for ins in self.instructions)

    def detector_coords(self) -> list[tuple[float, ...]]:
        return [ins.args for ins in self.instructions if ins.name == "DETECTOR"]

    def measurement_sites(self) -> list[MeasurementSite]:
        """One entry per record.

        The round index of a measurement is the 1-based ordinal of the
        measurement-bearing moment it sits in, which for the memory circuits
        built here is the syndrome round (final data readout shares the last
        round's moment).
        """
        sites = []
        moment = 0
        rounds = 0
        seen_mz = False
        for ins in self.instructions:
            if ins.name == "TICK":
                moment += 1
                seen_mz = False
            elif ins.name == "MZ":
                if not seen_mz:
                    rounds += 1
                    seen_mz = True
                for q in ins.targets:
                    sites.append(MeasurementSite(len(sites), q, moment, rounds))
        return sites

    # -- checks -----------------------------------------------------------------

    def validate(self) -> None:
        n_meas = 0
        for m, moment in enumerate(self.moments()):
            two_q: set[int] = set()
            for ins in moment:
                if ins.name in GATES or ins.name in NOISE:
                    for t in ins.targets:
                        if not 0 <= t < self.qubit_count:
                            raise CircuitError(f"moment {m}: target {t} out of range in {ins}")
                if ins.name == "CZ":
                    for t in ins.targets:
                        if t in two_q:
                            raise CircuitError(f"moment {m}: qubit {t} in two CZs")
                        two_q.add(t)
                    a, b = ins.targets[::2], ins.targets[1::2]
                    if any(x == y for x, y in zip(a, b)):
                        raise CircuitError(f"moment {m}: CZ on a single qubit")
                if ins.name == "MZ":
                    n_meas += len(ins.targets)
                if ins.name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
                    if any(n_meas + t < 0 for t in ins.targets):
                        raise CircuitError(f"moment {m}: unresolved record in {ins}")

    # -- text format ------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        meta = {k: v for k, v in self.metadata.items() if k != "coords"}
        head = " ".join(f"{k}={v}" for k, v in sorted(meta.items()))
        lines.append(f"#! qubits={self.qubit_count}" + (f" {head}" if head else ""))
        for q, xy in sorted(self.metadata.get("coords", {}).items()):
            lines.append(f"#@ {q} " + " ".join(_fmt(c) for c in xy))
        lines.extend(str(ins) for ins in self.instructions)
        return "\n".join(lines) + "\n"

    __str__ = to_text

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        qubit_count = None
        metadata: dict = {}
        coords = {}
        instructions = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#!"):
                for item in line[2:].split():
                    k, v = item.split("=", 1)
                    if k == "qubits":
                        qubit_count = int(v)
                    else:
                        metadata[k] = _parse_meta(v)
                continue
            if line.startswith("#@"):
                q, *xy = line[2:].split()
                coords[int(q)] = tuple(float(c) for c in xy)
                continue
            if line.startswith("#"):
                continue
            try:
                instructions.append(_parse_line(line))
            except (CircuitError, ValueError) as exc:
                raise CircuitError(f"line {lineno}: {exc}") from None
        if coords:
            metadata["coords"] = coords
        if qubit_count is None:
            used = [t for ins in instructions if ins.name in GATES + NOISE for t in ins.targets]
            qubit_count = max(used, default=-1) + 1
        return cls(qubit_count, instructions, metadata)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.qubit_count == other.qubit_count
            and self.instructions == other.instructions
            and self.metadata == other.metadata
        )


_LINE = re.compile(r"^([A-Z_0-9]+)(?:\(([^)]*)\))?\s*(.*)$")
_REC = re.compile(r"^rec\[(-\d+)\]$")


def _parse_line(line: str) -> Instruction:
    m = _LINE.match(line)
    if not m:
        raise CircuitError(f"cannot parse {line!r}")
    name, arg_text, rest = m.groups()
    args = tuple(float(a) for a in arg_text.split(",")) if arg_text else ()
    targets = []
    for tok in rest.split():
        r = _REC.match(tok)
        if name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
            if not r:
                raise CircuitError(f"expected rec[-k], got {tok!r}")
            targets.append(int(r.group(1)))
        else:
            targets.append(int(tok))
    return Instruction(name, tuple(targets), args)


def _parse_meta(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v
