"""SI1000-style circuit noise with leakage.

Per moment, every qubit gets exactly one set of channels depending on what
it does:

================  ===================================================
location          channels
================  ===================================================
CZ                DEPOLARIZE2(p), LEAK(p_l) both, RELAX(p_l) both
H                 DEPOLARIZE1(p/10), RELAX(p/5)
RZ                DEPOLARIZE1(2p), LEAK(p_l)
MZ                HERALD_ERR(5p) before, record flip 5p (``MZ(5p)``)
idle, gate step   DEPOLARIZE1(p/10), RELAX(p/5)
idle, meas step   DEPOLARIZE1(2p), RELAX(4p)
================  ===================================================

A moment that contains any MZ or RZ is a measurement step. Channels are
emitted even at zero strength so the noisy layout does not depend on the
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .circuit import NOISE, Circuit, CircuitError, Instruction

REGIMES = {"LL": (1e-3, 1e-4), "HL": (5e-4, 5e-4)}


@dataclass(frozen=True)
class NoiseParams:
    p: float
    p_l: float
    regime_label: Optional[str] = "custom"

    def __post_init__(self):
        for name, v in (("p", self.p), ("p_l", self.p_l)):
            if not 0.0 <= v <= 0.1:
                raise ValueError(f"{name}={v} outside [0, 0.1]")
        if self.regime_label in REGIMES and (self.p, self.p_l) != REGIMES[self.regime_label]:
            raise ValueError(f"regime {self.regime_label} requires (p, p_l) = {REGIMES[self.regime_label]}")
        if self.regime_label not in (None, "custom", *REGIMES):
            raise ValueError(f"unknown regime label {self.regime_label!r}")

    @classmethod
    def regime(cls, label: str) -> "NoiseParams":
        if label not in REGIMES:
            raise ValueError(f"unknown regime {label!r}; expected one of {sorted(REGIMES)}")
        return cls(*REGIMES[label], regime_label=label)


def apply_noise(circuit: Circuit, params: NoiseParams) -> Circuit:
    if circuit.is_noisy:
        raise CircuitError("circuit already carries noise; strip it first")
    p, pl = params.p, params.p_l
    out = Circuit(circuit.qubit_count, metadata=circuit.copy().metadata)
    out.metadata["p"] = p
    out.metadata["p_l"] = pl
    emit = out.instructions.append
    everyone = range(circuit.qubit_count)

    for m, moment in enumerate(circuit.moments()):
        if m:
            emit(Instruction("TICK"))
        measuring = any(ins.name in ("MZ", "RZ") for ins in moment)
        busy: set[int] = set()
        for ins in moment:
            t = ins.targets
            if ins.name == "MZ":
                emit(Instruction("HERALD_ERR", t, (5 * p,)))
                emit(Instruction("MZ", t, (5 * p,)))
            elif ins.name == "RZ":
                emit(ins)
                emit(Instruction("DEPOLARIZE1", t, (2 * p,)))
                emit(Instruction("LEAK", t, (pl,)))
            elif ins.name == "H":
                emit(ins)
                emit(Instruction("DEPOLARIZE1", t, (p / 10,)))
                emit(Instruction("RELAX", t, (p / 5,)))
            elif ins.name == "CZ":
                emit(ins)
                emit(Instruction("DEPOLARIZE2", t, (p,)))
                emit(Instruction("LEAK", t, (pl,)))
                emit(Instruction("RELAX", t, (pl,)))
            else:
                emit(ins)
                continue
            busy.update(t)
        idle = [q for q in everyone if q not in busy]
        if idle:
            if measuring:
                emit(Instruction("DEPOLARIZE1", idle, (2 * p,)))
                emit(Instruction("RELAX", idle, (4 * p,)))
            else:
                emit(Instruction("DEPOLARIZE1", idle, (p / 10,)))
                emit(Instruction("RELAX", idle, (p / 5,)))
    return out


def strip_noise(circuit: Circuit) -> Circuit:
    """Drop every noise channel and measurement flip."""
    out = Circuit(circuit.qubit_count, metadata=circuit.copy().metadata)
    out.metadata.pop("p", None)
    out.metadata.pop("p_l", None)
    for ins in circuit.instructions:
        if ins.name in NOISE:
            continue
        if ins.name == "MZ":
            ins = Instruction("MZ", ins.targets)
        out.instructions.append(ins)
    return out
