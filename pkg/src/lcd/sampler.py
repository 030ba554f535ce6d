"""Pauli-frame sampler with a per-qubit leakage bit.

Each shot tracks an X and Z frame bit and a ``leaked`` bit per qubit. Only
detector parities and the observable are reported, and both are
deterministic in the noiseless circuit, so the frame starts at zero and is
never randomised at resets.

Each shot draws from its own stream, seeded from ``mix(seed) ^ shot``
through splitmix64, so any subset of shots can be replayed on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .circuit import Circuit, CircuitError

OP_H, OP_CZ, OP_RZ, OP_MZ, OP_DEP1, OP_DEP2, OP_LEAK, OP_RELAX, OP_HERALD, OP_FORCE = range(10)
_CODES = {
    "H": OP_H,
    "CZ": OP_CZ,
    "RZ": OP_RZ,
    "MZ": OP_MZ,
    "DEPOLARIZE1": OP_DEP1,
    "DEPOLARIZE2": OP_DEP2,
    "LEAK": OP_LEAK,
    "RELAX": OP_RELAX,
    "HERALD_ERR": OP_HERALD,
}
# forced events: leakage, or a fixed Pauli given as (x bit) | (z bit) << 1
_FORCE_KINDS = {"L": 0, "X": 1, "Z": 2, "Y": 3}


@dataclass
class CompiledCircuit:
    op: np.ndarray
    a: np.ndarray
    b: np.ndarray
    prob: np.ndarray
    det_ptr: np.ndarray
    det_rec: np.ndarray
    obs_rec: np.ndarray
    num_qubits: int
    num_measurements: int
    meas_qubit: np.ndarray
    meas_round: np.ndarray


def compile_circuit(circuit: Circuit, forced=None) -> CompiledCircuit:
    """Flatten a circuit to per-target op arrays for the kernel."""
    forced_at: dict[int, list[tuple]] = {}
    n_mom = circuit.num_moments
    for f in forced or ():
        q, m = int(f["qubit"]), int(f["moment"])
        if not (0 <= q < circuit.qubit_count and 0 <= m < n_mom):
            raise CircuitError(f"forced event at qubit {q}, moment {m} is not in the circuit")
        kind = f.get("pauli", "L")
        if kind not in _FORCE_KINDS:
            raise CircuitError(f"forced event kind {kind!r} is not one of L, X, Y, Z")
        forced_at.setdefault(m, []).append((q, _FORCE_KINDS[kind]))

    op, a, b, prob = [], [], [], []

    def push(code, x, y=-1, p=0.0):
        op.append(code)
        a.append(x)
        b.append(y)
        prob.append(p)

    moment = 0
    for q, k in forced_at.get(0, ()):
        push(OP_FORCE, q, k)
    for ins in circuit.instructions:
        if ins.name == "TICK":
            moment += 1
            for q, k in forced_at.get(moment, ()):
                push(OP_FORCE, q, k)
            continue
        code = _CODES.get(ins.name)
        if code is None:
            continue
        if code in (OP_CZ, OP_DEP2):
            for x, y in ins.pairs():
                push(code, x, y, ins.prob)
        else:
            for x in ins.targets:
                push(code, x, -1, ins.prob)

    defs = circuit.detector_defs
    ptr = np.zeros(len(defs) + 1, dtype=np.int64)
    for i, (_, recs) in enumerate(defs):
        ptr[i + 1] = ptr[i] + len(recs)
    det_rec = np.array([r for _, recs in defs for r in recs], dtype=np.int64)
    sites = circuit.measurement_sites()
    return CompiledCircuit(
        op=np.array(op, dtype=np.int8),
        a=np.array(a, dtype=np.int32),
        b=np.array(b, dtype=np.int32),
        prob=np.array(prob, dtype=np.float64),
        det_ptr=ptr,
        det_rec=det_rec,
        obs_rec=np.array(circuit.observable_def, dtype=np.int64),
        num_qubits=circuit.qubit_count,
        num_measurements=len(sites),
        meas_qubit=np.array([s.qubit for s in sites], dtype=np.int64),
        meas_round=np.array([s.round for s in sites], dtype=np.int64),
    )


# -- random numbers -------------------------------------------------------------

_GAMMA = np.uint64(0x9E3779B97F4A7C15)


@numba.njit(cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _next(state):
    state[0] += _GAMMA
    return _mix(state[0])


@numba.njit(cache=True, inline="always")
def _uniform(state):
    return np.float64(_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, inline="always")
def _below(state, n):
    return np.int64(_next(state) % np.uint64(n))


@numba.njit(cache=True)
def shot_key(seed, shot):
    return _mix(np.uint64(seed) + _GAMMA) ^ np.uint64(shot)


# -- kernel ---------------------------------------------------------------------


@numba.njit(cache=True)
def _run(op, a, b, prob, nq, nm, det_ptr, det_rec, obs_rec, seed, first, shots, det_out, obs_out, herald_out, leak_out):
    x = np.zeros(nq, dtype=np.uint8)
    z = np.zeros(nq, dtype=np.uint8)
    leaked = np.zeros(nq, dtype=np.uint8)
    miss = np.zeros(nq, dtype=np.uint8)
    rec = np.zeros(nm, dtype=np.uint8)
    state = np.zeros(1, dtype=np.uint64)
    n_det = det_ptr.shape[0] - 1
    n_herald = 0
    for s in range(shots):
        state[0] = shot_key(seed, first + s)
        x[:] = 0
        z[:] = 0
        leaked[:] = 0
        miss[:] = 0
        m = 0
        for i in range(op.shape[0]):
            o = op[i]
            q = a[i]
            if o == OP_H:
                t = x[q]
                x[q] = z[q]
                z[q] = t
            elif o == OP_CZ:
                r = b[i]
                lq = leaked[q]
                lr = leaked[r]
                if lq == 0 and lr == 0:
                    z[q] ^= x[r]
                    z[r] ^= x[q]
                elif lq != lr:
                    v = r if lq else q
                    k = _below(state, 4)
                    x[v] ^= k & 1
                    z[v] ^= k >> 1
            elif o == OP_RZ:
                x[q] = 0
                z[q] = 0
                leaked[q] = 0
            elif o == OP_MZ:
                if leaked[q]:
                    rec[m] = _below(state, 2)
                    if miss[q] == 0:
                        if n_herald < herald_out.shape[0]:
                            herald_out[n_herald, 0] = s
                            herald_out[n_herald, 1] = m
                        n_herald += 1
                    if leak_out.shape[0] > 0:
                        leak_out[s, m] = 1
                else:
                    bit = x[q]
                    if prob[i] > 0.0 and _uniform(state) < prob[i]:
                        bit ^= 1
                    rec[m] = bit
                miss[q] = 0
                m += 1
            elif o == OP_DEP1:
                if _uniform(state) < prob[i]:
                    k = _below(state, 3) + 1
                    x[q] ^= k & 1
                    z[q] ^= k >> 1
            elif o == OP_DEP2:
                if _uniform(state) < prob[i]:
                    r = b[i]
                    k = _below(state, 15) + 1
                    x[q] ^= k & 1
                    z[q] ^= (k >> 1) & 1
                    x[r] ^= (k >> 2) & 1
                    z[r] ^= k >> 3
            elif o == OP_LEAK:
                if leaked[q] == 0 and _uniform(state) < prob[i]:
                    leaked[q] = 1
                    k = _below(state, 4)
                    x[q] ^= k & 1
                    z[q] ^= k >> 1
            elif o == OP_RELAX:
                if leaked[q] and _uniform(state) < prob[i]:
                    leaked[q] = 0
            elif o == OP_HERALD:
                if leaked[q]:
                    miss[q] = 1 if _uniform(state) < prob[i] else 0
            elif o == OP_FORCE:
                k = b[i]
                if k > 0:
                    if leaked[q] == 0:
                        x[q] ^= k & 1
                        z[q] ^= k >> 1
                elif leaked[q] == 0:
                    leaked[q] = 1
                    k = _below(state, 4)
                    x[q] ^= k & 1
                    z[q] ^= k >> 1
        for d in range(n_det):
            v = 0
            for j in range(det_ptr[d], det_ptr[d + 1]):
                v ^= rec[det_rec[j]]
            det_out[s, d] = v
        v = 0
        for j in range(obs_rec.shape[0]):
            v ^= rec[obs_rec[j]]
        obs_out[s] = v
    return n_herald


@dataclass
class SampleBatch:
    """Array form of a block of shots.

    ``heralds`` has one row per herald event: (shot offset within the batch,
    measurement record index).
    """

    detectors: np.ndarray
    observables: np.ndarray
    heralds: np.ndarray
    first_shot: int
    meas_qubit: np.ndarray
    meas_round: np.ndarray
    leaked_at_measure: np.ndarray | None = None

    @property
    def shots(self) -> int:
        return self.detectors.shape[0]

    def herald_keys(self, shot: int) -> set:
        rows = self.heralds[self.heralds[:, 0] == shot, 1]
        return {(int(self.meas_qubit[m]), int(self.meas_round[m])) for m in rows}

    def herald_lists(self) -> list:
        """Per-shot herald key sets, in shot order."""
        out = [set() for _ in range(self.shots)]
        for s, m in self.heralds:
            out[s].add((int(self.meas_qubit[m]), int(self.meas_round[m])))
        return out


@dataclass
class ShotRecord:
    detectors: np.ndarray
    heralds: set
    observable_flip: int
    forced_events: list = field(default_factory=list)


def sample_arrays(
    circuit: Circuit,
    seed: int,
    shots: int,
    forced=None,
    *,
    first_shot: int = 0,
    track_leakage: bool = False,
    compiled: CompiledCircuit | None = None,
) -> SampleBatch:
    if shots < 0:
        raise ValueError("shots must be non-negative")
    cc = compiled if compiled is not None else compile_circuit(circuit, forced)
    n_det = cc.det_ptr.shape[0] - 1
    det = np.zeros((shots, n_det), dtype=np.uint8)
    obs = np.zeros(shots, dtype=np.uint8)
    cap = shots * 4 + 64
    while True:
        her = np.zeros((cap, 2), dtype=np.int64)
        leak = np.zeros((shots if track_leakage else 0, cc.num_measurements), dtype=np.uint8)
        n = _run(cc.op, cc.a, cc.b, cc.prob, cc.num_qubits, cc.num_measurements, cc.det_ptr, cc.det_rec,
                 cc.obs_rec, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), first_shot, shots, det, obs, her, leak)
        if n <= cap:
            break
        cap = n  # rerun with room for every herald; shots are reproducible
    return SampleBatch(det, obs, her[:n].copy(), first_shot, cc.meas_qubit, cc.meas_round,
                       leak if track_leakage else None)


def sample(circuit: Circuit, seed: int, shots: int, forced=None) -> list[ShotRecord]:
    """Sample ``shots`` shots, returning one :class:`ShotRecord` each."""
    batch = sample_arrays(circuit, seed, shots, forced)
    keys = batch.herald_lists()
    forced = list(forced or [])
    return [ShotRecord(batch.detectors[s], keys[s], int(batch.observables[s]), forced) for s in range(shots)]
