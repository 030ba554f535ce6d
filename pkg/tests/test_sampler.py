import numpy as np
import pytest
import stim
from hypothesis import given, settings, strategies as st

from stim_bridge import to_stim
from lcd.builder import build_wiggled_memory
from lcd.circuit import Circuit, CircuitError
from lcd.noise import NoiseParams, apply_noise
from lcd.sampler import sample, sample_arrays


def _one_qubit(*ops):
    c = Circuit(1)
    for name, args in ops:
        c.append(name, (0,), args)
    c.append("DETECTOR", (-1,))
    return c


def test_leaked_measurement_heralds_and_is_random():
    c = _one_qubit(("LEAK", (1.0,)), ("HERALD_ERR", (0.0,)), ("MZ", ()))
    b = sample_arrays(c, 5, 10_000)
    assert len(b.heralds) == 10_000
    assert abs(b.detectors[:, 0].mean() - 0.5) < 0.02


def test_reset_clears_leakage():
    c = _one_qubit(("LEAK", (1.0,)), ("RZ", ()), ("MZ", ()))
    b = sample_arrays(c, 5, 2000)
    assert len(b.heralds) == 0 and not b.detectors.any()


def test_sealed_qubits_never_herald():
    c = apply_noise(build_wiggled_memory(3, 3), NoiseParams(5e-3, 0))
    b = sample_arrays(c, 1, 2000)
    assert len(b.heralds) == 0 and b.detectors.any()


def test_herald_miss_rate():
    p = 0.01
    c = Circuit(1)
    c.append("TICK")
    c.append("HERALD_ERR", (0,), (5 * p,))
    c.append("MZ", (0,), (5 * p,))
    shots = 20_000
    b = sample_arrays(c, 8, shots, [{"qubit": 0, "moment": 1}])
    miss = 1 - len(b.heralds) / shots
    sigma = np.sqrt(5 * p * (1 - 5 * p) / shots)
    assert abs(miss - 5 * p) < 3 * sigma


def test_shots_replay_independently():
    c = apply_noise(build_wiggled_memory(3, 3), NoiseParams.regime("HL"))
    full = sample_arrays(c, 77, 300)
    part = sample_arrays(c, 77, 100, first_shot=150)
    assert (full.detectors[150:250] == part.detectors).all()
    assert (full.observables[150:250] == part.observables).all()
    again = sample_arrays(c, 77, 300)
    assert (again.detectors == full.detectors).all() and (again.heralds == full.heralds).all()


def test_matches_stim_without_leakage():
    noisy = apply_noise(build_wiggled_memory(3, 3), NoiseParams(4e-3, 0))
    shots = 100_000
    ours = sample_arrays(noisy, 2024, shots)
    det, obs = to_stim(noisy).compile_detector_sampler(seed=2024).sample(shots, separate_observables=True)
    for a, b in ((ours.detectors, det), (ours.observables[:, None], obs)):
        pa, pb = a.mean(axis=0), b.mean(axis=0)
        sigma = np.sqrt((pa * (1 - pa) + pb * (1 - pb)) / shots)
        assert (np.abs(pa - pb) <= 3 * sigma + 1e-12).all()


def _stim_with_forced_x(circuit, events):
    out = stim.Circuit()
    moment = 0
    pending = {m: [e["qubit"] for e in events if e["moment"] == m] for m in {e["moment"] for e in events}}
    if pending.get(0):
        out.append("X_ERROR", pending[0], [1.0])
    for ins in circuit.instructions:
        piece = to_stim(Circuit(circuit.qubit_count, [ins]))
        out += piece
        if ins.name == "TICK":
            moment += 1
            if pending.get(moment):
                out.append("X_ERROR", pending[moment], [1.0])
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 21), st.integers(0, 39))
def test_forced_pauli_matches_stim(qubit, moment):
    ideal = build_wiggled_memory(3, 4)
    events = [{"qubit": qubit, "moment": moment, "pauli": "X"}]
    ours = sample_arrays(ideal, 0, 4, events)
    # stim flags detection events relative to its noiseless reference, which is all-zero here
    det, obs = _stim_with_forced_x(ideal, events).compile_detector_sampler().sample(1, separate_observables=True)
    assert (ours.detectors == det[0]).all() and (ours.observables == obs[0, 0]).all()


def test_forced_leak_lasts_at_most_two_rounds():
    ideal = build_wiggled_memory(3, 5)
    noisy = apply_noise(ideal, NoiseParams(0, 0))
    sites = noisy.measurement_sites()
    rng = np.random.default_rng(4)
    for _ in range(40):
        q, m = int(rng.integers(noisy.qubit_count)), int(rng.integers(noisy.num_moments))
        b = sample_arrays(noisy, 1, 4, [{"qubit": q, "moment": m}], track_leakage=True)
        hit = np.flatnonzero(b.leaked_at_measure.any(axis=0))
        assert all(sites[i].qubit == q for i in hit)
        assert all(sites[i].moment - m <= 20 for i in hit)
        assert len(hit) <= 1


def test_forced_events_are_validated():
    c = build_wiggled_memory(3, 1)
    with pytest.raises(CircuitError):
        sample_arrays(c, 0, 1, [{"qubit": c.qubit_count, "moment": 0}])
    with pytest.raises(CircuitError):
        sample_arrays(c, 0, 1, [{"qubit": 0, "moment": c.num_moments}])
    with pytest.raises(CircuitError):
        sample_arrays(c, 0, 1, [{"qubit": 0, "moment": 0, "pauli": "W"}])


def test_shot_records():
    c = _one_qubit(("LEAK", (1.0,)), ("HERALD_ERR", (0.0,)), ("MZ", ()))
    recs = sample(c, 3, 5)
    assert len(recs) == 5 and all(r.heralds == {(0, 1)} for r in recs)
