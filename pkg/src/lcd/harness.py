"""Monte-Carlo memory experiments: sample, decode, tally, fit."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .adaptivity import AdaptiveMap, batch_pregrown, build_map
from .builder import build_wiggled_memory, plan_round, qubit_positions
from .circuit import Circuit
from .engine import DecodingEngine
from .graph import DecodingGraph, extract_graph
from .noise import NoiseParams, apply_noise
from .pe_array import PEArray, compile_pe_array
from .sampler import compile_circuit, sample_arrays

CSV_COLUMNS = ("d", "shots", "failures", "p_round", "p_round_ci_lo", "p_round_ci_hi", "lambda",
               "mean_cycles_per_round")
MIN_FAILURES = 20
DEFAULT_FREQUENCY_HZ = 285e6
BATCH = 20000


@dataclass
class ExperimentSpec:
    distances: list
    params: NoiseParams
    shots: int
    adaptive: bool = False
    seed: int = 0
    vertices_per_pe: int | None = None  # default ceil(d/2)
    output: str | None = None

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not self.distances:
            raise ValueError("need at least one distance")
        for d in self.distances:
            if d < 3 or d % 2 == 0:
                raise ValueError(f"distance {d} must be odd and >= 3")


@dataclass
class ResultRow:
    d: int
    shots: int
    failures: int
    p_window: float
    p_round: float
    p_round_ci: tuple
    lam: float = math.nan
    lam_ci: tuple = (math.nan, math.nan)
    low_stats: bool = False
    mean_stage_iterations: dict = field(default_factory=dict)
    mean_cycles_per_round: float = 0.0
    mean_us_per_round: float = 0.0


@dataclass
class Setup:
    d: int
    circuit: Circuit
    graph: DecodingGraph
    array: PEArray
    engine: DecodingEngine
    amap: AdaptiveMap


@lru_cache(maxsize=16)
def _structure(d: int, vpe: int):
    # the graph does not depend on noise strength, only on which channels exist
    ideal = build_wiggled_memory(d, d)
    graph = extract_graph(apply_noise(ideal, NoiseParams(1e-3, 1e-3)))
    array = compile_pe_array(graph, vpe)
    amap = build_map(ideal, graph)
    return ideal, graph, array, amap


def prepare(d: int, params: NoiseParams, vertices_per_pe: int | None = None) -> Setup:
    vpe = vertices_per_pe or -(-d // 2)
    ideal, graph, array, amap = _structure(d, vpe)
    return Setup(d, apply_noise(ideal, params), graph, array, DecodingEngine(graph, array), amap)


# -- statistics -------------------------------------------------------------------


def wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple:
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return (lo, hi)


def per_round(p_window: float, rounds: int) -> float:
    """Invert P_window = 1 - (1 - P_round)^rounds."""
    if p_window >= 1.0:
        return 1.0
    return 1.0 - (1.0 - p_window) ** (1.0 / rounds)


def fit_lambda(ds, p_rounds, failures, min_failures: int = MIN_FAILURES) -> tuple:
    """Least-squares fit of log P_round = c - (d/2) log Lambda.

    Only distances with at least ``min_failures`` failures take part. The
    interval propagates binomial errors on each point (var log p ~ 1/k)
    through the slope. Returns (lambda, (lo, hi)), NaNs when fewer than two
    points qualify.
    """
    pts = [(d, p, k) for d, p, k in zip(ds, p_rounds, failures) if k >= min_failures and p > 0]
    if len(pts) < 2:
        return math.nan, (math.nan, math.nan)
    x = np.array([d / 2 for d, _, _ in pts], dtype=float)
    y = np.log([p for _, p, _ in pts])
    var = np.array([1.0 / k for _, _, k in pts])
    dx = x - x.mean()
    slope = float(np.sum(dx * (y - y.mean())) / np.sum(dx * dx))
    se = math.sqrt(float(np.sum(dx * dx * var)) / float(np.sum(dx * dx)) ** 2)
    lam = math.exp(-slope)
    return lam, (math.exp(-slope - 1.96 * se), math.exp(-slope + 1.96 * se))


# -- running ----------------------------------------------------------------------


def _tally(setup: Setup, seed: int, shots: int, modes: tuple) -> dict:
    """Sample once, decode in each mode on the same shots."""
    cc = compile_circuit(setup.circuit)
    out = {m: {"failures": 0, "cycles": 0, "counts": np.zeros(6, np.int64)} for m in modes}
    done = 0
    while done < shots:
        n = min(BATCH, shots - done)
        batch = sample_arrays(setup.circuit, seed, n, first_shot=done, compiled=cc)
        for mode in modes:
            pre = batch_pregrown(setup.amap, setup.circuit, batch.heralds, n) if mode == "adaptive" else None
            try:
                res = setup.engine.decode_batch(batch.detectors, pre)
            except Exception as exc:
                raise RuntimeError(f"d={setup.d} {mode} shots {done}..{done + n - 1}: {exc}") from exc
            o = out[mode]
            o["failures"] += int(np.count_nonzero(res["logical_flip"] != batch.observables))
            o["cycles"] += int(res["cycles"].sum())
            o["counts"] += res["counts"].sum(axis=0)
        done += n
    return out


def _rows(ds, tallies, shots, frequency_hz) -> list:
    rows = []
    for d, t in zip(ds, tallies):
        k = t["failures"]
        pw = k / shots
        lo, hi = wilson(k, shots)
        cyc = t["cycles"] / shots / d
        names = ("init", "growing", "merging", "picking", "syncing")
        rows.append(ResultRow(
            d=d, shots=shots, failures=k, p_window=pw, p_round=per_round(pw, d),
            p_round_ci=(per_round(lo, d), per_round(hi, d)),
            low_stats=k < MIN_FAILURES,
            mean_stage_iterations={nm: float(t["counts"][i]) / shots / d for i, nm in enumerate(names)},
            mean_cycles_per_round=cyc,
            mean_us_per_round=cyc / frequency_hz * 1e6,
        ))
    lam, ci = fit_lambda([r.d for r in rows], [r.p_round for r in rows], [r.failures for r in rows])
    for r in rows:
        r.lam, r.lam_ci = lam, ci
    return rows


def run_paired(spec: ExperimentSpec, frequency_hz: float = DEFAULT_FREQUENCY_HZ) -> dict:
    """Non-adaptive and adaptive results over one shared set of noise samples."""
    ds = list(spec.distances)
    per_mode = {"plain": [], "adaptive": []}
    for d in ds:
        t = _tally(prepare(d, spec.params, spec.vertices_per_pe), spec.seed + d, spec.shots, ("plain", "adaptive"))
        for m in per_mode:
            per_mode[m].append(t[m])
    return {m: _rows(ds, ts, spec.shots, frequency_hz) for m, ts in per_mode.items()}


def run(spec: ExperimentSpec, frequency_hz: float = DEFAULT_FREQUENCY_HZ) -> list:
    mode = "adaptive" if spec.adaptive else "plain"
    ds = list(spec.distances)
    tallies = [_tally(prepare(d, spec.params, spec.vertices_per_pe), spec.seed + d, spec.shots, (mode,))[mode]
               for d in ds]
    rows = _rows(ds, tallies, spec.shots, frequency_hz)
    if spec.output:
        with open(spec.output, "w", newline="") as fh:
            fh.write(to_csv(rows))
    return rows


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6e}"


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.d, r.shots, r.failures, _num(r.p_round), _num(r.p_round_ci[0]), _num(r.p_round_ci[1]),
                    _num(r.lam), f"{r.mean_cycles_per_round:.4f}"])
    return buf.getvalue()


# -- distance restoration scenario ------------------------------------------------


def two_leak_events(d: int = 7) -> tuple:
    """Forced events for the two-leak scenario on a d x d x d window.

    In the middle round, two Z auxiliaries sit one above the other in the
    column next to the patch centre, the upper one on the top boundary row.
    Each leaks and, in the instance considered, leaves an X error on its two
    data neighbours in the central data column: four errors on a vertical
    line from the top boundary towards the middle, along the X logical.
    The leak itself is injected right after the last of those CZs; from
    there on the sampler's leakage rules apply unchanged.

    Returns (circuit, forced events, herald keys the leaks should raise).
    """
    rounds = d
    r = (rounds + 1) // 2
    plan = plan_round(d, r)
    ideal = build_wiggled_memory(d, rounds)
    qid = {p: q for q, p in qubit_positions(ideal).items()}
    xs = sorted({x for x, _ in plan.src.data})
    centre = xs[len(xs) // 2]
    top = min(y for _, y in plan.src.data)
    zs = sorted((c for c, t in plan.src.checks.items() if t == "Z" and c[1] == top + 1 and abs(c[0] - centre) == 1))
    a = zs[0]
    b = (a[0], a[1] + 4)
    reset_moment = 0 if r == 1 else 10 * (r - 1)
    events, last = [], {}
    for c in (a, b):
        for li, layer in enumerate(plan.layers):
            moment = reset_moment + 2 + 2 * li
            for u, v in layer:
                if c not in (u, v):
                    continue
                p = v if u == c else u
                if p[0] == centre and p in plan.src.data:
                    events.append({"qubit": qid[p], "moment": moment + 1, "pauli": "X"})
                    last[c] = moment
        events.append({"qubit": qid[c], "moment": last[c] + 1, "pauli": "L"})
    return ideal, events


def scenario_fig5(seed: int, trials: int) -> tuple:
    """Failure rates (non-adaptive, adaptive) of the two-leak scenario at d=7."""
    if not isinstance(trials, (int, np.integer)) or trials < 100:
        raise ValueError("trials must be an integer >= 100")
    d = 7
    ideal, events = two_leak_events(d)
    circuit = apply_noise(ideal, NoiseParams(0.0, 0.0))
    setup = prepare(d, NoiseParams(0.0, 0.0), 2)
    batch = sample_arrays(circuit, seed, int(trials), events)
    plain = setup.engine.decode_batch(batch.detectors)["logical_flip"]
    pre = batch_pregrown(setup.amap, circuit, batch.heralds, int(trials))
    adapt = setup.engine.decode_batch(batch.detectors, pre)["logical_flip"]
    return (float(np.mean(plain != batch.observables)), float(np.mean(adapt != batch.observables)))
