"""Leakage-aware clustering decoder: circuits, leakage sampling, graph compilation,
a PE-array decoder emulation, herald-driven adaptivity and experiment tooling."""

from .adaptivity import AdaptiveMap, batch_pregrown, build_map, exposure_sites, pregrow
from .builder import build_wiggled_memory
from .circuit import Circuit, CircuitError, Instruction
from .engine import CycleCosts, DecodeResult, DecoderError, DecodingEngine, cycle_model, decode
from .graph import BOUNDARY, DecodingGraph, Edge, extract_graph
from .harness import ExperimentSpec, ResultRow, fit_lambda, run, run_paired, scenario_fig5, wilson
from .noise import NoiseParams, apply_noise, strip_noise
from .pe_array import PE, PEArray, Part, compile_pe_array
from .sampler import SampleBatch, ShotRecord, sample, sample_arrays

__all__ = [
    "AdaptiveMap", "BOUNDARY", "Circuit", "CircuitError", "CycleCosts", "DecodeResult", "DecoderError",
    "DecodingEngine", "DecodingGraph", "Edge", "ExperimentSpec", "Instruction", "NoiseParams", "PE", "PEArray",
    "Part", "ResultRow", "SampleBatch", "ShotRecord", "apply_noise", "batch_pregrown", "build_map",
    "build_wiggled_memory", "compile_pe_array", "cycle_model", "decode", "exposure_sites", "extract_graph",
    "fit_lambda", "pregrow", "run", "run_paired", "sample", "sample_arrays", "scenario_fig5", "strip_noise",
    "wilson",
]
