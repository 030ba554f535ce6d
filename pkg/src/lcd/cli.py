"""Command line entry point: ``lcd run | fig5 | build | compile | decode``."""

from __future__ import annotations

import json
import sys

import click

from .adaptivity import build_map
from .builder import build_wiggled_memory
from .circuit import Circuit
from .engine import DecodingEngine, dump_trace
from .graph import DecodingGraph, extract_graph
from .harness import ExperimentSpec, run, scenario_fig5, to_csv
from .noise import NoiseParams, apply_noise, strip_noise
from .pe_array import PEArray, compile_pe_array


def _params(regime, p, pl) -> NoiseParams:
    if regime and (p is not None or pl is not None):
        raise click.UsageError("give either --regime or --p/--pl, not both")
    if regime:
        return NoiseParams.regime(regime)
    if p is None and pl is None:
        raise click.UsageError("noise strength needed: --regime or --p/--pl")
    return NoiseParams(p or 0.0, pl or 0.0)


def _distances(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {text!r}")


def _noise_options(f):
    f = click.option("--pl", type=float, default=None, help="Leakage scale p_l.")(f)
    f = click.option("--p", "p", type=float, default=None, help="Pauli noise scale p.")(f)
    f = click.option("--regime", type=click.Choice(["LL", "HL"]), default=None)(f)
    return f


@click.group()
def main():
    """Leakage-aware clustering decoder toolkit."""


@main.command("run")
@click.option("--d", "dist", required=True, help="Comma-separated odd distances, e.g. 5,7,9.")
@_noise_options
@click.option("--shots", type=int, required=True)
@click.option("--adaptive/--no-adaptive", default=False)
@click.option("--seed", type=int, default=0)
@click.option("--vertices-per-pe", type=int, default=None, help="Default ceil(d/2).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path; stdout if omitted.")
def run_cmd(dist, regime, p, pl, shots, adaptive, seed, vertices_per_pe, out):
    """Memory experiment over several distances; writes one CSV row per distance."""
    try:
        spec = ExperimentSpec(_distances(dist), _params(regime, p, pl), shots, adaptive, seed, vertices_per_pe, out)
    except ValueError as exc:
        raise click.BadParameter(str(exc))
    rows = run(spec)
    if out is None:
        click.echo(to_csv(rows), nl=False)


@main.command("fig5")
@click.option("--trials", type=int, default=1000)
@click.option("--seed", type=int, default=0)
def fig5_cmd(trials, seed):
    """Two-leak distance restoration scenario at d=7."""
    try:
        plain, adaptive = scenario_fig5(seed, trials)
    except ValueError as exc:
        raise click.BadParameter(str(exc))
    click.echo("trials,non_adaptive_failure_rate,adaptive_failure_rate")
    click.echo(f"{trials},{plain:.6f},{adaptive:.6f}")


@main.command("build")
@click.option("--d", "d", type=int, required=True)
@click.option("--rounds", type=int, default=None, help="Default d.")
@_noise_options
@click.option("--out", type=click.File("w"), default="-")
def build_cmd(d, rounds, regime, p, pl, out):
    """Write a memory circuit in text form, noisy when a noise strength is given."""
    circ = build_wiggled_memory(d, rounds or d)
    if regime or p is not None or pl is not None:
        circ = apply_noise(circ, _params(regime, p, pl))
    out.write(circ.to_text())


@main.command("compile")
@click.option("--circuit", "path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--emit", required=True, help="graph.json,array.json[,map.json]")
@click.option("--vertices-per-pe", type=int, default=None, help="Default ceil(d/2).")
def compile_cmd(path, emit, vertices_per_pe):
    """Extract the decoding graph and PE array (and optionally the herald map) of a noisy circuit."""
    outs = [x for x in emit.split(",") if x]
    if len(outs) not in (2, 3):
        raise click.BadParameter("--emit takes two or three comma-separated paths")
    with open(path) as fh:
        circ = Circuit.from_text(fh.read())
    if not circ.is_noisy:
        raise click.BadParameter("circuit carries no noise channels; build it with --regime or --p/--pl")
    graph = extract_graph(circ)
    d = int(circ.metadata.get("distance", 3))
    array = compile_pe_array(graph, vertices_per_pe or -(-d // 2))
    with open(outs[0], "w") as fh:
        fh.write(graph.to_json())
    with open(outs[1], "w") as fh:
        fh.write(array.to_json())
    if len(outs) == 3:
        amap = build_map(strip_noise(circ), graph)
        with open(outs[2], "w") as fh:
            fh.write(amap.to_json())
        with open(outs[2] + ".audit.json", "w") as fh:
            fh.write(amap.audit_json())
        if amap.audit:
            click.echo(f"{len(amap.audit)} unmatched signatures", err=True)
    click.echo(f"{graph.num_vertices} vertices, {len(graph.edges)} edges, "
               f"{len(array.pes)} PEs in {len(array.parts)} parts x {array.num_slots} slots")


@main.command("decode")
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--array", "array_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--syndrome", type=click.Path(exists=True, dir_okay=False), required=True,
              help="JSON list of defect vertex ids.")
@click.option("--pregrown", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list of pregrown edge ids.")
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="Write the FSM trace as JSON lines.")
def decode_cmd(graph_path, array_path, syndrome, pregrown, trace):
    """Decode one syndrome and print the result as JSON."""
    with open(graph_path) as fh:
        graph = DecodingGraph.from_json(fh.read())
    with open(array_path) as fh:
        array = PEArray.from_json(fh.read())
    with open(syndrome) as fh:
        syn = json.load(fh)
    pre = []
    if pregrown:
        with open(pregrown) as fh:
            pre = json.load(fh)
    try:
        res = DecodingEngine(graph, array).decode(syn, pre, trace=trace is not None)
    except ValueError as exc:
        raise click.BadParameter(str(exc))
    if trace:
        dump_trace(res.trace, trace)
    json.dump({
        "correction": res.correction.tolist(),
        "logical_flip": res.logical_flip,
        "converged": res.converged,
        "stage_iterations": res.stage_iterations,
        "emulated_cycles": res.emulated_cycles,
        "clusters": {str(k): v for k, v in res.clusters().items()},
    }, sys.stdout)
    click.echo()


if __name__ == "__main__":
    main()
