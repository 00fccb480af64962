"""Command line entry point: reinforced-loops <command> ..."""
from __future__ import annotations

import csv
import json
import sys

import click
import numpy as np

from .environment import MixingMeasure, mcmc_sample, quadrature_expectation, log_mixing_density
from .errors import ReinforcedLoopsError
from .graph import AugmentedGraph, as_full_graph, load_graph
from .markov import GeneratorSpec, fixed_duration, kill_at_root, simulate_jump, step_limit, wilson
from .rewilson import reinforced_soup, reinforced_wilson
from .rng import derive_seed
from . import vrjp as _vrjp
from .verify import REGISTRY, reports_json, run_all, run_check


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


def _graph(name: str):
    try:
        return load_graph(name)
    except ReinforcedLoopsError as exc:
        raise click.BadParameter(str(exc), param_hint="--graph") from None


def _rooted(name: str) -> AugmentedGraph:
    g = _graph(name)
    if not isinstance(g, AugmentedGraph):
        raise click.BadParameter("this command needs a graph with a root", param_hint="--graph")
    return g


def _parse_u(text: str, full) -> np.ndarray:
    """Either comma-separated values in vertex order or v=x pairs."""
    u = np.zeros(full.n)
    parts = [p for p in text.split(",") if p.strip()]
    if parts and all("=" in p for p in parts):
        for p in parts:
            v, x = p.split("=")
            u[full.index(v.strip())] = float(x)
        return u
    vals = [float(p) for p in parts]
    if len(vals) != full.n:
        raise click.BadParameter(f"expected {full.n} values", param_hint="--u")
    return np.asarray(vals)


@click.group()
def main():
    """Reinforced loop soups and their isomorphism checks."""


# ---------------------------------------------------------------- simulate

@main.group()
def simulate():
    """Single trajectories as JSON lines of (vertex, holding time)."""


@simulate.command("vrjp")
@click.option("--graph", required=True, help="bundled graph name or JSON file")
@click.option("--start", required=True)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--stop", type=click.Choice(["kill", "threshold", "steps"]), default="kill", show_default=True)
@click.option("--vertex", default=None, help="threshold vertex")
@click.option("--level", type=float, default=None, help="local time level")
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None)
def simulate_vrjp_cmd(graph, start, theta, stop, vertex, level, steps, seed, out):
    g = _graph(graph)
    if stop == "kill":
        rule = _vrjp.kill_at_root()
    elif stop == "threshold":
        if vertex is None or level is None:
            raise click.UsageError("--stop threshold needs --vertex and --level")
        rule = _vrjp.local_time_threshold(vertex, level)
    else:
        rule = _vrjp.step_limit(steps)
    try:
        tr = _vrjp.simulate_vrjp(g, start, theta, rule, derive_seed(seed, 0, "cli-vrjp"))
    except ReinforcedLoopsError as exc:
        raise click.ClickException(str(exc)) from None
    lines = [json.dumps({"vertex": v, "holding_time": y}) for v, y in tr.steps]
    lines.append(json.dumps({"end_reason": tr.end_reason, "L": tr.L,
                             "last_vertex_before_root": tr.last_vertex_before_root}, sort_keys=True))
    _emit("\n".join(lines), out)


@simulate.command("jump")
@click.option("--graph", required=True)
@click.option("--start", required=True)
@click.option("--u", "u_text", default=None, help="environment for twisted rates W e^{u_j-u_i}/2")
@click.option("--stop", type=click.Choice(["kill", "duration", "steps"]), default="kill", show_default=True)
@click.option("--duration", type=float, default=1.0, show_default=True)
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None)
def simulate_jump_cmd(graph, start, u_text, stop, duration, steps, seed, out):
    g = _graph(graph)
    full, _ = as_full_graph(g)
    gen = GeneratorSpec.twisted(g, _parse_u(u_text, full)) if u_text else GeneratorSpec.plain(g)
    rule = {"kill": kill_at_root, "duration": lambda: fixed_duration(duration),
            "steps": lambda: step_limit(steps)}[stop]()
    try:
        tr = simulate_jump(gen, start, rule, derive_seed(seed, 0, "cli-jump"))
    except ReinforcedLoopsError as exc:
        raise click.ClickException(str(exc)) from None
    lines = tr.to_jsonl().rstrip("\n").splitlines()
    lines.append(json.dumps({"end_reason": tr.end_reason, "duration": tr.duration,
                             "last_vertex_before_root": tr.last_vertex_before_root}, sort_keys=True))
    _emit("\n".join(lines), out)


# ---------------------------------------------------------------- Wilson

@main.command("wilson")
@click.option("--graph", required=True)
@click.option("--variant", type=click.Choice(["ordered", "popping", "single"]), default="ordered",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None)
def wilson_cmd(graph, variant, seed, out):
    """Uniform-weight spanning tree and erased loops of the plain chain."""
    ag = _rooted(graph)
    tree, loops = wilson(ag, None, variant, derive_seed(seed, 0, "cli-wilson"))
    doc = {"tree": [list(e) for e in tree.key()], "loops": [l.to_dict() for l in loops],
           "occupation": loops.occupation(ag.vertices)}
    _emit(json.dumps(doc, sort_keys=True, indent=2), out)


@main.command("rewilson")
@click.option("--graph", required=True)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--replicas", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="JSON lines, one run per line")
@click.option("--dump-loops", is_flag=True, help="include the erased loops of each run")
def rewilson_cmd(graph, theta, replicas, seed, out, dump_loops):
    """Reinforced Wilson runs: tree, erased loops and occupation field."""
    ag = _rooted(graph)
    lines = []
    for r in range(replicas):
        res = reinforced_wilson(ag, theta, derive_seed(seed, r, "cli-rewilson"))
        d = res.to_dict()
        d["replica"] = r
        if dump_loops:
            d["loops"] = [l.to_dict() for l in res.erased_loops]
        lines.append(json.dumps(d, sort_keys=True))
    _emit("\n".join(lines), out)


@main.command("soup")
@click.option("--graph", required=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="JSON lines, one loop per line")
def soup_cmd(graph, alpha, theta, seed, out):
    """Reinforced loop soup of intensity alpha."""
    ag = _rooted(graph)
    try:
        c = reinforced_soup(ag, theta, alpha, derive_seed(seed, 0, "cli-soup"))
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--alpha") from None
    _emit(c.to_jsonl().rstrip("\n"), out)


# ---------------------------------------------------------------- environment

@main.group()
def env():
    """The mixing measure of the VRJP."""


def _pin_default(g, pin):
    full, root = as_full_graph(g)
    if pin is not None:
        return pin
    return full.vertices[root] if root is not None else full.vertices[0]


@env.command("density")
@click.option("--graph", required=True)
@click.option("--pin", default=None, help="pinned vertex (default: root, else first vertex)")
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--u", "u_text", required=True, help="values in vertex order, or v=x pairs")
def env_density(graph, pin, theta, u_text):
    g = _graph(graph)
    full, _ = as_full_graph(g)
    pin = _pin_default(g, pin)
    try:
        val = log_mixing_density(g, pin, theta, _parse_u(u_text, full))
    except ReinforcedLoopsError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(json.dumps({"pin": pin, "log_density": val}))


@env.command("sample")
@click.option("--graph", required=True)
@click.option("--pin", default=None)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--n", "n", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=None, help="CSV file (default: stdout)")
def env_sample(graph, pin, theta, n, seed, out):
    """Metropolis samples of the environment, one CSV row per sample."""
    g = _graph(graph)
    pin = _pin_default(g, pin)
    res = mcmc_sample(g, pin, theta, n, derive_seed(seed, 0, "cli-env"))
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(res.vertices)
        for row in res.samples:
            w.writerow([repr(float(x)) for x in row])
    finally:
        if out:
            fh.close()
    click.echo(f"acceptance={res.acceptance:.3f} ess={res.ess:.0f}", err=True)


@env.command("normalize")
@click.option("--graph", required=True)
@click.option("--pin", default=None)
@click.option("--theta", type=float, default=1.0, show_default=True)
@click.option("--tol", type=float, default=1e-8, show_default=True)
def env_normalize(graph, pin, theta, tol):
    """Total mass of the mixing measure by tensor quadrature."""
    g = _graph(graph)
    pin = _pin_default(g, pin)
    try:
        val, err = quadrature_expectation(MixingMeasure(g, pin, theta), tol=tol)
    except ReinforcedLoopsError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(json.dumps({"pin": pin, "mass": float(val), "error": float(err)}))


# ---------------------------------------------------------------- verify

@main.command("verify")
@click.argument("check_id")
@click.option("--graph", default=None, help="replace the check's default graph")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--replicas", type=int, default=None, help="override the check's replica count")
@click.option("--out", default=None, help="write the JSON report here")
def verify_cmd(check_id, graph, seed, replicas, out):
    """Run CHECK_ID (or 'all'); exit code 0 iff every requested check passes."""
    try:
        if check_id == "all":
            if graph is not None:
                raise click.UsageError("--graph applies to a single check")
            reports = run_all(seed, replicas)
        else:
            if check_id not in REGISTRY:
                raise click.UsageError(f"unknown check id {check_id!r}; known: {', '.join(REGISTRY)}")
            reports = [run_check(check_id, seed, replicas, graph)]
    except ReinforcedLoopsError as exc:
        raise click.ClickException(str(exc)) from None
    for r in reports:
        click.echo(r.line(), err=bool(out is None))
    text = reports_json(reports) if check_id == "all" else reports[0].to_json()
    _emit(text, out)
    sys.exit(0 if all(r.passed for r in reports) else 1)


if __name__ == "__main__":
    main()
