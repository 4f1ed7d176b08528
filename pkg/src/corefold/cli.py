"""Command-line front end.

Every subcommand reads a presentation file (``gens:``, ``backend:``,
``rel:`` lines) and words in the shared grammar (apostrophe marks the
inverse).  Output is deterministic for a fixed seed; JSON output sorts
its keys.  Exit codes: 0 success, 2 validation error, 3 insufficient
horizon, 4 budget exceeded.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from functools import wraps
from typing import List, Optional

import click

from . import cayley, chains, coremaps, cores, displacement, stallings, words as words_mod
from .errors import CorefoldError
from .words import Presentation, Word, load_presentation


@dataclass
class RunConfig:
    seed: int = 0
    budget: Optional[int] = None
    fmt: str = "table"
    output: Optional[str] = None

    def __post_init__(self):
        if self.budget is not None and self.budget <= 0:
            raise click.UsageError("budget must be positive")


def _emit(cfg: RunConfig, payload, table_lines: List[str], dot: Optional[str] = None) -> None:
    if cfg.fmt == "json":
        text = json.dumps(payload, sort_keys=True, indent=2)
    elif cfg.fmt == "dot":
        if dot is None:
            raise click.UsageError("this subcommand has no DOT form")
        text = dot
    else:
        text = "\n".join(table_lines)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


def _handle_errors(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CorefoldError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _load(path: str, budget: Optional[int]) -> Presentation:
    p = load_presentation(path)
    if budget is not None:
        cayley.geometry(p).budget = budget
    return p


def _words(p: Presentation, text: str) -> List[Word]:
    return [p.word(part) for part in text.split(",") if part.strip()]


def _chain(p: Presentation, text: str) -> List[List[Word]]:
    return [_words(p, part) for part in text.split(";") if part.strip()]


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed (outputs are deterministic given the seed).")
@click.option("--budget", type=int, default=None, help="Vertex/size cap override.")
@click.option("--format", "fmt", type=click.Choice(["json", "dot", "table"]), default="table", show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None, help="Write output to a file.")
@click.pass_context
def main(ctx, seed, budget, fmt, output):
    """Metric cores, foldings, and chain experiments in hyperbolic groups."""
    ctx.obj = RunConfig(seed=seed, budget=budget, fmt=fmt, output=output)


# -- presentations ------------------------------------------------------------------


@main.group()
def present():
    """Presentation file utilities."""


@present.command("check")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--lam", default="1/6", show_default=True, help="Small-cancellation parameter.")
@click.pass_obj
@_handle_errors
def present_check(cfg: RunConfig, path, lam):
    """Parse a presentation; validate C'(lam) for the dehn backend."""
    p = _load(path, cfg.budget)
    payload = {
        "generators": list(p.generators),
        "backend": p.backend,
        "relators": [r.display() for r in p.relators],
    }
    lines = [f"backend: {p.backend}", f"generators: {' '.join(p.generators)}"]
    if p.backend == "dehn":
        ok = words_mod.check_small_cancellation(p, Fraction(lam))
        payload["small_cancellation"] = ok
        lines.append(f"C'({lam}): {ok}")
    _emit(cfg, payload, lines)


# -- cayley geometry ----------------------------------------------------------------


@main.command()
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--radius", type=int, required=True)
@click.option("--distances", is_flag=True, default=False)
@click.pass_obj
@_handle_errors
def ball(cfg: RunConfig, path, radius, distances):
    """Vertices and edges of the radius ball around the identity."""
    p = _load(path, cfg.budget)
    b = cayley.ball(p, radius)
    payload = b.to_json(with_distances=distances)
    lines = [f"vertices: {len(b)}", f"edges: {len(payload['edges'])}"]
    _emit(cfg, payload, lines, dot=b.to_dot())


@main.command()
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--radius", type=int, required=True)
@click.pass_obj
@_handle_errors
def delta(cfg: RunConfig, path, radius):
    """Exact four-point hyperbolicity constant of the ball."""
    p = _load(path, cfg.budget)
    value = cayley.estimate_delta(cayley.ball(p, radius))
    _emit(cfg, {"radius": radius, "delta": str(value)}, [f"{value}"])


# -- stallings graphs ----------------------------------------------------------------


@main.group("stallings")
def stallings_group():
    """Classical folded subgroup graphs (free backend)."""


def _folded(p: Presentation, gens: str) -> stallings.StallingsGraph:
    return stallings.fold(stallings.from_generators(_words(p, gens), p.generators))


@stallings_group.command("fold")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.pass_obj
@_handle_errors
def stallings_fold(cfg: RunConfig, path, gens):
    p = _load(path, cfg.budget)
    g = _folded(p, gens)
    payload = g.to_json()
    lines = [f"vertices: {len(g.vertices)}", f"edges: {len(g.edges)}", f"rank: {g.rank()}"]
    _emit(cfg, payload, lines, dot=g.to_dot())


@stallings_group.command("member")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.option("--word", "word_text", required=True)
@click.pass_obj
@_handle_errors
def stallings_member(cfg: RunConfig, path, gens, word_text):
    p = _load(path, cfg.budget)
    g = _folded(p, gens)
    ok = g.membership(p.word(word_text))
    _emit(cfg, {"member": ok}, [f"member: {ok}"])


@stallings_group.command("rank")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.pass_obj
@_handle_errors
def stallings_rank(cfg: RunConfig, path, gens):
    p = _load(path, cfg.budget)
    g = _folded(p, gens)
    _emit(cfg, {"rank": g.rank()}, [f"rank: {g.rank()}"])


# -- metric cores --------------------------------------------------------------------


@main.group("core")
def core_group():
    """Metric cores and folding moves."""


@core_group.command("build")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.pass_obj
@_handle_errors
def core_build(cfg: RunConfig, path, gens):
    p = _load(path, cfg.budget)
    core = cores.core_from_generators(p, _words(p, gens))
    payload = core.to_json()
    payload["sigma"] = cores.size(core)
    _emit(cfg, payload, [f"sigma: {cores.size(core)}"], dot=core.to_dot())


@core_group.command("fold")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.option("--depth", type=int, default=cores.DEFAULT_DEPTH, show_default=True)
@click.option("--radius", type=int, default=None)
@click.pass_obj
@_handle_errors
def core_fold(cfg: RunConfig, path, gens, depth, radius):
    p = _load(path, cfg.budget)
    core = cores.core_from_generators(p, _words(p, gens))
    folded, log = cores.fold_to_minimal(core, depth=depth, radius=radius)
    payload = folded.to_json()
    payload["sigma"] = cores.size(folded)
    payload["log"] = log.to_json()
    lines = [
        f"sigma: {cores.size(folded)}",
        f"moves: {len(log.moves)}",
        f"horizon_bound: {log.horizon_bound}",
    ]
    _emit(cfg, payload, lines, dot=folded.to_dot())


@core_group.command("measure")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.option("--radius", type=int, required=True)
@click.option("--minimal/--raw", default=True, show_default=True, help="Fold before measuring.")
@click.pass_obj
@_handle_errors
def core_measure(cfg: RunConfig, path, gens, radius, minimal):
    p = _load(path, cfg.budget)
    core = cores.core_from_generators(p, _words(p, gens))
    if minimal:
        core, _ = cores.fold_to_minimal(core)
    est = cores.measure_qi(core, radius)
    _emit(cfg, est.to_json(), [f"K: {est.K}", f"C: {est.C}"])


@core_group.command("minimal-check")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--gens", required=True)
@click.option("--edge", type=int, required=True)
@click.option("--depth", type=int, default=cores.DEFAULT_DEPTH, show_default=True)
@click.pass_obj
@_handle_errors
def core_minimal_check(cfg: RunConfig, path, gens, edge, depth):
    p = _load(path, cfg.budget)
    core = cores.core_from_generators(p, _words(p, gens))
    ok = cores.check_minimal_edge_shortest(core, edge, depth=depth)
    _emit(cfg, {"edge": edge, "shortest": ok}, [f"shortest: {ok}"])


@core_group.command("enumerate")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--edges", "n_edges", type=int, required=True)
@click.option("--max-len", "max_len", type=int, required=True)
@click.option("--radius", type=int, required=True)
@click.pass_obj
@_handle_errors
def core_enumerate(cfg: RunConfig, path, n_edges, max_len, radius):
    p = _load(path, cfg.budget)
    found = cores.enumerate_small_cores(p, n_edges, max_len, radius)
    payload = {"count": len(found), "cores": [c.to_json() for c in found]}
    _emit(cfg, payload, [f"count: {len(found)}"])


# -- core maps -----------------------------------------------------------------------


@main.group("map")
def map_group():
    """Maps between cores of nested subgroups."""


def _build_map(p: Presentation, source: str, target: str, radius: int) -> coremaps.CoreMap:
    c1, _ = cores.fold_to_minimal(cores.core_from_generators(p, _words(p, source)))
    c2, _ = cores.fold_to_minimal(cores.core_from_generators(p, _words(p, target)))
    return coremaps.build_core_map(c1, c2, radius)


@map_group.command("build")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--source", required=True)
@click.option("--target", required=True)
@click.option("--radius", type=int, default=4, show_default=True)
@click.pass_obj
@_handle_errors
def map_build(cfg: RunConfig, path, source, target, radius):
    p = _load(path, cfg.budget)
    m = _build_map(p, source, target, radius)
    payload = m.to_json()
    payload["surjective"] = coremaps.map_is_surjective(m)
    _emit(cfg, payload, [f"D: {m.D}", f"surjective: {payload['surjective']}"])


@map_group.command("measure")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--source", required=True)
@click.option("--target", required=True)
@click.option("--radius", type=int, default=4, show_default=True)
@click.pass_obj
@_handle_errors
def map_measure(cfg: RunConfig, path, source, target, radius):
    p = _load(path, cfg.budget)
    m = _build_map(p, source, target, radius)
    meas = coremaps.measure_map_qi(m, radius)
    lines = [
        f"empirical: ({meas.empirical.K}, {meas.empirical.C})",
        f"predicted: ({meas.K_pred}, {meas.C_pred})",
        f"within predicted: {meas.within_predicted}",
    ]
    _emit(cfg, meas.to_json(), lines)


@map_group.command("size-bound")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--source", required=True)
@click.option("--target", required=True)
@click.option("--radius", type=int, default=4, show_default=True)
@click.pass_obj
@_handle_errors
def map_size_bound(cfg: RunConfig, path, source, target, radius):
    p = _load(path, cfg.budget)
    m = _build_map(p, source, target, radius)
    ok = coremaps.size_bound_check(m)
    _emit(cfg, {"size_bound": ok}, [f"size bound: {ok}"])


# -- displacement --------------------------------------------------------------------


@main.command("tau")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--words", "words_text", required=True)
@click.pass_obj
@_handle_errors
def tau_cmd(cfg: RunConfig, path, words_text):
    """Displacement of a finite set at the identity."""
    p = _load(path, cfg.budget)
    value = displacement.tau(p, _words(p, words_text))
    _emit(cfg, {"tau": value}, [f"tau: {value}"])


@main.command("enumerate-subgroups")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--alpha", type=int, required=True)
@click.option("--rank", "r", type=int, required=True)
@click.pass_obj
@_handle_errors
def enumerate_subgroups(cfg: RunConfig, path, alpha, r):
    """Generating tuples with displacement at most alpha, deduplicated.
    JSON output is one record per line with the dedup class id."""
    p = _load(path, cfg.budget)
    report = displacement.enumerate_bounded(p, alpha, r)
    lines = [f"dedup: {report.dedup}", f"count: {len(report.tuples)}"]
    lines += [
        f"tau={t.tau}  " + ", ".join(w.display() for w in t.words) for t in report.tuples
    ]
    if cfg.fmt == "json":
        text = "\n".join(json.dumps(row, sort_keys=True) for row in report.to_jsonl())
        if cfg.output:
            with open(cfg.output, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            click.echo(text)
        return
    _emit(cfg, report.to_json(), lines)


# -- chains --------------------------------------------------------------------------


@main.group("chain")
def chain_group():
    """Ascending-chain experiments."""


@chain_group.command("hnn")
@click.option("--steps", type=int, required=True)
@click.option("--verify-strict", "verify", is_flag=True, default=False)
@click.pass_obj
@_handle_errors
def chain_hnn(cfg: RunConfig, steps, verify):
    """The conjugate chain in the ascending HNN example."""
    p = words_mod.hnn_example_presentation()
    chain = chains.hnn_chain(steps)
    payload = {"chain": [[w.display() for w in t] for t in chain]}
    lines = [", ".join(w.display() for w in t) for t in chain]
    if verify:
        flags = chains.verify_strict(p, chains.hnn_chain(steps + 1))
        payload["strict"] = flags
        lines = [f"strict: {str(flag).lower()}" for flag in flags]
    _emit(cfg, payload, lines)


@chain_group.command("run")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--chain", "chain_text", required=True, help="Tuples separated by ';', words by ','.")
@click.pass_obj
@_handle_errors
def chain_run(cfg: RunConfig, path, chain_text):
    p = _load(path, cfg.budget)
    record = chains.run_chain_free(p, _chain(p, chain_text))
    lines = [
        f"edge counts: {record.edge_counts}",
        f"surjective: {record.surjective}",
        f"stabilizes at index: {record.stabilization_index}",
    ]
    _emit(cfg, record.to_json(), lines)


@chain_group.command("reduce")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--chain", "chain_text", required=True)
@click.pass_obj
@_handle_errors
def chain_reduce(cfg: RunConfig, path, chain_text):
    p = _load(path, cfg.budget)
    result = chains.reduce_chain(p, _chain(p, chain_text))
    lines = [
        "chain: " + " ; ".join(",".join(w.display() for w in t) for t in result.chain),
        f"rank history: {result.rank_history}",
    ]
    _emit(cfg, result.to_json(), lines)


@chain_group.command("verify-strict")
@click.option("--presentation", "path", required=True, type=click.Path(exists=True))
@click.option("--chain", "chain_text", required=True)
@click.pass_obj
@_handle_errors
def chain_verify_strict(cfg: RunConfig, path, chain_text):
    p = _load(path, cfg.budget)
    flags = chains.verify_strict(p, _chain(p, chain_text))
    _emit(cfg, {"strict": flags}, [f"strict: {str(f).lower()}" for f in flags])


if __name__ == "__main__":
    main()
