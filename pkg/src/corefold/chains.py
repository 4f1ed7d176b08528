"""Ascending-chain experiments.

Three strands: the strictly ascending HNN chain that motivates the
quasiconvexity hypothesis, the free-group stabilization check driven by
folded cores and their morphisms, and the chain cleanup that replaces a
step by the free factor carried by a non-surjective morphism image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .errors import NotNested, NotSubgroup, ValidationError
from .stallings import StallingsGraph, core_morphism, subgroup_graph
from .words import (
    BACKEND_FREE,
    BACKEND_HNN,
    Presentation,
    Word,
    hnn_example_presentation,
)


@dataclass
class ChainRecord:
    tuples: List[List[Word]]
    strict: List[bool]
    surjective: List[bool]
    edge_counts: List[int]
    ranks: List[int]
    stabilization_index: int  # 1-based first index from which cores agree
    stabilized_before_end: bool

    def to_json(self) -> dict:
        return {
            "tuples": [[w.display() for w in t] for t in self.tuples],
            "strict": self.strict,
            "surjective": self.surjective,
            "edge_counts": self.edge_counts,
            "ranks": self.ranks,
            "stabilization_index": self.stabilization_index,
            "stabilized_before_end": self.stabilized_before_end,
        }

    @classmethod
    def from_json(cls, p: Presentation, data: dict) -> "ChainRecord":
        return cls(
            tuples=[[p.word(w) for w in t] for t in data["tuples"]],
            strict=list(data["strict"]),
            surjective=list(data["surjective"]),
            edge_counts=list(data["edge_counts"]),
            ranks=list(data["ranks"]),
            stabilization_index=data["stabilization_index"],
            stabilized_before_end=data["stabilized_before_end"],
        )


def hnn_chain(n: int, p: Optional[Presentation] = None) -> List[List[Word]]:
    """Generating tuples for H_i = t^-i <a,b> t^i, i = 0..n, as normal
    forms in the ascending HNN example."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    if p is None:
        p = hnn_example_presentation()
    t = p.stable_letter
    out = []
    for i in range(n + 1):
        tuple_i = []
        for g in p.base_generators:
            w = Word([(t, -1)] * i + [(g, 1)] + [(t, 1)] * i)
            tuple_i.append(p.normal_form(w))
        out.append(tuple_i)
    return out


def _fold_chain(p: Presentation, chain: Sequence[Sequence[Word]]) -> List[StallingsGraph]:
    return [subgroup_graph(list(t), p.generators) for t in chain]


def _check_nested(graphs: List[StallingsGraph], chain) -> None:
    for i in range(len(graphs) - 1):
        for w in chain[i]:
            if not graphs[i + 1].membership(w):
                raise NotNested(
                    f"step {i}: generator {w.display()} leaves the next subgroup", witness=w
                )


def _check_constant_rank(graphs: List[StallingsGraph]) -> None:
    ranks = [g.rank() for g in graphs]
    if len(set(ranks)) > 1:
        raise NotNested(f"rank guard: chain ranks {ranks} are not constant")


def verify_strict(p: Presentation, chain: Sequence[Sequence[Word]]) -> List[bool]:
    """Per step, whether the next subgroup properly contains the current
    one.  The HNN backend routes through the free base: conjugating a
    step by the stable letter reduces strictness to Stallings membership
    against the endomorphism image."""
    chain = [list(t) for t in chain]
    if len(chain) < 2:
        return []
    if p.backend == BACKEND_HNN:
        return _verify_strict_hnn(p, chain)
    if p.backend != BACKEND_FREE:
        raise ValidationError("strictness checks support the free and hnn backends")
    graphs = _fold_chain(p, chain)
    _check_constant_rank(graphs)
    _check_nested(graphs, chain)
    out = []
    for i in range(len(chain) - 1):
        out.append(any(not graphs[i].membership(w) for w in chain[i + 1]))
    return out


def _hnn_split(p: Presentation, w: Word) -> Tuple[int, Word]:
    """Interpret a normal form t^-i u t^i; rejects other shapes."""
    t = p.stable_letter
    letters = list(p.normal_form(w).letters)
    i = 0
    while letters and letters[0] == (t, -1):
        i += 1
        letters.pop(0)
    j = 0
    while letters and letters[-1] == (t, 1):
        j += 1
        letters.pop()
    if i != j or any(g == t for g, _ in letters):
        raise NotNested(f"{w.display()} is not of the conjugated-base form", witness=w)
    return i, Word(letters)


def _verify_strict_hnn(p: Presentation, chain: List[List[Word]]) -> List[bool]:
    base = Presentation(p.base_generators)
    phi = p.endomorphism
    levels: List[Tuple[int, List[Word]]] = []
    for t in chain:
        splits = [_hnn_split(p, w) for w in t]
        depths = {i for i, _ in splits}
        if len(depths) != 1:
            raise NotNested("mixed conjugation depths within one tuple")
        levels.append((depths.pop(), [u for _, u in splits]))
    sizes = {len(us) for _, us in levels}
    if len(sizes) != 1:
        raise NotNested("rank guard: tuple sizes differ")
    out = []
    for (i, us), (i2, vs) in zip(levels, levels[1:]):
        if i2 != i + 1:
            raise NotNested("conjugation depth must increase by one per step")
        # t^-i <us> t^i <= t^-(i+1) <vs> t^(i+1)  iff  phi(us) <= <vs>
        target = subgroup_graph(vs, base.generators)
        for u in us:
            if not target.membership(phi.apply(u)):
                raise NotNested(f"step is not nested at {u.display()}", witness=u)
        image = subgroup_graph([phi.apply(u) for u in us], base.generators)
        out.append(any(not image.membership(v) for v in vs))
    return out


def run_chain_free(p: Presentation, chain: Sequence[Sequence[Word]]) -> ChainRecord:
    """Fold each tuple, build consecutive core morphisms, record
    surjectivity and edge counts, and report the first index from which
    the cores are isomorphic."""
    if p.backend != BACKEND_FREE:
        raise ValidationError("chain runs are exact in the free backend only")
    chain = [list(t) for t in chain]
    if not chain:
        raise ValidationError("empty chain")
    sizes = {len(t) for t in chain}
    if len(sizes) != 1:
        raise NotNested("rank guard: tuples must share one cardinality")
    graphs = _fold_chain(p, chain)
    _check_nested(graphs, chain)
    surjective = []
    for g1, g2 in zip(graphs, graphs[1:]):
        try:
            m = core_morphism(g1, g2)
        except NotSubgroup as exc:
            raise NotNested(str(exc), witness=exc.witness) from exc
        surjective.append(m.is_surjective())
    edge_counts = [len(g.edges) for g in graphs]
    if all(surjective):
        for a, b in zip(edge_counts, edge_counts[1:]):
            if b > a:
                raise ValidationError("edge counts increased along a surjective chain")
    keys = [g.canonical_key() for g in graphs]
    idx = len(keys)
    for i in range(len(keys) - 1, -1, -1):
        if keys[i] == keys[-1]:
            idx = i + 1
        else:
            break
    strict = [any(not graphs[i].membership(w) for w in chain[i + 1]) for i in range(len(chain) - 1)]
    return ChainRecord(
        tuples=chain,
        strict=strict,
        surjective=surjective,
        edge_counts=edge_counts,
        ranks=[g.rank() for g in graphs],
        stabilization_index=idx,
        stabilized_before_end=idx < len(chain) or len(chain) == 1,
    )


@dataclass
class ReduceResult:
    chain: List[List[Word]]
    rank_history: List[List[int]]
    replacements: List[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "chain": [[w.display() for w in t] for t in self.chain],
            "rank_history": self.rank_history,
            "replacements": self.replacements,
        }


def reduce_chain(p: Presentation, chain: Sequence[Sequence[Word]]) -> ReduceResult:
    """Replace, at every non-surjective step, the next subgroup by the
    proper free factor carried by the morphism image; iterate until all
    consecutive morphisms are surjective.  Ranks drop at every
    replacement, so this terminates."""
    if p.backend != BACKEND_FREE:
        raise ValidationError("chain reduction is exact in the free backend only")
    current = [list(t) for t in chain]
    history = []
    replacements: List[int] = []
    while True:
        graphs = _fold_chain(p, current)
        for i in range(len(graphs) - 1):
            for w in current[i]:
                if not graphs[i + 1].membership(w):
                    raise NotNested(
                        f"step {i}: generator {w.display()} leaves the next subgroup", witness=w
                    )
        history.append([g.rank() for g in graphs])
        changed = False
        for i in range(len(graphs) - 1):
            m = core_morphism(graphs[i], graphs[i + 1])
            if not m.is_surjective():
                image = m.image_subgraph()
                new_rank = image.rank()
                if new_rank >= graphs[i + 1].rank():
                    raise ValidationError("image factor failed to drop the rank")
                current[i + 1] = image.basis()
                replacements.append(i + 1)
                changed = True
                break
        if not changed:
            # pad tuples with repeated generators so the reduced chain keeps
            # one cardinality (the subgroups are untouched); replaced steps
            # have fewer basis elements than the original tuples
            width = max(len(t) for t in current)
            padded = [t + [t[0]] * (width - len(t)) if t else t for t in current]
            if any(not t for t in padded):
                raise ValidationError("reduction produced a trivial subgroup")
            return ReduceResult(padded, history, replacements)
