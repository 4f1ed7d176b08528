"""Displacement statistics and bounded enumeration of subgroups.

The displacement of a finite set A is the sum of the geodesic lengths
of its elements; the sets with displacement below any fixed bound are
finite, which is what makes the bounded enumeration meaningful.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

from .cayley import ball, geometry
from .cores import MetricCore, size
from .errors import BudgetExceeded, NotBased
from .stallings import subgroup_key
from .words import BACKEND_FREE, Letter, Presentation, Word, free_reduce


@dataclass(frozen=True)
class GeneratingTuple:
    words: Tuple[Word, ...]
    tau: int

    def to_json(self) -> dict:
        return {"words": [w.display() for w in self.words], "tau": self.tau}


def tau(p: Presentation, A: Sequence[Word]) -> int:
    """Displacement at the identity: sum of geodesic lengths."""
    geo = geometry(p)
    return sum(geo.length(w) for w in A)


@dataclass
class EnumerationReport:
    tuples: List[GeneratingTuple]
    dedup: str  # "folded-core" (exact) or "normal-form-tuple" (weaker)

    def to_json(self) -> dict:
        return {"dedup": self.dedup, "tuples": [t.to_json() for t in self.tuples]}

    def to_jsonl(self) -> List[dict]:
        """One record per tuple with its displacement and dedup class id."""
        return [
            {"class": i, "dedup": self.dedup, **t.to_json()}
            for i, t in enumerate(self.tuples)
        ]


def enumerate_bounded(p: Presentation, alpha: int, r: int, budget: int = 200000) -> EnumerationReport:
    """All r-tuples of nontrivial elements with displacement at most alpha,
    deduplicated: by folded-core isomorphism in the free backend (exact
    subgroup identity), by normal-form tuples otherwise."""
    if alpha < 0 or r < 1:
        raise ValueError("need alpha >= 0 and r >= 1")
    b = ball(p, alpha)
    elements = [w for w in b.words if len(w) > 0]
    if len(elements) ** r > budget:
        raise BudgetExceeded(f"{len(elements)}^{r} candidate tuples exceed the budget")
    geo = geometry(p)
    lengths = {w: geo.length(w) for w in elements}
    exact = p.backend == BACKEND_FREE
    seen = set()
    out: List[GeneratingTuple] = []
    for combo in itertools.product(elements, repeat=r):
        t = sum(lengths[w] for w in combo)
        if t > alpha:
            continue
        if exact:
            key = subgroup_key(list(combo), p.generators)
        else:
            key = tuple(p.canonical_key(w) for w in combo)
        if key in seen:
            continue
        seen.add(key)
        out.append(GeneratingTuple(tuple(combo), t))
    return EnumerationReport(out, "folded-core" if exact else "normal-form-tuple")


def basis_loops(core: MetricCore) -> List[Tuple[Word, int]]:
    """Loop words of the non-tree edges (tree path out, edge, tree path
    back) with the graph length of each loop before free reduction."""
    if core.basepoint is None:
        raise NotBased("spanning-tree bases need a based core")
    p = core.presentation
    parent: Dict[int, Tuple[int, int]] = {}
    seen = {core.basepoint}
    frontier = [core.basepoint]
    while frontier:
        nxt = []
        for v in frontier:
            # shortlex edge order makes the spanning tree canonical
            for eid, d in sorted(core.star()[v],
                                 key=lambda ed: (p.shortlex_key(core.edge_word(*ed)), ed)):
                e = core.edges[eid]
                w = e.head if d > 0 else e.tail
                if w not in seen:
                    seen.add(w)
                    parent[w] = (eid, d)
                    nxt.append(w)
        frontier = nxt

    def tree_path(v: int) -> Tuple[List[Letter], int]:
        letters: List[Letter] = []
        length = 0
        while v != core.basepoint:
            eid, d = parent[v]
            w = core.edge_word(eid, d)
            letters = list(w.letters) + letters
            length += core.edges[eid].length
            v = core.edges[eid].tail if d > 0 else core.edges[eid].head
        return letters, length

    tree_edges = {eid for eid, _ in parent.values()}
    loops = []
    for eid in sorted(core.edges):
        if eid in tree_edges:
            continue
        e = core.edges[eid]
        to_tail, len_tail = tree_path(e.tail)
        to_head, len_head = tree_path(e.head)
        word = free_reduce(Word(to_tail) * e.label * ~Word(to_head))
        loops.append((word, len_tail + e.length + len_head))
    return loops


def spanning_tree_basis(core: MetricCore) -> List[Word]:
    """One loop word per non-tree edge; the list length is the rank."""
    return [w for w, _ in basis_loops(core)]


def displacement_bound_check(core: MetricCore, K, C) -> bool:
    """tau(basis) <= 2 K r sigma + r C with the given constants."""
    K = Fraction(K)
    C = Fraction(C)
    basis = spanning_tree_basis(core)
    r = core.rank()
    value = Fraction(tau(core.presentation, basis))
    return value <= 2 * K * r * Fraction(size(core)) + r * C
