"""Folded subgroup graphs over a free group.

A graph is a based, generator-labeled directed multigraph; tracing a
reduced word from the basepoint decides membership once the graph is
folded.  Folding keeps a journal (one snapshot per elementary step) so
that a traced loop can be rewritten back to the defining generators,
which yields an exact expression of a member word as a product of the
generators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .errors import Disconnected, NotFolded, NotSubgroup, ValidationError
from .words import Letter, Word, free_reduce, free_reduce_letters

Edge = Tuple[int, str, int]  # (tail, generator, head); traversal against the arrow inverts


@dataclass
class FoldStep:
    kind: str  # "merge" or "dedup"
    kept: int
    gone: int
    edge_kept: int
    edge_gone: int
    edges_before: Dict[int, Edge]
    towards: int = 1  # orientation of the witness edges from the fold vertex


class StallingsGraph:
    """A based labeled graph; ``folded`` is maintained by the fold op."""

    def __init__(self, alphabet: Sequence[str], vertices: Set[int], edges: Dict[int, Edge],
                 base: int = 0, folded: bool = False):
        self.alphabet = tuple(alphabet)
        self.vertices = set(vertices)
        self.edges = dict(edges)
        self.base = base
        self.folded = folded
        self.journal: List[FoldStep] = []
        self.origins: Dict[int, Tuple[int, int, int]] = {}
        if base not in self.vertices:
            raise ValidationError("basepoint missing from vertex set")
        for eid, (t, g, h) in self.edges.items():
            if t not in self.vertices or h not in self.vertices:
                raise ValidationError(f"edge {eid} has endpoints outside the vertex set")
            if g not in self.alphabet:
                raise ValidationError(f"edge {eid} carries unknown label {g!r}")

    # -- basic structure -------------------------------------------------------

    def out_edges(self, v: int, gen: str) -> List[int]:
        return [eid for eid, (t, g, _) in self.edges.items() if t == v and g == gen]

    def in_edges(self, v: int, gen: str) -> List[int]:
        return [eid for eid, (_, g, h) in self.edges.items() if h == v and g == gen]

    def star(self) -> Dict[int, List[Tuple[int, int]]]:
        """vertex -> list of (edge id, direction); +1 leaves along the arrow."""
        out: Dict[int, List[Tuple[int, int]]] = {v: [] for v in self.vertices}
        for eid in sorted(self.edges):
            t, _, h = self.edges[eid]
            out[t].append((eid, 1))
            out[h].append((eid, -1))
        return out

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        seen = {self.base}
        stack = [self.base]
        star = self.star()
        while stack:
            v = stack.pop()
            for eid, d in star[v]:
                t, _, h = self.edges[eid]
                w = h if d > 0 else t
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == self.vertices

    def check_folded(self) -> bool:
        for v in self.vertices:
            for gen in self.alphabet:
                if len(self.out_edges(v, gen)) > 1 or len(self.in_edges(v, gen)) > 1:
                    return False
        return True

    def copy(self) -> "StallingsGraph":
        g = StallingsGraph(self.alphabet, self.vertices, self.edges, self.base, self.folded)
        g.origins = dict(self.origins)
        return g

    def rank(self) -> int:
        """First Betti number E - V + 1; requires connectivity."""
        if not self.is_connected():
            raise Disconnected("rank needs a connected graph")
        return len(self.edges) - len(self.vertices) + 1

    # -- tracing ---------------------------------------------------------------

    def _step(self, v: int, letter: Letter) -> Optional[int]:
        gen, sign = letter
        hits = self.out_edges(v, gen) if sign > 0 else self.in_edges(v, gen)
        if not hits:
            return None
        eid = hits[0]
        t, _, h = self.edges[eid]
        return h if sign > 0 else t

    def trace(self, w: Word, start: Optional[int] = None) -> Optional[int]:
        """Endpoint of the path spelling ``w`` from ``start``; None if the
        path leaves the graph.  Requires a folded graph."""
        if not self.folded:
            raise NotFolded("trace requires a folded graph")
        v = self.base if start is None else start
        for letter in free_reduce(w).letters:
            v = self._step(v, letter)
            if v is None:
                return None
        return v

    def trace_path(self, w: Word, start: Optional[int] = None) -> Optional[List[Tuple[int, int]]]:
        if not self.folded:
            raise NotFolded("trace requires a folded graph")
        v = self.base if start is None else start
        path: List[Tuple[int, int]] = []
        for gen, sign in w.letters:
            hits = self.out_edges(v, gen) if sign > 0 else self.in_edges(v, gen)
            if not hits:
                return None
            eid = hits[0]
            t, _, h = self.edges[eid]
            path.append((eid, sign))
            v = h if sign > 0 else t
        return path

    def membership(self, w: Word) -> bool:
        """True iff ``w`` traces a closed path at the basepoint."""
        return self.trace(w) == self.base

    # -- trees and bases ---------------------------------------------------------

    def spanning_tree(self) -> Dict[int, Tuple[int, int]]:
        """BFS tree from the basepoint: vertex -> (edge id, direction taken),
        deterministic via sorted edge ids.  Raises on disconnected graphs."""
        if not self.is_connected():
            raise Disconnected("spanning tree needs a connected graph")
        parent: Dict[int, Tuple[int, int]] = {}
        seen = {self.base}
        frontier = [self.base]
        star = self.star()
        while frontier:
            nxt: List[int] = []
            for v in frontier:
                for eid, d in star[v]:
                    t, _, h = self.edges[eid]
                    w = h if d > 0 else t
                    if w not in seen:
                        seen.add(w)
                        parent[w] = (eid, d)
                        nxt.append(w)
            frontier = nxt
        return parent

    def tree_word(self, v: int, parent: Dict[int, Tuple[int, int]]) -> Word:
        letters: List[Letter] = []
        while v != self.base:
            eid, d = parent[v]
            t, g, h = self.edges[eid]
            letters.append((g, d))
            v = t if d > 0 else h
        return Word(reversed(letters))

    def tree_edge_ids(self, parent: Dict[int, Tuple[int, int]]) -> Set[int]:
        return {eid for eid, _ in parent.values()}

    def basis(self) -> List[Word]:
        """Free basis of the fundamental group read off a spanning tree."""
        parent = self.spanning_tree()
        tree_edges = self.tree_edge_ids(parent)
        words = []
        for eid in sorted(self.edges):
            if eid in tree_edges:
                continue
            t, g, h = self.edges[eid]
            w = self.tree_word(t, parent) * Word([(g, 1)]) * ~self.tree_word(h, parent)
            words.append(free_reduce(w))
        return words

    def trim(self) -> "StallingsGraph":
        """Remove non-base valence-1 vertices iteratively."""
        vertices = set(self.vertices)
        edges = dict(self.edges)
        while True:
            degree = {v: 0 for v in vertices}
            for t, _, h in edges.values():
                degree[t] += 1
                degree[h] += 1
            dead = [v for v in vertices if degree[v] <= 1 and v != self.base]
            if not dead:
                break
            vertices.difference_update(dead)
            edges = {eid: e for eid, e in edges.items() if e[0] not in dead and e[2] not in dead}
        g = StallingsGraph(self.alphabet, vertices, edges, self.base, self.folded)
        return g

    # -- canonical form ------------------------------------------------------------

    def canonical_key(self):
        """Canonical description of a folded based graph; equal keys iff the
        graphs are isomorphic as based labeled graphs (hence iff they
        describe the same subgroup)."""
        if not self.folded:
            raise NotFolded("canonical form requires a folded graph")
        number = {self.base: 0}
        order = [self.base]
        i = 0
        while i < len(order):
            v = order[i]
            i += 1
            for gen in self.alphabet:
                for sign in (1, -1):
                    w = self._step(v, (gen, sign))
                    if w is not None and w not in number:
                        number[w] = len(number)
                        order.append(w)
        if len(number) != len(self.vertices):
            raise Disconnected("canonical form needs a connected graph")
        rows = sorted((number[t], g, number[h]) for t, g, h in self.edges.values())
        return (len(self.vertices), tuple(rows))

    # -- export ---------------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "basepoint": self.base,
            "vertices": sorted(self.vertices),
            "edges": [
                {"id": eid, "from": t, "to": h, "label": g}
                for eid, (t, g, h) in sorted(self.edges.items())
            ],
            "folded": self.folded,
        }

    @classmethod
    def from_json(cls, data: dict) -> "StallingsGraph":
        edges = {e["id"]: (e["from"], e["label"], e["to"]) for e in data["edges"]}
        return cls(tuple(data["alphabet"]), set(data["vertices"]), edges,
                   data["basepoint"], data.get("folded", False))

    def to_dot(self) -> str:
        lines = ["digraph stallings {", f'  {self.base} [shape=doublecircle];']
        for v in sorted(self.vertices):
            if v != self.base:
                lines.append(f"  {v} [shape=circle];")
        for eid, (t, g, h) in sorted(self.edges.items()):
            lines.append(f'  {t} -> {h} [label="{g}"];')
        lines.append("}")
        return "\n".join(lines)


def from_generators(gens: Sequence[Word], alphabet: Sequence[str]) -> StallingsGraph:
    """Wedge of subdivided loops at the basepoint, one letter per edge.
    Empty words are dropped with a warning."""
    vertices = {0}
    edges: Dict[int, Edge] = {}
    origins: Dict[int, Tuple[int, int, int]] = {}
    next_v, next_e = 1, 0
    petal = 0
    for w in gens:
        w = free_reduce(w)
        if len(w) == 0:
            warnings.warn("empty generator rejected and dropped", stacklevel=2)
            continue
        prev = 0
        for k, (g, s) in enumerate(w.letters):
            nxt = 0 if k == len(w) - 1 else next_v
            if nxt != 0:
                next_v += 1
            vertices.add(nxt)
            edges[next_e] = (prev, g, nxt) if s > 0 else (nxt, g, prev)
            origins[next_e] = (petal, k, s)
            next_e += 1
            prev = nxt
        petal += 1
    g = StallingsGraph(alphabet, vertices, edges, 0, folded=False)
    g.origins = origins
    g.folded = g.check_folded()
    return g


def fold(g: StallingsGraph) -> StallingsGraph:
    """Fold to completion; deterministic (lowest vertex id, then label
    order, drives each step).  The result carries a journal of steps."""
    out = g.copy()
    out.journal = []
    while True:
        step = _find_fold(out)
        if step is None:
            break
        _apply_fold(out, step)
    out.folded = True
    assert out.check_folded()
    return out


def _find_fold(g: StallingsGraph):
    for v in sorted(g.vertices):
        for gen in g.alphabet:
            for direction in (1, -1):
                hits = g.out_edges(v, gen) if direction > 0 else g.in_edges(v, gen)
                if len(hits) > 1:
                    hits = sorted(hits)
                    return (v, gen, direction, hits[0], hits[1])
    return None


def _apply_fold(g: StallingsGraph, found) -> None:
    v, gen, direction, e1, e2 = found
    t1, _, h1 = g.edges[e1]
    t2, _, h2 = g.edges[e2]
    u1, u2 = (h1, h2) if direction > 0 else (t1, t2)
    snapshot = dict(g.edges)
    if u1 == u2:
        g.journal.append(FoldStep("dedup", u1, u1, e1, e2, snapshot))
        del g.edges[e2]
        return
    kept, gone = (u1, u2) if u1 < u2 else (u2, u1)
    edge_kept, edge_gone = (e1, e2) if u1 < u2 else (e2, e1)
    g.journal.append(FoldStep("merge", kept, gone, edge_kept, edge_gone, snapshot, direction))
    g.vertices.discard(gone)
    for eid, (t, lab, h) in list(g.edges.items()):
        g.edges[eid] = (kept if t == gone else t, lab, kept if h == gone else h)
    # collapse parallel duplicates created by the identification
    seen: Dict[Edge, int] = {}
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e in seen:
            g.journal.append(FoldStep("dedup", e[0], e[0], seen[e], eid, dict(g.edges)))
            del g.edges[eid]
        else:
            seen[e] = eid


def membership(g: StallingsGraph, w: Word) -> bool:
    if not g.folded:
        raise NotFolded("membership requires a folded graph")
    return g.membership(free_reduce(w))


def rank(g: StallingsGraph) -> int:
    if not g.folded:
        raise NotFolded("rank is defined on folded graphs")
    return g.rank()


def subgroup_graph(gens: Sequence[Word], alphabet: Sequence[str]) -> StallingsGraph:
    return fold(from_generators(gens, alphabet))


def subgroup_key(gens: Sequence[Word], alphabet: Sequence[str]):
    """Canonical key identifying the subgroup generated by ``gens``."""
    return subgroup_graph(gens, alphabet).canonical_key()


# -- expressing members in the generators ----------------------------------------


def _cancel_backtracks(path: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    stack: List[Tuple[int, int]] = []
    for item in path:
        if stack and stack[-1][0] == item[0] and stack[-1][1] == -item[1]:
            stack.pop()
        else:
            stack.append(item)
    return stack


def _detour(step: FoldStep, src: int, dst: int) -> List[Tuple[int, int]]:
    """Path from src to dst through the folding witness pair; src and dst
    are the step's kept/gone vertices in some order.  Both witness edges
    leave the fold vertex with orientation ``step.towards`` (recorded at
    fold time: endpoint inspection is ambiguous for loops)."""
    ek, eg = step.edge_kept, step.edge_gone
    d = step.towards
    if src == step.gone and dst == step.kept:
        return [(eg, -d), (ek, d)]
    if src == step.kept and dst == step.gone:
        return [(ek, -d), (eg, d)]
    raise AssertionError("detour endpoints must be the folded pair")


def _rewind_path(journal: List[FoldStep], base: int, path: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    for step in reversed(journal):
        if step.kind == "dedup":
            continue
        fixed: List[Tuple[int, int]] = []
        cur = base
        for eid, d in path:
            t, _, h = step.edges_before[eid]
            start, end = (t, h) if d > 0 else (h, t)
            if start != cur:
                fixed.extend(_detour(step, cur, start))
            fixed.append((eid, d))
            cur = end
        if cur != base:
            fixed.extend(_detour(step, cur, base))
        path = _cancel_backtracks(fixed)
    return path


def express_in_generators(gens: Sequence[Word], alphabet: Sequence[str], w: Word) -> Optional[List[Tuple[int, int]]]:
    """Express ``w`` as a product of the given generators.

    Returns a list of (generator index, sign) whose product equals ``w``
    in the free group, or None when ``w`` is not in the subgroup.  The
    expression is exact but not necessarily shortest.
    """
    rose = from_generators(gens, alphabet)
    folded = fold(rose)
    target = free_reduce(w)
    path = folded.trace_path(target)
    if path is None or folded.trace(target) != folded.base:
        return None
    path = _rewind_path(folded.journal, folded.base, path)
    # read complete petals off the rose path
    expr: List[Tuple[int, int]] = []
    petal_lengths = {}
    for petal, pos, _ in rose.origins.values():
        petal_lengths[petal] = max(petal_lengths.get(petal, 0), pos + 1)
    i = 0
    while i < len(path):
        eid, d = path[i]
        petal, pos, s = rose.origins[eid]
        n = petal_lengths[petal]
        forward = d == s
        if forward:
            if pos != 0:
                raise AssertionError("petal decomposition out of phase")
            for k in range(n):
                eid_k, d_k = path[i + k]
                p_k, pos_k, s_k = rose.origins[eid_k]
                if not (p_k == petal and pos_k == k and d_k == s_k):
                    raise AssertionError("petal decomposition mismatch")
            expr.append((petal, 1))
        else:
            if pos != n - 1:
                raise AssertionError("petal decomposition out of phase")
            for k in range(n):
                eid_k, d_k = path[i + k]
                p_k, pos_k, s_k = rose.origins[eid_k]
                if not (p_k == petal and pos_k == n - 1 - k and d_k == -s_k):
                    raise AssertionError("petal decomposition mismatch")
            expr.append((petal, -1))
        i += n
    # safety: the expression must evaluate back to w
    check: List[Letter] = []
    for idx, sign in expr:
        g = gens[idx] if sign > 0 else ~gens[idx]
        check.extend(g.letters)
    if free_reduce_letters(tuple(check)) != target:
        raise AssertionError("expression failed to evaluate back to the input")
    out: List[Tuple[int, int]] = []
    for idx, sign in expr:
        if out and out[-1][0] == idx and out[-1][1] == -sign:
            out.pop()
        else:
            out.append((idx, sign))
    return out


# -- morphisms between subgroup graphs --------------------------------------------


@dataclass
class CoreMorphism:
    """The label- and basepoint-preserving morphism between folded graphs."""

    source: StallingsGraph
    target: StallingsGraph
    vertex_map: Dict[int, int]
    edge_map: Dict[int, int]

    def is_surjective(self) -> bool:
        return set(self.edge_map.values()) == set(self.target.edges)

    def image_subgraph(self) -> StallingsGraph:
        covered = set(self.edge_map.values())
        verts = {self.target.base}
        edges = {}
        for eid in covered:
            t, g, h = self.target.edges[eid]
            verts.update((t, h))
            edges[eid] = (t, g, h)
        return StallingsGraph(self.target.alphabet, verts, edges, self.target.base, folded=True)

    def free_factor_witness(self) -> Tuple[List[Word], List[Word]]:
        """Basis of the proper free factor carried by the image subgraph,
        plus a complementary basis extending it to a basis of the target's
        group (spanning tree of the target extending one of the image)."""
        image = self.image_subgraph()
        image_parent = image.spanning_tree()
        image_tree = image.tree_edge_ids(image_parent)
        # extend the image tree to a spanning tree of the target
        parent: Dict[int, Tuple[int, int]] = dict(image_parent)
        seen = set(image.vertices)
        frontier = sorted(seen)
        star = self.target.star()
        while frontier:
            nxt = []
            for v in frontier:
                for eid, d in star[v]:
                    t, _, h = self.target.edges[eid]
                    w = h if d > 0 else t
                    if w not in seen:
                        seen.add(w)
                        parent[w] = (eid, d)
                        nxt.append(w)
            frontier = nxt
        if seen != self.target.vertices:
            raise Disconnected("target graph is disconnected")
        tree = {eid for eid, _ in parent.values()}
        factor: List[Word] = []
        complement: List[Word] = []
        for eid in sorted(self.target.edges):
            if eid in tree:
                continue
            t, g, h = self.target.edges[eid]
            w = self.target.tree_word(t, parent) * Word([(g, 1)]) * ~self.target.tree_word(h, parent)
            if eid in image.edges:
                factor.append(free_reduce(w))
            else:
                complement.append(free_reduce(w))
        return factor, complement


def core_morphism(g1: StallingsGraph, g2: StallingsGraph) -> CoreMorphism:
    """The unique label-preserving based morphism g1 -> g2; exists iff
    pi_1(g1) <= pi_1(g2) (checked on a basis, with a witness on failure)."""
    if not (g1.folded and g2.folded):
        raise NotFolded("core morphisms are defined between folded graphs")
    for b in g1.basis():
        if not g2.membership(b):
            raise NotSubgroup(f"basis element {b.display()} fails membership", witness=b)
    vertex_map: Dict[int, int] = {g1.base: g2.base}
    edge_map: Dict[int, int] = {}
    parent = g1.spanning_tree()
    order = sorted(g1.vertices, key=lambda v: len(g1.tree_word(v, parent)))
    for v in order:
        if v == g1.base:
            continue
        eid, d = parent[v]
        t, g, h = g1.edges[eid]
        src = t if d > 0 else h
        img = g2._step(vertex_map[src], (g, d))
        if img is None:
            # cannot happen when every g1 vertex lies on a reduced base loop
            raise ValidationError(
                f"source graph is not core-covered: vertex {v} has no image"
            )
        vertex_map[v] = img
    for eid in sorted(g1.edges):
        t, g, h = g1.edges[eid]
        hits = g2.out_edges(vertex_map[t], g)
        if not hits or g2.edges[hits[0]][2] != vertex_map[h]:
            raise ValidationError(f"source graph is not core-covered: edge {eid} has no image")
        edge_map[eid] = hits[0]
    return CoreMorphism(g1, g2, vertex_map, edge_map)


def is_surjective(m: CoreMorphism) -> bool:
    return m.is_surjective()
