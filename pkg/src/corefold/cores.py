"""Metric cores immersed in a Cayley graph, and their folding moves.

A core is a finite connected graph whose edges carry group-element
labels realized by geodesic words; developing the labels along paths of
the universal cover gives the immersion into the Cayley graph.  Vertex
anchors record the development of one chosen fundamental domain (a
breadth-first spanning tree), so anchors agree with labels along tree
edges and differ by subgroup holonomies across the rest.

Every constructed edge is subdivided at the integer points of its label
geodesic, so improvement searches can treat interior points as
vertices.  Edge lengths are therefore positive integers and the size of
a core is its total edge length.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .cayley import QiEstimate, geometry
from .errors import (
    BudgetExceeded,
    MoveInvalid,
    NotBased,
    RadiusInsufficient,
    TrivialGenerator,
    ValidationError,
)
from .words import BACKEND_FREE, Letter, Presentation, Word, free_reduce

DEFAULT_DEPTH = 4
DEFAULT_MOVE_BUDGET = 10000
DEFAULT_NODE_BUDGET = 200000


@dataclass(frozen=True)
class CoreEdge:
    eid: int
    tail: int
    head: int
    label: Word

    @property
    def length(self) -> int:
        return len(self.label)


class MetricCore:
    """Immutable by convention; moves and edits return new cores."""

    def __init__(self, p: Presentation, anchors: Dict[int, Word], edges: Dict[int, CoreEdge],
                 basepoint: Optional[int] = None):
        self.presentation = p
        self.anchors = dict(anchors)
        self.edges = dict(edges)
        self.basepoint = basepoint
        self._star: Optional[Dict[int, List[Tuple[int, int]]]] = None
        for e in self.edges.values():
            if len(e.label) == 0:
                raise ValidationError(f"edge {e.eid} has a trivial label")
            if e.tail not in self.anchors or e.head not in self.anchors:
                raise ValidationError(f"edge {e.eid} has unknown endpoints")
        if basepoint is not None and basepoint not in self.anchors:
            raise ValidationError("basepoint is not a vertex")
        if self.anchors and not self._connected():
            raise ValidationError("core must be connected")

    # -- structure ---------------------------------------------------------------

    @property
    def vertices(self) -> List[int]:
        return sorted(self.anchors)

    def star(self) -> Dict[int, List[Tuple[int, int]]]:
        """vertex -> [(edge id, +1 out along the arrow / -1 against it)]."""
        if self._star is None:
            star: Dict[int, List[Tuple[int, int]]] = {v: [] for v in self.anchors}
            for eid in sorted(self.edges):
                e = self.edges[eid]
                star[e.tail].append((eid, 1))
                star[e.head].append((eid, -1))
            self._star = star
        return self._star

    def _connected(self) -> bool:
        start = next(iter(self.anchors))
        seen = {start}
        stack = [start]
        star = self.star()
        while stack:
            v = stack.pop()
            for eid, d in star[v]:
                e = self.edges[eid]
                w = e.head if d > 0 else e.tail
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == set(self.anchors)

    def rank(self) -> int:
        return len(self.edges) - len(self.anchors) + 1

    def other_end(self, eid: int, v: int, direction: int) -> int:
        e = self.edges[eid]
        return e.head if direction > 0 else e.tail

    def edge_word(self, eid: int, direction: int) -> Word:
        e = self.edges[eid]
        return e.label if direction > 0 else ~e.label

    def is_separating(self, eid: int) -> bool:
        e = self.edges[eid]
        seen = {e.tail}
        stack = [e.tail]
        while stack:
            v = stack.pop()
            for fid, d in self.star()[v]:
                if fid == eid:
                    continue
                f = self.edges[fid]
                w = f.head if d > 0 else f.tail
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return e.head not in seen

    def immersion_violations(self) -> List[Tuple[int, Letter, Tuple[int, int], Tuple[int, int]]]:
        """Pairs of distinct departures from a vertex whose label geodesics
        start with the same letter; reported, never silently accepted."""
        out = []
        for v in self.vertices:
            first: Dict[Letter, Tuple[int, int]] = {}
            for eid, d in self.star()[v]:
                w = self.edge_word(eid, d)
                letter = w.letters[0]
                if letter in first:
                    out.append((v, letter, first[letter], (eid, d)))
                else:
                    first[letter] = (eid, d)
        return out

    # -- serialization -------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "vertices": [{"id": v, "anchor": self.anchors[v].display()} for v in self.vertices],
            "edges": [
                {
                    "id": e.eid,
                    "from": e.tail,
                    "to": e.head,
                    "label": e.label.display(),
                    "length": e.length,
                }
                for _, e in sorted(self.edges.items())
            ],
            "basepoint": self.basepoint,
        }

    @classmethod
    def from_json(cls, p: Presentation, data: dict) -> "MetricCore":
        anchors = {v["id"]: p.word(v["anchor"]) for v in data["vertices"]}
        edges = {
            e["id"]: CoreEdge(e["id"], e["from"], e["to"], p.word(e["label"]))
            for e in data["edges"]
        }
        return cls(p, anchors, edges, data.get("basepoint"))

    def to_dot(self) -> str:
        lines = ["digraph core {"]
        for v in self.vertices:
            shape = "doublecircle" if v == self.basepoint else "circle"
            lines.append(f'  {v} [shape={shape}, label="{v}:{self.anchors[v].display()}"];')
        for _, e in sorted(self.edges.items()):
            lines.append(f'  {e.tail} -> {e.head} [label="{e.label.display()} ({e.length})"];')
        lines.append("}")
        return "\n".join(lines)

    def canonical_key(self):
        """Isomorphism key ignoring anchors, vertex names, and edge
        orientations (labels invert when an edge flips)."""
        verts = self.vertices
        best = None
        for perm in itertools.permutations(range(len(verts))):
            relabel = {v: perm[i] for i, v in enumerate(verts)}
            rows = []
            for e in self.edges.values():
                a = (relabel[e.tail], tuple(self.presentation.letter_code(l) for l in e.label.letters), relabel[e.head])
                b = (relabel[e.head], tuple(self.presentation.letter_code(l) for l in (~e.label).letters), relabel[e.tail])
                rows.append(min(a, b))
            rows.sort()
            key = tuple(rows)
            if best is None or key < best:
                best = key
        return best


def _develop_anchors(p: Presentation, vertex_ids: Set[int], edges: Dict[int, CoreEdge],
                     root: int, root_anchor: Word) -> Dict[int, Word]:
    """Anchor assignment along the breadth-first spanning tree from root,
    edges taken in shortlex order so the fundamental domain is canonical."""
    anchors = {root: p.normal_form(root_anchor)}
    frontier = [root]
    star: Dict[int, List[Tuple[int, int]]] = {v: [] for v in vertex_ids}
    for eid in sorted(edges):
        e = edges[eid]
        star[e.tail].append((eid, 1))
        star[e.head].append((eid, -1))

    def turn_key(item):
        eid, d = item
        e = edges[eid]
        label = e.label if d > 0 else ~e.label
        return (p.shortlex_key(label), eid, d)

    while frontier:
        nxt = []
        for v in frontier:
            for eid, d in sorted(star[v], key=turn_key):
                e = edges[eid]
                w = e.head if d > 0 else e.tail
                if w not in anchors:
                    label = e.label if d > 0 else ~e.label
                    anchors[w] = p.normal_form(anchors[v] * label)
                    nxt.append(w)
        frontier = nxt
    if set(anchors) != vertex_ids:
        raise ValidationError("core must be connected")
    return anchors


def _subdivided_edges(p: Presentation, u: int, v: int, label: Word, next_vertex: int,
                      next_edge: int) -> Tuple[Dict[int, CoreEdge], int, int]:
    """Chain of unit edges from u to v spelling ``label``."""
    edges: Dict[int, CoreEdge] = {}
    prev = u
    for k, letter in enumerate(label.letters):
        last = k == len(label) - 1
        nxt = v if last else next_vertex
        if not last:
            next_vertex += 1
        edges[next_edge] = CoreEdge(next_edge, prev, nxt, Word([letter]))
        next_edge += 1
        prev = nxt
    return edges, next_vertex, next_edge


def core_from_generators(p: Presentation, gens: Sequence[Word]) -> MetricCore:
    """Rose with one petal per generator, subdivided at every integer point
    of the chosen geodesic; basepoint anchored at the identity."""
    geo = geometry(p)
    edges: Dict[int, CoreEdge] = {}
    next_vertex, next_edge = 1, 0
    for w in gens:
        if p.is_trivial(w):
            raise TrivialGenerator(f"generator {w.display()} is trivial in the group")
        g = geo.geodesic_word(w)
        new, next_vertex, next_edge = _subdivided_edges(p, 0, 0, g, next_vertex, next_edge)
        edges.update(new)
    vertex_ids = {0}
    for e in edges.values():
        vertex_ids.update((e.tail, e.head))
    anchors = _develop_anchors(p, vertex_ids, edges, 0, Word.identity())
    return MetricCore(p, anchors, edges, basepoint=0)


def size(core: MetricCore) -> int:
    """Total edge length."""
    return sum(e.length for e in core.edges.values())


def subdivide(core: MetricCore) -> MetricCore:
    """Unit-edge refinement: every edge becomes a chain of single-letter
    edges along its label geodesic.  A no-op for already-unit cores."""
    if all(e.length == 1 for e in core.edges.values()):
        return core
    p = core.presentation
    edges: Dict[int, CoreEdge] = {}
    next_vertex = (max(core.anchors) + 1) if core.anchors else 0
    next_edge = 0
    for eid in sorted(core.edges):
        e = core.edges[eid]
        new, next_vertex, next_edge = _subdivided_edges(
            p, e.tail, e.head, e.label, next_vertex, next_edge)
        edges.update(new)
    vertex_ids = {v for ce in edges.values() for v in (ce.tail, ce.head)}
    vertex_ids.update(core.anchors)
    root = core.basepoint if core.basepoint is not None else min(vertex_ids)
    anchors = _develop_anchors(p, vertex_ids, edges, root, core.anchors[root])
    return MetricCore(p, anchors, edges, core.basepoint)


# -- universal cover windows --------------------------------------------------------


@dataclass
class CoverNode:
    idx: int
    vertex: int
    anchor: Word
    parent: int  # -1 at the root
    via: Optional[Tuple[int, int]]
    depth: int


class CoverTree:
    """A finite window of the universal cover: reduced edge paths from a
    root lift, each node carrying its developed anchor."""

    def __init__(self, nodes: List[CoverNode], horizon_hit: bool):
        self.nodes = nodes
        self.horizon_hit = horizon_hit

    def __len__(self) -> int:
        return len(self.nodes)

    def anchors_by_key(self, p: Presentation) -> Dict[tuple, int]:
        out: Dict[tuple, int] = {}
        for node in self.nodes:
            key = p.canonical_key(node.anchor)
            if key not in out:
                out[key] = node.idx
        return out

    def tree_distance(self, i: int, j: int) -> int:
        ancestors = {}
        a = i
        while a != -1:
            ancestors[a] = self.nodes[a].depth
            a = self.nodes[a].parent
        b = j
        while b not in ancestors:
            b = self.nodes[b].parent
        return (self.nodes[i].depth - self.nodes[b].depth) + (
            self.nodes[j].depth - self.nodes[b].depth
        )

    def path_from_root(self, i: int) -> List[Tuple[int, int]]:
        steps = []
        while self.nodes[i].parent != -1:
            steps.append(self.nodes[i].via)
            i = self.nodes[i].parent
        steps.reverse()
        return steps


def _expand_cover(core: MetricCore, root_vertex: int, root_anchor: Word, radius: int,
                  forbidden_edge: Optional[int] = None,
                  budget: int = DEFAULT_NODE_BUDGET) -> CoverTree:
    p = core.presentation
    nodes = [CoverNode(0, root_vertex, p.normal_form(root_anchor), -1, None, 0)]
    frontier = [0]
    horizon_hit = False
    for _ in range(radius):
        nxt: List[int] = []
        for i in frontier:
            node = nodes[i]
            for eid, d in core.star()[node.vertex]:
                if eid == forbidden_edge:
                    continue
                if node.via is not None and node.via == (eid, -d):
                    continue  # no immediate backtrack: stay inside the cover tree
                if len(nodes) >= budget:
                    raise BudgetExceeded(f"cover window exceeded {budget} nodes")
                w = core.other_end(eid, node.vertex, d)
                anchor = p.normal_form(node.anchor * core.edge_word(eid, d))
                child = CoverNode(len(nodes), w, anchor, i, (eid, d), node.depth + 1)
                nodes.append(child)
                nxt.append(child.idx)
        frontier = nxt
    if frontier:
        horizon_hit = True
    return CoverTree(nodes, horizon_hit)


def universal_cover_ball(core: MetricCore, radius: int, budget: int = DEFAULT_NODE_BUDGET) -> CoverTree:
    """The radius-ball around the basepoint lift, anchors included."""
    if core.basepoint is None:
        raise NotBased("universal cover windows are rooted at the basepoint")
    return _expand_cover(core, core.basepoint, core.anchors[core.basepoint], radius, None, budget)


# -- folding moves ------------------------------------------------------------------


@dataclass(frozen=True)
class FoldMove:
    """One improvement step.  ``variant`` is one of ``identify_vertices``,
    ``replace_edge``, ``add_balloon``, or ``collapse_redundant`` (the
    degenerate identification that arises when the core's fundamental
    group maps to the subgroup non-injectively, e.g. a rose on a
    non-basis generating tuple)."""

    variant: str
    edge: int
    u1: Optional[int] = None
    u2: Optional[int] = None
    gamma1: Tuple[Tuple[int, int], ...] = ()
    gamma2: Tuple[Tuple[int, int], ...] = ()
    new_label: Optional[Word] = None
    attach: Optional[int] = None
    stem_label: Optional[Word] = None
    loop_label: Optional[Word] = None
    holonomy: Optional[Word] = None
    sigma_drop: int = 0

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "edge": self.edge,
            "u1": self.u1,
            "u2": self.u2,
            "new_label": self.new_label.display() if self.new_label else None,
            "attach": self.attach,
            "stem": self.stem_label.display() if self.stem_label else None,
            "loop": self.loop_label.display() if self.loop_label else None,
            "holonomy": self.holonomy.display() if self.holonomy else None,
            "sigma_drop": self.sigma_drop,
        }


@dataclass
class EdgeSplit:
    """Decomposition data at one edge lift: the two depth-bounded component
    windows, their stabilizer generators, and whether the edge separates."""

    edge: int
    tail_anchor: Word
    head_anchor: Word
    window1: CoverTree
    window2: CoverTree
    stab1: List[Word]
    stab2: List[Word]
    separating: bool

    @property
    def horizon_hit(self) -> bool:
        return self.window1.horizon_hit or self.window2.horizon_hit


def _component_loops(core: MetricCore, at_vertex: int, forbidden_edge: int) -> List[Word]:
    """Free basis of the fundamental group of the component of ``at_vertex``
    in the graph minus the edge, as words anchored at ``at_vertex``."""
    parent: Dict[int, Tuple[int, int]] = {}
    seen = {at_vertex}
    frontier = [at_vertex]
    while frontier:
        nxt = []
        for v in frontier:
            for eid, d in core.star()[v]:
                if eid == forbidden_edge:
                    continue
                e = core.edges[eid]
                w = e.head if d > 0 else e.tail
                if w not in seen:
                    seen.add(w)
                    parent[w] = (eid, d)
                    nxt.append(w)
        frontier = nxt

    def path_word(v: int) -> Word:
        letters: List[Letter] = []
        while v != at_vertex:
            eid, d = parent[v]
            w = core.edge_word(eid, d)
            letters = list(w.letters) + letters
            v = core.edges[eid].tail if d > 0 else core.edges[eid].head
        return Word(letters)

    tree_edges = {eid for eid, _ in parent.values()}
    loops = []
    for eid in sorted(core.edges):
        if eid == forbidden_edge or eid in tree_edges:
            continue
        e = core.edges[eid]
        if e.tail not in seen or e.head not in seen:
            continue
        loops.append(free_reduce(path_word(e.tail) * e.label * ~path_word(e.head)))
    return loops


def split_at_edge(core: MetricCore, eid: int, depth: int = DEFAULT_DEPTH,
                  budget: int = DEFAULT_NODE_BUDGET) -> EdgeSplit:
    """Windows of the two universal-cover components adjacent to a lift of
    the edge, with anchors developed from the stored fundamental domain."""
    if eid not in core.edges:
        raise ValidationError(f"no edge {eid}")
    e = core.edges[eid]
    p = core.presentation
    a1 = core.anchors[e.tail]
    a2 = p.normal_form(a1 * e.label)
    w1 = _expand_cover(core, e.tail, a1, depth, forbidden_edge=eid, budget=budget)
    w2 = _expand_cover(core, e.head, a2, depth, forbidden_edge=eid, budget=budget)
    separating = core.is_separating(eid)
    # stabilizers as subgroups of the ambient group: component loops
    # conjugated by the anchors of the chosen lifts
    stab1 = [p.normal_form(a1 * u * ~a1) for u in _component_loops(core, e.tail, eid)]
    stab2 = [p.normal_form(a2 * u * ~a2) for u in _component_loops(core, e.head, eid)]
    return EdgeSplit(eid, a1, a2, w1, w2, stab1, stab2, separating)


def _walk_gamma(core: MetricCore, start_anchor: Word, gamma: Sequence[Tuple[int, int]]) -> Word:
    p = core.presentation
    anchor = start_anchor
    for eid, d in gamma:
        anchor = p.normal_form(anchor * core.edge_word(eid, d))
    return anchor


def _search(core: MetricCore, eid: int, depth: int, radius: Optional[int],
            budget: int = DEFAULT_NODE_BUDGET) -> Tuple[Optional[FoldMove], bool]:
    """Improvement search at one edge; returns (move or None, horizon hit)."""
    p = core.presentation
    if p.backend == BACKEND_FREE and _is_immersed(core):
        # the cover embeds isometrically: component images are disjoint,
        # no connecting path beats an edge, and balloons cannot shrink;
        # "none" is certified, not horizon-bound
        return None, False
    geo = geometry(p)
    split = split_at_edge(core, eid, depth, budget)
    e = core.edges[eid]
    keys2 = split.window2.anchors_by_key(p)

    # Case 1: the component images intersect at a Cayley vertex.
    shared = None
    for node in split.window1.nodes:
        key = p.canonical_key(node.anchor)
        if key in keys2:
            shared = (node.idx, keys2[key])
            break
    if shared is not None:
        i1, i2 = shared
        n1 = split.window1.nodes[i1]
        n2 = split.window2.nodes[i2]
        gamma1 = tuple(split.window1.path_from_root(i1))
        gamma2 = tuple(split.window2.path_from_root(i2))
        if n1.vertex == n2.vertex:
            return (
                FoldMove("collapse_redundant", eid, u1=n1.vertex, u2=n2.vertex,
                         gamma1=gamma1, gamma2=gamma2, sigma_drop=e.length),
                split.horizon_hit,
            )
        return (
            FoldMove("identify_vertices", eid, u1=n1.vertex, u2=n2.vertex,
                     gamma1=gamma1, gamma2=gamma2, sigma_drop=e.length),
            split.horizon_hit,
        )

    # Case 2: a strictly shorter connecting geodesic.
    best = None
    for n1 in split.window1.nodes:
        inv = ~n1.anchor
        for n2 in split.window2.nodes:
            d = geo.length(inv * n2.anchor, horizon=radius)
            if best is None or (d, n1.idx, n2.idx) < best:
                best = (d, n1.idx, n2.idx)
    if best is not None and best[0] < e.length:
        d, i1, i2 = best
        n1 = split.window1.nodes[i1]
        n2 = split.window2.nodes[i2]
        beta = geo.geodesic_word(~n1.anchor * n2.anchor, horizon=radius)
        return (
            FoldMove("replace_edge", eid, u1=n1.vertex, u2=n2.vertex,
                     gamma1=tuple(split.window1.path_from_root(i1)),
                     gamma2=tuple(split.window2.path_from_root(i2)),
                     new_label=beta, sigma_drop=e.length - d),
            split.horizon_hit,
        )

    # Case 3: a balloon on a non-separating edge with interior points.
    if not split.separating and e.length >= 2:
        move = _search_balloon(core, split, radius)
        if move is not None:
            return move, split.horizon_hit
    return None, split.horizon_hit


def _search_balloon(core: MetricCore, split: EdgeSplit, radius: Optional[int]) -> Optional[FoldMove]:
    p = core.presentation
    geo = geometry(p)
    e = core.edges[split.edge]
    a1, a2 = split.tail_anchor, split.head_anchor
    # Holonomy candidates carry the edge lift to another lift with one
    # endpoint in the adjacent component, exchanging the two sides.
    # Side-preserving translates (stabilizer elements) are excluded: a
    # balloon built from one collapses two fundamental-group generators
    # to the same group element, breaking the core structure.
    candidates: List[Word] = []
    for window, opposite_anchor, opposite_vertex in (
        (split.window1, a2, e.head),
        (split.window2, a1, e.tail),
    ):
        for node in window.nodes:
            if node.vertex == opposite_vertex:
                h = free_reduce(node.anchor * ~opposite_anchor)
                if len(h) and h not in candidates:
                    candidates.append(h)
    best = None
    for k in range(1, e.length):
        prefix = Word(e.label.letters[:k])
        p_anchor = p.normal_form(a1 * prefix)
        for h in candidates:
            translated = p.normal_form(h * p_anchor)
            loop_len = geo.dist(p_anchor, translated, horizon=radius)
            if loop_len == 0:
                continue
            for attach, stem_len in ((e.tail, k), (e.head, e.length - k)):
                total = stem_len + loop_len
                if total >= e.length:
                    continue
                key = (total, k, attach, p.shortlex_key(h))
                if best is None or key < best[0]:
                    stem = prefix if attach == e.tail else ~Word(e.label.letters[k:])
                    loop = geo.geodesic_word(~p_anchor * translated, horizon=radius)
                    best = (key, FoldMove(
                        "add_balloon", split.edge, attach=attach,
                        stem_label=stem, loop_label=loop, holonomy=h,
                        sigma_drop=e.length - total))
    return best[1] if best else None


def search_improvement(core: MetricCore, eid: int, depth: int = DEFAULT_DEPTH,
                       radius: Optional[int] = None) -> Optional[FoldMove]:
    """Look for an improvement at the edge within the depth horizon.
    ``None`` means none was found at this horizon, not that the edge is
    minimal."""
    move, _ = _search(core, eid, depth, radius)
    return move


def apply_move(core: MetricCore, move: FoldMove) -> MetricCore:
    """Apply a validated move; the result has strictly smaller size and,
    except for ``collapse_redundant``, the same first Betti number."""
    p = core.presentation
    if move.edge not in core.edges:
        raise MoveInvalid(f"edge {move.edge} is gone")
    e = core.edges[move.edge]
    old_sigma = size(core)
    a1 = core.anchors[e.tail]
    a2 = p.normal_form(a1 * e.label)

    edges = {eid: ce for eid, ce in core.edges.items() if eid != move.edge}
    vertex_ids = set(core.anchors)
    next_edge = max(core.edges) + 1
    next_vertex = max(vertex_ids) + 1
    basepoint = core.basepoint

    if move.variant in ("identify_vertices", "collapse_redundant"):
        end1 = _walk_gamma(core, a1, move.gamma1)
        end2 = _walk_gamma(core, a2, move.gamma2)
        if p.canonical_key(end1) != p.canonical_key(end2):
            raise MoveInvalid("witness paths do not meet in the Cayley graph")
        if move.variant == "collapse_redundant":
            if move.u1 != move.u2:
                raise MoveInvalid("collapse needs coincident witness vertices")
            if core.is_separating(move.edge):
                raise MoveInvalid("collapse of a separating edge would disconnect")
        else:
            if move.u1 == move.u2:
                raise MoveInvalid("identification needs distinct vertices")
            survivor, gone = sorted((move.u1, move.u2))
            remap = lambda v: survivor if v == gone else v
            edges = {
                eid: CoreEdge(eid, remap(ce.tail), remap(ce.head), ce.label)
                for eid, ce in edges.items()
            }
            vertex_ids.discard(gone)
            if basepoint == gone:
                basepoint = survivor
    elif move.variant == "replace_edge":
        if move.new_label is None or len(move.new_label) >= e.length:
            raise MoveInvalid("replacement label must be strictly shorter")
        end1 = _walk_gamma(core, a1, move.gamma1)
        end2 = _walk_gamma(core, a2, move.gamma2)
        if p.canonical_key(end1 * move.new_label) != p.canonical_key(end2):
            raise MoveInvalid("replacement label does not connect the witness points")
        new, next_vertex, next_edge = _subdivided_edges(
            p, move.u1, move.u2, move.new_label, next_vertex, next_edge)
        edges.update(new)
    elif move.variant == "add_balloon":
        if core.is_separating(move.edge):
            raise MoveInvalid("balloons require a non-separating edge")
        if move.stem_label is None or move.loop_label is None or len(move.loop_label) == 0:
            raise MoveInvalid("balloon needs a stem and a nontrivial loop")
        if len(move.stem_label) + len(move.loop_label) >= e.length:
            raise MoveInvalid("balloon does not decrease the size")
        u = next_vertex
        next_vertex += 1
        vertex_ids.add(u)
        if len(move.stem_label):
            new, next_vertex, next_edge = _subdivided_edges(
                p, move.attach, u, move.stem_label, next_vertex, next_edge)
            edges.update(new)
        new, next_vertex, next_edge = _subdivided_edges(
            p, u, u, move.loop_label, next_vertex, next_edge)
        edges.update(new)
    else:
        raise MoveInvalid(f"unknown move variant {move.variant!r}")

    vertex_ids = {v for ce in edges.values() for v in (ce.tail, ce.head)}
    if basepoint is not None:
        vertex_ids.add(basepoint)
    if not vertex_ids:
        vertex_ids = {min(core.anchors)}

    root = basepoint if basepoint in vertex_ids else min(vertex_ids)
    root_anchor = core.anchors.get(root, Word.identity())
    anchors = _develop_anchors(p, vertex_ids, edges, root, root_anchor)
    out = MetricCore(p, anchors, edges, basepoint)
    if size(out) >= old_sigma:
        raise MoveInvalid("move does not strictly decrease the size")
    if move.variant != "collapse_redundant" and out.rank() != core.rank():
        raise MoveInvalid("move changed the first Betti number")
    return out


@dataclass
class MoveLog:
    moves: List[FoldMove] = field(default_factory=list)
    horizon_bound: bool = False
    budget_exhausted: bool = False

    def to_json(self) -> dict:
        return {
            "moves": [m.to_json() for m in self.moves],
            "horizon_bound": self.horizon_bound,
            "budget_exhausted": self.budget_exhausted,
        }


def fold_to_minimal(core: MetricCore, depth: int = DEFAULT_DEPTH, radius: Optional[int] = None,
                    budget: int = DEFAULT_MOVE_BUDGET) -> Tuple[MetricCore, MoveLog]:
    """Greedily apply improvements until none is found within the horizon.
    Terminates because the size is a strictly decreasing positive integer."""
    log = MoveLog()
    current = core
    while True:
        if len(log.moves) >= budget:
            log.budget_exhausted = True
            return current, log
        progress = False
        for eid in sorted(current.edges):
            move, horizon_hit = _search(current, eid, depth, radius)
            if move is None:
                log.horizon_bound = log.horizon_bound or horizon_hit
                continue
            current = apply_move(current, move)
            log.moves.append(move)
            progress = True
            break
        if not progress:
            return current, log


# -- measurement ---------------------------------------------------------------------


def _is_immersed(core: MetricCore) -> bool:
    """No two distinct departures from a vertex share a first letter.
    Equivalent to: no developed path word ever cancels, so the immersion
    is an isometric embedding of the whole universal cover."""
    return not core.immersion_violations()


def measure_qi(core: MetricCore, radius: int, budget: int = DEFAULT_NODE_BUDGET) -> QiEstimate:
    """Compare tree distances with Cayley distances over the window around
    the basepoint: minimal additive constant at K = 1 plus the Pareto
    front over the multiplicative constants seen."""
    if core.basepoint is None:
        raise NotBased("measure_qi requires a based core")
    p = core.presentation
    if p.backend == BACKEND_FREE and _is_immersed(core):
        # every developed path word stays reduced, so the immersion is
        # isometric on any window; the pair scan would report exactly (1, 0)
        return QiEstimate(K=Fraction(1), C=Fraction(0), radius=radius,
                          witness=None, pareto=((Fraction(1), Fraction(0)),))
    geo = geometry(p)
    cover = universal_cover_ball(core, radius, budget)
    n = len(cover.nodes)
    deficiency = Fraction(0)
    witness = None
    ratios = {Fraction(1)}
    samples: List[Tuple[int, int]] = []
    for i in range(n):
        ai_inv = ~cover.nodes[i].anchor
        for j in range(i + 1, n):
            d_tree = cover.tree_distance(i, j)
            d_x = geo.length(ai_inv * cover.nodes[j].anchor)
            if d_x > d_tree:
                raise ValidationError("immersion failed to be 1-Lipschitz; labels are not geodesic")
            samples.append((d_tree, d_x))
            if d_x > 0:
                ratios.add(Fraction(d_tree, d_x))
            if Fraction(d_tree - d_x) > deficiency:
                deficiency = Fraction(d_tree - d_x)
                witness = (cover.nodes[i].anchor, cover.nodes[j].anchor)
    pareto: List[Tuple[Fraction, Fraction]] = []
    last_c = None
    for K in sorted(ratios):
        c = Fraction(0)
        for d_tree, d_x in samples:
            need = Fraction(d_tree) / K - d_x
            if need > c:
                c = need
        if last_c is None or c < last_c:
            pareto.append((K, c))
            last_c = c
    return QiEstimate(K=Fraction(1), C=deficiency, radius=radius,
                      witness=witness, pareto=tuple(pareto))


def check_minimal_edge_shortest(core: MetricCore, eid: int, depth: int = DEFAULT_DEPTH,
                                radius: Optional[int] = None) -> bool:
    """True iff, within the horizon, the component images are disjoint and
    no connecting path is shorter than the edge."""
    p = core.presentation
    geo = geometry(p)
    split = split_at_edge(core, eid, depth)
    e = core.edges[eid]
    keys2 = split.window2.anchors_by_key(p)
    for node in split.window1.nodes:
        if p.canonical_key(node.anchor) in keys2:
            return False
    for n1 in split.window1.nodes:
        inv = ~n1.anchor
        for n2 in split.window2.nodes:
            if geo.length(inv * n2.anchor, horizon=radius) < e.length:
                return False
    return True


def attach_basepoint(core: MetricCore, radius: Optional[int] = None) -> MetricCore:
    """Mark a vertex anchored at the identity (subdividing an edge when the
    identity sits at an interior geodesic point), or attach a leaf from
    the identity to the nearest image point."""
    p = core.presentation
    if not core.anchors:
        raise ValidationError("cannot base an empty core")
    geo = geometry(p)
    for v in core.vertices:
        if len(p.normal_form(core.anchors[v])) == 0:
            return MetricCore(p, core.anchors, core.edges, basepoint=v)
    # interior integer points of long edges
    for eid in sorted(core.edges):
        e = core.edges[eid]
        base_anchor = core.anchors[e.tail]
        for k in range(1, e.length):
            point = p.normal_form(base_anchor * Word(e.label.letters[:k]))
            if len(point) == 0:
                edges = {x: ce for x, ce in core.edges.items() if x != eid}
                mid = max(core.anchors) + 1
                nid = max(core.edges) + 1
                edges[nid] = CoreEdge(nid, e.tail, mid, Word(e.label.letters[:k]))
                edges[nid + 1] = CoreEdge(nid + 1, mid, e.head, Word(e.label.letters[k:]))
                anchors = dict(core.anchors)
                anchors[mid] = point
                out = MetricCore(p, anchors, edges, basepoint=mid)
                return out
    best = None
    for v in core.vertices:
        d = geo.length(core.anchors[v], horizon=radius)
        if best is None or (d, v) < best:
            best = (d, v)
    d, v = best
    label = geo.geodesic_word(core.anchors[v], horizon=radius)
    new_base = max(core.anchors) + 1
    edges = dict(core.edges)
    next_edge = max(core.edges) + 1 if core.edges else 0
    new, _, _ = _subdivided_edges(p, new_base, v, label, new_base + 1, next_edge)
    edges.update(new)
    vertex_ids = set(core.anchors) | {new_base} | {
        x for ce in new.values() for x in (ce.tail, ce.head)
    }
    anchors = _develop_anchors(p, vertex_ids, edges, new_base, Word.identity())
    return MetricCore(p, anchors, edges, basepoint=new_base)


def trim_to_hull(core: MetricCore) -> MetricCore:
    """Remove valence-1 vertices other than the basepoint, iteratively."""
    if core.basepoint is None:
        raise NotBased("trimming is defined for based cores")
    anchors = dict(core.anchors)
    edges = dict(core.edges)
    while True:
        degree = {v: 0 for v in anchors}
        for e in edges.values():
            degree[e.tail] += 1
            degree[e.head] += 1
        dead = [v for v in anchors if degree[v] <= 1 and v != core.basepoint]
        if not dead:
            break
        for v in dead:
            del anchors[v]
        edges = {eid: e for eid, e in edges.items() if e.tail not in dead and e.head not in dead}
    return MetricCore(core.presentation, anchors, edges, core.basepoint)


def max_edges(r: int) -> int:
    """Most edges of a finite connected graph with no valence-1 or
    valence-2 vertices and first Betti number r."""
    if r < 1:
        raise ValidationError("rank must be at least 1")
    return 1 if r == 1 else 3 * r - 3


def enumerate_small_cores(p: Presentation, n_edges: int, L: int, radius: int,
                          budget: int = 100000) -> List[MetricCore]:
    """All leafless connected cores with at most ``n_edges`` edges of length
    at most L, up to label-preserving isomorphism (edge flips invert
    labels) and anchor translation; the 0-edge point core is included."""
    if n_edges < 0 or L < 1:
        raise ValidationError("need n_edges >= 0 and L >= 1")
    if n_edges * L > radius:
        raise RadiusInsufficient("window radius below n_edges * L")
    geo = geometry(p)
    labels: List[Word] = []
    frontier = [Word.identity()]
    for _ in range(L):
        nxt = []
        for w in frontier:
            for letter in p.signed_letters():
                if w.letters and w.letters[-1] == (letter[0], -letter[1]):
                    continue
                nxt.append(Word(w.letters + (letter,)))
        for w in nxt:
            if not p.is_trivial(w) and geo.length(w) == len(w):
                labels.append(w)
        frontier = nxt
    results: List[MetricCore] = []
    if n_edges == 0:
        results.append(MetricCore(p, {0: Word.identity()}, {}, basepoint=None))
    seen_keys = set()
    raw = 0
    for e_count in range(1, n_edges + 1):
        for v_count in range(1, e_count + 1):
            pair_pool = list(itertools.combinations_with_replacement(range(v_count), 2))
            for shape in itertools.combinations_with_replacement(pair_pool, e_count):
                degree = [0] * v_count
                for i, j in shape:
                    degree[i] += 1 + (i == j)
                    degree[j] += (i != j)
                if any(d < 2 for d in degree):
                    continue
                if not _shape_connected(v_count, shape):
                    continue
                for labelling in itertools.product(labels, repeat=e_count):
                    raw += 1
                    if raw > budget:
                        raise BudgetExceeded("small-core enumeration budget exceeded")
                    edges = {
                        k: CoreEdge(k, shape[k][0], shape[k][1], labelling[k])
                        for k in range(e_count)
                    }
                    try:
                        anchors = _develop_anchors(p, set(range(v_count)), edges, 0, Word.identity())
                        core = MetricCore(p, anchors, edges, basepoint=None)
                    except ValidationError:
                        continue
                    if core.immersion_violations():
                        continue
                    key = core.canonical_key()
                    if key not in seen_keys:
                        seen_keys.add(key)
                        results.append(core)
    return results


def _shape_connected(v_count: int, shape) -> bool:
    if v_count == 1:
        return True
    adj = {i: set() for i in range(v_count)}
    for i, j in shape:
        adj[i].add(j)
        adj[j].add(i)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == v_count


def measure_morse_bound(core: MetricCore, radius: int, budget: int = DEFAULT_NODE_BUDGET) -> Fraction:
    """Measured Morse constant: the largest Hausdorff distance between the
    image of a window path and the true geodesic between its endpoints.
    Zero exactly when every developed path is geodesic."""
    if core.basepoint is None:
        raise NotBased("the Morse bound is sampled around the basepoint")
    p = core.presentation
    geo = geometry(p)
    cover = universal_cover_ball(core, radius, budget)
    worst = Fraction(0)
    for i in range(len(cover.nodes)):
        for j in range(i + 1, len(cover.nodes)):
            path_points = _cover_path_anchors(core, cover, i, j)
            geod = geo.geodesic_word(~path_points[0] * path_points[-1])
            geod_points = [
                p.normal_form(path_points[0] * Word(geod.letters[:k]))
                for k in range(len(geod) + 1)
            ]
            worst = max(worst, _hausdorff(geo, path_points, geod_points))
    return worst


def _cover_path_anchors(core: MetricCore, cover: CoverTree, i: int, j: int) -> List[Word]:
    chain_i = []
    x = i
    while x != -1:
        chain_i.append(x)
        x = cover.nodes[x].parent
    pos = {node: k for k, node in enumerate(chain_i)}
    chain_j = []
    x = j
    while x not in pos:
        chain_j.append(x)
        x = cover.nodes[x].parent
    nodes = chain_i[: pos[x] + 1] + list(reversed(chain_j))
    return [cover.nodes[n].anchor for n in nodes]


def _hausdorff(geo, a_points: List[Word], b_points: List[Word]) -> Fraction:
    worst = 0
    for side_a, side_b in ((a_points, b_points), (b_points, a_points)):
        for x in side_a:
            inv = ~x
            best = min(geo.length(inv * y) for y in side_b)
            worst = max(worst, best)
    return Fraction(worst)


# -- measured constants ----------------------------------------------------------------


@dataclass
class ConstantLedger:
    """Measured geometry constants and the derived bounds used by the
    improvement machinery.  ``delta`` and ``M0`` are measurements; the
    rest follow the fixed formulas."""

    delta: Fraction
    M0: Fraction
    K: Fraction = Fraction(1)
    C: Fraction = Fraction(0)
    L: Optional[Fraction] = None
    K_list: Tuple[Fraction, ...] = ()
    C_list: Tuple[Fraction, ...] = ()
    L_list: Tuple[Fraction, ...] = ()

    @property
    def M1(self) -> Fraction:
        return self.M0 + 2 * self.delta + 1

    @property
    def C_prime(self) -> Fraction:
        return self.C + 2 * self.M1

    @property
    def m(self) -> Fraction:
        return self.K * (2 * self.M1 + self.delta + self.C + 1)

    @property
    def M2(self) -> Fraction:
        case1 = self.M1 + self.delta
        case2 = self.M0 + 3 * self.delta
        case3 = self.K * (self.C_prime + 2 * self.M1 + 2 * self.delta + 4 * self.delta * self.m) / 2
        return max(case1, case2, case3)

    def to_json(self) -> dict:
        return {
            "delta": str(self.delta),
            "M0": str(self.M0),
            "M1": str(self.M1),
            "M2": str(self.M2),
            "K": str(self.K),
            "C": str(self.C),
            "C_prime": str(self.C_prime),
            "m": str(self.m),
            "L": str(self.L) if self.L is not None else None,
        }
