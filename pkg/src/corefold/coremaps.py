"""Maps between cores of nested subgroups, with measured and predicted
quasi-isometry constants.

The construction is the two-step one: a nearest-point assignment on a
spanning-tree fundamental domain extended equivariantly, then geodesic
interpolation over the unit subdivision.  The predicted constants come
from the measured inputs by the fixed formulas

    K'0 = K^2,  C'0 = 2KD + 2KC,   K' = K'0,  C' = 3K'0 + 2C'0,

and the size bound checked on surjective maps is
sigma(target) <= K' * sigma(source) + C'.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .cayley import QiEstimate, geometry
from .cores import (
    CoverTree,
    MetricCore,
    measure_qi,
    size,
    subdivide,
    universal_cover_ball,
)
from .displacement import spanning_tree_basis
from .errors import (
    NotBased,
    NotNested,
    NotSurjective,
    RadiusInsufficient,
    ValidationError,
)
from .stallings import subgroup_graph
from .words import BACKEND_FREE, Presentation, Word, free_reduce


def _require_based(core: MetricCore, name: str) -> None:
    if core.basepoint is None:
        raise NotBased(f"{name} must be a based core")


def _check_nested(core1: MetricCore, core2: MetricCore) -> None:
    """Free backend only: exact containment check on a basis."""
    p = core1.presentation
    if p.backend != BACKEND_FREE:
        return
    target = subgroup_graph(spanning_tree_basis(core2), p.generators)
    for b in spanning_tree_basis(core1):
        if not target.membership(b):
            raise NotNested(f"{b.display()} is not in the target subgroup", witness=b)


def images_close(core1: MetricCore, core2: MetricCore, radius: int) -> int:
    """The smallest D with the core1 window image inside the D-neighborhood
    of the core2 image, sampled over the radius window.  The target
    window grows until every nearest point is interior; running out of
    room raises RadiusInsufficient."""
    _require_based(core1, "source")
    _require_based(core2, "target")
    _check_nested(core1, core2)
    p = core1.presentation
    geo = geometry(p)
    w1 = universal_cover_ball(core1, radius)
    wradius = radius + 1
    cap = 4 * radius + 8
    while True:
        w2 = universal_cover_ball(core2, wradius)
        distances = []
        interior = True
        for node in w1.nodes:
            inv = ~node.anchor
            best = None
            for cand in w2.nodes:
                d = geo.length(inv * cand.anchor)
                if best is None or (d, cand.idx) < best:
                    best = (d, cand.idx)
            d, idx = best
            if w2.horizon_hit and w2.nodes[idx].depth >= wradius:
                interior = False
                break
            distances.append(d)
        if interior:
            return max(distances) if distances else 0
        if wradius >= cap:
            raise RadiusInsufficient("nearest target points keep hitting the window boundary")
        wradius = min(2 * wradius, cap)


@dataclass
class CoreMap:
    """The quotient map with its lift data on the fundamental domain."""

    source: MetricCore
    target: MetricCore
    radius: int
    D: int
    vertex_map: Dict[int, int]             # source vertex -> target vertex
    lift_map: Dict[int, Tuple[int, Word]]  # source vertex -> (target vertex, window anchor)
    edge_paths: Dict[int, Tuple[Tuple[int, int], ...]]  # source edge -> target edge steps
    target_window: CoverTree

    def to_json(self) -> dict:
        return {
            "D": self.D,
            "radius": self.radius,
            "vertex_map": {str(k): v for k, v in sorted(self.vertex_map.items())},
            "edge_paths": {
                str(k): [[eid, d] for eid, d in path]
                for k, path in sorted(self.edge_paths.items())
            },
        }


def _window_lookup(p: Presentation, window: CoverTree) -> Dict[tuple, int]:
    out: Dict[tuple, int] = {}
    for node in window.nodes:
        key = (node.vertex, p.canonical_key(node.anchor))
        if key in out:
            raise ValidationError(
                "target immersion is not injective on the window; "
                "build the map on a minimal target core")
        out[key] = node.idx
    return out


def _node_of(p: Presentation, lookup: Dict[tuple, int], point: Tuple[int, Word]) -> int:
    key = (point[0], p.canonical_key(point[1]))
    if key not in lookup:
        raise RadiusInsufficient("image point fell outside the target window")
    return lookup[key]


def _cover_path(window: CoverTree, i: int, j: int) -> List[Tuple[int, int]]:
    """Edge steps of the tree geodesic between two window nodes."""
    chain_i = []
    x = i
    while x != -1:
        chain_i.append(x)
        x = window.nodes[x].parent
    pos = {node: k for k, node in enumerate(chain_i)}
    chain_j = []
    x = j
    while x not in pos:
        chain_j.append(x)
        x = window.nodes[x].parent
    meet = x
    path: List[Tuple[int, int]] = []
    for node in chain_i[: pos[meet]]:
        eid, d = window.nodes[node].via
        path.append((eid, -d))
    for node in reversed(chain_j):
        path.append(window.nodes[node].via)
    return path


def build_core_map(core1: MetricCore, core2: MetricCore, radius: int) -> CoreMap:
    """Step 1: nearest-point assignment on the source fundamental domain
    (ties broken by shortlex target anchor), extended equivariantly.
    Step 2: each unit source edge maps to the target tree geodesic
    between its endpoint images.  The source is unit-subdivided first;
    the target window must embed (minimal target cores do)."""
    _require_based(core1, "source")
    _require_based(core2, "target")
    core1 = subdivide(core1)
    p = core1.presentation
    geo = geometry(p)
    D = images_close(core1, core2, radius)

    w1 = universal_cover_ball(core1, radius)
    wradius = radius + D + 2
    cap = 6 * (radius + D + 2)
    while True:
        w2 = universal_cover_ball(core2, wradius)
        lookup = _window_lookup(p, w2)
        try:
            lift_map: Dict[int, Tuple[int, Word]] = {}
            vertex_map: Dict[int, int] = {}
            for v in core1.vertices:
                inv = ~core1.anchors[v]
                best = None
                for cand in w2.nodes:
                    d = geo.length(inv * cand.anchor)
                    key = (d, p.shortlex_key(cand.anchor), cand.vertex)
                    if best is None or key < best[0]:
                        best = (key, cand)
                cand = best[1]
                if w2.horizon_hit and cand.depth >= wradius:
                    raise RadiusInsufficient("nearest point on the window boundary")
                lift_map[v] = (cand.vertex, cand.anchor)
                vertex_map[v] = cand.vertex

            edge_paths: Dict[int, Tuple[Tuple[int, int], ...]] = {}
            for eid in sorted(core1.edges):
                e = core1.edges[eid]
                a_tail = core1.anchors[e.tail]
                head_lift_anchor = p.normal_form(a_tail * e.label)
                g = free_reduce(head_lift_anchor * ~core1.anchors[e.head])
                hv, ha = lift_map[e.head]
                i = _node_of(p, lookup, lift_map[e.tail])
                j = _node_of(p, lookup, (hv, p.normal_form(g * ha)))
                edge_paths[eid] = tuple(_cover_path(w2, i, j))
            return CoreMap(core1, core2, radius, D, vertex_map, lift_map, edge_paths, w2)
        except RadiusInsufficient:
            if wradius >= cap:
                raise
            wradius = min(2 * wradius, cap)


def map_is_surjective(m: CoreMap) -> bool:
    """True iff the edge-image paths cover every target edge."""
    covered = {eid for path in m.edge_paths.values() for eid, _ in path}
    return covered == set(m.target.edges)


def evaluate_lift(m: CoreMap, vertex: int, anchor: Word) -> Tuple[int, Word]:
    """Value of the lifted map at the cover point of ``vertex`` developed
    at ``anchor``: the equivariant translate of the domain assignment."""
    p = m.source.presentation
    g = free_reduce(anchor * ~m.source.anchors[vertex])
    tv, ta = m.lift_map[vertex]
    return (tv, p.normal_form(g * ta))


@dataclass
class MapMeasurement:
    empirical: QiEstimate
    K: Fraction
    C: Fraction
    D: int
    K0_pred: Fraction
    C0_pred: Fraction
    K_pred: Fraction
    C_pred: Fraction
    within_predicted: bool

    def to_json(self) -> dict:
        return {
            "empirical": self.empirical.to_json(),
            "measured": {"K": str(self.K), "C": str(self.C), "D": self.D},
            "predicted": {
                "K0": str(self.K0_pred),
                "C0": str(self.C0_pred),
                "K": str(self.K_pred),
                "C": str(self.C_pred),
            },
            "within_predicted": self.within_predicted,
        }


def predicted_constants(K: Fraction, C: Fraction, D: int) -> Tuple[Fraction, Fraction, Fraction, Fraction]:
    K0 = K * K
    C0 = 2 * K * D + 2 * K * C
    return K0, C0, K0, 3 * K0 + 2 * C0


def _measured_inputs(m: CoreMap, radius: int) -> Tuple[Fraction, Fraction]:
    q1 = measure_qi(m.source, radius)
    q2 = measure_qi(m.target, radius)
    return max(q1.K, q2.K, Fraction(1)), max(q1.C, q2.C)


def measure_map_qi(m: CoreMap, radius: int) -> MapMeasurement:
    """Empirical constants of the lifted map over the window, compared
    against the predictions computed from measured core constants and D.
    Mixed source/target constants combine by pairwise maxima."""
    p = m.source.presentation
    K, C = _measured_inputs(m, radius)
    K0p, C0p, Kp, Cp = predicted_constants(K, C, m.D)

    w1 = universal_cover_ball(m.source, radius)
    lookup = _window_lookup(p, m.target_window)
    images = [
        _node_of(p, lookup, evaluate_lift(m, node.vertex, node.anchor))
        for node in w1.nodes
    ]
    samples: List[Tuple[int, int, int, int]] = []
    K_emp = Fraction(1)
    for i in range(len(w1.nodes)):
        for j in range(i + 1, len(w1.nodes)):
            d1 = w1.tree_distance(i, j)
            d2 = m.target_window.tree_distance(images[i], images[j])
            samples.append((d1, d2, i, j))
            if d1 > 0 and d2 > 0:
                K_emp = max(K_emp, Fraction(d1, d2), Fraction(d2, d1))
    C_emp = Fraction(0)
    witness = None
    within = True
    for d1, d2, i, j in samples:
        C_emp = max(C_emp, Fraction(d1) / K_emp - d2, Fraction(d2) - K_emp * d1)
        if not (Fraction(d1) / K0p - C0p <= d2 <= K0p * d1 + C0p):
            within = False
            witness = (i, j)
        if not (Fraction(d1) / Kp - Cp <= d2 <= Kp * d1 + Cp):
            within = False
            witness = (i, j)
    empirical = QiEstimate(K=K_emp, C=max(C_emp, Fraction(0)), radius=radius, witness=witness)
    return MapMeasurement(empirical, K, C, m.D, K0p, C0p, Kp, Cp, within)


def size_bound_check(m: CoreMap, radius: Optional[int] = None) -> bool:
    """sigma(target) <= K' * sigma(source) + C' with predicted constants;
    only defined for surjective maps."""
    if not map_is_surjective(m):
        raise NotSurjective("the size bound applies to surjective maps")
    r = radius if radius is not None else m.radius
    K, C = _measured_inputs(m, r)
    _, _, Kp, Cp = predicted_constants(K, C, m.D)
    return Fraction(size(m.target)) <= Kp * Fraction(size(m.source)) + Cp
