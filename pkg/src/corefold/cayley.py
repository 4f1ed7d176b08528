"""Finite Cayley balls and exact coarse-geometry measurements.

Distances are group distances, never truncated-ball distances: the free
backend computes them from reduced lengths, the other backends from a
breadth-first index over canonical keys that is grown far enough to
cover every queried element.  All reported constants are exact
rationals; the four-point hyperbolicity scan is exhaustive over vertex
quadruples of the ball.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BudgetExceeded, DistanceUnknown, RadiusInsufficient, ValidationError
from .words import BACKEND_FREE, Presentation, Word, free_reduce


def default_budget() -> int:
    return int(os.environ.get("COREFOLD_BUDGET", "500000"))


class GroupGeometry:
    """Exact distances, geodesics, and canonical keys for one presentation."""

    def __init__(self, p: Presentation, budget: Optional[int] = None):
        self.p = p
        self.budget = default_budget() if budget is None else budget
        self._depth: Dict[tuple, int] = {(): 0}
        self._parent: Dict[tuple, Tuple[tuple, Tuple[str, int]]] = {}
        self._frontier: List[tuple] = [()]
        self._radius = 0

    # -- index over canonical keys ------------------------------------------------

    def _expand_to(self, radius: int) -> None:
        while self._radius < radius:
            if not self._frontier:
                return  # the whole (finite) group is indexed
            nxt: List[tuple] = []
            for key in self._frontier:
                base = Word(key)
                for letter in self.p.signed_letters():
                    neighbor = self.p.canonical_key(base * Word([letter]))
                    if neighbor not in self._depth:
                        if len(self._depth) >= self.budget:
                            raise BudgetExceeded(
                                f"distance index exceeded {self.budget} vertices"
                            )
                        self._depth[neighbor] = self._radius + 1
                        self._parent[neighbor] = (key, letter)
                        nxt.append(neighbor)
            self._frontier = nxt
            self._radius += 1

    def key(self, w: Word) -> tuple:
        return self.p.canonical_key(w)

    def length(self, w: Word, horizon: Optional[int] = None) -> int:
        """d_X(1, w), exact."""
        if self.p.backend == BACKEND_FREE:
            return len(free_reduce(w))
        key = self.key(w)
        limit = 4 * len(w) + 4 if horizon is None else horizon
        radius = self._radius
        while key not in self._depth:
            if radius >= limit:
                raise RadiusInsufficient(
                    f"element not found within distance {limit} of the identity"
                )
            radius += 1
            self._expand_to(radius)
            if not self._frontier and key not in self._depth:
                raise ValidationError("word does not represent a group element of the index")
        return self._depth[key]

    def dist(self, u: Word, v: Word, horizon: Optional[int] = None) -> int:
        return self.length(~u * v, horizon)

    def geodesic_word(self, w: Word, horizon: Optional[int] = None) -> Word:
        """A geodesic representative of ``w`` (shortlex-first for the free
        backend, breadth-first-canonical otherwise)."""
        if self.p.backend == BACKEND_FREE:
            return free_reduce(w)
        self.length(w, horizon)
        key = self.key(w)
        letters = []
        while key != ():
            key, letter = self._parent[key]
            letters.append(letter)
        return Word(reversed(letters))


_GEOMETRY_CACHE: Dict[int, GroupGeometry] = {}


def geometry(p: Presentation) -> GroupGeometry:
    geo = _GEOMETRY_CACHE.get(id(p))
    if geo is None:
        geo = GroupGeometry(p)
        _GEOMETRY_CACHE[id(p)] = geo
    return geo


@dataclass
class QiEstimate:
    """Measured quasi-isometry constants with a witness pair."""

    K: Fraction
    C: Fraction
    radius: int
    witness: Optional[tuple] = None
    pareto: Tuple[Tuple[Fraction, Fraction], ...] = ()

    def to_json(self) -> dict:
        return {
            "K": str(self.K),
            "C": str(self.C),
            "radius": self.radius,
            "witness": [str(w) for w in self.witness] if self.witness else None,
            "pareto": [[str(k), str(c)] for k, c in self.pareto],
        }


class CayleyBall:
    """All group elements within ``radius`` of the identity, with exact
    pairwise group distances (computed against the full group, so the
    truncation never inflates a distance)."""

    def __init__(self, p: Presentation, radius: int, words: List[Word], dmat: np.ndarray):
        self.presentation = p
        self.radius = radius
        self.words = words
        self.index = {p.canonical_key(w): i for i, w in enumerate(words)}
        self.dmat = dmat

    def __len__(self) -> int:
        return len(self.words)

    def vertex(self, w: Word) -> int:
        key = self.presentation.canonical_key(w)
        if key not in self.index:
            raise ValidationError(f"{w.display()} lies outside the radius-{self.radius} ball")
        return self.index[key]

    def d(self, x: Word, y: Word) -> int:
        value = int(self.dmat[self.vertex(x), self.vertex(y)])
        if value < 0:
            raise DistanceUnknown(f"distance between {x.display()} and {y.display()} unknown")
        return value

    def edges(self) -> List[Tuple[int, str, int]]:
        out = []
        for i, w in enumerate(self.words):
            for gen in self.presentation.generators:
                key = self.presentation.canonical_key(w * Word([(gen, 1)]))
                j = self.index.get(key)
                if j is not None:
                    out.append((i, gen, j))
        return out

    def to_json(self, with_distances: bool = False) -> dict:
        data = {
            "radius": self.radius,
            "vertices": [w.display() for w in self.words],
            "edges": [{"from": i, "to": j, "generator": g} for i, g, j in self.edges()],
        }
        if with_distances:
            data["distances"] = self.dmat.tolist()
        return data

    def to_dot(self) -> str:
        lines = ["digraph ball {"]
        for i, w in enumerate(self.words):
            lines.append(f'  {i} [label="{w.display()}"];')
        for i, g, j in self.edges():
            lines.append(f'  {i} -> {j} [label="{g}"];')
        lines.append("}")
        return "\n".join(lines)


def ball(p: Presentation, radius: int, budget: Optional[int] = None) -> CayleyBall:
    """The radius-``radius`` ball around the identity."""
    if radius < 0:
        raise ValidationError("radius must be nonnegative")
    geo = geometry(p)
    if budget is not None:
        geo.budget = budget
    if p.backend == BACKEND_FREE:
        words = _free_ball_words(p, radius, geo.budget)
        n = len(words)
        dmat = np.zeros((n, n), dtype=np.int32)
        for i in range(n):
            wi_inv = ~words[i]
            for j in range(i + 1, n):
                d = len(wi_inv * words[j])
                dmat[i, j] = d
                dmat[j, i] = d
        return CayleyBall(p, radius, words, dmat)
    geo._expand_to(2 * radius)
    keys = [k for k, depth in geo._depth.items() if depth <= radius]
    keys.sort(key=lambda k: (geo._depth[k], p.shortlex_key(Word(k))))
    words = [Word(k) for k in keys]
    n = len(words)
    dmat = np.zeros((n, n), dtype=np.int32)
    for i in range(n):
        wi_inv = ~words[i]
        for j in range(i + 1, n):
            key = p.canonical_key(wi_inv * words[j])
            d = geo._depth.get(key, -1)
            dmat[i, j] = d
            dmat[j, i] = d
    return CayleyBall(p, radius, words, dmat)


def _free_ball_words(p: Presentation, radius: int, budget: int) -> List[Word]:
    words = [Word.identity()]
    frontier = [Word.identity()]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for letter in p.signed_letters():
                if w.letters and w.letters[-1] == (letter[0], -letter[1]):
                    continue
                if len(words) + len(nxt) >= budget:
                    raise BudgetExceeded(f"ball exceeded {budget} vertices")
                nxt.append(Word(w.letters + (letter,)))
        nxt.sort(key=p.shortlex_key)
        words.extend(nxt)
        frontier = nxt
    return words


def gromov_product(b: CayleyBall, x: Word, y: Word, z: Word) -> Fraction:
    """(d(x,z) + d(y,z) - d(x,y)) / 2; a nonnegative half-integer."""
    dxz = b.d(x, z)
    dyz = b.d(y, z)
    dxy = b.d(x, y)
    return Fraction(dxz + dyz - dxy, 2)


_NUMBA_SCAN = None


def _four_point_scan():
    global _NUMBA_SCAN
    if _NUMBA_SCAN is None:
        from numba import njit

        @njit(cache=True)
        def scan(D):
            n = D.shape[0]
            best = 0
            for i in range(n):
                for j in range(i + 1, n):
                    dij = D[i, j]
                    for k in range(j + 1, n):
                        dik = D[i, k]
                        djk = D[j, k]
                        for l in range(k + 1, n):
                            s1 = dij + D[k, l]
                            s2 = dik + D[j, l]
                            s3 = D[i, l] + djk
                            if s1 < s2:
                                s1, s2 = s2, s1
                            if s2 < s3:
                                s2, s3 = s3, s2
                            if s1 < s2:
                                s1, s2 = s2, s1
                            if s1 - s2 > best:
                                best = s1 - s2

            return best

        _NUMBA_SCAN = scan
    return _NUMBA_SCAN


def four_point_defect2_python(D) -> int:
    """Reference implementation of the scan (twice the defect); used to
    cross-check the compiled version on small inputs."""
    n = len(D)
    best = 0
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                for l in range(k + 1, n):
                    sums = sorted(
                        (D[i][j] + D[k][l], D[i][k] + D[j][l], D[i][l] + D[j][k])
                    )
                    best = max(best, sums[2] - sums[1])
    return best


def ordered_gromov_defect2(D) -> int:
    """Twice the smallest delta making (x|y)_w >= min((x|z)_w,(y|z)_w) - delta
    hold for every ordered vertex quadruple; equals the four-point scan."""
    n = len(D)
    best = 0
    for w in range(n):
        prod = [[D[x][w] + D[y][w] - D[x][y] for y in range(n)] for x in range(n)]
        for x in range(n):
            for y in range(n):
                for z in range(n):
                    defect = min(prod[x][z], prod[y][z]) - prod[x][y]
                    if defect > best:
                        best = defect
    return best


def estimate_delta(b: CayleyBall) -> Fraction:
    """Exact four-point hyperbolicity constant of the ball: the largest
    defect of the Gromov-product inequality over all vertex quadruples.
    A lower bound for the group's delta, exact for the ball."""
    if np.any(b.dmat < 0):
        raise DistanceUnknown("ball has unknown distances")
    D = np.ascontiguousarray(b.dmat.astype(np.int64))
    if len(b) < 4:
        return Fraction(0)
    scan = _four_point_scan()
    return Fraction(int(scan(D)), 2)


def is_local_quasigeodesic(path: Sequence[Word], b: CayleyBall, L: int, K, C) -> Tuple[bool, Optional[Tuple[int, int]]]:
    """Check every subpath of length <= L for the two-sided quasi-geodesic
    bounds; returns (True, None) or (False, first violating index pair)."""
    if L <= 0:
        raise ValidationError("L must be positive")
    K = Fraction(K)
    C = Fraction(C)
    if K < 1 or C < 0:
        raise ValidationError("need K >= 1 and C >= 0")
    idx = [b.vertex(w) for w in path]
    for i, j in zip(idx, idx[1:]):
        if int(b.dmat[i, j]) != 1:
            raise ValidationError("consecutive path vertices must be adjacent")
    n = len(idx)
    for i in range(n):
        for j in range(i + 1, min(n, i + L + 1)):
            d = int(b.dmat[idx[i], idx[j]])
            if d < 0:
                raise DistanceUnknown("path pair with unknown distance")
            gap = Fraction(j - i)
            if d > K * gap + C or d < gap / K - C:
                return False, (i, j)
    return True, None


def quasigeodesic_constants(path: Sequence[Word], b: CayleyBall) -> QiEstimate:
    """Measured constants of a path: K is the multiplicative optimum over
    index pairs, C the Pareto-minimal additive constant at that K."""
    idx = [b.vertex(w) for w in path]
    for i, j in zip(idx, idx[1:]):
        if int(b.dmat[i, j]) != 1:
            raise ValidationError("consecutive path vertices must be adjacent")
    n = len(idx)
    K = Fraction(1)
    for i in range(n):
        for j in range(i + 1, n):
            d = int(b.dmat[idx[i], idx[j]])
            if d < 0:
                raise DistanceUnknown("path pair with unknown distance")
            if d > 0:
                K = max(K, Fraction(j - i, d))
    C = Fraction(0)
    witness = None
    for i in range(n):
        for j in range(i + 1, n):
            d = int(b.dmat[idx[i], idx[j]])
            deficiency = Fraction(j - i) / K - d
            if deficiency > C:
                C = deficiency
                witness = (i, j)
    return QiEstimate(K=K, C=C, radius=len(path), witness=witness)
