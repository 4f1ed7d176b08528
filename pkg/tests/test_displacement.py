import random

import pytest

from corefold import (
    BudgetExceeded,
    NotBased,
    attach_basepoint,
    core_from_generators,
    displacement_bound_check,
    enumerate_bounded,
    fold_to_minimal,
    size,
    spanning_tree_basis,
    tau,
)
from corefold.displacement import basis_loops
from conftest import all_reduced_words, random_nontrivial_word


def minimal_based_core(p, gens):
    core, _ = fold_to_minimal(core_from_generators(p, gens))
    return attach_basepoint(core)


class TestTau:
    def test_free_example(self, f2):
        assert tau(f2, [f2.word("a"), f2.word("ab")]) == 3

    def test_empty(self, f2):
        assert tau(f2, []) == 0

    def test_hnn_letters(self, hnn):
        assert tau(hnn, [hnn.word("a"), hnn.word("b")]) == 2

    def test_uses_geodesic_lengths(self, hnn):
        # abba = t^2 a t^-2 is shorter than its base spelling
        assert tau(hnn, [hnn.word("abba")]) <= 5


def cyclic_subgroup_count(p, alpha):
    """Independent count of distinct <w> over nontrivial |w| <= alpha:
    <v> = <w> in a free group iff v = w or v = w^-1."""
    words = [w for w in all_reduced_words(p, alpha) if len(w)]
    seen = set()
    for w in words:
        pair = frozenset((w.letters, (~w).letters))
        seen.add(pair)
    return len(seen)


class TestEnumerateBounded:
    def test_alpha_one(self, f2):
        report = enumerate_bounded(f2, 1, 1)
        assert report.dedup == "folded-core"
        assert len(report.tuples) == 2

    def test_alpha_zero(self, f2):
        assert enumerate_bounded(f2, 0, 1).tuples == []

    def test_rank_one_line(self, f1):
        report = enumerate_bounded(f1, 2, 1)
        displayed = sorted(",".join(w.display() for w in t.words) for t in report.tuples)
        assert displayed == ["a", "aa"]

    def test_matches_cyclic_count(self, f2):
        for alpha in (1, 2, 3):
            report = enumerate_bounded(f2, alpha, 1)
            assert len(report.tuples) == cyclic_subgroup_count(f2, alpha)

    def test_budget_guard(self, f2):
        with pytest.raises(BudgetExceeded):
            enumerate_bounded(f2, 3, 3, budget=100)

    def test_weaker_dedup_reported_elsewhere(self, grid):
        report = enumerate_bounded(grid, 1, 1)
        assert report.dedup == "normal-form-tuple"
        # a and a' are distinct tuples under the weaker dedup
        assert len(report.tuples) == 4


class TestSpanningTreeBasis:
    def test_rose(self, f2):
        core = minimal_based_core(f2, [f2.word("a"), f2.word("b")])
        assert sorted(w.display() for w in spanning_tree_basis(core)) == ["a", "b"]

    def test_folded_pair(self, f2):
        core = minimal_based_core(f2, [f2.word("ab"), f2.word("ab'")])
        basis = {w.display() for w in spanning_tree_basis(core)}
        assert basis == {"ab", "ab'"}

    def test_subdivided_loop(self, f1):
        core = minimal_based_core(f1, [f1.word("aa")])
        assert [w.display() for w in spanning_tree_basis(core)] == ["aa"]

    def test_requires_basepoint(self, f2):
        core, _ = fold_to_minimal(core_from_generators(f2, [f2.word("a")]))
        unbased = type(core)(f2, core.anchors, core.edges, None)
        with pytest.raises(NotBased):
            spanning_tree_basis(unbased)

    def test_loops_cross_each_edge_at_most_twice(self, f2):
        rng = random.Random(51)
        for _ in range(30):
            gens = [random_nontrivial_word(rng, f2, 5) for _ in range(rng.randint(1, 3))]
            core = minimal_based_core(f2, gens)
            sigma = size(core)
            for _, graph_length in basis_loops(core):
                assert graph_length <= 2 * sigma


class TestBoundCheck:
    def test_folded_example(self, f2):
        core = minimal_based_core(f2, [f2.word("ab"), f2.word("ab'")])
        basis = spanning_tree_basis(core)
        assert tau(f2, basis) == 4
        assert displacement_bound_check(core, 1, 0)

    def test_single_loop(self, f1):
        core = minimal_based_core(f1, [f1.word("a")])
        assert displacement_bound_check(core, 1, 0)

    def test_property_sweep(self, f2):
        rng = random.Random(52)
        for _ in range(50):
            gens = [random_nontrivial_word(rng, f2, 6) for _ in range(rng.randint(1, 3))]
            core = minimal_based_core(f2, gens)
            assert displacement_bound_check(core, 1, 0)
