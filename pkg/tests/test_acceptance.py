"""Acceptance suite: one test per criterion, exact tolerances.

Each test appends a line to the terminal summary so the run prints one
pass/fail line per criterion.
"""

import random
import time
from fractions import Fraction

import pytest

from corefold import (
    Word,
    apply_endomorphism,
    apply_move,
    attach_basepoint,
    ball,
    build_core_map,
    check_small_cancellation,
    core_from_generators,
    core_morphism,
    displacement_bound_check,
    enumerate_bounded,
    estimate_delta,
    fold_to_minimal,
    hnn_chain,
    map_is_surjective,
    max_edges,
    measure_map_qi,
    measure_qi,
    reduce_chain,
    run_chain_free,
    search_improvement,
    size,
    size_bound_check,
    spanning_tree_basis,
    subgroup_graph,
    verify_strict,
)
from corefold.coremaps import evaluate_lift
from conftest import (
    ACCEPTANCE_RESULTS,
    all_reduced_words,
    closure_membership_oracle,
    random_nontrivial_word,
    random_reduced_word,
    trivial_closure_oracle,
)
from test_cores import coarse_graphs_max_edges

pytestmark = pytest.mark.acceptance


def record(name, ok, detail):
    ACCEPTANCE_RESULTS.append((name, ok, detail))
    assert ok, f"{name}: {detail}"


def random_tuple(rng, p, max_rank, max_len):
    return [random_nontrivial_word(rng, p, max_len) for _ in range(rng.randint(1, max_rank))]


def test_criterion_1_folding_oracle_equivalence(f2):
    rng = random.Random(101)
    start = time.monotonic()
    for _ in range(50):
        gens = random_tuple(rng, f2, 3, 6)
        classical = subgroup_graph(gens, f2.generators)
        core, log = fold_to_minimal(core_from_generators(f2, gens), depth=2)
        assert size(core) == len(classical.edges), [g.display() for g in gens]
        est = measure_qi(core, 8)
        assert (est.K, est.C) == (Fraction(1), Fraction(0))
    elapsed = time.monotonic() - start
    record(
        "criterion 1 (folding oracle equivalence)",
        elapsed < 30.0,
        f"50 tuples, sigma matches classical fold, qi = (1,0); {elapsed:.1f}s",
    )


def test_criterion_2_membership_oracle(f2):
    rng = random.Random(102)
    words_checked = 0
    for _ in range(10):
        gens = [random_nontrivial_word(rng, f2, 3) for _ in range(rng.randint(1, 2))]
        graph = subgroup_graph(gens, f2.generators)
        oracle = closure_membership_oracle(gens, 6)
        for _ in range(50):
            # products of at most 4 generators, freely reduced
            w = Word()
            for _ in range(rng.randint(0, 4)):
                g = rng.choice(gens)
                w = w * (g if rng.random() < 0.5 else ~g)
            if len(w) <= 6:
                assert graph.membership(w)
                assert oracle(w)
            words_checked += 1
        for _ in range(50):
            w = random_reduced_word(rng, f2, rng.randint(0, 6))
            assert graph.membership(w) == oracle(w)
            words_checked += 1
    record(
        "criterion 2 (membership oracle)",
        words_checked == 1000,
        f"{words_checked} random words agree with the closure oracle",
    )


def test_criterion_3_accf_desk_check(f2):
    rng = random.Random(103)
    start = time.monotonic()
    for _ in range(100):
        chain = _random_nested_chain(rng, f2, rank=rng.randint(1, 3), length=rng.randint(2, 6))
        reduced = reduce_chain(f2, chain)
        record_run = run_chain_free(f2, reduced.chain)
        assert all(record_run.surjective)
        for a, b in zip(record_run.edge_counts, record_run.edge_counts[1:]):
            assert b <= a
        assert 1 <= record_run.stabilization_index <= len(reduced.chain)
    elapsed = time.monotonic() - start
    record(
        "criterion 3 (ACCF desk check)",
        elapsed < 10.0,
        f"100 chains reduce to surjective, monotone, stabilizing runs; {elapsed:.1f}s",
    )


def _random_nested_chain(rng, p, rank, length):
    top = [random_nontrivial_word(rng, p, 4) for _ in range(rank)]
    chain = [top]
    for _ in range(length - 1):
        nxt = chain[0]
        gens = []
        for _ in range(rank):
            w = Word()
            for _ in range(rng.randint(1, 3)):
                pick = rng.choice(nxt)
                w = w * (pick if rng.random() < 0.5 else ~pick)
            gens.append(w if len(w) else nxt[0])
        chain.insert(0, gens)
    return chain


def test_criterion_4_hnn_strict_ascent(hnn):
    flags = verify_strict(hnn, hnn_chain(4))
    assert flags == [True] * 4
    for i in range(11):
        assert len(apply_endomorphism(hnn.endomorphism, hnn.word("a"), i)) == 2**i
    record(
        "criterion 4 (HNN strict ascent)",
        True,
        "hnn_chain(4) strictly ascends; |phi^i(a)| = 2^i for i <= 10",
    )


def test_criterion_5_delta_checks(f2, grid):
    for R in range(1, 6):
        assert estimate_delta(ball(f2, R)) == Fraction(0)
    values = {R: estimate_delta(ball(grid, R)) for R in (2, 3, 4)}
    assert values[2] <= values[3] <= values[4]
    assert values[2] < values[4]
    record(
        "criterion 5 (delta checks)",
        True,
        f"free balls are 0 up to R=5; grid deltas {values[2]},{values[3]},{values[4]} grow from R=2 to R=4",
    )


def test_criterion_6_dehn_backend_soundness(surface):
    assert check_small_cancellation(surface, Fraction(1, 6)) is True
    trivial = trivial_closure_oracle(surface, 8)
    checked = 0
    for w in all_reduced_words(surface, 6):
        assert surface.is_trivial(w) == (surface._encode(w) in trivial)
        checked += 1
    record(
        "criterion 6 (dehn backend soundness)",
        True,
        f"normal form agrees with the relator-closure oracle on {checked} words; C'(1/6) holds",
    )


def test_criterion_7_improvement_soundness(f2):
    rng = random.Random(107)
    cores_checked = 0
    moves_checked = 0
    while cores_checked < 200:
        gens = random_tuple(rng, f2, 3, 5)
        basis = subgroup_graph(gens, f2.generators).basis()
        if not basis:
            continue
        core = core_from_generators(f2, basis)
        if not core.immersion_violations():
            continue  # already folded; the criterion wants unfolded cores
        cores_checked += 1
        reference = subgroup_graph(basis, f2.generators)
        while True:
            move = None
            for eid in sorted(core.edges):
                move = search_improvement(core, eid, depth=2)
                if move:
                    break
            if move is None:
                break
            assert move.variant in ("identify_vertices", "replace_edge", "add_balloon")
            after = apply_move(core, move)
            assert size(after) < size(core)
            assert after.rank() == core.rank()
            after_graph = subgroup_graph(
                spanning_tree_basis(attach_basepoint(after)), f2.generators)
            for _ in range(100):
                w = random_reduced_word(rng, f2, rng.randint(0, 5))
                assert after_graph.membership(w) == reference.membership(w)
            moves_checked += 1
            core = after
    record(
        "criterion 7 (improvement soundness)",
        moves_checked > 0,
        f"200 cores, {moves_checked} moves: size drops, rank kept, membership preserved",
    )


def _minimal_based(p, gens):
    core, _ = fold_to_minimal(core_from_generators(p, gens), depth=2)
    return attach_basepoint(core)


def test_criterion_8_core_map_bounds(f2):
    rng = random.Random(108)
    pairs = [
        ([f2.word("aa")], [f2.word("a")]),
        ([f2.word("abab")], [f2.word("ab")]),
        ([f2.word("a")], [f2.word("a"), f2.word("b")]),
        ([f2.word("ab"), f2.word("ab'")], [f2.word("ab"), f2.word("ab'")]),
        ([f2.word("aa"), f2.word("bb")], [f2.word("a"), f2.word("b")]),
        ([f2.word("aab")], [f2.word("a"), f2.word("b")]),
    ]
    while len(pairs) < 20:
        big = [random_nontrivial_word(rng, f2, 3) for _ in range(2)]
        small = []
        for _ in range(rng.randint(1, 2)):
            w = Word()
            for _ in range(rng.randint(1, 2)):
                pick = rng.choice(big)
                w = w * (pick if rng.random() < 0.5 else ~pick)
            if len(w):
                small.append(w)
        if small:
            pairs.append((small, big))
    surjective_seen = 0
    for small, big in pairs:
        c1 = _minimal_based(f2, small)
        c2 = _minimal_based(f2, big)
        m = build_core_map(c1, c2, 4)
        # equivariance on all sampled generator translates
        for g in spanning_tree_basis(c1):
            for v in c1.vertices:
                anchor = c1.anchors[v]
                tv, ta = evaluate_lift(m, v, anchor)
                tv2, ta2 = evaluate_lift(m, v, f2.normal_form(g * anchor))
                assert tv2 == tv
                assert f2.canonical_key(ta2) == f2.canonical_key(f2.normal_form(g * ta))
        classical = core_morphism(
            subgroup_graph(small, f2.generators), subgroup_graph(big, f2.generators)
        ).is_surjective()
        assert map_is_surjective(m) == classical
        meas = measure_map_qi(m, 4)
        assert meas.within_predicted
        if classical:
            surjective_seen += 1
            assert size_bound_check(m)
    record(
        "criterion 8 (core-map bounds)",
        surjective_seen > 0,
        f"20 nested pairs: equivariant, surjectivity matches classical, within predicted constants"
        f" ({surjective_seen} surjective pairs pass the size bound)",
    )


def test_criterion_9_displacement(f2):
    rng = random.Random(109)
    for _ in range(50):
        gens = random_tuple(rng, f2, 3, 6)
        core = _minimal_based(f2, gens)
        assert displacement_bound_check(core, 1, 0)
    report = enumerate_bounded(f2, 3, 1)
    brute = set()
    for w in all_reduced_words(f2, 3):
        if len(w):
            brute.add(frozenset((w.letters, (~w).letters)))
    assert len(report.tuples) == len(brute)
    record(
        "criterion 9 (displacement)",
        True,
        f"bound holds on 50 folded cores; alpha=3 enumeration count {len(report.tuples)} matches brute force",
    )


def test_criterion_10_edge_bound():
    for r in (1, 2, 3):
        assert max_edges(r) == coarse_graphs_max_edges(r)
    record(
        "criterion 10 (edge bound)",
        True,
        "max_edges matches exhaustive coarse-graph enumeration for r in {1,2,3}",
    )
