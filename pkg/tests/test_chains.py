import random

import pytest

from corefold import (
    ChainRecord,
    NotNested,
    Word,
    apply_endomorphism,
    free_reduce,
    hnn_chain,
    reduce_chain,
    run_chain_free,
    subgroup_graph,
    verify_strict,
)
from conftest import random_nontrivial_word


class TestHnnChain:
    def test_step_zero(self, hnn):
        chain = hnn_chain(0)
        assert [w.display() for w in chain[0]] == ["a", "b"]

    def test_step_one_membership(self, hnn):
        chain = hnn_chain(1)
        assert [w.display() for w in chain[1]] == ["t'at", "t'bt"]
        # a lies in H_1 because a = t'(ab)t
        assert hnn.equal(hnn.word("a"), hnn.word("t' a b t"))

    def test_consecutive_containment(self, hnn):
        # H_i <= H_{i+1}: conjugating reduces to phi-image membership
        phi = hnn.endomorphism
        base = ("a", "b")
        image = subgroup_graph([phi.images[g] for g in base], base)
        for g in base:
            assert image.membership(phi.images[g])

    def test_growth_signal(self, hnn):
        for i in range(11):
            assert len(apply_endomorphism(hnn.endomorphism, hnn.word("a"), i)) == 2**i


class TestVerifyStrict:
    def test_hnn_all_strict(self, hnn):
        assert verify_strict(hnn, hnn_chain(4)) == [True] * 4

    def test_hnn_deeper(self, hnn):
        assert verify_strict(hnn, hnn_chain(6)) == [True] * 6

    def test_constant_chain_not_strict(self, f2):
        flags = verify_strict(f2, [[f2.word("a")], [f2.word("a")]])
        assert flags == [False]

    def test_rank_guard(self, f2):
        with pytest.raises(NotNested):
            verify_strict(f2, [[f2.word("a")], [f2.word("a"), f2.word("b")]])

    def test_not_nested_detected(self, f2):
        with pytest.raises(NotNested):
            verify_strict(f2, [[f2.word("a")], [f2.word("b")]])

    def test_free_strict_chain(self, f2):
        chain = [[f2.word("aa"), f2.word("b")], [f2.word("a"), f2.word("b")]]
        assert verify_strict(f2, chain) == [True]


class TestRunChain:
    def test_example(self, f2):
        chain = [[f2.word("aa"), f2.word("b")], [f2.word("a"), f2.word("b")], [f2.word("a"), f2.word("b")]]
        record = run_chain_free(f2, chain)
        assert record.surjective == [True, True]
        assert record.edge_counts == [3, 2, 2]
        assert record.stabilization_index == 2
        assert record.stabilized_before_end
        assert record.strict == [True, False]

    def test_constant_chain(self, f2):
        chain = [[f2.word("ab")], [f2.word("ab")]]
        record = run_chain_free(f2, chain)
        assert record.stabilization_index == 1

    def test_cardinality_guard(self, f2):
        with pytest.raises(NotNested):
            run_chain_free(f2, [[f2.word("a")], [f2.word("a"), f2.word("b")]])

    def test_json_round_trip(self, f2):
        chain = [[f2.word("aa"), f2.word("b")], [f2.word("a"), f2.word("b")]]
        record = run_chain_free(f2, chain)
        data = record.to_json()
        back = ChainRecord.from_json(f2, data)
        assert back.to_json() == data


class TestReduceChain:
    def test_petal_into_rose(self, f2):
        result = reduce_chain(f2, [[f2.word("a")], [f2.word("a"), f2.word("b")]])
        # rank mismatch aside, the reduced tail becomes the a-line twice
        assert [[w.display() for w in t] for t in result.chain] == [["a"], ["a"]]
        assert result.rank_history[0] == [1, 2]
        assert result.rank_history[-1] == [1, 1]
        record = run_chain_free(f2, result.chain)
        assert all(record.surjective)

    def test_already_surjective_unchanged(self, f2):
        chain = [[f2.word("aa"), f2.word("b")], [f2.word("a"), f2.word("b")]]
        result = reduce_chain(f2, chain)
        assert result.replacements == []
        assert [[w.display() for w in t] for t in result.chain] == [
            [w.display() for w in t] for t in chain
        ]

    def test_conjugate_example(self, f2):
        result = reduce_chain(f2, [[f2.word("aa")], [f2.word("a"), f2.word("bab'")]])
        assert [[w.display() for w in t] for t in result.chain] == [["aa"], ["a"]]

    def test_rank_strictly_drops_at_replacements(self, f2):
        rng = random.Random(61)
        for _ in range(20):
            big = [random_nontrivial_word(rng, f2, 3) for _ in range(2)]
            small = [free_reduce(big[0] * big[1]) or big[0]]
            small = [w for w in small if len(w)] or [big[0]]
            result = reduce_chain(f2, [small, big])
            for earlier, later in zip(result.rank_history, result.rank_history[1:]):
                assert sum(later) < sum(earlier)


class TestAscendingStabilization:
    def test_randomized_accf(self, f2):
        rng = random.Random(62)
        for _ in range(25):
            chain = _random_nested_chain(rng, f2, rank=2, length=rng.randint(2, 5))
            result = reduce_chain(f2, chain)
            record = run_chain_free(f2, result.chain)
            assert all(record.surjective)
            for a, b in zip(record.edge_counts, record.edge_counts[1:]):
                assert b <= a
            assert 1 <= record.stabilization_index <= len(result.chain)


def _random_nested_chain(rng, p, rank, length):
    """Build a nested chain downward: each group is generated by products
    of the next one's generators."""
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
            gens.append(w)
        gens = [g if len(g) else nxt[0] for g in gens]
        chain.insert(0, gens)
    return chain
