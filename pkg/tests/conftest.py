"""Shared fixtures and brute-force oracles for the test suite."""

import random

import pytest

from corefold import (
    Presentation,
    Word,
    free_presentation,
    free_reduce,
    grid_presentation,
    hnn_example_presentation,
    surface_presentation,
)

ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def f2() -> Presentation:
    return free_presentation("a", "b")


@pytest.fixture(scope="session")
def f1() -> Presentation:
    return free_presentation("a")


@pytest.fixture(scope="session")
def surface() -> Presentation:
    return surface_presentation()


@pytest.fixture(scope="session")
def grid() -> Presentation:
    return grid_presentation()


@pytest.fixture(scope="session")
def hnn() -> Presentation:
    return hnn_example_presentation()


def random_reduced_word(rng: random.Random, p: Presentation, length: int) -> Word:
    letters = []
    options = p.signed_letters()
    while len(letters) < length:
        l = rng.choice(options)
        if letters and letters[-1] == (l[0], -l[1]):
            continue
        letters.append(l)
    return Word(letters)


def random_nontrivial_word(rng: random.Random, p: Presentation, max_length: int) -> Word:
    while True:
        w = random_reduced_word(rng, p, rng.randint(1, max_length))
        if len(w) > 0:
            return w


def greedy_shorten(gens):
    """Length-reducing Nielsen passes; preserves the generated subgroup."""
    gens = [free_reduce(g) for g in gens if len(g) > 0]
    changed = True
    while changed:
        changed = False
        for i in range(len(gens)):
            for j in range(len(gens)):
                if i == j:
                    continue
                for cand in (gens[i] * gens[j], gens[i] * ~gens[j],
                             gens[j] * gens[i], ~gens[j] * gens[i]):
                    if len(cand) < len(gens[i]):
                        gens[i] = cand
                        changed = True
                        break
        gens = [g for g in gens if len(g) > 0]
    return gens


def closure_membership_oracle(gens, word_length_cap: int):
    """Exact membership on words of length <= word_length_cap, by a
    breadth-first closure over products of the (greedily shortened)
    generators with a verified-stable intermediate length cap."""
    shortened = greedy_shorten(list(gens))
    if not shortened:
        return lambda w: len(free_reduce(w)) == 0

    def closure(cap):
        seen = {Word().letters: Word()}
        frontier = [Word()]
        while frontier:
            new = []
            for cur in frontier:
                for g in shortened:
                    for step in (g, ~g):
                        nxt = cur * step
                        if len(nxt) <= cap and nxt.letters not in seen:
                            seen[nxt.letters] = nxt
                            new.append(nxt)
            frontier = new
        return set(seen)

    cap = word_length_cap + max(len(g) for g in shortened) + 1
    small = closure(cap)
    bigger = closure(cap + 2)
    in_range_small = {w for w in small if len(w) <= word_length_cap}
    in_range_big = {w for w in bigger if len(w) <= word_length_cap}
    assert in_range_small == in_range_big, "closure oracle failed to stabilize"

    def member(w: Word) -> bool:
        w = free_reduce(w)
        if len(w) > word_length_cap:
            raise ValueError("word outside the oracle range")
        return w.letters in in_range_big or len(w) == 0

    return member


def all_reduced_words(p: Presentation, max_length: int):
    words = [Word()]
    frontier = [Word()]
    for _ in range(max_length):
        nxt = []
        for w in frontier:
            for l in p.signed_letters():
                if w.letters and w.letters[-1] == (l[0], -l[1]):
                    continue
                nxt.append(Word(w.letters + (l,)))
        words.extend(nxt)
        frontier = nxt
    return words


def trivial_closure_oracle(p: Presentation, cap: int):
    """All encoded words equal to the identity reachable with intermediate
    length <= cap by inserting relator shifts and freely reducing."""
    shifts = [w for _, w in p._shift_words()]
    seen = {""}
    frontier = [""]
    while frontier:
        new = []
        for cur in frontier:
            for rho in shifts:
                for i in range(len(cur) + 1):
                    nxt = p._free_reduce_str(cur[:i] + rho + cur[i:])
                    if len(nxt) <= cap and nxt not in seen:
                        seen.add(nxt)
                        new.append(nxt)
        frontier = new
    return seen


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE_RESULTS:
            status = "PASS" if ok else "FAIL"
            terminalreporter.write_line(f"{status}  {name}: {detail}")
