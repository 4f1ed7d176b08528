"""Words, presentations, and word-problem backends.

Group elements are finite words over a presentation's generators; a
letter is a ``(generator, sign)`` pair with sign +1 or -1.  Three
backends provide a decidable word problem:

* ``free`` -- free reduction; the normal form is the reduced word.
* ``dehn`` -- greedy leftmost-longest Dehn reduction.  Sound and
  complete for triviality on C'(1/6) presentations; reduced words are
  canonical only for the identity, so element equality goes through
  triviality of the quotient.
* ``hnn``  -- ascending HNN extension of a free group along an
  injective endomorphism, with Britton normal forms
  ``t^-i * u * t^j`` (``i, j >= 0``, ``u`` over the base generators,
  and no removable pinch, i.e. not both ``i, j > 0`` with ``u`` in the
  image of the endomorphism).

The textual grammar used everywhere (presentation files, the CLI) is:
words are sequences of generator names, inverse marked by a trailing
apostrophe, whitespace optional when generator names are single
characters (``a b' t`` and ``ab't`` denote the same word).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    EmptyRelators,
    InvalidPresentation,
    StableLetterInInput,
    UnknownGenerator,
)

Letter = Tuple[str, int]

BACKEND_FREE = "free"
BACKEND_DEHN = "dehn"
BACKEND_HNN = "hnn"
BACKENDS = (BACKEND_FREE, BACKEND_DEHN, BACKEND_HNN)


def _inv_letter(letter: Letter) -> Letter:
    gen, sign = letter
    return (gen, -sign)


class Word:
    """An immutable word; multiplication freely reduces."""

    __slots__ = ("letters",)

    def __init__(self, letters: Iterable[Letter] = ()):
        letters = tuple(letters)
        for gen, sign in letters:
            if sign not in (1, -1):
                raise ValueError(f"letter sign must be +-1, got {sign!r}")
        self.letters = letters

    @classmethod
    def identity(cls) -> "Word":
        return cls(())

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __eq__(self, other) -> bool:
        return isinstance(other, Word) and self.letters == other.letters

    def __hash__(self) -> int:
        return hash(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        return free_reduce_letters(self.letters + other.letters)

    def __invert__(self) -> "Word":
        return Word(_inv_letter(l) for l in reversed(self.letters))

    def __pow__(self, n: int) -> "Word":
        if n < 0:
            return (~self) ** (-n)
        out = Word.identity()
        for _ in range(n):
            out = out * self
        return out

    @property
    def is_reduced(self) -> bool:
        for a, b in zip(self.letters, self.letters[1:]):
            if a[0] == b[0] and a[1] == -b[1]:
                return False
        return True

    def reduced(self) -> "Word":
        return free_reduce(self)

    def display(self) -> str:
        if not self.letters:
            return "1"
        compact = all(len(gen) == 1 for gen, _ in self.letters)
        sep = "" if compact else " "
        return sep.join(gen + ("" if sign > 0 else "'") for gen, sign in self.letters)

    def __repr__(self) -> str:
        return f"Word({self.display()!r})"


def free_reduce_letters(letters: Sequence[Letter]) -> Word:
    stack: List[Letter] = []
    for letter in letters:
        if stack and stack[-1][0] == letter[0] and stack[-1][1] == -letter[1]:
            stack.pop()
        else:
            stack.append(letter)
    return Word(stack)


def free_reduce(w: Word) -> Word:
    """Unique reduced word equal to ``w`` in the free group; idempotent."""
    return free_reduce_letters(w.letters)


def word(text: str, generators: Sequence[str]) -> Word:
    """Parse a word; tokens split on whitespace, greedy longest-generator
    match inside a token, trailing apostrophe for the inverse."""
    letters: List[Letter] = []
    ordered = sorted(generators, key=len, reverse=True)
    for token in text.split():
        if token == "1":
            continue
        pos = 0
        while pos < len(token):
            for gen in ordered:
                if token.startswith(gen, pos):
                    pos += len(gen)
                    sign = 1
                    if pos < len(token) and token[pos] == "'":
                        sign = -1
                        pos += 1
                    letters.append((gen, sign))
                    break
            else:
                raise UnknownGenerator(
                    f"cannot parse {token!r} at position {pos} over generators {tuple(generators)}"
                )
    return Word(letters)


class Endomorphism:
    """An endomorphism of a free group, given on generators."""

    def __init__(self, images: Dict[str, Word]):
        self.images = {g: free_reduce(w) for g, w in images.items()}
        for g, w in self.images.items():
            for gen, _ in w.letters:
                if gen not in self.images:
                    raise InvalidPresentation(
                        f"image of {g!r} uses {gen!r} outside the endomorphism domain"
                    )

    @property
    def domain(self) -> Tuple[str, ...]:
        return tuple(self.images)

    def apply(self, w: Word) -> Word:
        out: List[Letter] = []
        for gen, sign in w.letters:
            if gen not in self.images:
                raise StableLetterInInput(f"{gen!r} is not in the endomorphism domain")
            img = self.images[gen]
            out.extend(img.letters if sign > 0 else (~img).letters)
        return free_reduce_letters(out)

    def __repr__(self) -> str:
        body = ", ".join(f"{g} -> {w.display()}" for g, w in self.images.items())
        return f"Endomorphism({body})"


def apply_endomorphism(phi: Endomorphism, w: Word, n: int) -> Word:
    """Reduced word phi^n(w); n = 0 is the identity."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = free_reduce(w)
    for gen, _ in out.letters:
        if gen not in phi.images:
            raise StableLetterInInput(f"{gen!r} is not in the endomorphism domain")
    for _ in range(n):
        out = phi.apply(out)
    return out


def _cyclically_reduced(w: Word) -> bool:
    if len(w) < 2 or not w.is_reduced:
        return w.is_reduced
    first, last = w.letters[0], w.letters[-1]
    return not (first[0] == last[0] and first[1] == -last[1])


class Presentation:
    """A finite presentation together with a word-problem backend."""

    def __init__(self, generators: Sequence[str], relators: Sequence[Word] = (), backend: str = BACKEND_FREE):
        self.generators = tuple(generators)
        if len(set(self.generators)) != len(self.generators):
            raise InvalidPresentation("duplicate generators")
        if not all(self.generators):
            raise InvalidPresentation("empty generator name")
        self.relators = tuple(free_reduce(r) for r in relators)
        if backend not in BACKENDS:
            raise InvalidPresentation(f"unknown backend {backend!r}")
        self.backend = backend
        self._gen_index = {g: i for i, g in enumerate(self.generators)}
        for r in self.relators:
            self._check_letters(r)

        self.stable_letter: Optional[str] = None
        self.endomorphism: Optional[Endomorphism] = None
        self._dehn_tables = None
        self._britton = None
        if backend == BACKEND_FREE:
            if self.relators:
                raise InvalidPresentation("free backend requires an empty relator list")
        elif backend == BACKEND_DEHN:
            if not self.relators:
                raise InvalidPresentation("dehn backend requires at least one relator")
            for r in self.relators:
                if not _cyclically_reduced(r):
                    raise InvalidPresentation(
                        f"dehn relator {r.display()!r} is not cyclically reduced"
                    )
        else:
            self._init_hnn()
            self._ensure_britton()

    # -- construction helpers -------------------------------------------------

    def _init_hnn(self):
        if not self.relators:
            raise InvalidPresentation("hnn backend requires relators t x t' phi(x)'")
        images: Dict[str, Word] = {}
        stable: Optional[str] = None
        for r in self.relators:
            if len(r) < 3:
                raise InvalidPresentation(f"relator {r.display()!r} is too short for an HNN relation")
            (t, ts), (x, xs), (t2, t2s) = r.letters[0], r.letters[1], r.letters[2]
            if not (ts == 1 and xs == 1 and t2 == t and t2s == -1 and x != t):
                raise InvalidPresentation(
                    f"relator {r.display()!r} is not of the form t x t' phi(x)'"
                )
            if stable is None:
                stable = t
            elif stable != t:
                raise InvalidPresentation("inconsistent stable letter across relators")
            if x in images:
                raise InvalidPresentation(f"two relators define the image of {x!r}")
            images[x] = ~Word(r.letters[3:])
        base = [g for g in self.generators if g != stable]
        if sorted(images) != sorted(base):
            raise InvalidPresentation("hnn backend needs exactly one relator per base generator")
        for g, img in images.items():
            for gen, _ in img.letters:
                if gen == stable:
                    raise InvalidPresentation("endomorphism image contains the stable letter")
            if len(img) == 0:
                raise InvalidPresentation(f"endomorphism image of {g!r} is trivial")
        self.stable_letter = stable
        self.base_generators = tuple(base)
        self.endomorphism = Endomorphism(images)

    def _check_letters(self, w: Word):
        for gen, _ in w.letters:
            if gen not in self._gen_index:
                raise UnknownGenerator(f"{gen!r} is not a generator of this presentation")

    # -- word utilities --------------------------------------------------------

    def word(self, text: str) -> Word:
        return word(text, self.generators)

    def letter_code(self, letter: Letter) -> int:
        gen, sign = letter
        if gen not in self._gen_index:
            raise UnknownGenerator(f"{gen!r} is not a generator of this presentation")
        return 2 * self._gen_index[gen] + (0 if sign > 0 else 1)

    def shortlex_key(self, w: Word):
        return (len(w), tuple(self.letter_code(l) for l in w.letters))

    def signed_letters(self) -> List[Letter]:
        out: List[Letter] = []
        for g in self.generators:
            out.append((g, 1))
            out.append((g, -1))
        return out

    # -- normal forms ----------------------------------------------------------

    def normal_form(self, w: Word) -> Word:
        self._check_letters(w)
        if self.backend == BACKEND_FREE:
            return free_reduce(w)
        if self.backend == BACKEND_DEHN:
            return self._decode(self._dehn_reduce(self._encode(free_reduce(w))))
        return self._britton_normal_form(w)

    def is_trivial(self, w: Word) -> bool:
        return len(self.normal_form(w)) == 0

    def equal(self, u: Word, v: Word) -> bool:
        """Element equality.  Exact for all three backends."""
        if self.backend == BACKEND_DEHN:
            return self.is_trivial(u * ~v)
        return self.normal_form(u) == self.normal_form(v)

    def canonical_key(self, w: Word) -> Tuple[Letter, ...]:
        """A hashable key with key(u) == key(v) iff u = v in the group."""
        if self.backend == BACKEND_DEHN:
            return self._decode(self._dehn_canonical(self._encode(free_reduce(w)))).letters
        return self.normal_form(w).letters

    # -- dehn backend ----------------------------------------------------------

    def _encode(self, w: Word) -> str:
        return "".join(chr(48 + self.letter_code(l)) for l in w.letters)

    def _decode(self, s: str) -> Word:
        letters = []
        for ch in s:
            code = ord(ch) - 48
            letters.append((self.generators[code // 2], 1 if code % 2 == 0 else -1))
        return Word(letters)

    @staticmethod
    def _inv_str(s: str) -> str:
        return "".join(chr(((ord(ch) - 48) ^ 1) + 48) for ch in reversed(s))

    @staticmethod
    def _free_reduce_str(s: str) -> str:
        stack: List[str] = []
        for ch in s:
            if stack and (ord(stack[-1]) - 48) ^ 1 == ord(ch) - 48:
                stack.pop()
            else:
                stack.append(ch)
        return "".join(stack)

    def _shift_words(self) -> List[Tuple[Tuple[int, int, int], str]]:
        """All cyclic shifts of all relators and their inverses, tagged by
        (relator index, sign, rotation); tags distinguish shifts that happen
        to coincide as words."""
        shifts = []
        for ri, r in enumerate(self.relators):
            for sign, base in ((1, self._encode(r)), (-1, self._inv_str(self._encode(r)))):
                for rot in range(len(base)):
                    shifts.append(((ri, sign, rot), base[rot:] + base[:rot]))
        return shifts

    def _ensure_dehn_tables(self):
        if self._dehn_tables is not None:
            return
        replace: Dict[str, str] = {}
        halfswap: Dict[str, str] = {}
        lengths = set()
        for _, rho in self._shift_words():
            n = len(rho)
            for k in range(n // 2 + 1, n + 1):
                u, v = rho[:k], rho[k:]
                repl = self._inv_str(v)
                prev = replace.get(u)
                # deterministic choice on clashes: keep the shorter, then lex-least
                if prev is None or (len(repl), repl) < (len(prev), prev):
                    replace[u] = repl
                lengths.add(k)
            if n % 2 == 0:
                k = n // 2
                u, v = rho[:k], rho[k:]
                swap = self._inv_str(v)
                if u != swap:
                    prev = halfswap.get(u)
                    if prev is None or swap < prev:
                        halfswap[u] = swap
        self._dehn_tables = (replace, halfswap, sorted(lengths, reverse=True))

    def _dehn_reduce(self, s: str) -> str:
        """Greedy reduction: leftmost position, longest replaceable subword."""
        self._ensure_dehn_tables()
        replace, _, lengths = self._dehn_tables
        s = self._free_reduce_str(s)
        while True:
            found = None
            for i in range(len(s)):
                for k in lengths:
                    if i + k > len(s):
                        continue
                    u = s[i : i + k]
                    if u in replace:
                        found = (i, k, replace[u])
                        break
                if found:
                    break
            if not found:
                return s
            i, k, repl = found
            s = self._free_reduce_str(s[:i] + repl + s[i + k :])

    def _dehn_canonical(self, s: str) -> str:
        """Shortlex-least word reachable from ``s`` by Dehn reductions and
        exact-half relator swaps.  Used as a per-element key; validated
        against the brute-force closure oracle in the tests."""
        self._ensure_dehn_tables()
        _, halfswap, _ = self._dehn_tables
        s = self._dehn_reduce(s)
        if not halfswap:
            return s
        half_len = len(next(iter(halfswap)))
        seen = {s}
        frontier = [s]
        while frontier:
            new = []
            for cur in frontier:
                for i in range(len(cur) - half_len + 1):
                    u = cur[i : i + half_len]
                    repl = halfswap.get(u)
                    if repl is None:
                        continue
                    nxt = self._free_reduce_str(cur[:i] + repl + cur[i + half_len :])
                    if len(nxt) < len(cur):
                        # a swap exposed a new cancellation: restart lower
                        return self._dehn_canonical(nxt)
                    if nxt not in seen:
                        seen.add(nxt)
                        new.append(nxt)
            frontier = new
        return min(seen)

    # -- hnn backend -----------------------------------------------------------

    def _ensure_britton(self):
        if self._britton is not None:
            return
        from .stallings import from_generators, fold

        phi = self.endomorphism
        base = self.base_generators
        image_words = [phi.images[g] for g in base]
        graph = fold(from_generators(image_words, base))
        if graph.rank() != len(base):
            raise InvalidPresentation(
                "hnn endomorphism is not injective (image subgroup has deficient rank)"
            )
        self._britton = (phi, graph, image_words)

    def _image_membership(self, u: Word) -> bool:
        self._ensure_britton()
        _, graph, _ = self._britton
        return graph.membership(u)

    def _phi_inverse(self, u: Word) -> Word:
        from .stallings import express_in_generators

        self._ensure_britton()
        phi, _, image_words = self._britton
        expr = express_in_generators(image_words, self.base_generators, u)
        if expr is None:
            raise ValueError("word is not in the endomorphism image")
        return free_reduce_letters(
            tuple((self.base_generators[idx], sign) for idx, sign in expr)
        )

    def _britton_triple(self, w: Word) -> Tuple[int, Word, int]:
        """Scan ``w`` maintaining the canonical triple (i, u, j)."""
        t = self.stable_letter
        phi = self.endomorphism
        i, u, j = 0, Word.identity(), 0
        for gen, sign in free_reduce(w).letters:
            if gen != t:
                letter_word = Word([(gen, sign)])
                u = u * apply_endomorphism(phi, letter_word, j)
            elif sign > 0:
                j += 1
                while i > 0 and j > 0 and self._image_membership(u):
                    u = self._phi_inverse(u)
                    i -= 1
                    j -= 1
            else:
                if j > 0:
                    j -= 1
                else:
                    i += 1
                    u = phi.apply(u)
        return i, u, j

    def _britton_normal_form(self, w: Word) -> Word:
        i, u, j = self._britton_triple(w)
        t = self.stable_letter
        letters = [(t, -1)] * i + list(u.letters) + [(t, 1)] * j
        return Word(letters)


def normal_form(p: Presentation, w: Word) -> Word:
    """Backend-dispatched normal form; empty iff ``w`` is trivial."""
    return p.normal_form(w)


def check_small_cancellation(p: Presentation, lam) -> bool:
    """C'(lambda) check: every piece (longest common prefix of two distinct
    cyclic shifts of relators or their inverses) is shorter than
    lambda * (shortest relator length)."""
    if not p.relators:
        raise EmptyRelators("presentation has no relators")
    for r in p.relators:
        if not _cyclically_reduced(r):
            raise InvalidPresentation(f"relator {r.display()!r} is not cyclically reduced")
    lam = Fraction(lam)
    shifts = p._shift_words()
    min_len = min(len(r) for r in p.relators)
    bound = lam * min_len
    max_piece = 0
    for a in range(len(shifts)):
        tag_a, wa = shifts[a]
        for b in range(a + 1, len(shifts)):
            tag_b, wb = shifts[b]
            if tag_a == tag_b:
                continue
            k = 0
            while k < len(wa) and k < len(wb) and wa[k] == wb[k]:
                k += 1
            if k > max_piece:
                max_piece = k
    return Fraction(max_piece) < bound


# -- presentation files --------------------------------------------------------


def parse_presentation(text: str) -> Presentation:
    """Parse the line-oriented grammar: ``gens:``, ``backend:``, ``rel:``
    lines; ``#`` starts a comment; unknown keys are rejected."""
    gens: Optional[Tuple[str, ...]] = None
    backend = BACKEND_FREE
    rel_texts: List[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise InvalidPresentation(f"malformed line {line!r}")
        key, _, value = line.partition(":")
        key = key.strip()
        value = value.strip()
        if key == "gens":
            gens = tuple(value.split())
        elif key == "backend":
            if value not in BACKENDS:
                raise InvalidPresentation(f"unknown backend {value!r}")
            backend = value
        elif key == "rel":
            rel_texts.append(value)
        else:
            raise InvalidPresentation(f"unknown key {key!r}")
    if gens is None:
        raise InvalidPresentation("missing 'gens:' line")
    relators = [word(t, gens) for t in rel_texts]
    return Presentation(gens, relators, backend)


def load_presentation(path) -> Presentation:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_presentation(fh.read())


# -- stock presentations ---------------------------------------------------------


def free_presentation(*generators: str) -> Presentation:
    return Presentation(generators or ("a", "b"))


def surface_presentation() -> Presentation:
    """Genus-2 surface group <a,b,c,d | [a,b][c,d]>; satisfies C'(1/6)."""
    gens = ("a", "b", "c", "d")
    rel = word("a b a' b' c d c' d'", gens)
    return Presentation(gens, [rel], BACKEND_DEHN)


def grid_presentation() -> Presentation:
    """Z^2 as the ascending HNN extension <a, t | t a t' = a>; Britton
    normal forms a^k t^m make the word problem exact, unlike greedy Dehn
    reduction on the commutator presentation."""
    gens = ("a", "t")
    rel = word("t a t' a'", gens)
    return Presentation(gens, [rel], BACKEND_HNN)


def hnn_example_presentation() -> Presentation:
    """The ascending HNN extension <a,b,t | tat'=ab, tbt'=ba>."""
    gens = ("a", "b", "t")
    rels = [word("t a t' b' a'", gens), word("t b t' a' b'", gens)]
    return Presentation(gens, rels, BACKEND_HNN)
