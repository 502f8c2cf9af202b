"""Noncommutative words over projective measurement letters.

Letters are the projectors ``A(a|x)`` and ``B(b|y)``.  A word is kept in a
canonical form obtained from three rewriting rules:

* ``P P -> P`` for identical adjacent letters,
* adjacent letters of one measurement with different outcomes multiply to zero,
* optionally, Alice letters are moved in front of Bob letters (the parties commute).

POVM completeness is *not* a rewriting rule; the relaxation builders impose it
as linear constraints.  :func:`complete_expand` provides the normal form modulo
completeness when it is needed (certificate verification).
"""
from __future__ import annotations

from itertools import product as _product
from typing import Iterable, NamedTuple, Sequence

from .errors import IndexOutOfBounds

ALICE = 0
BOB = 1
_PARTY_NAMES = {ALICE: "A", BOB: "B"}


class Letter(NamedTuple):
    """Projector with the given outcome of measurement ``input`` of ``party``.

    Tuple order is ``(party, input, outcome)``, which is also the letter order.
    """

    party: int
    input: int
    outcome: int

    def __str__(self):
        return f"{_PARTY_NAMES[self.party]}({self.outcome}|{self.input})"


class Word(NamedTuple):
    letters: tuple = ()
    is_zero: bool = False

    def __len__(self):  # degree of the word
        return len(self.letters)

    @property
    def degree(self) -> int:
        return len(self.letters)

    def __str__(self):
        return render(self)

    def alice_part(self) -> tuple:
        return tuple(l for l in self.letters if l.party == ALICE)

    def bob_part(self) -> tuple:
        return tuple(l for l in self.letters if l.party == BOB)


IDENTITY = Word((), False)
ZERO = Word((), True)


def A(a: int, x: int) -> Letter:
    return Letter(ALICE, x, a)


def B(b: int, y: int) -> Letter:
    return Letter(BOB, y, b)


def word(*letters: Letter, commute_parties: bool = False) -> Word:
    """Convenience constructor: canonical word of the given letters."""
    return canonicalize(letters, commute_parties)


# --------------------------------------------------------------------------
# rewriting
# --------------------------------------------------------------------------

def _check_bounds(letters: Iterable[Letter], scenario) -> None:
    for l in letters:
        if l.party == ALICE:
            n_in, n_out = scenario.nX, scenario.nA
        elif l.party == BOB:
            n_in, n_out = scenario.nY, scenario.nB
        else:
            raise IndexOutOfBounds(f"unknown party {l.party}")
        if not (0 <= l.input < n_in and 0 <= l.outcome < n_out):
            raise IndexOutOfBounds(f"letter {l} outside scenario {scenario}")


def _reduce(letters: Iterable[Letter]):
    """Stack reduction of a letter sequence; ``None`` encodes the zero word."""
    out: list = []
    for l in letters:
        if out:
            top = out[-1]
            if top == l:
                continue
            if top.party == l.party and top.input == l.input:
                return None
        out.append(l)
    return tuple(out)


def _sort_parties(letters: Sequence[Letter]) -> tuple:
    return tuple(l for l in letters if l.party == ALICE) + tuple(l for l in letters if l.party != ALICE)


def canonicalize(raw: Iterable[Letter], commute_parties: bool = False, scenario=None) -> Word:
    """Canonical form of a raw product of letters."""
    raw = tuple(Letter(*l) for l in raw)
    if scenario is not None:
        _check_bounds(raw, scenario)
    if commute_parties:
        raw = _sort_parties(raw)
    reduced = _reduce(raw)
    if reduced is None:
        return ZERO
    return Word(reduced, False)


def _join(left: tuple, right: tuple):
    """Concatenate two canonical single-run sequences; only the junction can reduce."""
    if left and right:
        l, r = left[-1], right[0]
        if l == r:
            return left + right[1:]
        if l.party == r.party and l.input == r.input:
            return None
    return left + right


def _split(letters: tuple):
    k = 0
    for l in letters:
        if l.party != ALICE:
            break
        k += 1
    return letters[:k], letters[k:]


def mul_letters(u: tuple, v: tuple, commute_parties: bool):
    """Canonical product of two canonical letter tuples (``None`` for zero)."""
    if not commute_parties:
        return _join(u, v)
    ua, ub = _split(u)
    va, vb = _split(v)
    a = _join(ua, va)
    if a is None:
        return None
    b = _join(ub, vb)
    if b is None:
        return None
    return a + b


def dot_letters(u: tuple, v: tuple, commute_parties: bool):
    """Canonical form of ``u* v`` for canonical letter tuples."""
    if not commute_parties:
        return _join(u[::-1], v)
    ua, ub = _split(u)
    va, vb = _split(v)
    a = _join(ua[::-1], va)
    if a is None:
        return None
    b = _join(ub[::-1], vb)
    if b is None:
        return None
    return a + b


def multiply(w1: Word, w2: Word, commute_parties: bool = False) -> Word:
    if w1.is_zero or w2.is_zero:
        return ZERO
    return canonicalize(w1.letters + w2.letters, commute_parties)


def adjoint(w: Word, commute_parties: bool = False) -> Word:
    if w.is_zero:
        return ZERO
    return canonicalize(w.letters[::-1], commute_parties)


# --------------------------------------------------------------------------
# bases
# --------------------------------------------------------------------------

def letters_of(scenario, parties: Iterable[int]) -> list[Letter]:
    out = []
    for party in sorted(set(parties)):
        n_in, n_out = (scenario.nX, scenario.nA) if party == ALICE else (scenario.nY, scenario.nB)
        out.extend(Letter(party, i, o) for i in range(n_in) for o in range(n_out))
    return out


class WordBasis:
    """Ordered list of distinct nonzero canonical words with reverse lookup."""

    def __init__(self, words: Sequence[Word], degree: int):
        self.words = list(words)
        self.degree = degree
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def __getitem__(self, i):
        return self.words[i]

    def __contains__(self, w):
        return w in self.index

    def truncated(self, degree: int) -> "WordBasis":
        return WordBasis([w for w in self.words if w.degree <= degree], degree)

    def positions(self, degree: int) -> list[int]:
        """Indices of the words of degree at most ``degree``."""
        return [i for i, w in enumerate(self.words) if w.degree <= degree]

    def labels(self) -> list[str]:
        return [render(w) for w in self.words]


def enumerate_basis(scenario, parties: Iterable[int], degree: int,
                    commute_parties: bool = False) -> WordBasis:
    """All canonical words of length <= ``degree`` over the chosen parties.

    Sorted by length, then lexicographically by ``(party, input, outcome)``.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    alphabet = letters_of(scenario, parties)
    layers = [[()]]
    for k in range(1, degree + 1):
        found = set()
        for w in layers[-1]:
            for l in alphabet:
                p = mul_letters(w, (l,), commute_parties)
                if p is not None and len(p) == k:
                    found.add(p)
        layers.append(sorted(found))
    words = [Word(w, False) for layer in layers for w in layer]
    return WordBasis(words, degree)


# --------------------------------------------------------------------------
# completeness normal form
# --------------------------------------------------------------------------

def _last_outcome(l: Letter, scenario) -> int:
    return (scenario.nA if l.party == ALICE else scenario.nB) - 1


def complete_expand(letters: tuple, scenario, commute_parties: bool = False,
                    parties: Iterable[int] = (ALICE, BOB), _memo=None) -> dict:
    """Rewrite a canonical word in the basis of words without last-outcome letters.

    Every letter ``X(last|i)`` of a party in ``parties`` is replaced by
    ``1 - sum_{o < last} X(o|i)`` and the result re-canonicalized, recursively.
    Returns ``{letters: coefficient}``.
    """
    parties = frozenset(parties)
    memo = {} if _memo is None else _memo
    return _expand(letters, scenario, commute_parties, parties, memo)


def _expand(letters, scenario, commute, parties, memo):
    hit = memo.get(letters)
    if hit is not None:
        return hit
    pos = -1
    for i, l in enumerate(letters):
        if l.party in parties and l.outcome == _last_outcome(l, scenario):
            pos = i
            break
    if pos < 0:
        out = {letters: 1.0}
        memo[letters] = out
        return out
    l = letters[pos]
    left, right = letters[:pos], letters[pos + 1:]
    acc: dict = {}

    def add(word_letters, coef):
        if word_letters is None:
            return
        for k, c in _expand(word_letters, scenario, commute, parties, memo).items():
            acc[k] = acc.get(k, 0.0) + coef * c

    add(mul_letters(left, right, commute), 1.0)
    for o in range(_last_outcome(l, scenario)):
        add(_reduce_concat(left, Letter(l.party, l.input, o), right, commute), -1.0)
    out = {k: c for k, c in acc.items() if c != 0.0}
    memo[letters] = out
    return out


def _reduce_concat(left, letter, right, commute):
    mid = mul_letters(left, (letter,), commute)
    if mid is None:
        return None
    return mul_letters(mid, right, commute)


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

def render(w: Word) -> str:
    if w.is_zero:
        return "0"
    if not w.letters:
        return "1"
    return "·".join(str(l) for l in w.letters)


def parse_word(text: str, commute_parties: bool = False) -> Word:
    """Inverse of :func:`render`."""
    text = text.strip()
    if text == "0":
        return ZERO
    if text == "1":
        return IDENTITY
    letters = []
    for tok in text.split("·"):
        tok = tok.strip()
        party = {"A": ALICE, "B": BOB}[tok[0]]
        outcome, inp = tok[2:-1].split("|")
        letters.append(Letter(party, int(inp), int(outcome)))
    return canonicalize(letters, commute_parties)


def all_words(scenario, parties, max_degree, commute_parties=False):
    """Every canonical word (as letter tuples) of length <= ``max_degree``."""
    return [w.letters for w in enumerate_basis(scenario, parties, max_degree, commute_parties)]


def raw_products(alphabet, length):
    """All raw letter sequences of a given length (used by brute-force oracles)."""
    return _product(alphabet, repeat=length)
