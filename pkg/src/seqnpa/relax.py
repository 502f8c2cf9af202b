"""Moment relaxations of Bell games as block semidefinite programs.

Three builders are provided:

* :func:`build_sequential`: one block ``Theta(a|x)`` per Alice outcome/input,
  indexed by Bob words, tied together by the strongly no-signaling condition;
* :func:`build_standard`: the usual moment matrix ``Gamma`` over words in both
  parties' letters, with commuting parties;
* :func:`build_modified`: like the standard one, but Alice's completeness only
  holds when sandwiched between Bob words.

Representation
--------------
Every cell ``(i, j)`` of a block carries the canonical word ``w_i* w_j``.  Cells
of one *group* of blocks that carry the same word hold the same moment, so a
moment is identified by the pair ``(group, word)``.  In the sequential problem
each ``Theta(a|x)`` is its own group; in the standard problem there is a single
group.

Completeness relations ``sum_b X(b|i) = 1`` inside words are kept in
*rewriting form*: for each word with a last-outcome letter (of a party whose
completeness is imposed) the first such letter is substituted, which expresses
the moment through words with fewer last-outcome letters.  The words without
such letters are the normal-form words; every moment is a fixed linear
combination of normal-form moments.  All remaining linear relations
(no-signaling, normalization, weak completeness, user constraints) are stored
as explicit :class:`LinearConstraint` objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import LevelTooSmall, SchemaError
from .ncalgebra import (
    ALICE,
    BOB,
    Letter,
    Word,
    WordBasis,
    _reduce_concat,
    _split,
    dot_letters,
    enumerate_basis,
    mul_letters,
)
from .scenario import BellFunctional, Scenario

__all__ = [
    "LinearConstraint",
    "Block",
    "Group",
    "WordSystem",
    "MomentProblem",
    "build_sequential",
    "build_standard",
    "build_modified",
    "build_custom",
]

ZERO_INDEX = -1  # cell_word entry of cells whose word product vanishes


@dataclass(frozen=True)
class LinearConstraint:
    """``sum coeffs[m] * L(m) == rhs`` over moment keys ``m = (group, letters)``.

    ``cells`` optionally records the block cells the relation was written on,
    as ``((block, i, j), coefficient)`` pairs; it is informational only.
    """

    coeffs: Mapping
    rhs: float
    kind: str
    cells: tuple = ()


class WordSystem:
    """Interned words of one algebra with their completeness rewriting rules.

    Parameters
    ----------
    scenario : Scenario
    commute_parties : bool
        Whether Alice and Bob letters commute.
    reduce_parties : iterable of int
        Parties whose completeness relation is imposed (as a rewriting rule).
    """

    def __init__(self, scenario: Scenario, commute_parties: bool, reduce_parties: Iterable[int]):
        self.scenario = scenario
        self.commute_parties = bool(commute_parties)
        self.reduce_parties = frozenset(reduce_parties)
        self.words: list[tuple] = []
        self.index: dict[tuple, int] = {}
        self._closed = False
        self._expansion = None

    def __len__(self):
        return len(self.words)

    def key(self, letters: tuple) -> tuple:
        """Representative of ``{W, W*}``; real symmetric moment matrices identify the two."""
        letters = tuple(letters)
        if self.commute_parties:
            k = 0
            while k < len(letters) and letters[k].party == ALICE:
                k += 1
            adj = letters[:k][::-1] + letters[k:][::-1]
        else:
            adj = letters[::-1]
        return min(letters, adj)

    def lookup(self, letters: tuple) -> int:
        """Index of a (canonical) word, raising ``KeyError`` if it is not interned."""
        return self.index[self.key(letters)]

    def intern(self, letters: tuple) -> int:
        letters = self.key(letters)
        idx = self.index.get(letters)
        if idx is None:
            if self._closed:
                raise RuntimeError("word system is already closed")
            idx = len(self.words)
            self.index[letters] = idx
            self.words.append(letters)
        return idx

    def _last(self, party: int) -> int:
        s = self.scenario
        return (s.nA if party == ALICE else s.nB) - 1

    def _pivot(self, letters: tuple) -> int:
        for pos, l in enumerate(letters):
            if l.party in self.reduce_parties and l.outcome == self._last(l.party):
                return pos
        return -1

    def rule(self, letters: tuple):
        """Rewriting of a word: ``None`` for normal-form words, else
        ``(removed, [substituted...])`` as letter tuples (``None`` = zero word)."""
        pos = self._pivot(letters)
        if pos < 0:
            return None
        l = letters[pos]
        left, right = letters[:pos], letters[pos + 1:]
        removed = mul_letters(left, right, self.commute_parties)
        subs = [_reduce_concat(left, Letter(l.party, l.input, o), right, self.commute_parties)
                for o in range(self._last(l.party))]
        return removed, subs

    def close(self) -> None:
        """Intern every word reachable through the rewriting rules and build index arrays."""
        if self._closed:
            return
        width = max(self.scenario.nA, self.scenario.nB) - 1
        removed, subs, is_nf = [], [], []
        i = 0
        while i < len(self.words):
            r = self.rule(self.words[i])
            if r is None:
                is_nf.append(True)
                removed.append(ZERO_INDEX)
                subs.append([ZERO_INDEX] * width)
            else:
                is_nf.append(False)
                rem, sub = r
                removed.append(ZERO_INDEX if rem is None else self.intern(rem))
                row = [ZERO_INDEX if s is None else self.intern(s) for s in sub]
                subs.append(row + [ZERO_INDEX] * (width - len(row)))
            i += 1
        self._closed = True
        self.removed = np.asarray(removed, dtype=np.int64)
        self.subs = np.asarray(subs, dtype=np.int64).reshape(len(self.words), width)
        self.level = np.array([self._count_last(w) for w in self.words], dtype=np.int64)
        self.normal_form = np.flatnonzero(np.asarray(is_nf, dtype=bool))
        self.nf_position = np.full(len(self.words), -1, dtype=np.int64)
        self.nf_position[self.normal_form] = np.arange(len(self.normal_form))
        top = int(self.level.max(initial=0))
        self._order = [np.flatnonzero(self.level == k) for k in range(1, top + 1)]

    def _count_last(self, letters: tuple) -> int:
        return sum(1 for l in letters
                   if l.party in self.reduce_parties and l.outcome == self._last(l.party))

    @property
    def n_normal(self) -> int:
        return len(self.normal_form)

    def evaluate(self, nf_values: np.ndarray) -> np.ndarray:
        """Values of all words given values of the normal-form words.

        ``nf_values`` has shape ``(n_normal, k)``; the result has shape
        ``(len(words) + 1, k)`` whose last row is the zero word (value 0), so
        that index ``-1`` can be used for vanishing cells.
        """
        nf_values = np.asarray(nf_values, dtype=float)
        squeeze = nf_values.ndim == 1
        if squeeze:
            nf_values = nf_values[:, None]
        out = np.zeros((len(self.words) + 1, nf_values.shape[1]))
        out[self.normal_form] = nf_values
        for rows in self._order:
            acc = out[self.removed[rows]].copy()
            for col in range(self.subs.shape[1]):
                acc -= out[self.subs[rows, col]]
            out[rows] = acc
        return out[:, 0] if squeeze else out

    def expansion(self) -> sp.csr_matrix:
        """Sparse matrix ``E`` with ``L(word_i) = sum_j E[i, j] L(nf_j)``."""
        if self._expansion is not None:
            return self._expansion
        n, k = len(self.words), self.n_normal
        # rows are produced level by level; row 0 stands for the zero word
        pos = np.full(n + 1, -1, dtype=np.int64)
        pos[n] = 0
        pos[self.normal_form] = 1 + np.arange(k)
        current = sp.vstack([sp.csr_matrix((1, k)), sp.identity(k, format="csr")], format="csr")
        count = 1 + k
        for rows in self._order:
            acc = current[pos[self.removed[rows] % (n + 1)]]
            for col in range(self.subs.shape[1]):
                acc = acc - current[pos[self.subs[rows, col] % (n + 1)]]
            pos[rows] = count + np.arange(len(rows))
            count += len(rows)
            current = sp.vstack([current, acc], format="csr")
        E = current[pos[:n]].tocsr()
        E.eliminate_zeros()
        self._expansion = E
        return E

    def expand(self, idx: int) -> dict:
        """Normal-form expansion of one word as ``{nf_position: coefficient}``."""
        if idx == ZERO_INDEX:
            return {}
        row = self.expansion().getrow(idx)
        return {int(j): float(c) for j, c in zip(row.indices, row.data) if c != 0.0}


@dataclass
class Group:
    """A set of blocks sharing one moment functional."""

    label: str
    system: WordSystem


@dataclass
class Block:
    label: str
    basis: WordBasis
    group: int
    cell_word: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.basis)


@dataclass
class MomentProblem:
    """Block SDP in moment form (see module docstring)."""

    scenario: Scenario
    kind: str
    level: int
    blocks: list
    groups: list
    constraints: list
    objective: dict
    objective_constant: float = 0.0
    functional: BellFunctional | None = None
    meta: dict = field(default_factory=dict)

    # -- basic lookups ---------------------------------------------------
    @property
    def block_sizes(self) -> list[int]:
        return [b.size for b in self.blocks]

    def block_index(self, label: str) -> int:
        for k, b in enumerate(self.blocks):
            if b.label == label:
                return k
        raise KeyError(label)

    def moment_of(self, block: int, i: int, j: int):
        """Moment key ``(group, letters)`` of a cell, or ``None`` for a vanishing cell."""
        b = self.blocks[block]
        idx = int(b.cell_word[i, j])
        if idx == ZERO_INDEX:
            return None
        return (b.group, self.groups[b.group].system.words[idx])

    def cell(self, block: int, row_word, col_word) -> tuple[int, int, int]:
        b = self.blocks[block]
        r = row_word if isinstance(row_word, Word) else Word(tuple(row_word), False)
        c = col_word if isinstance(col_word, Word) else Word(tuple(col_word), False)
        return block, b.basis.index[r], b.basis.index[c]

    def eq_classes(self) -> dict:
        """Cell identification classes: moment key -> list of upper-triangle cells."""
        out: dict = {}
        for k, b in enumerate(self.blocks):
            words = self.groups[b.group].system.words
            iu, ju = np.triu_indices(b.size)
            for i, j, w in zip(iu, ju, b.cell_word[iu, ju]):
                if w == ZERO_INDEX:
                    continue
                out.setdefault((b.group, words[w]), []).append((k, int(i), int(j)))
        return out

    def completeness_relations(self):
        """Yield the rewriting rules as explicit constraints (kind ``completeness``)."""
        for g, group in enumerate(self.groups):
            sysw = group.system
            for letters in sysw.words:
                r = sysw.rule(letters)
                if r is None:
                    continue
                rem, subs = r
                coeffs = {(g, letters): 1.0}
                if rem is not None:
                    k = (g, sysw.key(rem))
                    coeffs[k] = coeffs.get(k, 0.0) - 1.0
                for s in subs:
                    if s is not None:
                        k = (g, sysw.key(s))
                        coeffs[k] = coeffs.get(k, 0.0) + 1.0
                yield LinearConstraint(coeffs, 0.0, "completeness")

    def no_signaling_cells(self) -> list:
        """Cell-level view of the strongly no-signaling relations.

        One entry ``(x, i, j)`` per input ``x != 0`` and upper-triangle cell,
        standing for ``sum_a Theta(a|x)[i, j] == sum_a Theta(a|0)[i, j]``.
        """
        if self.kind != "sequential":
            return []
        size = self.blocks[0].size
        iu, ju = np.triu_indices(size)
        return [(x, int(i), int(j)) for x in range(1, self.scenario.nX) for i, j in zip(iu, ju)]

    def objective_cells(self) -> dict:
        """Objective as ``{(block, i, j): coefficient}`` on the probability cells."""
        return dict(self.meta.get("objective_cells", {}))

    def probability_cell(self, a: int, b: int, x: int, y: int) -> tuple[int, int, int]:
        return self.meta["probability_cells"][(a, b, x, y)]

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "level": self.level,
            "blocks": [(b.label, b.size) for b in self.blocks],
            "n_constraints": len(self.constraints),
            "n_moments": sum(len(g.system) for g in self.groups),
        }


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _cell_words(basis: WordBasis, system: WordSystem) -> np.ndarray:
    n = len(basis)
    out = np.empty((n, n), dtype=np.int64)
    letters = [w.letters for w in basis]
    commute = system.commute_parties
    for i in range(n):
        wi = letters[i]
        for j in range(i, n):
            p = dot_letters(wi, letters[j], commute)
            k = ZERO_INDEX if p is None else system.intern(p)
            out[i, j] = k
            out[j, i] = k
    out.setflags(write=False)
    return out


def _check_level(n: int) -> None:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise SchemaError(f"level must be an integer, got {n!r}")
    if n < 1:
        raise LevelTooSmall(f"level must be >= 1, got {n}")


def _normal_words(system: WordSystem, max_degree: int | None = None) -> list[tuple]:
    out = [system.words[k] for k in system.normal_form]
    if max_degree is not None:
        out = [w for w in out if len(w) <= max_degree]
    return out


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------

def build_sequential(f: BellFunctional, n: int) -> MomentProblem:
    """Sequential relaxation at level ``n``.

    Blocks are ordered by input first, then outcome: ``Theta(0|0), Theta(1|0), ...``.
    """
    _check_level(n)
    s = f.scenario
    basis = enumerate_basis(s, [BOB], n)
    system = WordSystem(s, commute_parties=False, reduce_parties=[BOB])
    cell_word = _cell_words(basis, system)
    system.close()

    groups, blocks, gid = [], [], {}
    for x in range(s.nX):
        for a in range(s.nA):
            label = f"Theta({a}|{x})"
            gid[(a, x)] = len(groups)
            groups.append(Group(label, system))
            blocks.append(Block(label, basis, gid[(a, x)], cell_word))

    constraints = []
    one = ()
    # normalization sum_a Theta(a|0)[1, 1] = 1
    constraints.append(LinearConstraint(
        {(gid[(a, 0)], one): 1.0 for a in range(s.nA)}, 1.0, "normalization",
        tuple(((gid[(a, 0)], 0, 0), 1.0) for a in range(s.nA))))
    # strongly no-signaling; imposing it on normal-form words is equivalent to
    # imposing it on every moment because both sides obey the same rewriting
    for x in range(1, s.nX):
        for w in _normal_words(system):
            coeffs = {}
            for a in range(s.nA):
                coeffs[(gid[(a, x)], w)] = coeffs.get((gid[(a, x)], w), 0.0) + 1.0
                coeffs[(gid[(a, 0)], w)] = coeffs.get((gid[(a, 0)], w), 0.0) - 1.0
            constraints.append(LinearConstraint(coeffs, 0.0, "no_signaling"))

    objective, obj_cells, prob_cells = {}, {}, {}
    for a, b, x, y in s.cells():
        bw = Word((Letter(BOB, y, b),), False)
        cell = (gid[(a, x)], 0, basis.index[bw])
        prob_cells[(a, b, x, y)] = cell
        c = float(f.coeffs[a, b, x, y])
        if c != 0.0:
            key = (gid[(a, x)], bw.letters)
            objective[key] = objective.get(key, 0.0) + c
            obj_cells[cell] = obj_cells.get(cell, 0.0) + c

    return MomentProblem(
        scenario=s, kind="sequential", level=n, blocks=blocks, groups=groups,
        constraints=constraints, objective=objective, objective_constant=f.constant,
        functional=f,
        meta={"group_of": gid, "probability_cells": prob_cells, "objective_cells": obj_cells,
              "reference_input": 0},
    )


def _build_gamma(f: BellFunctional, n: int, kind: str) -> MomentProblem:
    _check_level(n)
    s = f.scenario
    basis = enumerate_basis(s, [ALICE, BOB], n, commute_parties=True)
    reduce = [ALICE, BOB] if kind == "standard" else [BOB]
    system = WordSystem(s, commute_parties=True, reduce_parties=reduce)
    cell_word = _cell_words(basis, system)
    constraints = [LinearConstraint({(0, ()): 1.0}, 1.0, "normalization", (((0, 0, 0), 1.0),))]
    weak_relations = []
    if kind == "modified":
        bob = enumerate_basis(s, [BOB], n)
        for x in range(s.nX):
            for b1 in bob:
                for b2 in bob:
                    if b2.degree <= n - 1:
                        weak_relations.append((b1.letters, b2.letters, x))
        # Intern the sandwiched words so that they are part of the system.
        for b1, b2, x in weak_relations:
            inner = dot_letters(b1, b2, True)
            if inner is None:
                continue
            system.intern(inner)
            for a in range(s.nA):
                p = mul_letters((Letter(ALICE, x, a),), inner, True)
                if p is not None:
                    system.intern(p)
    system.close()
    if kind == "modified":
        # The relation sum_a L(A(a|x) W) = L(W) over Bob words W of degree <= 2n-1
        # respects Bob's rewriting, so it suffices to impose it on normal-form W.
        seen = set()
        for b1, b2, x in weak_relations:
            inner = dot_letters(b1, b2, True)
            if inner is None or system.rule(inner) is not None:
                continue
            inner = system.key(inner)
            if (inner, x) in seen:
                continue
            seen.add((inner, x))
            coeffs = {(0, inner): -1.0}
            for a in range(s.nA):
                p = mul_letters((Letter(ALICE, x, a),), inner, True)
                if p is not None:
                    k = (0, system.key(p))
                    coeffs[k] = coeffs.get(k, 0.0) + 1.0
            constraints.append(LinearConstraint(coeffs, 0.0, "weak_completeness"))

    blocks = [Block("Gamma", basis, 0, cell_word)]
    kernel_hints = []
    if kind == "modified":
        # D = 1 - sum_a A(a|x) is a projector, so the weak relation with b1 = b2 = W
        # says ||D W||^2 = 0 for Bob words W.  If w is a null row then so are P w
        # and (1 - P) w for any letter P (their squared norms add up to ||w||^2),
        # hence every row combination alpha D W (alpha an Alice word) is a kernel
        # vector of each positive semidefinite feasible Gamma.
        for x in range(s.nX):
            for w in basis:
                if w.degree > n - 1:
                    continue
                al, bo = _split(w.letters)
                if al and al[-1].input == x:
                    continue  # alpha D vanishes identically
                vec = {basis.index[w]: 1.0}
                for a in range(s.nA):
                    p = mul_letters(al + (Letter(ALICE, x, a),), bo, True)
                    if p is not None:
                        i = basis.index[Word(p, False)]
                        vec[i] = vec.get(i, 0.0) - 1.0
                kernel_hints.append((0, vec))
    objective, obj_cells, prob_cells = {}, {}, {}
    for a, b, x, y in s.cells():
        aw = Word((Letter(ALICE, x, a),), False)
        bw = Word((Letter(BOB, y, b),), False)
        cell = (0, basis.index[aw], basis.index[bw])
        prob_cells[(a, b, x, y)] = cell
        c = float(f.coeffs[a, b, x, y])
        if c != 0.0:
            key = (0, aw.letters + bw.letters)
            objective[key] = objective.get(key, 0.0) + c
            obj_cells[cell] = obj_cells.get(cell, 0.0) + c
    return MomentProblem(
        scenario=s, kind=kind, level=n, blocks=blocks, groups=[Group("Gamma", system)],
        constraints=constraints, objective=objective, objective_constant=f.constant,
        functional=f,
        meta={"probability_cells": prob_cells, "objective_cells": obj_cells,
              "weak_relations": weak_relations, "kernel_hints": kernel_hints},
    )


def build_standard(f: BellFunctional, n: int) -> MomentProblem:
    """Standard relaxation at level ``n`` (single block over both parties' words)."""
    return _build_gamma(f, n, "standard")


def build_modified(f: BellFunctional, n: int) -> MomentProblem:
    """Modified relaxation: Alice's completeness only against Bob-word sandwiches."""
    return _build_gamma(f, n, "modified")


def has_weak_relation(prob: MomentProblem, b1: Sequence[Letter], b2: Sequence[Letter], x: int) -> bool:
    """Whether ``sum_a Gamma[b1, A(a|x) b2] = Gamma[b1, b2]`` is part of a modified problem."""
    return (tuple(b1), tuple(b2), x) in set(prob.meta.get("weak_relations", ()))


def build_custom(scenario: Scenario, blocks: Sequence[tuple[str, WordBasis]],
                 constraints: Sequence[tuple[Mapping, float]] = (),
                 objective: Mapping | None = None, objective_constant: float = 0.0,
                 commute_parties: bool = False, reduce_parties: Iterable[int] = ()) -> MomentProblem:
    """Assemble a moment problem by hand; each block is its own group.

    Constraints and objective are keyed by ``(block_index, letters)``.
    """
    groups, out_blocks = [], []
    for k, (label, basis) in enumerate(blocks):
        system = WordSystem(scenario, commute_parties, reduce_parties)
        cw = _cell_words(basis, system)
        groups.append(Group(label, system))
        out_blocks.append(Block(label, basis, k, cw))
    cons = []
    for coeffs, rhs in constraints:
        for (g, w) in coeffs:
            groups[g].system.intern(tuple(w))
        merged = {}
        for (g, w), c in coeffs.items():
            k = (g, groups[g].system.key(tuple(w)))
            merged[k] = merged.get(k, 0.0) + float(c)
        cons.append(LinearConstraint(merged, float(rhs), "custom"))
    obj = {}
    for (g, w), c in (objective or {}).items():
        groups[g].system.intern(tuple(w))
        k = (g, groups[g].system.key(tuple(w)))
        obj[k] = obj.get(k, 0.0) + float(c)
    for g in groups:
        g.system.close()
    return MomentProblem(scenario=scenario, kind="custom", level=0, blocks=out_blocks,
                         groups=groups, constraints=cons, objective=obj,
                         objective_constant=float(objective_constant), meta={})
