"""Explicit strategies built from standard moment solutions.

:func:`almost_commuting_from_npa` turns a level-``n`` standard moment matrix
into a finite-dimensional strategy: the Gram vectors of the words of degree
``<= n`` span the Hilbert space and every letter acts by left multiplication.
Matrix elements ``<u, L w>`` whose canonical word has degree ``<= 2n`` are read
from the moment matrix; the few that fall outside are completed by a least
squares fit inside the span (a flat-extension border).  For a flat moment
matrix the completion is exact.

The sequential counterpart lets Alice measure first and hands the
post-measurement states ``A |psi><psi| A`` to Bob.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditioned, NotProjective, ScenarioMismatch
from .ncalgebra import ALICE, BOB, Letter, letters_of, mul_letters
from .scenario import BellFunctional, Correlation, score

__all__ = [
    "FiniteStrategy",
    "SequentialStrategy",
    "almost_commuting_from_npa",
    "sequentialize",
    "sequential_from_model",
    "signaling_residual",
    "commutator_residuals",
    "monomials",
]


@dataclass
class FiniteStrategy:
    """State vector with Alice and Bob measurement operators on ``C^dim``."""

    dim: int
    state: np.ndarray
    alice_ops: dict
    bob_ops: dict
    level: int
    scenario: object = None
    info: dict = field(default_factory=dict)

    def density(self) -> np.ndarray:
        return np.outer(self.state, self.state)

    def correlation(self) -> np.ndarray:
        s = self.scenario
        p = np.zeros(s.shape)
        for (a, x), A in self.alice_ops.items():
            for (b, y), B in self.bob_ops.items():
                p[a, b, x, y] = float(self.state @ A @ B @ self.state)
        return p

    def score(self, f: BellFunctional) -> float:
        if f.scenario != self.scenario:
            raise ScenarioMismatch("strategy and functional use different scenarios")
        return score(f, Correlation(f.scenario, self.correlation()))

    def operator(self, letter: Letter) -> np.ndarray:
        if letter.party == ALICE:
            return self.alice_ops[(letter.outcome, letter.input)]
        return self.bob_ops[(letter.outcome, letter.input)]

    def invariant_residuals(self) -> dict:
        s = self.scenario
        eye = np.eye(self.dim)
        ops = list(self.alice_ops.values()) + list(self.bob_ops.values())
        return {
            "min_eig": min((float(np.linalg.eigvalsh(0.5 * (O + O.T))[0]) for O in ops), default=0.0),
            "alice_completeness": max(float(np.abs(sum(self.alice_ops[(a, x)] for a in range(s.nA)) - eye).max())
                                      for x in range(s.nX)),
            "bob_completeness": max(float(np.abs(sum(self.bob_ops[(b, y)] for b in range(s.nB)) - eye).max())
                                    for y in range(s.nY)),
            "projection": max((float(np.linalg.norm(O @ O - O)) for O in ops), default=0.0),
            "state_norm": abs(float(self.state @ self.state) - 1.0),
        }


@dataclass
class SequentialStrategy:
    """Post-measurement states of Alice and Bob's measurement operators."""

    dim: int
    post_states: dict
    bob_ops: dict
    state: np.ndarray
    scenario: object = None
    source: object = field(default=None, repr=False)

    def correlation(self) -> np.ndarray:
        s = self.scenario
        p = np.zeros(s.shape)
        for (a, x), rho in self.post_states.items():
            for (b, y), B in self.bob_ops.items():
                p[a, b, x, y] = float(np.trace(rho @ B))
        return p

    def score(self, f: BellFunctional) -> float:
        if f.scenario != self.scenario:
            raise ScenarioMismatch("strategy and functional use different scenarios")
        return score(f, Correlation(f.scenario, self.correlation()))


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _select_in_order(G: np.ndarray, rel_tol: float) -> list[int]:
    """Indices of linearly independent Gram vectors, visiting words in basis order."""
    n = G.shape[0]
    if n == 0:
        return []
    cut = rel_tol * max(np.linalg.eigvalsh(0.5 * (G + G.T))[-1], 1.0)
    chosen: list[int] = []
    L = np.zeros((n, 0))
    for j in range(n):
        resid = G[j, j] - L[j] @ L[j]
        if resid > cut:
            col = (G[:, j] - L @ L[j]) / np.sqrt(resid)
            L = np.hstack([L, col[:, None]])
            chosen.append(j)
    return chosen


def almost_commuting_from_npa(sol, rel_tol: float = 1e-7) -> FiniteStrategy:
    """Finite-dimensional strategy reproducing a standard moment matrix.

    The construction is exact on every moment of degree ``<= 2n`` that the
    representation can reach when the moment matrix is flat; the score is
    reproduced for any solution because it only involves columns of degree one.
    """
    from .sdpcore import _moment_lookup

    prob = sol.problem
    if prob is None or prob.kind not in ("standard", "modified"):
        raise ValueError("a solution of a standard (or modified) problem is required")
    s = prob.scenario
    blk = prob.blocks[0]
    basis = blk.basis
    Gamma = 0.5 * (np.asarray(sol.values[0], dtype=float) + np.asarray(sol.values[0], dtype=float).T)
    system = prob.groups[0].system
    table = _moment_lookup(prob, [Gamma])[0].table

    def moment(letters):
        if letters is None:
            return 0.0
        try:
            return table.get(system.lookup(letters))
        except KeyError:
            return None

    S = _select_in_order(Gamma, rel_tol)
    r = len(S)
    G = Gamma[np.ix_(S, S)]
    cond = np.linalg.cond(G) if r else 1.0
    if cond > 1e12:
        raise IllConditioned(f"Gram matrix condition number {cond:.3g}")
    w, V = np.linalg.eigh(G)
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    words = [basis[i].letters for i in S]
    all_words = [w_.letters for w_ in basis]
    one = basis.index[basis[0]]
    omega_c = np.linalg.solve(G, Gamma[S, one])

    n_filled = 0
    ops = {}
    for letter in letters_of(s, (ALICE, BOB)):
        T = np.full((r, r), np.nan)
        for j, wj in enumerate(words):
            lw = mul_letters((letter,), wj, True)
            if lw is None:
                T[:, j] = 0.0
                continue
            for i, wi in enumerate(words):
                prod = mul_letters(_adj(wi), lw, True)
                val = moment(prod)
                if val is not None:
                    T[i, j] = val
        # flat-extension border: columns with unknown entries are fitted in the span
        for j in range(r):
            miss = np.isnan(T[:, j])
            if not miss.any():
                continue
            lw = mul_letters((letter,), words[j], True)
            known_rows, target = [], []
            for k, u in enumerate(all_words):
                val = moment(mul_letters(_adj(u), lw, True))
                if val is not None:
                    known_rows.append(k)
                    target.append(val)
            A = Gamma[np.ix_(known_rows, S)]
            z = np.linalg.lstsq(A, np.array(target), rcond=None)[0]
            fitted = G @ z
            T[miss, j] = fitted[miss]
            n_filled += int(miss.sum())
        T = 0.5 * (T + T.T)
        O = inv_root @ T @ inv_root
        ops[letter] = 0.5 * (O + O.T)
    alice = {(l.outcome, l.input): O for l, O in ops.items() if l.party == ALICE}
    bob = {(l.outcome, l.input): O for l, O in ops.items() if l.party == BOB}
    return FiniteStrategy(dim=r, state=root @ omega_c, alice_ops=alice, bob_ops=bob, level=prob.level,
                          scenario=s, info={"basis_words": words, "filled_entries": n_filled,
                                            "gram_condition": float(cond)})


def _adj(letters: tuple) -> tuple:
    """Adjoint of a canonical word with Alice letters in front."""
    k = 0
    while k < len(letters) and letters[k].party == ALICE:
        k += 1
    return letters[:k][::-1] + letters[k:][::-1]


def sequentialize(strat: FiniteStrategy, proj_tol: float = 1e-6) -> SequentialStrategy:
    """Alice measures first: ``sigma_{a|x} = A |psi><psi| A``."""
    bad = {k: float(np.linalg.norm(A @ A - A)) for k, A in strat.alice_ops.items()}
    worst = max(bad.values(), default=0.0)
    if worst > proj_tol:
        raise NotProjective(f"Alice operators are not projections (max ||A^2 - A||_F = {worst:.3g})")
    psi = strat.state
    post = {k: np.outer(A @ psi, A @ psi) for k, A in strat.alice_ops.items()}
    return SequentialStrategy(dim=strat.dim, post_states=post, bob_ops=dict(strat.bob_ops), state=psi,
                              scenario=strat.scenario, source=strat)


def sequential_from_model(model) -> SequentialStrategy:
    """Sequential form of an extracted model: ``sigma_{a|x} = A^{1/2} |Omega><Omega| A^{1/2}``."""
    post = {}
    for k, A in model.alice_ops.items():
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        half = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        v = half @ model.omega
        post[k] = np.outer(v, v)
    return SequentialStrategy(dim=model.dim, post_states=post, bob_ops=dict(model.bob_ops),
                              state=model.omega, scenario=model.scenario, source=model)


# --------------------------------------------------------------------------
# residuals
# --------------------------------------------------------------------------

def monomials(scenario, parties, max_deg: int) -> list[tuple]:
    """All letter sequences of length ``<= max_deg`` without adjacent repeats or
    adjacent orthogonal letters (no cross-party reordering)."""
    alphabet = letters_of(scenario, parties)
    out = [()]
    layer = [()]
    for _ in range(max_deg):
        nxt = []
        for w in layer:
            for l in alphabet:
                p = mul_letters(w, (l,), False)
                if p is not None and len(p) == len(w) + 1:
                    nxt.append(p)
        out.extend(nxt)
        layer = nxt
    return out


def _apply(ops_of, word, vec):
    for letter in reversed(word):
        vec = ops_of(letter) @ vec
    return vec


def signaling_residual(seq: SequentialStrategy, max_deg: int) -> float:
    """``max_x max_P |Tr((sum_a sigma_{a|x} - sigma) P)|`` over Bob monomials of degree ``<= max_deg``."""
    if max_deg < 0:
        raise ValueError("max_deg must be >= 0")
    s = seq.scenario
    sigma = np.outer(seq.state, seq.state)
    diffs = [sum(seq.post_states[(a, x)] for a in range(s.nA)) - sigma for x in range(s.nX)]
    worst = 0.0
    for word in monomials(s, (BOB,), max_deg):
        P = np.eye(seq.dim)
        for letter in word:
            P = P @ seq.bob_ops[(letter.outcome, letter.input)]
        for D in diffs:
            worst = max(worst, abs(float(np.sum(D * P.T))))
    return worst


def commutator_residuals(strat: FiniteStrategy, max_deg: int) -> dict:
    """State-weighted commutator residuals over all monomials within the budget.

    The commutator counts as degree two, so ``P`` ranges over monomials of
    degree ``<= max_deg - 2``.
    """
    if max_deg < 0:
        raise ValueError("max_deg must be >= 0")
    s = strat.scenario
    psi = strat.state
    words = monomials(s, (ALICE, BOB), max(max_deg - 2, -1)) if max_deg >= 2 else []
    vecs = [_apply(strat.operator, w, psi) for w in words]
    weighted = 0.0
    raw = 0.0
    for (a, x), A in strat.alice_ops.items():
        for (b, y), B in strat.bob_ops.items():
            C = A @ B - B @ A
            raw = max(raw, float(np.linalg.norm(C)))
            left = C.T @ psi
            for v in vecs:
                weighted = max(weighted, abs(float(left @ v)))
    return {"weighted": weighted, "raw_frobenius": raw, "n_monomials": len(words)}
