"""Shared test utilities: cached solves and solver-independent oracles.

The oracles here deliberately avoid the package's own parser and word
algebra so that agreement with them is evidence, not a tautology.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from seqnpa.relax import build_modified, build_sequential, build_standard
from seqnpa.scenario import builtin_game
from seqnpa.sdpcore import solve

BUILDERS = {"sequential": build_sequential, "standard": build_standard, "modified": build_modified}


@lru_cache(maxsize=None)
def game(name: str):
    return builtin_game(name)


@lru_cache(maxsize=None)
def solved(name: str, kind: str, n: int):
    """``(problem, solution)`` for a bundled game, cached for the whole session."""
    prob = BUILDERS[kind](game(name), n)
    return prob, solve(prob)


# --------------------------------------------------------------------------
# SDPA oracle
# --------------------------------------------------------------------------

def read_sdpa(text: str):
    """Minimal SDPA sparse reader: ``(c, constant, sizes, entries)``.

    ``entries`` is a list of ``(k, block, i, j, value)`` with 0-based indices;
    the problem is ``min c.y  s.t.  sum_k y_k F_k - F_0 >= 0``.
    """
    constant = 0.0
    body = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("*"):
            if "objective_constant:" in line:
                constant = float(line.split(":", 1)[1])
            continue
        if line:
            body.append(line.split())
    m = int(body[0][0])
    nblocks = int(body[1][0])
    sizes = [abs(int(t)) for t in body[2][:nblocks]]
    pos = 3
    c = []
    while len(c) < m:
        c += [float(t) for t in body[pos]]
        pos += 1
    entries = [(int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])) for t in body[pos:]]
    return np.array(c), constant, sizes, entries


def sdpa_oracle_value(text: str) -> float:
    """Solve an exported maximization problem with cvxpy and return ``max`` value."""
    c, constant, sizes, entries = read_sdpa(text)
    m = len(c)
    y = cp.Variable(m)
    cons = []
    for b, n in enumerate(sizes):
        rows, cols, vals = [], [], []
        for k, blk, i, j, v in entries:
            if blk != b:
                continue
            sign = -1.0 if k == 0 else 1.0
            for (r, s) in {(i, j), (j, i)}:
                rows.append(r * n + s)
                cols.append(k)
                vals.append(sign * v)
        F = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, m + 1))
        expr = F[:, 1:] @ y + np.asarray(F[:, 0].todense()).ravel()
        M = cp.reshape(expr, (n, n), order="C")
        cons.append(0.5 * (M + M.T) >> 0)
    prob = cp.Problem(cp.Minimize(c @ y), cons)
    _solve_cvx(prob)
    return constant - float(prob.value)


def _solve_cvx(prob: cp.Problem) -> None:
    try:
        prob.solve(solver="CLARABEL")
        if prob.status == "optimal":
            return
    except cp.SolverError:
        pass
    prob.solve(solver="SCS", eps=1e-9, max_iters=200000)


# --------------------------------------------------------------------------
# direct sequential oracle (independent word algebra)
# --------------------------------------------------------------------------

def sequential_oracle_value(f, n: int) -> float:
    """Sequential relaxation written directly in cvxpy, with its own word reduction."""
    s = f.scenario
    letters = [(y, b) for y in range(s.nY) for b in range(s.nB)]

    def red(w):
        out = []
        for l in w:
            if out and out[-1] == l:
                continue
            if out and out[-1][0] == l[0]:
                return None
            out.append(l)
        return tuple(out)

    words, layer = [()], [()]
    for d in range(1, 2 * n + 1):
        nxt = set()
        for w in layer:
            for l in letters:
                r = red(w + (l,))
                if r is not None and len(r) == d:
                    nxt.add(r)
        layer = sorted(nxt)
        words += layer
    key = lambda w: min(w, w[::-1])  # noqa: E731
    keys = sorted({key(w) for w in words})
    kid = {k: i for i, k in enumerate(keys)}
    basis = [w for w in words if len(w) <= n]
    N, K = len(basis), len(keys)
    rows, cols = [], []
    for i, u in enumerate(basis):
        for j, v in enumerate(basis):
            r = red(u[::-1] + v)
            if r is not None:
                rows.append(i * N + j)
                cols.append(kid[key(r)])
    P = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N * N, K))
    L = {(a, x): cp.Variable(K) for a in range(s.nA) for x in range(s.nX)}
    cons = []
    for v in L.values():
        T = cp.reshape(P @ v, (N, N), order="C")
        cons.append(0.5 * (T + T.T) >> 0)
    last = s.nB - 1
    ri, ci, vv, r = [], [], [], 0
    for w in keys:
        for pos, l in enumerate(w):
            if l[1] != last:
                continue
            lft, rgt = w[:pos], w[pos + 1:]
            terms = {kid[w]: -1.0}

            def add(ww, coef):
                rr = red(ww)
                if rr is not None:
                    terms[kid[key(rr)]] = terms.get(kid[key(rr)], 0.0) + coef

            add(lft + rgt, 1.0)
            for b in range(last):
                add(lft + ((l[0], b),) + rgt, -1.0)
            for k, cval in terms.items():
                ri.append(r)
                ci.append(k)
                vv.append(cval)
            r += 1
            break
    C = sp.csr_matrix((vv, (ri, ci)), shape=(r, K))
    for v in L.values():
        cons.append(C @ v == 0)
    for x in range(1, s.nX):
        cons.append(sum(L[(a, x)] for a in range(s.nA)) == sum(L[(a, 0)] for a in range(s.nA)))
    cons.append(sum(L[(a, 0)][kid[()]] for a in range(s.nA)) == 1)
    obj = f.constant
    for a, b, x, y in itertools.product(range(s.nA), range(s.nB), range(s.nX), range(s.nY)):
        cval = f.coeffs[a, b, x, y]
        if cval:
            obj = obj + cval * L[(a, x)][kid[((y, b),)]]
    prob = cp.Problem(cp.Maximize(obj), cons)
    _solve_cvx(prob)
    return float(prob.value)
