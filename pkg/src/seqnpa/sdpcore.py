"""Solving, certifying and exporting moment problems.

The pipeline is

1. eliminate the explicit linear constraints on top of the completeness
   rewriting, leaving a minimal set of free parameters ``y``;
2. write every block as an affine matrix function ``X_b(y) = F_b0 + sum_k y_k F_bk``;
3. drop the rows/columns of each block that are forced to be linearly
   dependent for *every* ``y`` (facial reduction);
4. run a primal-dual interior-point method (HKM direction, Mehrotra
   predictor-corrector) on ``max c.y + c0  s.t.  X_b(y) >= 0``.

The dual of step 4 is ``min c0 + sum_b <F_b0, Z_b>`` subject to
``<F_bk, Z> = -c_k`` and ``Z_b >= 0``.  Any dual feasible ``Z`` certifies an
upper bound on the moment problem.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import Infeasible, NumericalTrouble, ParseError, ShapeMismatch, SolverError
from .relax import ZERO_INDEX, MomentProblem

__all__ = [
    "SolverOptions",
    "LMI",
    "LMIResult",
    "MomentSolution",
    "CertifiedReport",
    "Parameterization",
    "parameterize",
    "lmi_from_problem",
    "solve",
    "solve_lmi",
    "certify",
    "export_sdpa",
    "parse_sdpa",
    "select_independent_rows",
]

OPTIMAL = "Optimal"
NEAR_OPTIMAL = "NearOptimal"
INFEASIBLE = "Infeasible"
NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iters: int = 200
    step_fraction: float = 0.98
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


# --------------------------------------------------------------------------
# free parameterization
# --------------------------------------------------------------------------

@dataclass
class Parameterization:
    """Normal-form moments as an affine function of free parameters.

    ``z = z0 + N @ y`` where ``z`` stacks the normal-form moments of all groups
    (group ``g`` occupies ``offsets[g]:offsets[g+1]``).
    """

    offsets: np.ndarray
    z0: np.ndarray
    N: sp.csr_matrix
    free: list  # global normal-form index of each parameter

    @property
    def n_params(self) -> int:
        return self.N.shape[1]

    def group_slice(self, g: int) -> slice:
        return slice(int(self.offsets[g]), int(self.offsets[g + 1]))

    def group_affine(self, g: int) -> sp.csr_matrix:
        """``[z0_g | N_g]`` as a sparse matrix of shape ``(n_nf_g, 1 + m)``."""
        sl = self.group_slice(g)
        return sp.hstack([sp.csr_matrix(self.z0[sl][:, None]), self.N[sl]], format="csr")


def _constraint_rows(prob: MomentProblem, offsets):
    """Explicit constraints as sparse rows over the stacked normal-form moments."""
    rows = []
    for con in prob.constraints:
        row: dict = {}
        for (g, w), c in con.coeffs.items():
            system = prob.groups[g].system
            E = system.expansion()
            idx = system.lookup(w)
            r = E.getrow(idx)
            for j, v in zip(r.indices, r.data):
                key = int(offsets[g] + j)
                row[key] = row.get(key, 0.0) + c * v
        rows.append((row, float(con.rhs)))
    return rows


def _kernel_rows(prob: MomentProblem, offsets):
    """Equations ``X v = 0`` for the kernel vectors announced by the builder.

    A vector ``v`` may be announced when ``v^T X v`` is identically zero on the
    affine feasible set; then ``X v = 0`` holds for every feasible ``X >= 0``.
    """
    by_block: dict = {}
    for bidx, vec in prob.meta.get("kernel_hints", ()):
        by_block.setdefault(bidx, []).append(vec)
    rows = []
    seen = set()
    for bidx, vecs in by_block.items():
        blk = prob.blocks[bidx]
        system = prob.groups[blk.group].system
        n = blk.size
        ri, ci, vv = [], [], []
        for h, vec in enumerate(vecs):
            cols = np.fromiter(vec.keys(), dtype=np.int64)
            coef = np.fromiter(vec.values(), dtype=float)
            words = blk.cell_word[:, cols]  # (n, len(cols))
            keep = words != ZERO_INDEX
            ii = np.nonzero(keep)[0]
            ri.append(h * n + ii)
            ci.append(words[keep])
            vv.append(np.broadcast_to(coef, words.shape)[keep])
        S = sp.csr_matrix((np.concatenate(vv), (np.concatenate(ri), np.concatenate(ci))),
                          shape=(len(vecs) * n, len(system)))
        R = (S @ system.expansion()).tocsr()
        R.data[np.abs(R.data) <= 1e-12] = 0.0
        R.eliminate_zeros()
        R.sort_indices()
        off = int(offsets[blk.group])
        for k in range(R.shape[0]):
            lo, hi = R.indptr[k], R.indptr[k + 1]
            if lo == hi:
                continue
            idx = R.indices[lo:hi]
            dat = R.data[lo:hi]
            key = (idx.tobytes(), np.round(dat, 12).tobytes())
            if key in seen:
                continue
            seen.add(key)
            rows.append(({int(off + j): float(v) for j, v in zip(idx, dat)}, 0.0))
    return rows


def parameterize(prob: MomentProblem, tol: float = 1e-10, use_kernel_hints: bool = True) -> Parameterization:
    """Gauss-Jordan elimination of the explicit constraints.

    The variable with the largest stacked index in each row is used as the
    pivot, so the free parameters are the "earliest" normal-form moments.
    Raises :class:`Infeasible` if the constraints are inconsistent.
    """
    sizes = [g.system.n_normal for g in prob.groups]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    total = int(offsets[-1])
    pivots: dict = {}
    occurs: dict = {}
    rows = _constraint_rows(prob, offsets)
    if use_kernel_hints:
        rows += _kernel_rows(prob, offsets)
    for row, rhs in rows:
        r = dict(row)
        for v in [v for v in r if v in pivots]:
            c = r.pop(v)
            expr, const = pivots[v]
            rhs -= c * const
            for u, cu in expr.items():
                r[u] = r.get(u, 0.0) + c * cu
        scale = max([abs(c) for c in r.values()] + [1.0])
        r = {u: c for u, c in r.items() if abs(c) > tol * scale}
        if not r:
            if abs(rhs) > 1e-9 * max(1.0, scale):
                raise Infeasible(f"linear constraints are inconsistent (residual {rhs:.3g})")
            continue
        p = max(r)
        cp = r.pop(p)
        expr = {u: -cu / cp for u, cu in r.items()}
        const = rhs / cp
        for q in occurs.pop(p, ()):
            eq, kq = pivots[q]
            c = eq.pop(p, 0.0)
            if c == 0.0:
                continue
            kq += c * const
            for u, cu in expr.items():
                val = eq.get(u, 0.0) + c * cu
                if abs(val) > tol:
                    eq[u] = val
                else:
                    eq.pop(u, None)
                occurs.setdefault(u, set()).add(q)
            pivots[q] = (eq, kq)
        pivots[p] = (expr, const)
        for u in expr:
            occurs.setdefault(u, set()).add(p)
    free = [v for v in range(total) if v not in pivots]
    col = {v: j for j, v in enumerate(free)}
    z0 = np.zeros(total)
    ri, ci, vals = [], [], []
    for v in free:
        ri.append(v)
        ci.append(col[v])
        vals.append(1.0)
    for p, (expr, const) in pivots.items():
        z0[p] = const
        for u, cu in expr.items():
            ri.append(p)
            ci.append(col[u])
            vals.append(cu)
    N = sp.csr_matrix((vals, (ri, ci)), shape=(total, len(free)))
    return Parameterization(offsets=offsets, z0=z0, N=N, free=free)


# --------------------------------------------------------------------------
# facial reduction
# --------------------------------------------------------------------------

def select_independent_rows(samples: Sequence[np.ndarray], rel_tol: float = 1e-9) -> np.ndarray:
    """Greedy selection of linearly independent rows of ``[X_1, X_2, ...]``.

    Rows are visited in their natural order, so earlier (low-degree) rows are
    preferred.  Modified Gram-Schmidt with one re-orthogonalization pass.
    """
    stacked = np.hstack([np.asarray(s, dtype=float) for s in samples])
    scale = max(np.abs(stacked).max(initial=0.0), 1e-300)
    stacked = stacked / scale
    basis: list[np.ndarray] = []
    chosen = []
    for i, row in enumerate(stacked):
        norm0 = np.linalg.norm(row)
        if norm0 <= rel_tol:
            continue
        v = row.copy()
        if basis:
            Q = np.array(basis)
            for _ in range(2):
                v -= Q.T @ (Q @ v)
        nv = np.linalg.norm(v)
        if nv > rel_tol * max(norm0, 1.0) and nv > 1e-12:
            basis.append(v / nv)
            chosen.append(i)
    return np.asarray(chosen, dtype=np.int64)


def _range_captured(samples, fresh, rel_tol=1e-8) -> bool:
    stacked = np.hstack(samples)
    if not np.any(stacked):
        return not np.any(fresh)
    U, s, _ = np.linalg.svd(stacked, full_matrices=False)
    r = int(np.sum(s > rel_tol * s[0]))
    U = U[:, :r]
    resid = fresh - U @ (U.T @ fresh)
    return np.linalg.norm(resid) <= 1e-7 * max(np.linalg.norm(fresh), 1.0)


def _facial_rows(sampler, n_draws: int = 2, max_draws: int = 12) -> np.ndarray:
    """Common range of an affine symmetric family, via random evaluations.

    ``sampler(t)`` returns the family evaluated at the ``t``-th random point.
    Draws are added until a fresh one lies in the span of the previous ones.
    """
    samples = [sampler(t) for t in range(n_draws)]
    t = n_draws
    while t < max_draws:
        fresh = sampler(t)
        t += 1
        if _range_captured(samples, fresh):
            break
        samples.append(fresh)
    return select_independent_rows(samples)


# --------------------------------------------------------------------------
# LMI form
# --------------------------------------------------------------------------

@dataclass
class LMI:
    """``max c.y + c0`` subject to ``reshape(F_b @ [1, y]) >= 0`` for each block.

    Each ``F_b`` is sparse of shape ``(n_b * n_b, 1 + m)``; column 0 is the
    constant part.  Both triangles are stored.
    """

    c: np.ndarray
    c0: float
    F: list
    sizes: list

    @property
    def m(self) -> int:
        return len(self.c)

    def evaluate(self, y: np.ndarray) -> list[np.ndarray]:
        v = np.concatenate([[1.0], np.asarray(y, dtype=float)])
        return [np.asarray(Fb @ v).reshape(n, n) for Fb, n in zip(self.F, self.sizes)]


@dataclass
class Reduction:
    """Bookkeeping that maps the reduced LMI back to the moment problem."""

    param: Parameterization
    rows: list  # selected indices per block
    full_sizes: list


def _group_values(prob: MomentProblem, param: Parameterization, y: np.ndarray) -> list:
    """Word values per group for parameter vectors ``y`` of shape ``(m,)`` or ``(m, k)``."""
    z = param.z0[:, None] + param.N @ np.atleast_2d(np.asarray(y, dtype=float).T).T \
        if np.ndim(y) == 2 else (param.z0 + param.N @ np.asarray(y, dtype=float))[:, None]
    out = []
    for g, group in enumerate(prob.groups):
        out.append(group.system.evaluate(z[param.group_slice(g)]))
    return out


def block_values(prob: MomentProblem, param: Parameterization, y: np.ndarray) -> list[np.ndarray]:
    """Full block matrices for a single parameter vector."""
    vals = _group_values(prob, param, y)
    return [vals[b.group][b.cell_word, 0] for b in prob.blocks]


def lmi_from_problem(prob: MomentProblem, seed: int = 0, reduce: bool = True):
    """Build the (facially reduced) LMI of a moment problem.

    Returns ``(lmi, reduction)``.
    """
    param = parameterize(prob)
    m = param.n_params
    rng = np.random.default_rng(seed)
    draws: list = []

    def sampler_for(bidx):
        def sample(t):
            while len(draws) <= t:
                y = rng.standard_normal(m)
                draws.append(_group_values(prob, param, y))
            blk = prob.blocks[bidx]
            return draws[t][blk.group][blk.cell_word, 0]
        return sample

    rows = []
    F = []
    for bidx, blk in enumerate(prob.blocks):
        if reduce and m > 0:
            sel = _facial_rows(sampler_for(bidx))
        elif reduce:
            X0 = block_values(prob, param, np.zeros(0))[bidx]
            sel = select_independent_rows([X0]) if np.any(X0) else np.zeros(0, dtype=np.int64)
            if len(sel) == 0:
                sel = np.arange(0)
        else:
            sel = np.arange(blk.size)
        rows.append(sel)
        F.append(_block_affine(prob, param, blk, sel))
    c_full = _objective_affine(prob, param)
    lmi = LMI(c=c_full[1:], c0=float(c_full[0]), F=F, sizes=[len(s) for s in rows])
    return lmi, Reduction(param=param, rows=rows, full_sizes=[b.size for b in prob.blocks])


def _block_affine(prob, param, blk, sel) -> sp.csr_matrix:
    n = len(sel)
    m = param.n_params
    if n == 0:
        return sp.csr_matrix((0, 1 + m))
    system = prob.groups[blk.group].system
    cw = blk.cell_word[np.ix_(sel, sel)].ravel()
    uniq, inv = np.unique(cw, return_inverse=True)
    nz = uniq != ZERO_INDEX
    E = system.expansion()
    Q = param.group_affine(blk.group)
    expr = sp.csr_matrix((len(uniq), 1 + m))
    if np.any(nz):
        sub = (E[uniq[nz]] @ Q).tocsr()
        full = sp.lil_matrix((len(uniq), 1 + m))
        expr = sp.vstack([sp.csr_matrix((int(np.sum(~nz)), 1 + m)), sub], format="csr") \
            if not nz[0] else sub
        del full
    out = expr[inv]
    out.eliminate_zeros()
    return out.tocsr()


def _objective_affine(prob, param) -> np.ndarray:
    m = param.n_params
    out = np.zeros(1 + m)
    out[0] = prob.objective_constant
    for (g, w), c in prob.objective.items():
        system = prob.groups[g].system
        row = system.expansion().getrow(system.lookup(w))
        vec = row @ param.group_affine(g)
        out += c * np.asarray(vec.todense()).ravel()
    return out


# --------------------------------------------------------------------------
# interior point method
# --------------------------------------------------------------------------

@dataclass
class LMIResult:
    y: np.ndarray
    S: list  # moment-side slack matrices (reduced)
    Z: list  # dual matrices (reduced)
    status: str
    primal_value: float
    dual_value: float
    iterations: int
    residuals: dict


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(X, dX):
    """Largest alpha with X + alpha dX >= 0 (X positive definite)."""
    if X.shape[0] == 0:
        return np.inf
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


class _Block:
    """Per-block sparse data for the Schur complement assembly."""

    def __init__(self, Fb: sp.csr_matrix, n: int):
        self.n = n
        self.C = np.asarray(Fb[:, 0].todense()).reshape(n, n)
        A = (-Fb[:, 1:]).tocsc()  # textbook A_k = -F_k
        self.A = A
        self.At = A.T.tocsr()
        self.active = np.flatnonzero(np.diff(A.indptr))
        # stacked representation: row l*n + p, column q holds A_l[p, q]
        Aa = A[:, self.active].tocoo()
        p, q = np.divmod(Aa.row, n)
        self.stack = sp.csr_matrix((Aa.data, (Aa.col * n + p, q)), shape=(len(self.active) * n, n))
        self.At_active = self.At[self.active]

    def op(self, X):  # A(X)
        return self.At @ X.ravel()

    def adj(self, u):  # A^T(u)
        return (self.A @ u).reshape(self.n, self.n)

    def schur(self, X, Sinv, M, chunk_bytes=64 * 2 ** 20):
        n, act = self.n, self.active
        if len(act) == 0 or n == 0:
            return
        per = max(1, int(chunk_bytes // (8 * n * n)))
        for s in range(0, len(act), per):
            e = min(len(act), s + per)
            c = e - s
            # T[l] = A_l S^-1, laid out side by side as an (n, c*n) matrix
            T = (self.stack[s * n:e * n] @ Sinv).reshape(c, n, n).transpose(1, 0, 2).reshape(n, c * n)
            W = (X @ T).reshape(n, c, n).transpose(0, 2, 1).reshape(n * n, c)
            M[np.ix_(act, act[s:e])] += self.At_active @ W


def solve_lmi(lmi: LMI, opts: SolverOptions | None = None) -> LMIResult:
    """Primal-dual interior-point method for an LMI (see module docstring)."""
    opts = opts or SolverOptions()
    m = lmi.m
    blocks = [_Block(Fb, n) for Fb, n in zip(lmi.F, lmi.sizes)]
    b = np.asarray(lmi.c, dtype=float)  # textbook b = c

    if m == 0:
        eigs = [np.linalg.eigvalsh(blk.C)[0] if blk.n else 0.0 for blk in blocks]
        ok = all(e >= -opts.feas_tol for e in eigs)
        status = OPTIMAL if ok else INFEASIBLE
        res = LMIResult(np.zeros(0), [blk.C.copy() for blk in blocks],
                        [np.zeros((blk.n, blk.n)) for blk in blocks], status,
                        lmi.c0, lmi.c0, 0, {"min_eig": min(eigs, default=0.0)})
        if not ok:
            raise Infeasible("constant matrix is not positive semidefinite", res)
        return res

    present = np.zeros(m, dtype=bool)
    for blk in blocks:
        present[blk.active] = True
    if np.any(~present & (b != 0)):
        raise Infeasible("objective depends on a parameter that no block constrains (unbounded)")

    nt = sum(blk.n for blk in blocks)
    normC = math.sqrt(sum(np.sum(blk.C ** 2) for blk in blocks))
    normA = max((spla.norm(blk.A) for blk in blocks), default=0.0)
    xi = max(10.0, math.sqrt(max(nt, 1)), normC, normA, float(np.abs(b).max(initial=0.0)))
    X = [xi * np.eye(blk.n) for blk in blocks]
    S = [xi * np.eye(blk.n) for blk in blocks]
    u = np.zeros(m)
    status = NUMERICAL_TROUBLE
    it = 0
    hist = {}
    gamma = opts.step_fraction
    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + normC
    stalls = 0
    while True:
        Au = [blk.adj(u) for blk in blocks]
        rp = b - sum(blk.op(Xb) for blk, Xb in zip(blocks, X)) if blocks else b.copy()
        Rd = [blk.C - Aub - Sb for blk, Aub, Sb in zip(blocks, Au, S)]
        pobj = sum(float(np.sum(blk.C * Xb)) for blk, Xb in zip(blocks, X))
        dobj = float(b @ u)
        mu = sum(float(np.sum(Xb * Sb)) for Xb, Sb in zip(X, S)) / max(nt, 1)
        pinf = np.linalg.norm(rp) / nb
        dinf = math.sqrt(sum(np.sum(R ** 2) for R in Rd)) / nc
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        hist = {"primal_infeasibility": pinf, "dual_infeasibility": dinf, "relative_gap": relgap,
                "mu": mu}
        if opts.verbose:
            print(f"{it:3d} p={dobj:+.10f} d={pobj:+.10f} gap={relgap:.2e} pinf={pinf:.2e} "
                  f"dinf={dinf:.2e} mu={mu:.2e}")
        if relgap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            status = OPTIMAL
            break
        if max(np.abs(u).max(initial=0), max((np.abs(Xb).max(initial=0) for Xb in X), default=0)) > 1e10:
            status = INFEASIBLE
            break
        if it >= opts.max_iters:
            tol = 1e3
            status = NEAR_OPTIMAL if (relgap <= tol * opts.gap_tol and pinf <= tol * opts.feas_tol
                                      and dinf <= tol * opts.feas_tol) else NUMERICAL_TROUBLE
            break
        it += 1
        try:
            Sinv = [np.linalg.inv(Sb) for Sb in S]
            Sinv = [_sym(Si) for Si in Sinv]
            M = np.zeros((m, m))
            for blk, Xb, Si in zip(blocks, X, Sinv):
                blk.schur(Xb, Si, M)
            M = _sym(M)
            # parameters absent from every block have zero objective here; pin them
            M[~present, ~present] = 1.0
            diag = np.sqrt(np.maximum(np.diag(M), 1e-300))
            Ms = M / np.outer(diag, diag)
            cf = sla.cho_factor(Ms + 1e-14 * np.eye(m), check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            status = NUMERICAL_TROUBLE
            break

        def direction(T):
            rhs = rp - sum(blk.op(_sym(Tb)) for blk, Tb in zip(blocks, T)) \
                + sum(blk.op(_sym(Xb @ Rb @ Si)) for blk, Xb, Rb, Si in zip(blocks, X, Rd, Sinv))
            du = sla.cho_solve(cf, rhs / diag, check_finite=False) / diag
            du[~present] = 0.0
            dS = [Rb - blk.adj(du) for blk, Rb in zip(blocks, Rd)]
            dX = [_sym(Tb - Xb @ dSb @ Si) for Tb, Xb, dSb, Si in zip(T, X, dS, Sinv)]
            return du, dX, dS

        # predictor
        du_a, dX_a, dS_a = direction([-Xb for Xb in X])
        ap = min([1.0] + [_max_step(Xb, d) for Xb, d in zip(X, dX_a)])
        ad = min([1.0] + [_max_step(Sb, d) for Sb, d in zip(S, dS_a)])
        mu_a = sum(float(np.sum((Xb + ap * dx) * (Sb + ad * ds)))
                   for Xb, dx, Sb, ds in zip(X, dX_a, S, dS_a)) / max(nt, 1)
        sigma = min(1.0, max(0.0, (mu_a / mu) ** 3)) if mu > 0 else 0.0
        # corrector
        T = [sigma * mu * Si - Xb - dx @ ds @ Si for Si, Xb, dx, ds in zip(Sinv, X, dX_a, dS_a)]
        du, dX, dS = direction(T)
        ap = min(1.0, gamma * min([np.inf] + [_max_step(Xb, d) for Xb, d in zip(X, dX)]))
        ad = min(1.0, gamma * min([np.inf] + [_max_step(Sb, d) for Sb, d in zip(S, dS)]))
        if ap < 1e-12 and ad < 1e-12:
            stalls += 1
            if stalls > 3:
                tol = 1e3
                status = NEAR_OPTIMAL if (relgap <= tol * opts.gap_tol and pinf <= tol * opts.feas_tol
                                          and dinf <= tol * opts.feas_tol) else NUMERICAL_TROUBLE
                break
        X = [Xb + ap * d for Xb, d in zip(X, dX)]
        S = [Sb + ad * d for Sb, d in zip(S, dS)]
        u = u + ad * du

    res = LMIResult(y=u, S=S, Z=X, status=status, primal_value=lmi.c0 + float(b @ u),
                    dual_value=lmi.c0 + sum(float(np.sum(blk.C * Xb)) for blk, Xb in zip(blocks, X)),
                    iterations=it, residuals=hist)
    if status == INFEASIBLE:
        raise Infeasible("iterates diverge; the problem appears infeasible or unbounded", res)
    if status == NUMERICAL_TROUBLE:
        raise NumericalTrouble(f"interior-point method stopped after {it} iterations "
                               f"(gap {hist.get('relative_gap', float('nan')):.2e})", res)
    return res


# --------------------------------------------------------------------------
# moment solutions
# --------------------------------------------------------------------------

@dataclass
class MomentSolution:
    """Solved state of a :class:`MomentProblem`."""

    values: list
    primal_value: float
    dual_value: float
    status: str
    residuals: dict = field(default_factory=dict)
    params: np.ndarray | None = None
    dual_blocks: list | None = None
    iterations: int = 0
    problem: MomentProblem | None = field(default=None, repr=False, compare=False)
    info: dict = field(default_factory=dict)
    _multipliers: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_values(cls, prob: MomentProblem, values: Sequence[np.ndarray],
                    status: str = OPTIMAL) -> "MomentSolution":
        """Wrap hand-made block matrices (objective read from the cells)."""
        sol = cls(values=[np.asarray(v, dtype=float) for v in values], primal_value=float("nan"),
                  dual_value=float("nan"), status=status, problem=prob)
        val = _objective_from_values(prob, sol.values)
        sol.primal_value = val
        sol.dual_value = val
        return sol

    def probabilities(self) -> np.ndarray:
        """Correlation ``p[a, b, x, y]`` read from the probability cells."""
        prob = self.problem
        p = np.zeros(prob.scenario.shape)
        for (a, b, x, y), (blk, i, j) in prob.meta["probability_cells"].items():
            p[a, b, x, y] = self.values[blk][i, j]
        return p

    def moment(self, key) -> float:
        """Value of a moment ``(group, letters)`` read from its first cell."""
        g, w = key
        return _moment_lookup(self.problem, self.values)[g](w)

    @property
    def dual_multipliers(self) -> np.ndarray:
        """One multiplier per explicit constraint (least-squares stationarity fit)."""
        if self._multipliers is None:
            self._multipliers = constraint_multipliers(self.problem, self)
        return self._multipliers

    def digest(self) -> str:
        """SHA-256 of the block values rendered at 17 significant digits."""
        h = hashlib.sha256()
        for v in self.values:
            h.update(" ".join("%.17g" % t for t in np.asarray(v).ravel()).encode())
            h.update(b"|")
        return h.hexdigest()


def _moment_lookup(prob, values):
    """Per group, a function word -> value read from the first cell carrying the word."""
    out = []
    for g, group in enumerate(prob.groups):
        table = {}
        for bidx, blk in enumerate(prob.blocks):
            if blk.group != g:
                continue
            cw = blk.cell_word
            flat = cw.ravel()
            order = np.argsort(flat, kind="stable")
            uniq, first = np.unique(flat[order], return_index=True)
            pos = order[first]
            vals = np.asarray(values[bidx]).ravel()[pos]
            for u, v in zip(uniq, vals):
                if u != ZERO_INDEX and u not in table:
                    table[int(u)] = float(v)
        sysw = group.system

        def look(w, table=table, sysw=sysw):
            return table[sysw.lookup(w)]

        look.table = table
        out.append(look)
    return out


def _objective_from_values(prob, values) -> float:
    looks = _moment_lookup(prob, values)
    total = prob.objective_constant
    for (g, w), c in prob.objective.items():
        total += c * looks[g](w)
    return float(total)


def solve(prob: MomentProblem, opts: SolverOptions | None = None) -> MomentSolution:
    """Maximize the objective of a moment problem.

    Raises :class:`Infeasible` or :class:`NumericalTrouble` on failure; the
    partial solution, when one exists, is attached as ``exc.solution``.
    """
    opts = opts or SolverOptions()
    lmi, red = lmi_from_problem(prob, seed=opts.seed)
    try:
        res = solve_lmi(lmi, opts)
    except SolverError as exc:
        if exc.solution is not None:
            exc.solution = _to_moment_solution(prob, lmi, red, exc.solution)
        raise
    return _to_moment_solution(prob, lmi, red, res)


def _to_moment_solution(prob, lmi, red, res: LMIResult) -> MomentSolution:
    values = block_values(prob, red.param, res.y)
    values = [_sym(v) for v in values]
    duals = []
    for sel, n, Zr in zip(red.rows, red.full_sizes, res.Z):
        Z = np.zeros((n, n))
        if len(sel):
            Z[np.ix_(sel, sel)] = Zr
        duals.append(Z)
    info = {"n_params": lmi.m, "reduced_sizes": list(lmi.sizes), "full_sizes": list(red.full_sizes)}
    sol = MomentSolution(values=values, primal_value=res.primal_value, dual_value=res.dual_value,
                         status=res.status, residuals=dict(res.residuals), params=res.y,
                         dual_blocks=duals, iterations=res.iterations, problem=prob, info=info)
    sol.info["reduction"] = red
    return sol


def constraint_multipliers(prob: MomentProblem, sol: MomentSolution) -> np.ndarray:
    """Least-squares multipliers of the explicit constraints at a solution.

    They satisfy, over the normal-form moments ``z``,
    ``grad(objective) + sum_b F_b*(Z_b) + R^T mu = 0`` as well as the fit allows.
    """
    red = sol.info.get("reduction")
    param = red.param if red is not None else parameterize(prob)
    offsets = param.offsets
    total = int(offsets[-1])
    grad = np.zeros(total)
    for (g, w), c in prob.objective.items():
        system = prob.groups[g].system
        row = system.expansion().getrow(system.lookup(w))
        grad[offsets[g] + row.indices] += c * row.data
    for blk, Z in zip(prob.blocks, sol.dual_blocks or []):
        system = prob.groups[blk.group].system
        cw = blk.cell_word.ravel()
        mask = cw != ZERO_INDEX
        weights = np.bincount(cw[mask], weights=Z.ravel()[mask], minlength=len(system))
        grad[offsets[blk.group]:offsets[blk.group + 1]] += system.expansion().T @ weights
    rows = _constraint_rows(prob, offsets)
    if not rows:
        return np.zeros(0)
    ri, ci, vv = [], [], []
    for k, (row, _) in enumerate(rows):
        for j, v in row.items():
            ri.append(j)
            ci.append(k)
            vv.append(v)
    R = sp.csr_matrix((vv, (ri, ci)), shape=(total, len(rows)))
    out = spla.lsqr(R, -grad, atol=1e-14, btol=1e-14, iter_lim=10 * (total + len(rows)))
    return out[0]


# --------------------------------------------------------------------------
# certification
# --------------------------------------------------------------------------

@dataclass
class CertifiedReport:
    min_eig_per_block: list
    max_constraint_residual: float
    duality_gap: float
    objective_recomputed: float
    constraint_residuals: dict = field(default_factory=dict)

    def ok(self, feas_tol: float = 1e-8) -> bool:
        return (min(self.min_eig_per_block, default=0.0) >= -feas_tol
                and self.max_constraint_residual <= feas_tol)


def certify(prob: MomentProblem, sol: MomentSolution) -> CertifiedReport:
    """Recompute feasibility and objective data from the block values alone."""
    if len(sol.values) != len(prob.blocks):
        raise ShapeMismatch(f"solution has {len(sol.values)} blocks, problem has {len(prob.blocks)}")
    for v, blk in zip(sol.values, prob.blocks):
        if np.shape(v) != (blk.size, blk.size):
            raise ShapeMismatch(f"block {blk.label}: shape {np.shape(v)} != {(blk.size, blk.size)}")
    values = [np.asarray(v, dtype=float) for v in sol.values]
    min_eigs = [float(np.linalg.eigvalsh(_sym(v))[0]) if v.size else 0.0 for v in values]

    # cell identifications: every cell must equal the first cell carrying its word
    ident = 0.0
    word_vals = []
    for g, group in enumerate(prob.groups):
        wv = np.full(len(group.system) + 1, np.nan)
        wv[-1] = 0.0
        word_vals.append(wv)
    for blk, v in zip(prob.blocks, values):
        wv = word_vals[blk.group]
        cw = blk.cell_word.ravel()
        flat = v.ravel()
        mask = cw != ZERO_INDEX
        unset = mask & np.isnan(wv[cw])
        idx = np.flatnonzero(unset)
        # first occurrence of every word not yet assigned
        _, first = np.unique(cw[idx], return_index=True)
        wv[cw[idx[first]]] = flat[idx[first]]
        ident = max(ident, float(np.max(np.abs(flat - wv[cw]), initial=0.0)))

    compl = 0.0
    for g, group in enumerate(prob.groups):
        sysw, wv = group.system, word_vals[g]
        rows = np.setdiff1d(np.arange(len(sysw)), sysw.normal_form)
        if len(rows) == 0:
            continue
        r = wv[rows] - wv[sysw.removed[rows]]
        for col in range(sysw.subs.shape[1]):
            r = r + wv[sysw.subs[rows, col]]
        r = r[~np.isnan(r)]
        if r.size:
            compl = max(compl, float(np.max(np.abs(r))))

    explicit = {}
    for con in prob.constraints:
        total = -con.rhs
        missing = False
        for (g, w), c in con.coeffs.items():
            val = word_vals[g][prob.groups[g].system.lookup(w)]
            if np.isnan(val):
                missing = True
                break
            total += c * val
        if missing:
            continue
        explicit[con.kind] = max(explicit.get(con.kind, 0.0), abs(total))
    obj = prob.objective_constant
    for (g, w), c in prob.objective.items():
        val = word_vals[g][prob.groups[g].system.lookup(w)]
        obj += c * (0.0 if np.isnan(val) else val)
    residuals = {"identification": ident, "completeness": compl, **explicit}
    return CertifiedReport(
        min_eig_per_block=min_eigs,
        max_constraint_residual=max(residuals.values()),
        duality_gap=abs(sol.primal_value - sol.dual_value),
        objective_recomputed=float(obj),
        constraint_residuals=residuals,
    )


# --------------------------------------------------------------------------
# SDPA sparse format
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    x = float(x)
    if x == 0.0:
        x = 0.0  # normalize negative zero
    return "%.17g" % x


def export_sdpa(prob: MomentProblem) -> str:
    """SDPA sparse text of the full (unreduced) blocks of a moment problem.

    The problem is written as ``min (-c).y  s.t.  sum_k y_k F_k - F_0 >= 0``
    with ``F_0`` the negated constant part.  Two leading comment lines carry the
    optimization sense and the objective constant.
    """
    lmi, _ = lmi_from_problem(prob, reduce=False)
    return write_sdpa(lmi)


def write_sdpa(lmi: LMI) -> str:
    out = io.StringIO()
    out.write("* sense: max\n")
    out.write(f"* objective_constant: {_fmt(lmi.c0)}\n")
    out.write(f"{lmi.m}\n")
    out.write(f"{len(lmi.sizes)}\n")
    out.write(" ".join(str(n) for n in lmi.sizes) + "\n")
    out.write(" ".join(_fmt(-c) for c in lmi.c) + "\n")
    entries = []
    for bidx, (Fb, n) in enumerate(zip(lmi.F, lmi.sizes)):
        coo = Fb.tocoo()
        i, j = np.divmod(coo.row, n)
        keep = (i <= j) & (coo.data != 0.0)
        for r, cc, k, v in zip(i[keep], j[keep], coo.col[keep], coo.data[keep]):
            val = -v if k == 0 else v
            entries.append((int(k), bidx + 1, int(r) + 1, int(cc) + 1, val))
    entries.sort(key=lambda e: e[:4])
    for k, blk, i, j, v in entries:
        out.write(f"{k} {blk} {i} {j} {_fmt(v)}\n")
    return out.getvalue()


def parse_sdpa(text: str) -> LMI:
    """Parse SDPA sparse text into an :class:`LMI` (maximization form)."""
    c0 = 0.0
    tokens_lines = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("*") or line.startswith('"'):
            body = line.lstrip('*"').strip()
            if body.startswith("objective_constant:"):
                try:
                    c0 = float(body.split(":", 1)[1])
                except ValueError as exc:
                    raise ParseError(f"bad objective constant: {line}") from exc
            continue
        for ch in ",{}()":
            line = line.replace(ch, " ")
        tokens_lines.append(line.split())
    try:
        pos = 0

        def next_nonempty():
            nonlocal pos
            while pos < len(tokens_lines) and not tokens_lines[pos]:
                pos += 1
            if pos >= len(tokens_lines):
                raise ParseError("unexpected end of SDPA data")
            pos += 1
            return tokens_lines[pos - 1]

        m = int(next_nonempty()[0])
        nblock = int(next_nonempty()[0])
        sizes = [abs(int(t)) for t in next_nonempty()[:nblock]]
        if m > 0:
            cvals = []
            while len(cvals) < m:
                cvals += [float(t) for t in next_nonempty()]
            c = -np.asarray(cvals[:m])
        else:
            c = np.zeros(0)
            # the objective line of an empty vector may be blank
            if pos < len(tokens_lines) and not tokens_lines[pos]:
                pos += 1
        data = [[] for _ in sizes]
        for toks in tokens_lines[pos:]:
            if not toks:
                continue
            k, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
            if k == 0:
                v = -v
            data[blk - 1].append((k, i - 1, j - 1, v))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed SDPA data: {exc}") from exc
    F = []
    for n, entries in zip(sizes, data):
        ri, ci, vv = [], [], []
        for k, i, j, v in entries:
            ri.append(i * n + j)
            ci.append(k)
            vv.append(v)
            if i != j:
                ri.append(j * n + i)
                ci.append(k)
                vv.append(v)
        F.append(sp.csr_matrix((vv, (ri, ci)), shape=(n * n, m + 1)))
    return LMI(c=c, c0=c0, F=F, sizes=sizes)


def reduce_lmi(lmi: LMI, seed: int = 0) -> tuple[LMI, list]:
    """Facial reduction of an arbitrary LMI by random evaluations."""
    rng = np.random.default_rng(seed)
    draws = []

    def sampler_for(bidx):
        def sample(t):
            while len(draws) <= t:
                draws.append(lmi.evaluate(rng.standard_normal(lmi.m)))
            return draws[t][bidx]
        return sample

    rows, F = [], []
    for bidx, (Fb, n) in enumerate(zip(lmi.F, lmi.sizes)):
        sel = _facial_rows(sampler_for(bidx)) if n else np.zeros(0, dtype=np.int64)
        idx = (sel[:, None] * n + sel[None, :]).ravel()
        F.append(Fb[idx].tocsr())
        rows.append(sel)
    return LMI(c=lmi.c, c0=lmi.c0, F=F, sizes=[len(s) for s in rows]), rows


def solve_sdpa(text: str, opts: SolverOptions | None = None) -> LMIResult:
    """Parse, facially reduce and solve an SDPA problem."""
    opts = opts or SolverOptions()
    lmi = parse_sdpa(text)
    reduced, _ = reduce_lmi(lmi, seed=opts.seed)
    return solve_lmi(reduced, opts)
