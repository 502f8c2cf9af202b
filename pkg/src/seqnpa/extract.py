"""Flatness detection, flat extension and finite-dimensional model extraction.

A sequential solution is flat when the moment matrix ``Theta = sum_a Theta(a|x)``
has the same numerical rank as its restriction to words of degree ``<= n-1``.
In that case the Gram vectors of the low-degree words span a finite
dimensional space on which Bob's letters act by left multiplication, and
Alice's operators are read off from the blocks ``Theta(a|x)``.

Operators of a :class:`GnsModel` are stored in an orthonormal frame obtained
from the Gram matrix of the selected words by its symmetric square root.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditioned, LevelTooSmall, NotFlat, RangeViolation, ScenarioMismatch
from .ncalgebra import BOB, Letter, Word, mul_letters, render
from .scenario import BellFunctional, Correlation, score

__all__ = [
    "FlatnessReport",
    "GnsModel",
    "numerical_rank",
    "check_flat",
    "flat_extend",
    "gns_build",
    "verify_model",
    "pivoted_selection",
]

DEFAULT_RANK_TOL = 1e-7
LOOSE_TOL = 1e-6
TIGHT_TOL = 1e-8


def numerical_rank(M, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of eigenvalues above ``rel_tol * max(lambda_max, 1)``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    return int(np.sum(w > rel_tol * max(w[-1], 1.0)))


@dataclass
class FlatnessReport:
    rank_full: int
    rank_trunc: int
    per_ax_flat: dict
    tol_used: float
    is_flat: bool
    borderline: bool = False
    ranks_by_tol: dict = field(default_factory=dict)


def _sequential_parts(sol):
    prob = sol.problem
    if prob is None or prob.kind != "sequential":
        raise ValueError("a solution of a sequential problem is required")
    if prob.level < 2:
        raise LevelTooSmall("flatness needs level n >= 2")
    gid = prob.meta["group_of"]
    x0 = prob.meta.get("reference_input", 0)
    s = prob.scenario
    blocks = {ax: np.asarray(sol.values[g], dtype=float) for ax, g in gid.items()}
    theta = sum(blocks[(a, x0)] for a in range(s.nA))
    basis = prob.blocks[gid[(0, x0)]].basis
    low = np.array([i for i, w in enumerate(basis) if w.degree <= prob.level - 1])
    return prob, blocks, theta, basis, low


def _flat_at(theta, blocks, low, tol):
    full = numerical_rank(theta, tol)
    trunc = numerical_rank(theta[np.ix_(low, low)], tol)
    per = {ax: numerical_rank(B, tol) == numerical_rank(B[np.ix_(low, low)], tol)
           for ax, B in blocks.items()}
    return full, trunc, per


def check_flat(sol, rel_tol: float = DEFAULT_RANK_TOL, require_blocks: bool = True) -> FlatnessReport:
    """Rank-loop test on a sequential solution.

    ``is_flat`` requires equal ranks of ``Theta`` and its degree ``n-1``
    truncation and, when ``require_blocks`` is set, the same for every
    ``Theta(a|x)``.  ``borderline`` flags disagreement between the loose and
    tight tolerances.
    """
    _, blocks, theta, _, low = _sequential_parts(sol)
    full, trunc, per = _flat_at(theta, blocks, low, rel_tol)
    flat = full == trunc and (all(per.values()) or not require_blocks)
    by_tol = {}
    verdicts = []
    for tol in (LOOSE_TOL, TIGHT_TOL):
        f2, t2, p2 = _flat_at(theta, blocks, low, tol)
        by_tol[tol] = (f2, t2)
        verdicts.append(f2 == t2 and (all(p2.values()) or not require_blocks))
    return FlatnessReport(rank_full=full, rank_trunc=trunc, per_ax_flat=per, tol_used=rel_tol,
                          is_flat=flat, borderline=verdicts[0] != verdicts[1], ranks_by_tol=by_tol)


def _pinv_psd(A, rel_tol):
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    cut = rel_tol * max(w[-1] if w.size else 0.0, 1.0)
    keep = w > cut
    return (V[:, keep] / w[keep]) @ V[:, keep].T, V[:, keep]


def flat_extend(A, B, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Rank-preserving PSD completion ``[[A, B], [B^T, Z^T A Z]]`` with ``B = A Z``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ValueError("A must be square and B must have as many rows as A")
    Ainv, U = _pinv_psd(A, rel_tol)
    resid = B - U @ (U.T @ B)
    if np.linalg.norm(resid) > 1e-8 * max(np.linalg.norm(B), 1.0):
        raise RangeViolation(f"border leaves the range of A (residual {np.linalg.norm(resid):.3g})")
    Z = Ainv @ B
    C = Z.T @ A @ Z
    C = 0.5 * (C + C.T)
    return np.block([[A, B], [B.T, C]])


def pivoted_selection(M, rel_tol: float = DEFAULT_RANK_TOL) -> list[int]:
    """Greedy pivoted Cholesky: indices of a well-conditioned spanning subset.

    Ties are broken by the smallest index, so the order is deterministic.
    """
    M = np.array(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return []
    cut = rel_tol * max(np.linalg.eigvalsh(0.5 * (M + M.T))[-1], 1.0)
    d = np.diag(M).copy()
    L = np.zeros((n, 0))
    chosen: list[int] = []
    while len(chosen) < n:
        resid = d - np.sum(L ** 2, axis=1)
        resid[chosen] = -np.inf
        j = int(np.argmax(resid))
        if resid[j] <= cut:
            break
        col = (M[:, j] - L @ L[j]) / np.sqrt(resid[j])
        L = np.hstack([L, col[:, None]])
        chosen.append(j)
    return chosen


@dataclass
class GnsModel:
    """Finite-dimensional model: state, Bob projectors and Alice POVMs.

    ``bob_ops[(b, y)]`` and ``alice_ops[(a, x)]`` are ``dim x dim`` matrices in the
    orthonormal frame ``G^{1/2}``; ``omega`` is the state vector in that frame.
    ``omega_coords`` are the coordinates of the identity word in the word basis.
    """

    dim: int
    basis_words: list
    omega: np.ndarray
    bob_ops: dict
    alice_ops: dict
    gram: np.ndarray
    omega_coords: np.ndarray | None = None
    scenario: object = None

    def correlation(self) -> np.ndarray:
        s = self.scenario
        p = np.zeros(s.shape)
        for (a, x), Ah in self.alice_ops.items():
            for (b, y), Bp in self.bob_ops.items():
                p[a, b, x, y] = float(self.omega @ Ah @ Bp @ self.omega)
        return p

    def residuals(self) -> dict:
        s = self.scenario
        eye = np.eye(self.dim)
        proj = max((np.abs(B @ B - B).max(initial=0.0) for B in self.bob_ops.values()), default=0.0)
        bob_sum = max(np.abs(sum(self.bob_ops[(b, y)] for b in range(s.nB)) - eye).max(initial=0.0)
                      for y in range(s.nY))
        alice_sum = max(np.abs(sum(self.alice_ops[(a, x)] for a in range(s.nA)) - eye).max(initial=0.0)
                        for x in range(s.nX))
        alice_min = min((np.linalg.eigvalsh(0.5 * (A + A.T))[0] if self.dim else 0.0
                         for A in self.alice_ops.values()), default=0.0)
        comm = max((np.linalg.norm(A @ B - B @ A) for A in self.alice_ops.values()
                    for B in self.bob_ops.values()), default=0.0)
        sums = [sum(self.alice_ops[(a, x)] for a in range(s.nA)) for x in range(s.nX)]
        drift = max((np.abs(S - sums[0]).max(initial=0.0) for S in sums), default=0.0)
        return {
            "state_norm": abs(float(self.omega @ self.omega) - 1.0),
            "bob_projection": float(proj),
            "bob_completeness": float(bob_sum),
            "alice_completeness": float(alice_sum),
            "alice_min_eig": float(alice_min),
            "commutant": float(comm),
            "alice_sum_drift": float(drift),
        }

    def to_text(self) -> str:
        """Structured text rendering with ``%.17g`` numbers."""
        out = io.StringIO()
        out.write(f"dim {self.dim}\n")
        out.write("basis " + " ".join(render(w) for w in self.basis_words) + "\n")

        def mat(name, M):
            out.write(f"{name}\n")
            for row in np.atleast_2d(M):
                out.write(" ".join("%.17g" % v for v in row) + "\n")

        out.write("omega " + " ".join("%.17g" % v for v in self.omega) + "\n")
        mat("gram", self.gram)
        for (b, y) in sorted(self.bob_ops):
            mat(f"B({b}|{y})", self.bob_ops[(b, y)])
        for (a, x) in sorted(self.alice_ops):
            mat(f"A({a}|{x})", self.alice_ops[(a, x)])
        return out.getvalue()


def _sqrt_psd(G):
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


def gns_build(sol, rel_tol: float = DEFAULT_RANK_TOL, check_tol: float = 1e-6) -> GnsModel:
    """Finite-dimensional model from a flat sequential solution.

    Raises :class:`NotFlat` when the rank loop is missing or borderline, and
    :class:`IllConditioned` when the Gram matrix of the chosen words is too
    badly conditioned to solve against.
    """
    report = check_flat(sol, rel_tol)
    if not report.is_flat or report.borderline:
        raise NotFlat(f"solution is not flat (rank {report.rank_full} vs truncated {report.rank_trunc}"
                      f"{', borderline' if report.borderline else ''})", report)
    prob, blocks, theta, basis, low = _sequential_parts(sol)
    s = prob.scenario
    sel_low = pivoted_selection(theta[np.ix_(low, low)], rel_tol)
    S = [int(low[i]) for i in sel_low]
    G = theta[np.ix_(S, S)]
    cond = np.linalg.cond(G)
    if cond > 1e12:
        raise IllConditioned(f"Gram matrix condition number {cond:.3g}")
    Ginv = np.linalg.inv(G)
    root, inv_root = _sqrt_psd(G)
    one = basis.index[Word((), False)]

    def coords(col):  # coordinates of the vector of word index ``col`` (or a column array)
        return Ginv @ theta[S, col]

    omega_c = coords(one)
    omega = root @ omega_c
    bob_ops = {}
    for y in range(s.nY):
        for b in range(s.nB):
            letter = Letter(BOB, y, b)
            M = np.zeros((len(S), len(S)))
            for j, sj in enumerate(S):
                prod = mul_letters((letter,), basis[sj].letters, False)
                if prod is None:
                    continue
                M[:, j] = coords(basis.index[Word(prod, False)])
            O = root @ M @ inv_root
            bob_ops[(b, y)] = 0.5 * (O + O.T)
    alice_ops = {}
    for (a, x), B in blocks.items():
        O = inv_root @ B[np.ix_(S, S)] @ inv_root
        alice_ops[(a, x)] = 0.5 * (O + O.T)
    model = GnsModel(dim=len(S), basis_words=[basis[i] for i in S], omega=omega, bob_ops=bob_ops,
                     alice_ops=alice_ops, gram=G, omega_coords=omega_c, scenario=s)
    res = model.residuals()
    bad = {k: v for k, v in res.items()
           if (k == "alice_min_eig" and v < -check_tol) or (k != "alice_min_eig" and v > check_tol)}
    if bad:
        raise NotFlat(f"extracted operators violate model invariants: {bad}", report)
    return model


def verify_model(model: GnsModel, f: BellFunctional) -> dict:
    """Born-rule correlation, its score and the residuals of a model."""
    if f.scenario != model.scenario:
        raise ScenarioMismatch("model and functional use different scenarios")
    p = model.correlation()
    out = dict(model.residuals())
    out["correlation"] = p
    out["score"] = score(f, Correlation(f.scenario, p))
    return out


def born_residual(model: GnsModel, sol) -> float:
    """Largest deviation between the model's correlation and the solution's cells."""
    return float(np.abs(model.correlation() - sol.probabilities()).max())
