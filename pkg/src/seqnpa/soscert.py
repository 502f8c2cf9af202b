"""Sparse sum-of-squares certificates for the sequential relaxation.

A certificate of level ``n`` for a functional ``beta = sum c A(a|x) B(b|y) + c0``
is the identity

    m 1 - beta = sum_{a,x} A(a|x) g_{ax}(Z_{ax})
                 + sum lambda_{abxy} (A(a|x) B(b|y) - p(ab|xy) 1)
                 + sum_x (1 - sum_a A(a|x)) h_x(Q_x)

where ``g(Z) = sum_{u,v} Z[u, v] u* v`` runs over Bob words ``u, v`` of degree
``<= n``, each ``Z_{ax}`` is positive semidefinite, and ``h_x(Q_x)`` is the
Bob polynomial ``sum Q_x[u, v] u* v`` (the ``p_x* q_x`` term).  Alice letters
commute with Bob letters and are never multiplied with each other, so both
sides live in the span of ``1 * w`` and ``A(a|x) * w`` for Bob words ``w``.
Coefficients are compared after reducing Bob words to normal form with the
completeness rules and identifying each word with its adjoint (the real
symmetric model).

Evaluating both sides on any feasible point of the level-``n`` sequential
relaxation sends the last two sums to zero and the Gram part to a nonnegative
number, hence ``score <= m``.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NotOptimal, ParseError, ShapeMismatch
from .ncalgebra import BOB, Word, dot_letters, enumerate_basis, parse_word, render
from .relax import ZERO_INDEX, MomentProblem, WordSystem
from .scenario import BellFunctional

__all__ = [
    "SosCertificate",
    "dual_to_certificate",
    "verify_certificate",
    "duality_gap",
    "certificate_to_text",
    "certificate_from_text",
]

IDENTITY_SECTOR = "1"


@dataclass
class SosCertificate:
    """Data of the identity described in the module docstring.

    ``gram_blocks`` maps ``(a, x)`` (and optionally ``"1"`` for a pure Bob
    square) to a matrix over ``basis``; ``px_qx`` maps ``x`` to the matrix
    ``Q_x``; ``lam`` and ``probabilities`` are arrays indexed ``[a, b, x, y]``.
    """

    m: float
    basis: list
    gram_blocks: dict
    lam: np.ndarray
    probabilities: np.ndarray
    px_qx: dict
    level: int
    info: dict = field(default_factory=dict)

    @property
    def scenario_shape(self) -> tuple:
        return self.lam.shape


def _basis_index(basis) -> dict:
    return {tuple(w): i for i, w in enumerate(basis)}


def dual_to_certificate(prob: MomentProblem, sol) -> SosCertificate:
    """Assemble a certificate from an optimal sequential solution.

    The dual slack blocks become the Gram matrices.  The multipliers of the
    normalization and no-signaling constraints are fitted by least squares
    (:func:`seqnpa.sdpcore.constraint_multipliers`); the no-signaling ones
    define the Bob polynomials ``K_x`` and the ``(1 - sum_a A(a|x))`` terms.
    """
    from .sdpcore import OPTIMAL

    if prob.kind != "sequential":
        raise ValueError("certificates are assembled for sequential problems only")
    if sol.status != OPTIMAL:
        raise NotOptimal(f"solution status is {sol.status}")
    if sol.dual_blocks is None:
        raise NotOptimal("solution carries no dual blocks")
    s = prob.scenario
    n = prob.level
    basis_words = [w.letters for w in prob.blocks[0].basis]
    index = _basis_index(basis_words)
    gid = prob.meta["group_of"]
    gram = {}
    for (a, x), g in gid.items():
        Z = np.asarray(sol.dual_blocks[g], dtype=float)
        gram[(a, x)] = 0.5 * (Z + Z.T)
    mu = sol.dual_multipliers
    K = {x: {} for x in range(1, s.nX)}
    mu_norm = 0.0
    for con, val in zip(prob.constraints, mu):
        if con.kind == "normalization":
            mu_norm += float(val)
        elif con.kind == "no_signaling":
            # coefficients are +1 on (a|x) and -1 on (a|0); the word is shared
            (g, w) = next(k for k, c in con.coeffs.items() if c > 0)
            x = next(xx for (aa, xx), gg in gid.items() if gg == g)
            K[x][w] = K[x].get(w, 0.0) + float(val)
        else:
            raise ValueError(f"unexpected constraint kind {con.kind!r}")
    m = float(sol.dual_value)
    size = len(basis_words)
    Q = {x: np.zeros((size, size)) for x in range(s.nX)}
    e = index[()]
    Q[0][e, e] += m - prob.objective_constant
    for x in range(1, s.nX):
        for w, val in K[x].items():
            u, v = _factor(w, n)
            i, j = index[u], index[v]
            for target, sign in ((Q[0], 1.0), (Q[x], -1.0)):
                target[i, j] += 0.5 * sign * val
                target[j, i] += 0.5 * sign * val
    shape = s.shape
    return SosCertificate(
        m=m, basis=basis_words, gram_blocks=gram, lam=np.zeros(shape),
        probabilities=np.asarray(sol.probabilities(), dtype=float), px_qx=Q, level=n,
        info={"multiplier_constant": prob.objective_constant - mu_norm},
    )


def _factor(w: tuple, n: int) -> tuple[tuple, tuple]:
    """Split a Bob word of degree ``<= 2n`` as ``u* v`` with ``deg u, deg v <= n``."""
    k = len(w) // 2
    if len(w) - k > n:
        raise ShapeMismatch(f"word of degree {len(w)} does not factor at level {n}")
    return tuple(w[:k][::-1]), tuple(w[k:])


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------

class _Collector:
    """Coefficients over ``(sector, normal-form word)`` with adjoint identification."""

    def __init__(self, scenario, max_degree: int):
        self.system = WordSystem(scenario, commute_parties=False, reduce_parties=[BOB])
        self.terms: list = []
        self.max_degree = max_degree

    def add(self, sector, letters, coeff: float):
        if letters is None or coeff == 0.0:
            return
        self.terms.append((sector, self.system.intern(letters), float(coeff)))

    def add_gram(self, sector, basis, M, sign: float = 1.0):
        M = np.asarray(M, dtype=float)
        rows, cols = np.nonzero(M)
        for i, j in zip(rows, cols):
            self.add(sector, dot_letters(basis[i], basis[j], False), sign * M[i, j])

    def collect(self) -> dict:
        self.system.close()
        out: dict = {}
        for sector, idx, c in self.terms:
            for j, v in self.system.expand(idx).items():
                key = (sector, j)
                out[key] = out.get(key, 0.0) + c * v
        return out


def verify_certificate(c: SosCertificate, f: BellFunctional, n: int) -> dict:
    """Re-expand both sides of the certificate identity from scratch.

    Returns ``coefficient_residual`` (largest absolute coefficient mismatch),
    ``constant_residual`` (mismatch on ``1 * 1``), ``min_gram_eig`` and
    ``n_coefficients``.
    """
    s = f.scenario
    if c.lam.shape != s.shape or c.probabilities.shape != s.shape:
        raise ShapeMismatch(f"certificate arrays have shape {c.lam.shape}, scenario needs {s.shape}")
    if c.level != n:
        raise ShapeMismatch(f"certificate has level {c.level}, verification asked for level {n}")
    basis = [w.letters for w in enumerate_basis(s, [BOB], n)]
    if [tuple(w) for w in c.basis] != basis:
        raise ShapeMismatch("certificate basis does not match the Bob words of the level")
    size = len(basis)
    for key, M in list(c.gram_blocks.items()) + list(c.px_qx.items()):
        if np.shape(M) != (size, size):
            raise ShapeMismatch(f"matrix {key!r} has shape {np.shape(M)}, expected {(size, size)}")
    for key in c.gram_blocks:
        if key != IDENTITY_SECTOR and not (0 <= key[0] < s.nA and 0 <= key[1] < s.nX):
            raise ShapeMismatch(f"gram block {key!r} outside the scenario")
    for x in c.px_qx:
        if not 0 <= x < s.nX:
            raise ShapeMismatch(f"p_x q_x entry for input {x} outside the scenario")

    col = _Collector(s, 2 * n + 1)
    one = ()
    # left-hand side  m 1 - beta, moved to the right with a minus sign
    col.add(IDENTITY_SECTOR, one, -(c.m - f.constant))
    for a, b, x, y in s.cells():
        coef = float(f.coeffs[a, b, x, y])
        col.add((a, x), (_bob(b, y),), coef)
    # right-hand side
    for key, Z in c.gram_blocks.items():
        col.add_gram(key, basis, Z)
    for a, b, x, y in s.cells():
        lam = float(c.lam[a, b, x, y])
        if lam != 0.0:
            col.add((a, x), (_bob(b, y),), lam)
            col.add(IDENTITY_SECTOR, one, -lam * float(c.probabilities[a, b, x, y]))
    for x, Qx in c.px_qx.items():
        col.add_gram(IDENTITY_SECTOR, basis, Qx)
        for a in range(s.nA):
            col.add_gram((a, x), basis, Qx, sign=-1.0)
    coeffs = col.collect()
    resid = max((abs(v) for v in coeffs.values()), default=0.0)
    e = col.system.nf_position[col.system.lookup(one)]
    const = abs(coeffs.get((IDENTITY_SECTOR, int(e)), 0.0))
    eigs = [float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[0]) for Z in c.gram_blocks.values() if np.size(Z)]
    return {"coefficient_residual": float(resid), "constant_residual": float(const),
            "min_gram_eig": min(eigs, default=0.0), "n_coefficients": len(coeffs)}


def _bob(b: int, y: int):
    from .ncalgebra import Letter

    return Letter(BOB, y, b)


def duality_gap(primal, cert: SosCertificate) -> float:
    """``|primal_value - m|``; warns (without failing) when the levels differ."""
    prob = getattr(primal, "problem", None)
    if prob is not None and prob.level != cert.level:
        warnings.warn(f"primal level {prob.level} differs from certificate level {cert.level}",
                      RuntimeWarning, stacklevel=2)
    return abs(float(primal.primal_value) - float(cert.m))


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % float(v)


def _sector_label(key) -> str:
    return IDENTITY_SECTOR if key == IDENTITY_SECTOR else f"A({key[0]}|{key[1]})"


def certificate_to_text(c: SosCertificate) -> str:
    """Structured text: header, basis labels, lambda table, Gram and ``Q_x`` matrices."""
    out = io.StringIO()
    nA, nB, nX, nY = c.lam.shape
    out.write(f"sos-certificate level {c.level} shape {nA} {nB} {nX} {nY}\n")
    out.write(f"m {_fmt(c.m)}\n")
    out.write("basis " + " ".join(render(Word(tuple(w), False)) for w in c.basis) + "\n")
    for a in range(nA):
        for b in range(nB):
            for x in range(nX):
                for y in range(nY):
                    out.write(f"lambda {a} {b} {x} {y} {_fmt(c.lam[a, b, x, y])} "
                              f"{_fmt(c.probabilities[a, b, x, y])}\n")

    def mat(head, M):
        out.write(head + "\n")
        for row in np.asarray(M):
            out.write(" ".join(_fmt(v) for v in row) + "\n")

    keys = sorted(c.gram_blocks, key=lambda k: (k == IDENTITY_SECTOR, str(k)))
    for key in keys:
        mat(f"gram {_sector_label(key)}", c.gram_blocks[key])
    for x in sorted(c.px_qx):
        mat(f"pq {x}", c.px_qx[x])
    out.write("end\n")
    return out.getvalue()


def certificate_from_text(text: str) -> SosCertificate:
    """Inverse of :func:`certificate_to_text`."""
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    try:
        head = lines[0].split()
        if head[0] != "sos-certificate":
            raise ParseError("missing 'sos-certificate' header")
        level = int(head[2])
        shape = tuple(int(t) for t in head[4:8])
        m = float(lines[1].split()[1])
        basis_tok = lines[2].split()[1:]
        basis = [parse_word(t).letters for t in basis_tok]
        size = len(basis)
        lam = np.zeros(shape)
        probs = np.zeros(shape)
        pos = 3
        while lines[pos].startswith("lambda "):
            tok = lines[pos].split()
            a, b, x, y = (int(t) for t in tok[1:5])
            lam[a, b, x, y] = float(tok[5])
            probs[a, b, x, y] = float(tok[6])
            pos += 1
        gram, pq = {}, {}
        while lines[pos] != "end":
            tok = lines[pos].split()
            M = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(size)])
            if M.shape != (size, size):
                raise ParseError(f"matrix {lines[pos]!r} is not {size}x{size}")
            if tok[0] == "gram":
                label = tok[1]
                if label == IDENTITY_SECTOR:
                    gram[IDENTITY_SECTOR] = M
                else:
                    a, x = label[2:-1].split("|")
                    gram[(int(a), int(x))] = M
            elif tok[0] == "pq":
                pq[int(tok[1])] = M
            else:
                raise ParseError(f"unknown section {tok[0]!r}")
            pos += 1 + size
    except (IndexError, ValueError, KeyError) as exc:
        raise ParseError(f"malformed certificate: {exc}") from exc
    return SosCertificate(m=m, basis=basis, gram_blocks=gram, lam=lam, probabilities=probs,
                          px_qx=pq, level=level)
