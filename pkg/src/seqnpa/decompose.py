"""Signaling decomposition of an Alice operator family.

A family ``{A_{a|x}}`` is split with the trivial/complement symmetrizers of
the symmetric groups acting on the outcome label ``a`` and on the input label
``x``.  The invariant projector ``Pi_0`` averages over the chosen label and
``Pi_1 = id - Pi_0`` keeps the rest:

* ``si  = Pi_0^a Pi_1^x (A)``  (part of the marginal that depends on ``x``)
* ``res = Pi_1^a (A)``
* ``ns  = Pi_0^a Pi_0^x (A) + res / (1 + D eta)``

so that ``A = ns + si + D eta / (1 + D eta) * res`` holds as an identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingContext
from .ncalgebra import BOB
from .scenario import Scenario
from .strategies import monomials

__all__ = [
    "OperatorFamily",
    "DecompositionResult",
    "symmetrize",
    "decompose",
    "verify_decomposition",
    "marginal_deviation",
    "dim_vn",
    "low_degree_vectors",
]


@dataclass
class OperatorFamily:
    """Matrices ``ops[(a, x)]`` on ``C^dim`` with optional state and Bob operators.

    ``state`` is a vector or a density matrix; ``bob_ops`` maps ``(b, y)`` to a
    matrix and ``level`` is the degree budget ``n`` of the low-degree checks.
    """

    dim: int
    ops: dict
    state: np.ndarray | None = None
    bob_ops: dict | None = None
    level: int = 1

    def __post_init__(self):
        self.ops = {(int(a), int(x)): np.asarray(M) for (a, x), M in self.ops.items()}
        if not self.ops:
            raise ValueError("an operator family needs at least one operator")
        for key, M in self.ops.items():
            if M.shape != (self.dim, self.dim):
                raise ValueError(f"operator {key} has shape {M.shape}, expected {(self.dim, self.dim)}")
        nA, nX = self.n_outcomes, self.n_inputs
        if set(self.ops) != {(a, x) for a in range(nA) for x in range(nX)}:
            raise ValueError("operators must be indexed by a full grid of (a, x) pairs")
        if self.bob_ops is not None:
            self.bob_ops = {(int(b), int(y)): np.asarray(M) for (b, y), M in self.bob_ops.items()}
            for key, M in self.bob_ops.items():
                if M.shape != (self.dim, self.dim):
                    raise ValueError(f"Bob operator {key} has shape {M.shape}")
        if self.state is not None:
            self.state = np.asarray(self.state)
            if self.state.shape not in ((self.dim,), (self.dim, self.dim)):
                raise ValueError(f"state has shape {self.state.shape}")
        if self.level < 0:
            raise ValueError("level must be >= 0")

    @property
    def n_outcomes(self) -> int:
        return 1 + max(a for a, _ in self.ops)

    @property
    def n_inputs(self) -> int:
        return 1 + max(x for _, x in self.ops)

    def stack(self) -> np.ndarray:
        """Operators as an array of shape ``(nA, nX, dim, dim)``."""
        return np.array([[self.ops[(a, x)] for x in range(self.n_inputs)] for a in range(self.n_outcomes)])

    def with_stack(self, arr: np.ndarray) -> "OperatorFamily":
        ops = {(a, x): arr[a, x] for a in range(arr.shape[0]) for x in range(arr.shape[1])}
        return OperatorFamily(self.dim, ops, self.state, self.bob_ops, self.level)

    def bob_scenario(self) -> Scenario:
        if self.bob_ops is None:
            raise MissingContext("the family carries no Bob operators")
        nB = 1 + max(b for b, _ in self.bob_ops)
        nY = 1 + max(y for _, y in self.bob_ops)
        return Scenario(nX=self.n_inputs, nY=nY, nA=self.n_outcomes, nB=nB)

    def state_factor(self) -> np.ndarray:
        """Matrix ``R`` with ``rho = R R^dagger``."""
        if self.state is None:
            raise MissingContext("the family carries no state")
        if self.state.ndim == 1:
            return self.state[:, None]
        rho = 0.5 * (self.state + self.state.conj().T)
        w, V = np.linalg.eigh(rho)
        keep = w > 1e-14 * max(w[-1], 1e-300)
        return V[:, keep] * np.sqrt(w[keep])


@dataclass
class DecompositionResult:
    """Output of :func:`decompose`; each family is an ``(nA, nX, dim, dim)`` array."""

    ns: np.ndarray
    si: np.ndarray
    res: np.ndarray
    scale: float
    eta_used: float
    dim_vn: int
    checks: dict = field(default_factory=dict)

    @property
    def res_weight(self) -> float:
        """Coefficient ``D eta / (1 + D eta)`` of the residual part."""
        return 1.0 - self.scale

    def reconstruct(self) -> np.ndarray:
        return self.ns + self.si + self.res_weight * self.res

    def to_text(self) -> str:
        lines = [f"eta {self.eta_used:.17g}", f"dim_vn {self.dim_vn}", f"scale {self.scale:.17g}"]
        for name, arr in (("NS", self.ns), ("SI", self.si), ("RES", self.res)):
            for a in range(arr.shape[0]):
                for x in range(arr.shape[1]):
                    lines.append(f"{name}({a}|{x})")
                    lines.extend(" ".join("%.17g" % v for v in row) for row in np.real(arr[a, x]))
        for key in sorted(self.checks):
            lines.append(f"check {key} {self.checks[key]:.17g}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# symmetrizers
# --------------------------------------------------------------------------

_AXES = {"outcome": 0, "input": 1}


def _pi0(arr: np.ndarray, axis: str) -> np.ndarray:
    ax = _AXES[axis]
    return np.broadcast_to(arr.mean(axis=ax, keepdims=True), arr.shape).copy()


def _pi1(arr: np.ndarray, axis: str) -> np.ndarray:
    return arr - _pi0(arr, axis)


def symmetrize(fam: OperatorFamily, axis: str, part: str) -> OperatorFamily:
    """Apply ``Pi_0`` (``part="invariant"``) or ``Pi_1`` (``part="complement"``)
    of the permutation action on the outcome or input label."""
    if axis not in _AXES:
        raise ValueError(f"axis must be 'outcome' or 'input', got {axis!r}")
    if part not in ("invariant", "complement"):
        raise ValueError(f"part must be 'invariant' or 'complement', got {part!r}")
    arr = fam.stack()
    out = _pi0(arr, axis) if part == "invariant" else _pi1(arr, axis)
    return fam.with_stack(out)


def decompose(fam: OperatorFamily, eta: float, dimVn: int) -> DecompositionResult:
    """NS/SI/residual split with residual weight ``D eta / (1 + D eta)``."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    if dimVn < 1:
        raise ValueError("dimVn must be >= 1")
    arr = fam.stack()
    avg_a = _pi0(arr, "outcome")
    si = _pi1(avg_a, "input")
    res = arr - avg_a
    scale = 1.0 / (1.0 + dimVn * eta)
    ns = _pi0(avg_a, "input") + scale * res
    out = DecompositionResult(ns=ns, si=si, res=res, scale=scale, eta_used=float(eta), dim_vn=int(dimVn))
    out.checks["reconstruction"] = float(np.abs(out.reconstruct() - arr).max())
    out.checks["res_outcome_sum"] = float(np.abs(res.sum(axis=0)).max())
    if fam.state is not None and fam.bob_ops is not None:
        out.checks.update(verify_decomposition(out, fam))
    return out


# --------------------------------------------------------------------------
# low-degree checks
# --------------------------------------------------------------------------

def dim_vn(fam_or_scenario, n: int) -> int:
    """Number of canonical Bob words of degree ``<= n``."""
    s = fam_or_scenario.bob_scenario() if isinstance(fam_or_scenario, OperatorFamily) else fam_or_scenario
    return len(monomials(s, (BOB,), n))


def _bob_matrices(fam: OperatorFamily, max_deg: int) -> list[np.ndarray]:
    s = fam.bob_scenario()
    out = []
    for word in monomials(s, (BOB,), max_deg):
        P = np.eye(fam.dim, dtype=np.result_type(*fam.bob_ops.values(), float))
        for letter in word:
            P = P @ fam.bob_ops[(letter.outcome, letter.input)]
        out.append(P)
    return out


def low_degree_vectors(fam: OperatorFamily, max_deg: int) -> np.ndarray:
    """Columns ``P R`` for Bob monomials ``P`` of degree ``<= max_deg`` (``rho = R R^dagger``)."""
    R = fam.state_factor()
    return np.hstack([P @ R for P in _bob_matrices(fam, max_deg)])


def _sandwich_max(V: np.ndarray, X: np.ndarray, k: int) -> float:
    """Largest ``|Tr(R^dagger P1^dagger X P2 R)|`` over column groups of width ``k``."""
    M = V.conj().T @ X @ V
    nb = M.shape[0] // k
    T = M.reshape(nb, k, nb, k)
    return float(np.abs(np.einsum("ikjk->ij", T)).max())


def marginal_deviation(fam: OperatorFamily, max_deg: int) -> float:
    """Empirical ``eta``: ``max |<P1 (sum_a A_{a|x} - 1) P2>|`` over low-degree Bob monomials."""
    if fam.state is None or fam.bob_ops is None:
        raise MissingContext("marginal_deviation needs a state and Bob operators")
    k = fam.state_factor().shape[1]
    V = low_degree_vectors(fam, max_deg)
    arr = fam.stack()
    eye = np.eye(fam.dim)
    return max(_sandwich_max(V, arr[:, x].sum(axis=0) - eye, k) for x in range(fam.n_inputs))


def _orthonormal_span(V: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    if V.size == 0:
        return V
    U, sv, _ = np.linalg.svd(V, full_matrices=False)
    return U[:, sv > rel_tol * max(sv[0], 1e-300)]


def verify_decomposition(r: DecompositionResult, fam: OperatorFamily) -> dict:
    """Residuals of the no-signaling, positivity and signaling properties.

    Returns ``no_signaling`` (largest deviation of ``<P1 sum_a ns P2>`` from
    ``<P1 P2>``), ``ns_min_eig`` (smallest eigenvalue of ``ns`` compressed to the
    low-degree subspace) and ``signaling`` (largest ``|<si P>|`` over Bob
    monomials of degree ``<= 2n``).  No threshold is applied.
    """
    if fam.state is None or fam.bob_ops is None:
        raise MissingContext("verify_decomposition needs a state and Bob operators")
    n = fam.level
    R = fam.state_factor()
    k = R.shape[1]
    V = low_degree_vectors(fam, n)
    eye = np.eye(fam.dim)
    nA, nX = r.ns.shape[:2]
    ns_dev = max(_sandwich_max(V, r.ns[:, x].sum(axis=0) - eye, k) for x in range(nX))
    Q = _orthonormal_span(V)
    min_eig = np.inf
    for a in range(nA):
        for x in range(nX):
            C = Q.conj().T @ r.ns[a, x] @ Q
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (C + C.conj().T))[0]))
    rho = R @ R.conj().T
    sig = 0.0
    for P in _bob_matrices(fam, 2 * n):
        for a in range(nA):
            for x in range(nX):
                sig = max(sig, abs(complex(np.trace(rho @ r.si[a, x] @ P))))
    return {"no_signaling": ns_dev, "ns_min_eig": min_eig, "signaling": sig,
            "low_degree_dim": int(Q.shape[1])}
