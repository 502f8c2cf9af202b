"""Bound reports comparing the three relaxations level by level.

For each level ``n`` the sequential, standard and modified relaxations are
solved.  The sequential value bounds the compiled score up to a negligible
term in the security parameter, which is printed as the literal token
``negl_{S,n}(λ)`` and never evaluated.  When a sequential solution is flat,
the extracted finite-dimensional model gives an attained quantum score and
the bound is stated against it.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

from .errors import LevelTooSmall, SeqNPAError
from .extract import check_flat, gns_build, verify_model
from .relax import build_modified, build_sequential, build_standard
from .scenario import BellFunctional
from .sdpcore import SolverOptions, solve

__all__ = ["LevelRow", "BoundReport", "build_report", "NEGL_TOKEN"]

NEGL_TOKEN = "negl_{S,n}(λ)"
NEGL_FOOTNOTE = (f"{NEGL_TOKEN} is a negligible function of the security parameter λ that depends on "
                 "the compiled strategy S and the level n; it is kept symbolic and never evaluated.")

_BUILDERS = {"sequential": build_sequential, "standard": build_standard, "modified": build_modified}


@dataclass
class LevelRow:
    n: int
    seq: float | None
    std: float | None
    mod: float | None
    flat: bool | None
    hashes: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)


@dataclass
class BoundReport:
    game: str
    levels: list
    eps_estimate: dict
    reference: float | None
    reference_label: str
    bound_statement: str
    flat_extraction: dict | None = None
    footnote: str = NEGL_FOOTNOTE

    def sandwich_violations(self, tol: float = 1e-6) -> list[str]:
        """Order relations between adjacent levels that fail by more than ``tol``."""
        rows = {r.n: r for r in self.levels}
        bad = []
        for n, r in rows.items():
            if r.std is not None and r.mod is not None and r.std > r.mod + tol:
                bad.append(f"std({n}) > mod({n})")
            up, down = rows.get(n + 1), rows.get(n - 1)
            if r.mod is not None and up is not None and up.seq is not None and up.seq > r.mod + tol:
                bad.append(f"seq({n + 1}) > mod({n})")
            if r.mod is not None and down is not None and down.seq is not None and r.mod > down.seq + 2 * tol:
                bad.append(f"mod({n}) > seq({n - 1})")
            if down is not None and r.seq is not None and down.seq is not None and r.seq > down.seq + tol:
                bad.append(f"seq({n}) > seq({n - 1})")
        return bad

    def to_text(self) -> str:
        """Human-readable table."""
        out = io.StringIO()
        out.write(f"Bound report for {self.game}\n\n")
        out.write(f"{'n':>3}  {'sequential':>14}  {'standard':>14}  {'modified':>14}  {'flat':>5}  "
                  f"{'eps':>12}\n")
        for r in self.levels:
            eps = self.eps_estimate.get(r.n)
            out.write(f"{r.n:>3}  {_cell(r.seq):>14}  {_cell(r.std):>14}  {_cell(r.mod):>14}  "
                      f"{_flag(r.flat):>5}  {_cell(eps, '%.3e'):>12}\n")
        out.write(f"\neps: {self.reference_label}\n")
        if self.flat_extraction:
            fe = self.flat_extraction
            out.write(f"flat extraction at level {fe['level']}: dimension {fe['dim']}, "
                      f"score {fe['score']:.10f}\n")
        out.write(f"\n{self.bound_statement}\n")
        out.write(f"  [*] {self.footnote}\n")
        for r in self.levels:
            for kind, msg in r.errors.items():
                out.write(f"  level {r.n} {kind}: {msg}\n")
        return out.getvalue()

    def to_structured(self) -> str:
        """Machine-readable mirror of :meth:`to_text` (``key value`` lines, ``%.17g`` numbers)."""
        lines = [f"game {self.game}", f"reference {_num(self.reference)}",
                 f"reference_label {self.reference_label}"]
        for r in self.levels:
            lines.append(f"level {r.n} seq {_num(r.seq)} std {_num(r.std)} mod {_num(r.mod)} "
                         f"flat {_flag(r.flat)} eps {_num(self.eps_estimate.get(r.n))}")
            for kind in sorted(r.hashes):
                lines.append(f"hash {r.n} {kind} {r.hashes[kind]}")
            for kind in sorted(r.errors):
                lines.append(f"error {r.n} {kind} {r.errors[kind]}")
        if self.flat_extraction:
            fe = self.flat_extraction
            lines.append(f"flat_extraction level {fe['level']} dim {fe['dim']} score {_num(fe['score'])}")
        lines.append(f"bound {self.bound_statement}")
        lines.append(f"footnote {self.footnote}")
        return "\n".join(lines) + "\n"


def _num(v) -> str:
    return "none" if v is None else "%.17g" % v


def _cell(v, fmt: str = "%.10f") -> str:
    return "-" if v is None else fmt % v


def _flag(v) -> str:
    return "-" if v is None else ("yes" if v else "no")


def build_report(f: BellFunctional, max_level: int, reference: float | None = None,
                 opts: SolverOptions | None = None, hierarchies=("sequential", "standard", "modified")
                 ) -> BoundReport:
    """Solve every requested relaxation for ``n = 1..max_level`` and assemble the report.

    Solver failures are recorded per level and hierarchy instead of aborting.
    """
    if isinstance(max_level, bool) or not isinstance(max_level, int) or max_level < 1:
        raise LevelTooSmall(f"max_level must be an integer >= 1, got {max_level!r}")
    opts = opts or SolverOptions()
    rows = []
    extraction = None
    for n in range(1, max_level + 1):
        row = LevelRow(n=n, seq=None, std=None, mod=None, flat=None)
        for kind in hierarchies:
            try:
                prob = _BUILDERS[kind](f, n)
                sol = solve(prob, opts)
            except SeqNPAError as exc:
                row.errors[kind] = f"{type(exc).__name__}: {exc}"
                continue
            value = float(sol.primal_value)
            row.hashes[kind] = sol.digest()
            if kind == "sequential":
                row.seq = value
                if n >= 2:
                    rep = check_flat(sol)
                    row.flat = bool(rep.is_flat and not rep.borderline)
                    if row.flat and extraction is None:
                        try:
                            model = gns_build(sol)
                            check = verify_model(model, f)
                            extraction = {"level": n, "dim": model.dim, "score": float(check["score"])}
                        except SeqNPAError as exc:
                            row.errors["extract"] = f"{type(exc).__name__}: {exc}"
            elif kind == "standard":
                row.std = value
            else:
                row.mod = value
        rows.append(row)

    seq_values = [r.seq for r in rows if r.seq is not None]
    if reference is not None:
        ref = float(reference)
        label = "sequential value minus the supplied reference score"
    elif seq_values:
        ref = seq_values[-1]
        label = "upper-bound gap, not true ε (relative to the deepest sequential level computed)"
    else:
        ref = None
        label = "unavailable (no sequential value)"
    eps = {r.n: r.seq - ref for r in rows if r.seq is not None and ref is not None}

    if extraction is not None:
        statement = (f"ω_comp ≤ ω_q + {NEGL_TOKEN} = {extraction['score']:.10f} + {NEGL_TOKEN}"
                     f"  (flat at level {extraction['level']})")
    elif seq_values:
        best = min(seq_values)
        n_best = next(r.n for r in rows if r.seq == best)
        statement = f"ω_comp ≤ {best:.10f} + {NEGL_TOKEN}  (sequential level {n_best})"
    else:
        statement = "no bound: every sequential level failed"
    return BoundReport(game=f.name or "game", levels=rows, eps_estimate=eps, reference=reference,
                       reference_label=label, bound_statement=statement, flat_extraction=extraction)
