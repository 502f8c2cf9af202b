"""Command-line entry point: ``seqnpa <command> [options]``.

Exit codes: 0 success, 1 solver failure, 2 validation error, 3 extraction
requested on a solution that is not flat.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .errors import NotFlat, ParseError, SchemaError, SeqNPAError, SolverError
from .extract import DEFAULT_RANK_TOL, born_residual, gns_build, verify_model
from .relax import build_modified, build_sequential, build_standard
from .scenario import builtin_game, load_game
from .sdpcore import SolverOptions, certify, export_sdpa, solve

__all__ = ["CliConfig", "run", "main", "build_parser"]

COMMANDS = ("solve", "extract", "certify", "decompose", "report", "export")
HIERARCHIES = {"sequential": build_sequential, "standard": build_standard, "modified": build_modified}

EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, EXIT_NOT_FLAT = 0, 1, 2, 3


@dataclass
class CliConfig:
    command: str
    game_path: str
    level: int = 1
    hierarchy: str = "sequential"
    gap_tol: float = SolverOptions.gap_tol
    feas_tol: float = SolverOptions.feas_tol
    max_iters: int = SolverOptions.max_iters
    rank_tol: float = DEFAULT_RANK_TOL
    seed: int = 0
    eta: float | None = None
    reference: float | None = None
    output_path: str | None = None
    format: str = "text"

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise SchemaError(f"unknown command {self.command!r}")
        if self.hierarchy not in HIERARCHIES:
            raise SchemaError(f"unknown hierarchy {self.hierarchy!r}")
        if self.format not in ("text", "structured"):
            raise SchemaError(f"unknown format {self.format!r}")
        if self.command == "export" and not self.output_path:
            raise SchemaError("export needs --out")
        if self.command in ("extract", "certify", "decompose") and self.hierarchy != "sequential":
            raise SchemaError(f"{self.command} works on the sequential hierarchy")
        if self.level < 1:
            raise SchemaError("--level must be >= 1")

    def options(self) -> SolverOptions:
        return SolverOptions(gap_tol=self.gap_tol, feas_tol=self.feas_tol, max_iters=self.max_iters,
                             seed=self.seed)


def _load(path: str):
    p = Path(path)
    if p.exists():
        return load_game(p)
    if p.parent == Path("."):
        try:
            return builtin_game(p.stem)
        except FileNotFoundError:
            pass
    raise ParseError(f"game file {path!r} not found")


def _emit(cfg: CliConfig, text: str, structured: str) -> None:
    body = structured if cfg.format == "structured" else text
    sys.stdout.write(body)


def _write(path: str | None, content: str) -> None:
    if path:
        Path(path).write_text(content, encoding="utf-8")


def _g(v: float) -> str:
    return "%.17g" % float(v)


def _solve(cfg: CliConfig, f, hierarchy: str | None = None):
    prob = HIERARCHIES[hierarchy or cfg.hierarchy](f, cfg.level)
    return prob, solve(prob, cfg.options())


def _cmd_solve(cfg, f):
    prob, sol = _solve(cfg, f)
    rep = certify(prob, sol)
    min_eig = min(rep.min_eig_per_block, default=0.0)
    text = (f"{sol.primal_value:.7f}\n"
            f"status {sol.status}  dual {sol.dual_value:.10f}  gap {rep.duality_gap:.2e}\n"
            f"min eigenvalue {min_eig:.2e}  max constraint residual {rep.max_constraint_residual:.2e}\n")
    structured = "\n".join([
        f"command solve", f"game {f.name}", f"hierarchy {cfg.hierarchy}", f"level {cfg.level}",
        f"status {sol.status}", f"primal {_g(sol.primal_value)}", f"dual {_g(sol.dual_value)}",
        f"min_eig {_g(min_eig)}", f"max_constraint_residual {_g(rep.max_constraint_residual)}",
        f"digest {sol.digest()}"]) + "\n"
    _write(cfg.output_path, structured)
    _emit(cfg, text, structured)


def _cmd_extract(cfg, f):
    _, sol = _solve(cfg, f, "sequential")
    model = gns_build(sol, cfg.rank_tol)
    check = verify_model(model, f)
    born = born_residual(model, sol)
    _write(cfg.output_path, model.to_text())
    text = (f"flat model of dimension {model.dim}\n"
            f"score {check['score']:.10f} (relaxation {sol.primal_value:.10f})\n"
            f"Born residual {born:.2e}  commutant residual {check['commutant']:.2e}\n")
    structured = "\n".join([f"command extract", f"dim {model.dim}", f"score {_g(check['score'])}",
                            f"relaxation {_g(sol.primal_value)}", f"born_residual {_g(born)}"]
                           + [f"residual {k} {_g(v)}" for k, v in sorted(model.residuals().items())]) + "\n"
    _emit(cfg, text, structured)


def _cmd_certify(cfg, f):
    from .soscert import certificate_to_text, dual_to_certificate, duality_gap, verify_certificate

    prob, sol = _solve(cfg, f, "sequential")
    cert = dual_to_certificate(prob, sol)
    res = verify_certificate(cert, f, cfg.level)
    gap = duality_gap(sol, cert)
    _write(cfg.output_path, certificate_to_text(cert))
    text = (f"certified bound m = {cert.m:.10f}\n"
            f"coefficient residual {res['coefficient_residual']:.2e}  "
            f"min gram eigenvalue {res['min_gram_eig']:.2e}  gap {gap:.2e}\n")
    structured = "\n".join([f"command certify", f"m {_g(cert.m)}", f"primal {_g(sol.primal_value)}",
                            f"coefficient_residual {_g(res['coefficient_residual'])}",
                            f"min_gram_eig {_g(res['min_gram_eig'])}", f"gap {_g(gap)}"]) + "\n"
    _emit(cfg, text, structured)


def _cmd_decompose(cfg, f):
    from .decompose import OperatorFamily, decompose, dim_vn, marginal_deviation

    _, sol = _solve(cfg, f, "sequential")
    model = gns_build(sol, cfg.rank_tol)
    n = cfg.level
    fam = OperatorFamily(model.dim, model.alice_ops, model.omega, model.bob_ops, level=n)
    eta = marginal_deviation(fam, n) if cfg.eta is None else cfg.eta
    res = decompose(fam, eta, dim_vn(fam, n))
    _write(cfg.output_path, res.to_text())
    lines = [f"{k} {_g(v)}" for k, v in sorted(res.checks.items())]
    text = (f"decomposition of a {model.dim}-dimensional family, eta {eta:.3e}, dim V_n {res.dim_vn}\n"
            + "".join(f"  {k}: {v:.3e}\n" for k, v in sorted(res.checks.items())))
    structured = "\n".join([f"command decompose", f"eta {_g(eta)}", f"dim_vn {res.dim_vn}"] + lines) + "\n"
    _emit(cfg, text, structured)


def _cmd_report(cfg, f):
    from .report import build_report

    rep = build_report(f, cfg.level, cfg.reference, cfg.options())
    _write(cfg.output_path, rep.to_structured())
    _emit(cfg, rep.to_text(), rep.to_structured())


def _cmd_export(cfg, f):
    prob = HIERARCHIES[cfg.hierarchy](f, cfg.level)
    text = export_sdpa(prob)
    _write(cfg.output_path, text)
    sizes = prob.block_sizes
    msg = f"wrote {cfg.output_path}: {len(sizes)} block(s) of size {', '.join(map(str, sizes))}\n"
    _emit(cfg, msg, f"command export\nblocks {len(sizes)}\nsizes {' '.join(map(str, sizes))}\n")


_COMMANDS = {"solve": _cmd_solve, "extract": _cmd_extract, "certify": _cmd_certify,
             "decompose": _cmd_decompose, "report": _cmd_report, "export": _cmd_export}


def run(cfg: CliConfig) -> int:
    """Execute one command and return its exit status."""
    try:
        cfg.validate()
        f = _load(cfg.game_path)
        _COMMANDS[cfg.command](cfg, f)
    except NotFlat as exc:
        print(f"not flat: {exc}", file=sys.stderr)
        return EXIT_NOT_FLAT if cfg.command in ("extract", "decompose") else EXIT_SOLVER
    except SolverError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SeqNPAError, ValueError, OSError) as exc:
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqnpa", description="Sequential NPA relaxations of Bell games.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--game", required=True, help="game JSON file (or the name of a bundled game)")
    parser.add_argument("--level", type=int, default=1)
    parser.add_argument("--hierarchy", choices=tuple(HIERARCHIES), default="sequential")
    parser.add_argument("--gap-tol", type=float, default=SolverOptions.gap_tol)
    parser.add_argument("--feas-tol", type=float, default=SolverOptions.feas_tol)
    parser.add_argument("--max-iters", type=int, default=SolverOptions.max_iters)
    parser.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eta", type=float, default=None, help="decompose: override the measured eta")
    parser.add_argument("--reference", type=float, default=None, help="report: reference score")
    parser.add_argument("--out", dest="output_path", default=None)
    parser.add_argument("--format", choices=("text", "structured"), default="text")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = CliConfig(command=args.command, game_path=args.game, level=args.level, hierarchy=args.hierarchy,
                    gap_tol=args.gap_tol, feas_tol=args.feas_tol, max_iters=args.max_iters,
                    rank_tol=args.rank_tol, seed=args.seed, eta=args.eta, reference=args.reference,
                    output_path=args.output_path, format=args.format)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
