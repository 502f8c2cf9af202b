"""CHSH from relaxation to extracted model and certificate.

Run with ``python3 demos/chsh_walkthrough.py``.
"""
import numpy as np

from seqnpa.extract import check_flat, gns_build, verify_model
from seqnpa.relax import build_sequential
from seqnpa.scenario import builtin_game
from seqnpa.sdpcore import solve
from seqnpa.soscert import dual_to_certificate, verify_certificate


def main():
    f = builtin_game("chsh")
    print(f"quantum value cos^2(pi/8) = {np.cos(np.pi / 8) ** 2:.10f}")
    for n in (1, 2, 3):
        prob = build_sequential(f, n)
        sol = solve(prob)
        line = f"level {n}: value {sol.primal_value:.10f}, blocks {prob.block_sizes}"
        if n >= 2:
            rep = check_flat(sol)
            line += f", rank {rep.rank_full} vs truncated {rep.rank_trunc}, flat {rep.is_flat}"
        print(line)
        if n == 1:
            cert = dual_to_certificate(prob, sol)
            res = verify_certificate(cert, f, n)
            print(f"  certificate m = {cert.m:.10f}, coefficient residual {res['coefficient_residual']:.1e}")
        if n == 3:
            model = gns_build(sol)
            check = verify_model(model, f)
            print(f"  extracted model: dimension {model.dim}, score {check['score']:.10f}")


if __name__ == "__main__":
    main()
