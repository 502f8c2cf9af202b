"""NS/SI/residual split of the operator family extracted from CHSH level 3.

Run with ``python3 demos/decomposition.py``.
"""
from seqnpa.decompose import OperatorFamily, decompose, dim_vn, marginal_deviation
from seqnpa.extract import gns_build
from seqnpa.relax import build_sequential
from seqnpa.scenario import builtin_game
from seqnpa.sdpcore import solve


def main():
    n = 3
    sol = solve(build_sequential(builtin_game("chsh"), n))
    model = gns_build(sol)
    fam = OperatorFamily(model.dim, model.alice_ops, model.omega, model.bob_ops, level=n)
    eta = marginal_deviation(fam, n)
    res = decompose(fam, eta, dim_vn(fam, n))
    print(f"eta = {eta:.3e}, dim V_n = {res.dim_vn}, residual weight = {res.res_weight:.3e}")
    for key, value in sorted(res.checks.items()):
        print(f"  {key}: {value:.3e}")


if __name__ == "__main__":
    main()
