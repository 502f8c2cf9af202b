import numpy as np
import pytest

from seqnpa.errors import Infeasible, ShapeMismatch
from seqnpa.ncalgebra import IDENTITY, BOB, WordBasis, enumerate_basis
from seqnpa.relax import build_custom, build_sequential, build_standard
from seqnpa.scenario import BellFunctional, Scenario
from seqnpa.sdpcore import (
    OPTIMAL,
    LMI,
    MomentSolution,
    SolverOptions,
    certify,
    export_sdpa,
    parse_sdpa,
    solve,
    solve_lmi,
    solve_sdpa,
    write_sdpa,
)

from helpers import game, sdpa_oracle_value, sequential_oracle_value, solved

QUANTUM_CHSH = np.cos(np.pi / 8) ** 2


def test_chsh_sequential_level_one_value():
    _, sol = solved("chsh", "sequential", 1)
    assert sol.status == OPTIMAL
    assert sol.primal_value == pytest.approx(QUANTUM_CHSH, abs=1e-6)
    assert sol.primal_value >= sol.dual_value - 1e-8 - abs(sol.dual_value) * 1e-8


@pytest.mark.parametrize("name,n", [("chsh", 1), ("chsh", 2), ("i3322", 1), ("i3322", 2)])
def test_sequential_matches_independent_oracle(name, n):
    _, sol = solved(name, "sequential", n)
    assert sol.primal_value == pytest.approx(sequential_oracle_value(game(name), n), abs=1e-6)


@pytest.mark.parametrize("kind,n", [("standard", 1), ("standard", 2), ("modified", 2)])
def test_sdpa_export_matches_reference_solver(kind, n):
    prob, sol = solved("chsh", kind, n)
    assert sol.primal_value == pytest.approx(sdpa_oracle_value(export_sdpa(prob)), abs=1e-6)


def _single_cell_problem(constraints, objective=None):
    s = Scenario(1, 1, 1, 1)
    basis = WordBasis([IDENTITY], 0)
    return build_custom(s, [("T", basis)], constraints, objective)


def test_contradictory_constraints_are_infeasible():
    prob = _single_cell_problem([({(0, ()): 1.0}, 1.0), ({(0, ()): 1.0}, 2.0)])
    with pytest.raises(Infeasible):
        solve(prob)


def test_zero_objective_is_optimal_with_value_zero():
    f = BellFunctional.zero(game("chsh").scenario)
    sol = solve(build_sequential(f, 1))
    assert sol.status == OPTIMAL
    assert sol.primal_value == pytest.approx(0.0, abs=1e-9)


def test_fixed_single_block_problem():
    prob = _single_cell_problem([({(0, ()): 1.0}, 1.0)], {(0, ()): 2.0})
    text = export_sdpa(prob)
    lmi = parse_sdpa(text)
    assert lmi.m == 0 and lmi.sizes == [1]
    assert solve(prob).primal_value == pytest.approx(2.0)


def test_certify_optimal_solution():
    prob, sol = solved("chsh", "sequential", 1)
    rep = certify(prob, sol)
    assert min(rep.min_eig_per_block) >= -1e-8
    assert rep.max_constraint_residual <= 1e-8
    assert rep.objective_recomputed == pytest.approx(sol.primal_value, abs=1e-9)
    assert rep.ok()


def test_certify_flags_negated_block_and_bad_normalization():
    prob, sol = solved("chsh", "sequential", 1)
    values = [v.copy() for v in sol.values]
    values[0] = -values[0]
    rep = certify(prob, MomentSolution.from_values(prob, values))
    assert min(rep.min_eig_per_block) < 0
    eye = [np.eye(5) for _ in prob.blocks]
    rep = certify(prob, MomentSolution.from_values(prob, eye))
    # sum_a Theta(a|0)[1, 1] = 2 instead of 1
    assert rep.constraint_residuals["normalization"] == pytest.approx(1.0)


def test_certify_shape_mismatch():
    prob, sol = solved("chsh", "sequential", 1)
    with pytest.raises(ShapeMismatch):
        certify(prob, MomentSolution(values=sol.values[:2], primal_value=0.0, dual_value=0.0, status=OPTIMAL))


def test_export_headers():
    lmi = parse_sdpa(export_sdpa(build_sequential(game("chsh"), 1)))
    assert lmi.sizes == [5, 5, 5, 5]
    lmi = parse_sdpa(export_sdpa(build_standard(game("chsh"), 1)))
    assert lmi.sizes == [9]


def test_sdpa_round_trip_and_solve():
    prob, sol = solved("chsh", "standard", 1)
    text = export_sdpa(prob)
    assert write_sdpa(parse_sdpa(text)) == text
    res = solve_sdpa(text)
    assert res.primal_value == pytest.approx(sol.primal_value, abs=1e-7)


def test_repeated_runs_are_identical():
    f = game("chsh")
    assert export_sdpa(build_sequential(f, 2)) == export_sdpa(build_sequential(f, 2))
    assert solve(build_sequential(f, 1)).digest() == solve(build_sequential(f, 1)).digest()


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(gap_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)


def test_unbounded_direction_detected():
    import scipy.sparse as sp
    # max y subject to [1] >= 0: y does not enter any block
    lmi = LMI(c=np.array([1.0]), c0=0.0, F=[sp.csr_matrix(np.array([[1.0, 0.0]]))], sizes=[1])
    with pytest.raises(Infeasible):
        solve_lmi(lmi)


def test_dual_blocks_are_psd_and_complementary():
    prob, sol = solved("chsh", "sequential", 2)
    for X, Z in zip(sol.values, sol.dual_blocks):
        assert np.linalg.eigvalsh(Z)[0] >= -1e-9
        assert abs(np.sum(X * Z)) <= 1e-6
