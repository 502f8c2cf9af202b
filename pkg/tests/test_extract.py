import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqnpa.errors import LevelTooSmall, NotFlat, RangeViolation
from seqnpa.extract import born_residual, check_flat, flat_extend, gns_build, numerical_rank, verify_model

from helpers import game, solved


def test_numerical_rank_examples():
    assert numerical_rank(np.diag([1.0, 1e-9, 0.0])) == 1
    assert numerical_rank(np.diag([1.0, 1e-3])) == 2
    assert numerical_rank(np.zeros((0, 0))) == 0
    # small matrices are measured against 1, not against their own scale
    assert numerical_rank(np.diag([1e-9, 1e-9])) == 0


def _random_flat_pair(rng, dim, r, extra):
    G = rng.normal(size=(dim, r))
    A = G @ G.T
    Z = rng.normal(size=(dim, extra))
    return A, A @ Z


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 4))
def test_flat_extend_preserves_rank(seed, r, extra):
    rng = np.random.default_rng(seed)
    A, B = _random_flat_pair(rng, 7, r, extra)
    M = flat_extend(A, B)
    assert np.linalg.eigvalsh(M)[0] >= -1e-9 * max(1.0, np.abs(M).max())
    assert numerical_rank(M) == numerical_rank(A) == r


def test_flat_extend_rejects_border_outside_range():
    A = np.diag([1.0, 0.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(RangeViolation):
        flat_extend(A, B)


def test_chsh_level_three_flat_model():
    prob, sol = solved("chsh", "sequential", 3)
    rep = check_flat(sol)
    assert rep.is_flat and not rep.borderline
    model = gns_build(sol)
    check = verify_model(model, game("chsh"))
    assert check["score"] == pytest.approx(sol.primal_value, abs=1e-6)
    assert born_residual(model, sol) <= 1e-6
    assert check["commutant"] <= 1e-6


def test_chsh_level_two_rank_loop_absent():
    _, sol = solved("chsh", "sequential", 2)
    rep = check_flat(sol)
    assert rep.rank_full > rep.rank_trunc
    with pytest.raises(NotFlat):
        gns_build(sol)


def test_flatness_needs_level_two():
    _, sol = solved("chsh", "sequential", 1)
    with pytest.raises(LevelTooSmall):
        check_flat(sol)


def test_non_sequential_solution_rejected():
    _, sol = solved("chsh", "standard", 2)
    with pytest.raises(ValueError):
        check_flat(sol)
