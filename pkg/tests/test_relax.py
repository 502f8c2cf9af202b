import numpy as np
import pytest

from seqnpa.errors import LevelTooSmall
from seqnpa.ncalgebra import A, B, Word
from seqnpa.relax import build_modified, build_sequential, build_standard, has_weak_relation
from seqnpa.scenario import BellFunctional, builtin_game
from seqnpa.sdpcore import solve

from helpers import game


def test_sequential_chsh_level_one_shape():
    prob = build_sequential(game("chsh"), 1)
    assert prob.block_sizes == [5, 5, 5, 5]
    assert [w.letters for w in prob.blocks[0].basis] == [(), (B(0, 0),), (B(1, 0),), (B(0, 1),), (B(1, 1),)]
    assert len(prob.no_signaling_cells()) == 15


def test_normalization_targets_one():
    for name in ("chsh", "i3322"):
        prob = build_sequential(game(name), 1)
        norm = [c for c in prob.constraints if c.kind == "normalization"]
        assert len(norm) == 1 and norm[0].rhs == 1.0
        assert all(w == () for (_, w) in norm[0].coeffs)
        assert {cell for cell, _ in norm[0].cells} == {(prob.meta["group_of"][(a, 0)], 0, 0) for a in range(2)}


def test_level_zero_rejected():
    f = game("chsh")
    for build in (build_sequential, build_standard, build_modified):
        with pytest.raises(LevelTooSmall):
            build(f, 0)


def test_standard_shape_and_projectivity_identification():
    prob = build_standard(game("chsh"), 1)
    assert prob.block_sizes == [9]
    a00 = (A(0, 0),)
    assert prob.moment_of(*prob.cell(0, a00, a00)) == prob.moment_of(*prob.cell(0, (), a00))


def test_standard_level_two_cell_outside_objective():
    prob = build_standard(game("chsh"), 2)
    blk, i, j = prob.cell(0, (A(0, 0),), (B(0, 0), B(0, 1)))
    assert (blk, i, j) not in prob.objective_cells()
    key = prob.moment_of(blk, i, j)
    assert key is not None and key not in prob.objective


def test_every_objective_cell_exists():
    for build in (build_sequential, build_standard, build_modified):
        prob = build(game("i3322"), 2)
        for (blk, i, j) in prob.objective_cells():
            assert 0 <= i < prob.blocks[blk].size and 0 <= j < prob.blocks[blk].size
        classes = prob.eq_classes()
        assert all(len(cells) >= 1 for cells in classes.values())


def test_modified_weak_relation_present():
    prob = build_modified(game("chsh"), 2)
    assert has_weak_relation(prob, (B(0, 0),), (B(0, 1),), 0)
    assert not has_weak_relation(build_standard(game("chsh"), 2), (B(0, 0),), (B(0, 1),), 0)


def test_modified_equals_standard_at_level_one():
    rng = np.random.default_rng(7)
    s = game("chsh").scenario
    for _ in range(3):
        f = BellFunctional(s, rng.normal(size=s.shape), 0.0)
        assert solve(build_modified(f, 1)).primal_value == pytest.approx(
            solve(build_standard(f, 1)).primal_value, abs=1e-6)


def test_modified_is_looser_than_standard():
    rng = np.random.default_rng(3)
    s = game("chsh").scenario
    for _ in range(2):
        f = BellFunctional(s, rng.normal(size=s.shape), 0.0)
        assert solve(build_standard(f, 2)).primal_value <= solve(build_modified(f, 2)).primal_value + 1e-6


def test_probability_cells_cover_the_scenario():
    prob = build_sequential(builtin_game("i3322"), 1)
    assert set(prob.meta["probability_cells"]) == set(prob.scenario.cells())
