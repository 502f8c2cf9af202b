import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqnpa.errors import ParseError, ScenarioMismatch, SchemaError
from seqnpa.scenario import (
    BellFunctional,
    Correlation,
    Scenario,
    builtin_game,
    deterministic_correlation,
    game_from_dict,
    game_to_dict,
    load_game,
    save_game,
    score,
)

CHSH = Scenario(2, 2, 2, 2)


def test_chsh_file_has_sixteen_coefficients():
    f = builtin_game("chsh")
    assert f.scenario == CHSH
    assert f.n_cells == 16
    assert f.constant == 0.0
    for a, b, x, y in CHSH.cells():
        expected = 0.25 if (a ^ b) == x * y else 0.0
        assert f.coeffs[a, b, x, y] == expected


def test_i3322_has_36_cells():
    f = builtin_game("i3322")
    assert f.scenario == Scenario(3, 3, 2, 2)
    assert f.n_cells == 36


def test_zero_outcome_count_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"nX": 2, "nY": 2, "nA": 0, "nB": 2, "coeffs": []}))
    with pytest.raises(SchemaError):
        load_game(path)


def test_out_of_range_index_and_missing_field():
    with pytest.raises(SchemaError):
        game_from_dict({"nX": 2, "nY": 2, "nA": 2, "nB": 2,
                        "coeffs": [{"a": 2, "b": 0, "x": 0, "y": 0, "c": 1.0}]})
    with pytest.raises(SchemaError):
        game_from_dict({"nX": 2, "nY": 2, "nA": 2, "nB": 2,
                        "coeffs": [{"a": 0, "b": 0, "x": 0, "c": 1.0}]})
    with pytest.raises(SchemaError):
        game_from_dict({"nX": 2, "nY": 2, "nA": 2})


def test_malformed_json_is_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_game(path)


def test_scenario_is_immutable():
    with pytest.raises(AttributeError):
        CHSH.nA = 3


def test_uniform_correlation_scores_half():
    f = builtin_game("chsh")
    p = Correlation(CHSH, np.full(CHSH.shape, 0.25))
    assert score(f, p) == pytest.approx(0.5, abs=1e-15)


def test_classical_deterministic_strategy_scores_three_quarters():
    f = builtin_game("chsh")
    assert score(f, deterministic_correlation(CHSH, lambda x: 0, lambda y: 0)) == 0.75


def test_best_classical_chsh_value_by_enumeration():
    f = builtin_game("chsh")
    best = max(score(f, deterministic_correlation(CHSH, lambda x, s=sa: s[x], lambda y, s=sb: s[y]))
               for sa in np.ndindex(2, 2) for sb in np.ndindex(2, 2))
    assert best == 0.75


def test_zero_functional_returns_constant():
    f = BellFunctional.zero(CHSH, constant=0.3)
    p = deterministic_correlation(CHSH, lambda x: x, lambda y: 1)
    assert score(f, p) == 0.3


def test_scenario_mismatch():
    f = builtin_game("i3322")
    with pytest.raises(ScenarioMismatch):
        score(f, Correlation(CHSH, np.full(CHSH.shape, 0.25)))


def test_validity_is_queryable_not_enforced():
    p = Correlation(CHSH, np.full(CHSH.shape, 0.3))
    assert not p.is_valid()
    assert p.violations()[1] == pytest.approx(0.2)


def test_round_trip(tmp_path):
    f = builtin_game("i3322")
    save_game(f, tmp_path / "g.json")
    assert load_game(tmp_path / "g.json") == f
    assert game_from_dict(game_to_dict(f)) == f


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=16, max_size=16),
       st.lists(st.floats(0, 1, allow_nan=False), min_size=16, max_size=16))
def test_score_is_linear_and_finite(coeffs, weights):
    f = BellFunctional(CHSH, np.array(coeffs).reshape(CHSH.shape), 0.5)
    w = np.array(weights).reshape(CHSH.shape)
    p1 = Correlation(CHSH, w)
    p2 = Correlation(CHSH, np.full(CHSH.shape, 0.25))
    mix = Correlation(CHSH, 0.5 * (p1.p + p2.p))
    assert np.isfinite(score(f, p1))
    assert score(f, mix) == pytest.approx(0.5 * (score(f, p1) + score(f, p2)), abs=1e-9)
