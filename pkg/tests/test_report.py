import pytest

from seqnpa.errors import LevelTooSmall
from seqnpa.report import NEGL_TOKEN, build_report

from helpers import game


def test_level_zero_rejected():
    with pytest.raises(LevelTooSmall):
        build_report(game("chsh"), 0)


def test_chsh_report_contents():
    rep = build_report(game("chsh"), 2)
    assert [r.n for r in rep.levels] == [1, 2]
    assert all(abs(r.seq - 0.8535533906) <= 1e-6 for r in rep.levels)
    assert rep.sandwich_violations() == []
    text = rep.to_text()
    assert NEGL_TOKEN in text and NEGL_TOKEN in rep.bound_statement
    assert "not true ε" in rep.reference_label
    assert all(abs(v) <= 1e-6 for v in rep.eps_estimate.values())
    assert rep.to_structured().startswith("game ")


def test_reference_score_sets_eps():
    rep = build_report(game("chsh"), 1, reference=0.75, hierarchies=("sequential",))
    assert rep.eps_estimate[1] == pytest.approx(0.8535533906 - 0.75, abs=1e-6)
    assert rep.levels[0].std is None


def test_structured_output_is_stable():
    a = build_report(game("chsh"), 1).to_structured()
    b = build_report(game("chsh"), 1).to_structured()
    assert a == b
