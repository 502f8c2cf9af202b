import numpy as np
import pytest

from seqnpa.errors import ParseError, ShapeMismatch
from seqnpa.relax import build_sequential
from seqnpa.scenario import BellFunctional
from seqnpa.sdpcore import solve
from seqnpa.soscert import (
    certificate_from_text,
    certificate_to_text,
    dual_to_certificate,
    duality_gap,
    verify_certificate,
)
from seqnpa.strategies import FiniteStrategy

from helpers import game, solved


def _cert(name, n):
    prob, sol = solved(name, "sequential", n)
    return dual_to_certificate(prob, sol), sol


@pytest.mark.parametrize("name,n", [("chsh", 1), ("chsh", 2), ("i3322", 1)])
def test_certificate_verifies(name, n):
    cert, sol = _cert(name, n)
    res = verify_certificate(cert, game(name), n)
    assert res["coefficient_residual"] <= 1e-6
    assert res["min_gram_eig"] >= -1e-8
    assert duality_gap(sol, cert) <= 1e-6


def test_shifted_bound_breaks_the_identity():
    cert, _ = _cert("chsh", 1)
    cert.m += 0.1
    assert verify_certificate(cert, game("chsh"), 1)["constant_residual"] >= 0.1 - 1e-9


def test_negated_gram_block_detected():
    cert, _ = _cert("chsh", 1)
    key = next(k for k in cert.gram_blocks if k != "1")
    cert.gram_blocks[key] = -cert.gram_blocks[key]
    res = verify_certificate(cert, game("chsh"), 1)
    assert res["min_gram_eig"] < -1e-3 or res["coefficient_residual"] > 1e-3


def test_text_round_trip():
    cert, _ = _cert("chsh", 2)
    text = certificate_to_text(cert)
    back = certificate_from_text(text)
    assert certificate_to_text(back) == text
    r1 = verify_certificate(cert, game("chsh"), 2)
    r2 = verify_certificate(back, game("chsh"), 2)
    assert r1["coefficient_residual"] == r2["coefficient_residual"]


def test_malformed_text_rejected():
    with pytest.raises(ParseError):
        certificate_from_text("not a certificate\n")


def test_wrong_level_or_game_rejected():
    cert, _ = _cert("chsh", 1)
    with pytest.raises(ShapeMismatch):
        verify_certificate(cert, game("chsh"), 2)
    with pytest.raises(ShapeMismatch):
        verify_certificate(cert, game("i3322"), 1)


def test_level_mismatch_warns():
    cert, _ = _cert("chsh", 1)
    _, sol2 = solved("chsh", "sequential", 2)
    with pytest.warns(RuntimeWarning):
        duality_gap(sol2, cert)


def test_zero_functional_certificate():
    f = BellFunctional.zero(game("chsh").scenario)
    prob = build_sequential(f, 1)
    cert = dual_to_certificate(prob, solve(prob))
    assert abs(cert.m) <= 1e-6
    assert verify_certificate(cert, f, 1)["coefficient_residual"] <= 1e-6


def _random_qubit_strategy(rng, s):
    def proj():
        v = rng.normal(size=2)
        v /= np.linalg.norm(v)
        P = np.outer(v, v)
        return [P, np.eye(2) - P]

    I2 = np.eye(2)
    alice, bob = {}, {}
    for x in range(s.nX):
        P = proj()
        for a in range(2):
            alice[(a, x)] = np.kron(P[a], I2)
    for y in range(s.nY):
        P = proj()
        for b in range(2):
            bob[(b, y)] = np.kron(I2, P[b])
    psi = rng.normal(size=4)
    return FiniteStrategy(dim=4, state=psi / np.linalg.norm(psi), alice_ops=alice, bob_ops=bob,
                          level=1, scenario=s)


def test_certified_bound_dominates_quantum_strategies():
    cert, _ = _cert("chsh", 1)
    f = game("chsh")
    rng = np.random.default_rng(11)
    for _ in range(200):
        assert _random_qubit_strategy(rng, f.scenario).score(f) <= cert.m + 1e-9
