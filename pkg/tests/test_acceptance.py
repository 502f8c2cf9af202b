"""Acceptance criteria 1-8.  Each test records one PASS/FAIL line through the
``criterion`` fixture and then asserts the same condition."""
import itertools
import os
import subprocess
import sys
import time

import numpy as np

from seqnpa.decompose import OperatorFamily, decompose, dim_vn, symmetrize
from seqnpa.extract import born_residual, check_flat, flat_extend, gns_build, numerical_rank, verify_model
from seqnpa.relax import build_modified, build_sequential, build_standard
from seqnpa.scenario import builtin_game, deterministic_correlation, score
from seqnpa.sdpcore import export_sdpa, solve
from seqnpa.soscert import dual_to_certificate, duality_gap, verify_certificate
from seqnpa.strategies import almost_commuting_from_npa, commutator_residuals, sequentialize, signaling_residual

from helpers import sdpa_oracle_value

TOL = 1e-6


def test_criterion_1_chsh_values(criterion):
    start = time.perf_counter()
    f = builtin_game("chsh")
    prob = build_sequential(f, 1)
    sol = solve(prob)
    elapsed = time.perf_counter() - start
    oracle = sdpa_oracle_value(export_sdpa(prob))
    s = f.scenario
    classical = max(
        score(f, deterministic_correlation(s, lambda x, al=al: al[x], lambda y, bo=bo: bo[y]))
        for al in itertools.product(range(s.nA), repeat=s.nX)
        for bo in itertools.product(range(s.nB), repeat=s.nY))
    ok = (abs(sol.primal_value - 0.8535534) <= TOL and abs(oracle - sol.primal_value) <= TOL
          and classical == 0.75 and elapsed < 5.0)
    criterion(1, ok, f"seq1={sol.primal_value:.9f} oracle={oracle:.9f} classical={classical!r} "
                     f"time={elapsed:.2f}s")
    assert ok


def _order_violations(seq, std, mod):
    bad = []
    for n in (1, 2, 3):
        if std[n] > mod[n] + TOL:
            bad.append(f"std{n}-mod{n}={std[n] - mod[n]:.2e}")
        if seq[n + 1] > mod[n] + TOL:
            bad.append(f"seq{n + 1}-mod{n}={seq[n + 1] - mod[n]:.2e}")
        if n >= 2 and mod[n] + TOL > seq[n - 1] + 2 * TOL:
            bad.append(f"mod{n}-seq{n - 1}={mod[n] - seq[n - 1]:.2e}")
    for n in (1, 2, 3):
        if seq[n + 1] > seq[n] + TOL:
            bad.append(f"seq{n + 1}-seq{n}={seq[n + 1] - seq[n]:.2e}")
    return bad


def test_criterion_2_hierarchy_order(criterion):
    start = time.perf_counter()
    problems = []
    for name in ("chsh", "i3322"):
        f = builtin_game(name)
        seq = {n: solve(build_sequential(f, n)).primal_value for n in (1, 2, 3, 4)}
        std = {n: solve(build_standard(f, n)).primal_value for n in (1, 2, 3)}
        mod = {n: solve(build_modified(f, n)).primal_value for n in (1, 2, 3)}
        problems += [f"{name}: {v}" for v in _order_violations(seq, std, mod)]
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 120.0
    criterion(2, ok, f"time={elapsed:.1f}s violations={problems or 'none'}")
    assert ok


def test_criterion_3_flat_extraction(criterion):
    f = builtin_game("chsh")
    sol = solve(build_sequential(f, 2))
    rep = check_flat(sol)
    detail = f"rank {rep.rank_full} vs truncated {rep.rank_trunc}"
    ok = rep.is_flat and not rep.borderline
    if ok:
        model = gns_build(sol)
        check = verify_model(model, f)
        res = model.residuals()
        povm = max(res["alice_completeness"], res["bob_completeness"], res["bob_projection"],
                   max(0.0, -res["alice_min_eig"]))
        born = born_residual(model, sol)
        ok = (povm <= TOL and res["commutant"] <= TOL and born <= TOL
              and abs(check["score"] - sol.primal_value) <= TOL)
        detail += f" dim={model.dim} povm={povm:.1e} comm={res['commutant']:.1e} born={born:.1e}"
    criterion(3, ok, detail)
    assert ok


def test_criterion_4_flat_extension_suite(criterion):
    rng = np.random.default_rng(2024)
    worst_eig, rank_fail = 0.0, 0
    for _ in range(100):
        dim = int(rng.integers(6, 10))
        r = int(rng.integers(1, 7))
        G = rng.normal(size=(dim, r)) / np.sqrt(dim)
        A = G @ G.T
        Z0 = rng.normal(size=(dim, int(rng.integers(1, 5))))
        M = flat_extend(A, A @ Z0)
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(M)[0]))
        rank_fail += numerical_rank(M, 1e-7) != r
    ok = worst_eig >= -1e-10 and rank_fail == 0
    criterion(4, ok, f"min eigenvalue {worst_eig:.2e}, rank mismatches {rank_fail}/100")
    assert ok


def test_criterion_5_duality(criterion):
    f = builtin_game("chsh")
    parts = []
    ok = True
    for n in (1, 2):
        prob = build_sequential(f, n)
        sol = solve(prob)
        cert = dual_to_certificate(prob, sol)
        res = verify_certificate(cert, f, n)
        gap = duality_gap(sol, cert)
        ok &= res["coefficient_residual"] <= TOL and res["min_gram_eig"] >= -1e-8 and gap <= TOL
        parts.append(f"n={n}: coef={res['coefficient_residual']:.1e} "
                     f"eig={res['min_gram_eig']:.1e} gap={gap:.1e}")
    criterion(5, ok, "; ".join(parts))
    assert ok


def test_criterion_6_almost_commuting(criterion):
    f = builtin_game("chsh")
    sol = solve(build_standard(f, 2))
    strat = almost_commuting_from_npa(sol)
    s_score = strat.score(f)
    comm = commutator_residuals(strat, 4)["weighted"]
    seq = sequentialize(strat)
    sig = signaling_residual(seq, 2)
    diff = abs(seq.score(f) - s_score)
    ok = abs(s_score - sol.primal_value) <= TOL and comm <= 1e-8 and sig <= 1e-8 and diff <= 1e-8
    criterion(6, ok, f"score err {abs(s_score - sol.primal_value):.1e} commutator {comm:.1e} "
                     f"signaling {sig:.1e} seq score diff {diff:.1e}")
    assert ok


def _random_psd(rng, d):
    X = rng.normal(size=(d, d))
    return X @ X.T / d


def _random_projector(rng, d, k):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q[:, :k] @ q[:, :k].T


def _lemma_instance(rng, eta, level=2, d=4):
    """Two-input family whose x-marginals are ``1 +- E`` with ``||E|| = D eta``."""
    bob = {}
    for y in range(2):
        P = _random_projector(rng, d, 2)
        bob[(0, y)], bob[(1, y)] = P, np.eye(d) - P
    psi = rng.normal(size=d)
    psi /= np.linalg.norm(psi)
    probe = OperatorFamily(d, {(a, x): np.eye(d) / 2 for a in range(2) for x in range(2)}, psi, bob, level)
    D = dim_vn(probe, level)
    E = rng.normal(size=(d, d))
    E = E + E.T
    E *= D * eta / np.abs(np.linalg.eigvalsh(E)).max()
    ops = {}
    for x, M in enumerate((np.eye(d) + E, np.eye(d) - E)):
        w, V = np.linalg.eigh(M)
        h = (V * np.sqrt(w)) @ V.T
        P = _random_projector(rng, d, 2)
        ops[(0, x)], ops[(1, x)] = h @ P @ h, h @ (np.eye(d) - P) @ h
    return OperatorFamily(d, ops, psi, bob, level), D


def test_criterion_7_decomposition(criterion):
    rng = np.random.default_rng(7)
    recon = outsum = si_inv = sym = 0.0
    for _ in range(50):
        nA, nX = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        fam = OperatorFamily(4, {(a, x): _random_psd(rng, 4) for a in range(nA) for x in range(nX)})
        r = decompose(fam, float(rng.uniform(0, 0.2)), int(rng.integers(1, 20)))
        recon = max(recon, float(np.abs(r.reconstruct() - fam.stack()).max()))
        outsum = max(outsum, float(np.abs(r.res.sum(axis=0)).max()))
        avg = symmetrize(fam, "outcome", "invariant").stack()
        flat_arr = fam.stack() - avg + avg[:, :1]  # same family with an x-invariant outcome average
        r0 = decompose(fam.with_stack(flat_arr), 0.1, 5)
        si_inv = max(si_inv, float(np.abs(r0.si).max()))
        for axis in ("outcome", "input"):
            p0 = symmetrize(fam, axis, "invariant")
            p1 = symmetrize(fam, axis, "complement")
            sym = max(sym,
                      float(np.abs(symmetrize(p0, axis, "invariant").stack() - p0.stack()).max()),
                      float(np.abs(symmetrize(p1, axis, "complement").stack() - p1.stack()).max()),
                      float(np.abs(symmetrize(p0, axis, "complement").stack()).max()))
        ab = symmetrize(symmetrize(fam, "outcome", "invariant"), "input", "complement").stack()
        ba = symmetrize(symmetrize(fam, "input", "complement"), "outcome", "invariant").stack()
        sym = max(sym, float(np.abs(ab - ba).max()))
    lemma_min = np.inf
    for _ in range(10):
        fam, D = _lemma_instance(rng, float(rng.uniform(0.001, 0.05)))
        eta = float(np.abs(np.linalg.eigvalsh(fam.ops[(0, 0)] + fam.ops[(1, 0)] - np.eye(4))).max()) / D
        lemma_min = min(lemma_min, decompose(fam, eta, D).checks["ns_min_eig"])
    ok = max(recon, outsum, si_inv, sym) <= 1e-12 and lemma_min >= -1e-10
    criterion(7, ok, f"reconstruction {recon:.1e} res sum {outsum:.1e} si {si_inv:.1e} "
                     f"symmetrizers {sym:.1e} lemma min eig {lemma_min:.2e}")
    assert ok


def _cli(args, cwd, seed):
    env = dict(os.environ, PYTHONHASHSEED=str(seed))
    return subprocess.run([sys.executable, "-m", "seqnpa", *args], cwd=cwd, env=env,
                          capture_output=True, check=True)


def test_criterion_8_determinism(criterion, tmp_path):
    outputs = {}
    for run, seed in enumerate((0, 12345)):
        for kind in ("sequential", "standard"):
            sdpa = tmp_path / f"{kind}{run}.dat-s"
            solved_out = tmp_path / f"{kind}{run}.txt"
            _cli(["export", "--game", "chsh", "--level", "2", "--hierarchy", kind, "--out", str(sdpa)],
                 tmp_path, seed)
            proc = _cli(["solve", "--game", "chsh", "--level", "2", "--hierarchy", kind,
                         "--format", "structured", "--out", str(solved_out)], tmp_path, seed)
            outputs.setdefault(kind, []).append((sdpa.read_bytes(), solved_out.read_bytes(), proc.stdout))
    same = all(runs[0] == runs[1] for runs in outputs.values())
    criterion(8, same, "byte-identical" if same else "outputs differ between runs")
    assert same
