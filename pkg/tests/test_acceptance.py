"""Acceptance suite: one test, and one PASS/FAIL line, per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
an "acceptance criteria" section at the end of the session.
"""

import dataclasses
import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from basisdyn import ack, core, kernel_regression as kr, logistic, matrix_factorization as mf
from basisdyn import tensor_decomposition as td
from basisdyn.config import parse_config
from basisdyn.io import matrix_from_bytes, matrix_to_bytes, parse_csv, read_csv, trajectory_to_csv
from basisdyn.runner import run_experiment

from oracles import central_difference, dense_coefficients, dense_model_tensor, dense_target_tensor

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SIGMA = (10.0, 5.0, 3.0, 1.0)


@pytest.fixture(scope="module")
def smf_reference():
    cfg = parse_config(CONFIGS / "smf_reference.json")
    t0 = time.perf_counter()
    traj, summary = run_experiment(cfg)
    return cfg, traj, summary, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ostd_reference():
    """The reference run at full resolution, with the one-step monitors attached."""
    cfg = parse_config(CONFIGS / "ostd_reference.json")
    problem = td.OSTDProblem.random(cfg.d, cfg.sigma, cfg.r_over, cfg.order_l, cfg.seed)
    stats = {"applicable": 0, "violations": 0, "signal_samples": [[] for _ in range(problem.r)]}
    prev = []

    def observe(state, V):
        if prev:
            st = td.prop7_step_monitor(prev[-1], V, problem, cfg.eta)
            stats["applicable"] += st.applicable
            stats["violations"] += st.applicable and not st.all_ok
            prev.pop()
        prev.append(V)
        if state.iteration % 10 == 0:
            b = td.signal_coefficients(V, problem)
            g = td.signal_gradient_norms(V, problem)
            for i in range(problem.r):
                stats["signal_samples"][i].append((b[i], g[i]))

    t0 = time.perf_counter()
    traj = td.run_ostd(problem, cfg.alpha, cfg.gamma_align, cfg.eta, cfg.max_iters, cfg.seed, observer=observe)
    elapsed = time.perf_counter() - t0
    return cfg, problem, traj, stats, elapsed


def test_01_kr_reference(report):
    problem = kr.KRProblem.from_signals(SIGMA, 20)
    t0 = time.perf_counter()
    traj = kr.run_kr(problem, alpha=5e-7, eta=0.4, T=60)
    elapsed = time.perf_counter() - t0
    sig = traj.coefficients[:, :4]
    monotone = bool(np.all(np.diff(sig, axis=0) > 0))
    cross = core.crossing_times(traj, list(SIGMA) + [math.nan], 0.5)[:4]
    spread = max(cross) - min(cross)
    ok = monotone and spread <= 1 and traj.final_error <= 1e-6 and elapsed < 1.0
    report(1, ok, f"KR reference: strictly monotone={monotone}, 0.5-crossings={cross} (spread {spread}), "
                  f"||theta_60 - theta*||={traj.final_error:.2e}, runtime {elapsed:.3f}s")


def test_02_kr_closed_form(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(2, 30))
        k = int(rng.integers(1, d + 1))
        signals = np.sort(np.abs(rng.standard_normal(k)) + 0.1)[::-1] * rng.choice([-1, 1], k)
        signals = signals[np.argsort(-np.abs(signals), kind="stable")]
        problem = kr.KRProblem.from_signals(signals, d)
        theta0 = rng.standard_normal(d)
        eta = float(rng.uniform(0.01, 0.99))
        hist = kr.kr_simulate(problem, theta0, eta, 100)
        closed = np.array([[kr.kr_closed_form(i, t, theta0, eta, problem) for i in range(d)] for t in range(101)])
        worst = max(worst, float(np.max(np.abs(hist - closed))))
    report(2, worst <= 1e-12, f"KR simulation vs closed form over 100 iterations: max |dev| = {worst:.2e}")


def test_03_smf_reference(smf_reference, report):
    cfg, traj, summary, elapsed = smf_reference
    cross = summary.crossing_times["0.99"][:4]
    increasing = None not in cross and all(a < b for a, b in zip(cross, cross[1:]))
    off = traj.column("offdiag_max")[-1]
    ok = increasing and traj.final_error <= 1e-3 and off <= 1e-3 and elapsed < 5.0
    report(3, ok, f"SMF reference: 0.99-crossings={cross}, ||UU^T-M*||={traj.final_error:.2e}, "
                  f"max offdiag={off:.2e}, runtime {elapsed:.2f}s")


def test_04_smf_coefficient_recurrence(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in range(1000):
        d = int(rng.integers(2, 8))
        r = int(rng.integers(1, d + 1))
        rp = int(rng.integers(r, d + 2))
        sigma = np.sort(rng.uniform(0.5, 5.0, r))[::-1]
        problem = mf.SMFProblem.random(d, sigma, rp, seed=n)
        U = rng.standard_normal((d, rp)) * rng.uniform(0.05, 1.0)
        eta = float(rng.uniform(0, 1) / sigma[0])
        B = mf.smf_coefficients(mf.SMFState(U), problem)
        B_rec = mf.smf_coefficient_step(0.5 * (B + B.T), problem, eta)
        B_gd = mf.smf_coefficients(mf.smf_gd_step(mf.SMFState(U), problem, eta), problem)
        worst = max(worst, float(np.max(np.abs(B_rec - B_gd) / (1 + np.abs(B_gd)))))
    report(4, worst <= 1e-9, f"SMF coefficient recurrence vs projected GD, 1000 pairs: max scaled dev = {worst:.2e}")


def test_05_parseval_and_monte_carlo(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for n in range(50):
        problem = mf.SMFProblem.random(8, [3.0, 2.0, 1.0], 5, seed=n)
        state = mf.SMFState(rng.standard_normal((8, 5)) * 0.7)
        B = mf.smf_coefficients(state, problem)
        coef_loss = 0.25 * float(np.sum((B - problem.beta_star) ** 2))
        worst = max(worst, abs(coef_loss - mf.smf_loss(state.U, problem)) / mf.smf_loss(state.U, problem))
    problem = mf.SMFProblem.random(8, [3.0, 2.0, 1.0], 5, seed=99)
    state = mf.SMFState(rng.standard_normal((8, 5)) * 0.7)
    est, se = mf.mc_expected_loss_smf(state, problem, 10**6, seed=7)
    exact = mf.smf_loss(state.U, problem)
    z = abs(est - exact) / se
    report(5, worst <= 1e-12 and z <= 3, f"Parseval rel err max {worst:.1e}; Monte Carlo {est:.5f} vs {exact:.5f} "
                                         f"({z:.2f} standard errors, 1e6 samples)")


def test_06_smf_init_bounds(report):
    passed = 0
    for seed in range(200):
        problem = mf.SMFProblem.random(20, SIGMA, 20, seed)
        signal_ok, residual_ok = mf.smf_init_check(mf.smf_init_gaussian(problem, 5e-7, seed), problem, 5e-7)
        passed += signal_ok and residual_ok
    report(6, passed >= 190, f"SMF Gaussian-init coefficient bounds hold for {passed}/200 seeds")


def test_07_ostd_reference(ostd_reference, report):
    cfg, problem, traj, _, elapsed = ostd_reference
    s0 = td.ostd_aligned_init(problem, cfg.alpha, cfg.gamma_align, cfg.seed)
    norms = np.linalg.norm(s0.U, axis=0)
    cos = float(np.min(np.diag(s0.U.T @ problem.Z) / norms))
    cross = core.crossing_times(traj, list(SIGMA) + [math.nan, math.nan], 0.99)[:4]
    increasing = None not in cross and all(a < b for a, b in zip(cross, cross[1:]))
    ratio = (traj.error[-1] / traj.error[0]) ** 2
    ok = cos >= 0.9983 and np.allclose(norms, 0.1) and increasing and ratio <= 0.01 and elapsed < 30
    report(7, ok, f"OSTD reference: min cos={cos:.6f}, 0.99-crossings={cross}, "
                  f"tensor error final/initial={ratio:.1e}, runtime {elapsed:.1f}s")


def test_08_lemma6_recurrence(report):
    rng = np.random.default_rng(8)
    worst = 0.0
    for n in range(100):
        problem = td.OSTDProblem.random(4, [3.0, 2.0, 1.0], int(rng.integers(3, 6)), 3, seed=n)
        U = rng.standard_normal((4, problem.r_over)) * 0.4
        eta = 0.01
        V = td.v_matrix(td.OSTDState(U), problem)
        ref = td.v_step_reference(V, problem, eta)
        gd = td.v_matrix(td.ostd_gd_step(td.OSTDState(U), problem, eta), problem)
        worst = max(worst, float(np.max(np.abs(ref.V - gd.V))))
    report(8, worst <= 1e-9, f"v-recurrence by enumeration vs projected GD (d=4, l=3, 100 states): max dev {worst:.1e}")


def test_09_ostd_parseval_enumeration(report):
    rng = np.random.default_rng(9)
    worst = 0.0
    for d, l in [(3, 3), (4, 3), (6, 3), (4, 4), (5, 4), (6, 4)]:
        problem = td.OSTDProblem.random(d, [2.0, 1.0], d, l, seed=d * 10 + l)
        U = rng.standard_normal((d, d)) * 0.6
        beta = dense_coefficients(dense_model_tensor(U, l), problem.Z)
        beta_star = dense_coefficients(dense_target_tensor(problem.Z, problem.sigma, l), problem.Z)
        total = float(np.sum((beta - beta_star) ** 2))
        two_loss = 2 * td.ostd_loss(td.OSTDState(U), problem)
        worst = max(worst, abs(two_loss - total) / total)
    report(9, worst <= 1e-10, f"OSTD 2*loss vs sum over multi-indices (d<=6, l<=4): max rel err {worst:.1e}")


def test_10_gradient_checks(report):
    rng = np.random.default_rng(10)
    worst_smf = worst_ostd = 0.0
    for n in range(100):
        p = mf.SMFProblem.random(5, [2.0, 1.0], 3, seed=n)
        U = rng.standard_normal((5, 3))
        g = mf.smf_gradient(U, p)
        fd = central_difference(lambda x: mf.smf_loss(x, p), U.copy())
        worst_smf = max(worst_smf, np.linalg.norm(g - fd) / np.linalg.norm(g))
        q = td.OSTDProblem.random(4, [2.0, 1.0], 3, 3 + n % 2, seed=n)
        U = rng.standard_normal((4, 3)) * 0.8
        g = td.ostd_gradient(td.OSTDState(U), q)
        fd = central_difference(lambda x: td.ostd_loss(td.OSTDState(x), q), U.copy())
        worst_ostd = max(worst_ostd, np.linalg.norm(g - fd) / np.linalg.norm(g))
    report(10, max(worst_smf, worst_ostd) <= 1e-5,
           f"analytic vs central-difference gradients: SMF {worst_smf:.1e}, OSTD {worst_ostd:.1e}")


def test_11_lemma3_grid(report):
    cases = violations = 0
    for sigma, eta_sigma, alpha, eps_frac in itertools.product([1, 2, 10], [0.05, 0.1], [1e-6, 1e-3], [0.1, 0.01]):
        eps = eps_frac * sigma
        if alpha > eps:
            continue
        eta = eta_sigma / sigma
        T = logistic.lemma3_iteration_bound(alpha, eps, sigma, eta)
        x = logistic.logistic_iterate(logistic.LogisticConfig(sigma, eta, alpha), T)
        cases += 1
        violations += not bool(np.any(x >= sigma - eps))
    report(11, cases > 0 and violations == 0, f"logistic first-passage bound: {violations} violations in {cases} cases")


LEMMA4_GRID = [
    (s1, ratio * s1, alpha, frac * s1)
    for s1, ratio, alpha, frac in itertools.product([2.0, 10.0], [0.5, 0.2], [1e-6, 1e-9, 1e-12, 1e-15, 1e-20], [0.1, 0.01])
    if alpha <= frac * s1
][:20]


def test_12_lemma4_grid(report):
    gated = violations = 0
    for s1, s2, alpha, eps in LEMMA4_GRID:
        eta = 1 / (4 * s1)
        T, y_bound = logistic.lemma4_separation(s1, s2, eta, alpha, eps)
        if not y_bound < s2:
            continue
        gated += 1
        x = logistic.logistic_iterate(logistic.LogisticConfig(s1, eta, alpha), T)
        y = logistic.logistic_iterate(logistic.LogisticConfig(s2, eta, alpha), T)
        violations += not (y[-1] <= y_bound and x[-1] >= s1 - eps)
    report(12, len(LEMMA4_GRID) == 20 and gated > 0 and violations == 0,
           f"logistic separation: {violations} violations over {gated} informative cases of a 20-case grid")


def test_13_bernoulli(report):
    rng = np.random.default_rng(13)
    r = rng.uniform(1, 50, 10**4)
    r[r == 1] = 1.5
    x = rng.uniform(0, 1, r.size) / (r - 1) * (1 - 1e-9)
    slack = [1 + ri * xi / (1 - (ri - 1) * xi) - math.exp(ri * math.log1p(xi)) for xi, ri in zip(x, r)]
    checks = [logistic.bernoulli_check(float(xi), float(ri)) for xi, ri in zip(x, r)]
    report(13, all(checks) and min(slack) >= -1e-12, f"Bernoulli-type inequality on 10^4 samples: min slack {min(slack):.2e}")


def test_14_diagnostics(smf_reference, ostd_reference, report):
    _, _, summary, _ = smf_reference
    smf_fits = summary.diagnostics["dominance"]
    smf_ok = all(0.45 <= f["gamma"] <= 0.55 and 1.8 <= f["C"] <= 2.2 for f in smf_fits)
    _, _, _, stats, _ = ostd_reference
    ostd_fits = [core.dominance_fit(s) for s in stats["signal_samples"]]
    ostd_ok = all(0.70 <= f.gamma_exponent <= 0.80 for f in ostd_fits)
    score, _ = core.gradient_independence_score(kr.kr_gradients(kr.KRProblem.from_signals(SIGMA, 20)))
    gam_smf = [round(f["gamma"], 4) for f in smf_fits]
    gam_ostd = [round(f.gamma_exponent, 4) for f in ostd_fits]
    report(14, smf_ok and ostd_ok and score <= 1e-14,
           f"dominance SMF gamma={gam_smf} C~{smf_fits[0]['C']:.3f}; OSTD gamma={gam_ostd}; KR independence {score:.1e}")


def test_15_prop7_monitors(ostd_reference, report):
    _, _, _, stats, _ = ostd_reference
    ok = stats["applicable"] > 0 and stats["violations"] == 0
    report(15, ok, f"one-step OSTD monitors: {stats['violations']} violations over {stats['applicable']} applicable steps")


def _halving_ratio(beta_fn, grad_fn, theta, beta_star, eta):
    r1 = core.prop1_residual_check(theta, eta, beta_fn, grad_fn, beta_star)
    r2 = core.prop1_residual_check(theta, eta / 2, beta_fn, grad_fn, beta_star)
    return r1 / r2


def test_16_prop1_residual_order(report):
    rng = np.random.default_rng(16)
    p = mf.SMFProblem.random(6, [3.0, 2.0, 1.0], 6, seed=1)
    U = rng.standard_normal((6, 6)) * 0.5
    smf_ratio = _halving_ratio(
        lambda th: mf.smf_beta_vector(th.reshape(6, 6), p),
        lambda th: mf.smf_coefficient_gradients(th.reshape(6, 6), p),
        U.ravel(), p.beta_star.ravel(), 1e-3,
    )
    q = td.OSTDProblem.random(4, [3.0, 2.0, 1.0], 4, 3, seed=2)
    U = rng.standard_normal((4, 4)) * 0.5
    ostd_ratio = _halving_ratio(
        lambda th: td.ostd_beta_vector(th.reshape(4, 4), q),
        lambda th: td.ostd_coefficient_gradients(th.reshape(4, 4), q),
        U.ravel(), td.beta_star_tensor(q).ravel(), 1e-3,
    )
    ok = 3.5 <= smf_ratio <= 4.5 and 3.5 <= ostd_ratio <= 4.5
    report(16, ok, f"second-order residual ratio under eta halving: SMF {smf_ratio:.4f}, OSTD {ostd_ratio:.4f}")


def test_17_ack(report):
    rng = np.random.default_rng(17)
    final = ack.FeatureSnapshot(rng.standard_normal((3, 10)), rng.standard_normal((10, 50)))
    basis = ack.build_ack_basis(final)
    A = np.stack([np.outer(basis.left[:, i], basis.right[:, i]).ravel() for i in range(basis.size)])
    frob_dev = float(np.max(np.abs(A @ A.T - np.eye(basis.size))))
    phi = ack.basis_functions(basis, final)
    emp_dev = float(np.max(np.abs(np.einsum("ikn,jkn->ij", phi, phi) / 50 - np.eye(basis.size))))
    self_dev = float(np.max(np.abs(ack.project_snapshot(final, basis) - basis.singular_values)))

    snaps = ack.synth_linear_trajectory(k=3, m=10, N=50, epochs=200, eta=0.9, seed=0)
    syn_basis = ack.build_ack_basis(snaps[-1])
    B = np.array([ack.project_snapshot(s, syn_basis) for s in snaps])
    monotone = bool(np.all(np.diff(B, axis=0) >= -1e-9))
    r2 = [ack.geometric_decay_fit(s - B[:, i], floor=1e-9 * max(1.0, s))[1] for i, s in enumerate(syn_basis.singular_values)]
    ok = frob_dev <= 1e-10 and emp_dev <= 1e-10 and self_dev <= 1e-10 and monotone and min(r2) >= 0.99
    report(17, ok, f"A-CK: <A_i,A_j> dev {frob_dev:.1e}, E<phi_i,phi_j> dev {emp_dev:.1e}, self-projection dev "
                   f"{self_dev:.1e}; synthetic monotone={monotone}, decay r^2 min {min(r2):.5f}")


def test_18_determinism_and_io(tmp_path, report):
    cfg = parse_config(CONFIGS / "smf_reference.json")
    small = dataclasses.replace(cfg, max_iters=500)
    run_experiment(small, out=str(tmp_path / "a.csv"))
    run_experiment(small, out=str(tmp_path / "b.csv"))
    identical = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    traj = read_csv(tmp_path / "a.csv")
    csv_lossless = trajectory_to_csv(parse_csv(trajectory_to_csv(traj))) == trajectory_to_csv(traj) and (
        np.array_equal(traj.coefficients.view(np.uint64), parse_csv(trajectory_to_csv(traj)).coefficients.view(np.uint64))
    )
    M = np.random.default_rng(18).standard_normal((7, 3)) * 10.0 ** np.arange(-150, 165, 15).reshape(7, 3)
    mat_lossless = np.array_equal(matrix_from_bytes(matrix_to_bytes(M)).view(np.uint64), M.view(np.uint64))
    report(18, identical and csv_lossless and mat_lossless,
           f"determinism: identical CSV bytes={identical}; CSV round trip lossless={csv_lossless}; "
           f"matrix round trip lossless={mat_lossless}")
