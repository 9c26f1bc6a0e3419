"""Dispatch a validated config to its model runner and summarize the result."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import ack, kernel_regression as kr, logistic, matrix_factorization as mf, tensor_decomposition as td
from .config import ExperimentConfig
from .core import CoefficientTrajectory, TrajectoryRecorder, crossing_times, dominance_fit, gradient_independence_score
from .errors import InputError
from .io import emit_csv, emit_svg, finite_or_none

# Lemma-5 checks enumerate d^l coefficients, so they run on a coarser grid.
LEMMA5_EVERY = 100


@dataclass
class RunSummary:
    kind: str
    iterations: int
    final_loss: float
    final_error: float
    crossing_times: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=False, default=finite_or_none) + "\n"


def summary_crossings(traj: CoefficientTrajectory, targets, thresholds) -> dict:
    """Crossing times for every threshold; keys are the thresholds formatted with ``repr``."""
    return {repr(float(f)): crossing_times(traj, targets, f) for f in thresholds}


def _fit_or_none(samples):
    samples = [(b, g) for b, g in samples if b > 0 and g > 0]
    try:
        fit = dominance_fit(samples)
    except InputError:
        return None
    return {"C": fit.C, "gamma": fit.gamma_exponent, "r_squared": fit.r_squared, "samples": fit.sample_count}


def _sampled(step, cfg):
    return step % cfg.record_every == 0 or step == cfg.max_iters


def _run_kr(cfg):
    problem = kr.KRProblem.from_signals(cfg.sigma, cfg.d)
    traj = kr.run_kr(problem, cfg.alpha, cfg.eta, cfg.max_iters, cfg.record_every)
    k = problem.k
    score, _ = gradient_independence_score(kr.kr_gradients(problem))
    fits = [_fit_or_none([(abs(b), 1.0) for b in traj.coefficients[:, i]]) for i in range(k)]
    diag = {"independence_score_max": score, "dominance": fits}
    return traj, list(problem.theta_star[:k]) + [math.nan], diag


def _run_smf(cfg):
    problem = mf.SMFProblem.random(cfg.d, cfg.sigma, cfg.r_over, cfg.seed)
    r, Z = problem.r, problem.Z
    samples = [[] for _ in range(r)]
    indep = [0.0]
    omega = [0.0]

    def observe(state, B):
        if problem.d > 1 and B[1, 1] > 0:
            omega[0] = max(omega[0], mf.smf_omega_ratio(B))
        if not _sampled(state.iteration, cfg):
            return
        W = Z[:, :r].T @ state.U  # row i: z_i^T U
        grads = np.einsum("ai,ib->iab", 2 * Z[:, :r], W).reshape(r, -1)
        norms = np.linalg.norm(grads, axis=1)
        for i in range(r):
            samples[i].append((B[i, i], norms[i]))
        if r > 1:
            indep[0] = max(indep[0], gradient_independence_score(grads)[0])

    s0 = mf.smf_init_gaussian(problem, cfg.alpha, cfg.seed)
    init_ok = mf.smf_init_check(s0, problem, cfg.alpha)
    traj = mf.run_smf(problem, cfg.alpha, cfg.eta, cfg.max_iters, cfg.seed, cfg.record_every, observe)
    diag = {
        "independence_score_max": indep[0],
        "dominance": [_fit_or_none(s) for s in samples],
        "init_signal_ok": init_ok[0],
        "init_residual_ok": init_ok[1],
        "omega_max": omega[0] if problem.d > 1 else None,
    }
    return traj, list(problem.sigma[:r]) + [math.nan, math.nan], diag


def _run_ostd(cfg):
    problem = td.OSTDProblem.random(cfg.d, cfg.sigma, cfg.r_over, cfg.order_l, cfg.seed)
    r, l, Z = problem.r, problem.order_l, problem.Z
    samples = [[] for _ in range(r)]
    indep = [0.0]
    counts = {"prop7_applicable": 0, "prop7_violations": 0, "lemma5_checked": 0, "lemma5_violations": 0}
    prev = [None]
    lemma5_ok = problem.d**l <= td.ENUMERATION_BUDGET

    def observe(state, V):
        if prev[0] is not None:
            st = td.prop7_step_monitor(prev[0], V, problem, cfg.eta)
            if st.applicable:
                counts["prop7_applicable"] += 1
                counts["prop7_violations"] += not st.all_ok
        prev[0] = V
        if lemma5_ok and state.iteration % LEMMA5_EVERY == 0:
            st = td.lemma5_bounds_check(V, problem)
            if st.status == "checked":
                counts["lemma5_checked"] += 1
                counts["lemma5_violations"] += not (st.diag_bound_ok and st.offdiag_bound_ok)
        if not _sampled(state.iteration, cfg):
            return
        betas = td.signal_coefficients(V, problem)
        norms = td.signal_gradient_norms(V, problem)
        for i in range(r):
            samples[i].append((abs(betas[i]), norms[i]))
        if r > 1:
            # grad_U beta_{Lambda_i} = z_i (l v_{:, i}^{l-1})^T
            grads = np.einsum("ai,bi->iab", Z[:, :r], l * V.V[:, :r] ** (l - 1)).reshape(r, -1)
            indep[0] = max(indep[0], gradient_independence_score(grads)[0])

    traj = td.run_ostd(problem, cfg.alpha, cfg.gamma_align, cfg.eta, cfg.max_iters, cfg.seed, cfg.record_every, observe)
    # residual diagonals should stay within 2 alpha^(1/l) of zero throughout
    resid_max = float(np.max(traj.column("diag_residual_max")))
    diag = {
        "independence_score_max": indep[0],
        "dominance": [_fit_or_none(s) for s in samples],
        **counts,
        "diag_residual_max": resid_max,
        "diag_residual_bound_ok": resid_max <= 2 * cfg.alpha ** (1 / l),
    }
    return traj, list(problem.sigma[:r]) + [math.nan, math.nan], diag


def _run_logistic(cfg):
    sigma = cfg.sigma[0]
    x = logistic.logistic_iterate(logistic.LogisticConfig(sigma, cfg.eta, cfg.alpha), cfg.max_iters)
    rec = TrajectoryRecorder(["x"], cfg.record_every)
    for t, v in enumerate(x):
        rec.offer(t, [v], 0.5 * (v - sigma) ** 2, abs(v - sigma))
    return rec.finish(), [sigma], {}


def _run_ack_synthetic(cfg):
    snaps = ack.synth_linear_trajectory(cfg.classes, cfg.features, cfg.samples, cfg.max_iters, cfg.eta, cfg.seed)
    _, W_star = ack.synth_linear_target(cfg.classes, cfg.features, cfg.samples, cfg.seed)
    basis = ack.build_ack_basis(snaps[-1], cfg.rank_tol)
    labels = [f"beta_{i + 1}" for i in range(basis.size)]
    rec = TrajectoryRecorder(labels, cfg.record_every)
    all_betas = []
    remainder = 0.0
    for snap in snaps:
        b = ack.project_snapshot(snap, basis)
        all_betas.append(b)
        remainder = max(remainder, ack.projection_remainder(snap, basis))
        loss = ack.synthetic_loss(snap, W_star)
        rec.offer(snap.epoch, b, loss, math.sqrt(2 * loss))
    B = np.array(all_betas)
    s = basis.singular_values
    decay = []
    for i in range(basis.size):
        try:
            rate, r2 = ack.geometric_decay_fit(s[i] - B[:, i], floor=1e-9 * max(1.0, s[i]))
            decay.append({"rate": rate, "r_squared": r2})
        except InputError:
            decay.append(None)
    diag = {
        "singular_values": s.tolist(),
        "max_decrease": float(max(0.0, np.max(-np.diff(B, axis=0)))) if len(B) > 1 else 0.0,
        "decay_fit": decay,
        "projection_remainder_max": remainder,
    }
    return rec.finish(), list(s), diag


_DISPATCH = {
    "kr": _run_kr,
    "smf": _run_smf,
    "ostd": _run_ostd,
    "logistic": _run_logistic,
    "ack-synthetic": _run_ack_synthetic,
}


def run_experiment(
    cfg: ExperimentConfig, out: Optional[str] = None, svg: Optional[str] = None
) -> tuple[CoefficientTrajectory, RunSummary]:
    """Run ``cfg`` and write the trajectory CSV to ``out`` (or ``cfg.output_path``)."""
    start = time.perf_counter()
    traj, targets, diag = _DISPATCH[cfg.kind](cfg)
    summary = RunSummary(
        kind=cfg.kind,
        iterations=cfg.max_iters,
        final_loss=traj.final_loss,
        final_error=traj.final_error,
        crossing_times=summary_crossings(traj, targets, cfg.thresholds),
        diagnostics=diag,
        wall_time=time.perf_counter() - start,
    )
    path = out or cfg.output_path
    if path:
        emit_csv(traj, path)
    if svg:
        emit_svg(traj, svg, log_y=cfg.kind in ("kr", "smf", "ostd"), title=cfg.kind)
    return traj, summary
