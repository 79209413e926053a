"""End-to-end acceptance criteria. Each test prints one PASS/FAIL line.

Run alone with ``pytest -m acceptance -s``.
"""

import time
import warnings

import numpy as np
import pytest
from scipy.linalg import null_space

import oracles
from conftest import record_criterion
from helpers import THETA, benchmark_family
from zonosafe import setops
from zonosafe.closed_loop import build_family, gain_from_VK, instantiate_Mcl
from zonosafe.data import t_concat_disturbance
from zonosafe.experiments import (
    ExperimentConfig, boundary_points, closed_loop_rollouts, disturbance, draw_trial,
    learned_prior, loose_prior, prepare, run_nesting, run_sweep, safe_polytope, source_batch,
    source_disturbance, synthesize, target_batch,
)
from zonosafe.identification import build_info_set, refine_online, refine_prior
from zonosafe.synthesis import SynthesisProblem, synth_polytope, verify_contractive

pytestmark = pytest.mark.acceptance

ALPHAS = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
TS = (5, 10, 15)


def budget(start, seconds):
    took = time.perf_counter() - start
    return took, took < seconds


def test_criterion_1_closed_loop_membership():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    sys_, _, batch, _, _, fam = benchmark_family(rng, T=10, alpha=1.0)
    base = np.linalg.pinv(batch.X0)
    N = null_space(batch.X0)
    worst = 0.0
    for _ in range(20):
        V_K = base + N @ rng.standard_normal((N.shape[1], batch.n)) * rng.uniform(0.01, 0.3)
        K = gain_from_VK(batch, V_K).K
        res = setops.membership_residual(sys_.A + sys_.B @ K, instantiate_Mcl(fam, V_K))[0]
        worst = max(worst, res)
    took, fast = budget(start, 10)
    ok = record_criterion(1, worst <= 1e-6 and fast,
                          f"max residual {worst:.2e} over 20 V_K, {took:.1f}s")
    assert ok


def test_criterion_2_set_algebra_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    counts = {name: sum(f(rng) for _ in range(200)) for name, f in oracles.ORACLES.items()}
    counts["inclusion certificate"] = sum(
        oracles.inclusion_soundness_oracle(rng, 10_000) for _ in range(200))
    took, fast = budget(start, 120)
    bad = sum(counts.values())
    ok = record_criterion(2, bad == 0 and fast, f"{bad} counterexamples, {took:.1f}s")
    assert ok, counts


def test_criterion_3_end_to_end_safety():
    start = time.perf_counter()
    cfg = ExperimentConfig.load("builtin:benchmark")
    shot = prepare(cfg)
    cert = synthesize(cfg, shot, "prior", lam=0.98)
    assert cert, "synthesis infeasible"
    safe = safe_polytope(cfg)
    rng = np.random.default_rng(303)
    X, _ = closed_loop_rollouts(cfg, shot.system, cert.K, boundary_points(safe, 8), 100, rng)
    excess = float((X @ safe.H.T - safe.h).max())
    report = verify_contractive(cert.K, shot.system, safe, 0.98, 10_000, rng)
    took, fast = budget(start, 60)
    ok = record_criterion(3, excess <= 1e-9 and report.violations == 0 and fast,
                          f"max Hx-h {excess:.3f}, {report.violations}/10000 one-step violations, "
                          f"{took:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def alpha_sweep():
    cfg = ExperimentConfig.load("builtin:benchmark")
    assert cfg.alphas == ALPHAS and cfg.Ts == TS and cfg.lams == (0.99,) and cfg.trials == 100
    return run_sweep(cfg)


def test_criterion_4_disturbance_bound_trend(alpha_sweep):
    per_trial_bad = 0
    for trial in alpha_sweep.trials:
        for a in ALPHAS:
            for T in TS:
                c, u = trial[(a, 0.99, T, "prior")][1], trial[(a, 0.99, T, "noprior")][1]
                if c is not None and u is not None and c > u + 1e-9:
                    per_trial_bad += 1
    monotone = True
    for T in TS:
        means = [alpha_sweep.row(a, "prior", T).mean_l_inf for a in ALPHAS]
        monotone &= all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
    took = alpha_sweep.runtime
    ok = record_criterion(4, per_trial_bad == 0 and monotone and took < 600,
                          f"{per_trial_bad} trials with constrained > unconstrained, "
                          f"mean monotone in alpha: {monotone}, {took:.0f}s")
    assert ok


def test_criterion_5_feasibility_trend(alpha_sweep):
    dominated = 0
    drops = 0
    for a in ALPHAS:
        counts = []
        for T in TS:
            c = alpha_sweep.row(a, "prior", T).feasible_count
            u = alpha_sweep.row(a, "noprior", T).feasible_count
            dominated += c < u
            counts.append(c)
        drops += sum(b < a_ for a_, b in zip(counts, counts[1:]))
    took = alpha_sweep.runtime
    ok = record_criterion(5, dominated == 0 and drops <= 1 and took < 900,
                          f"{dominated} grid points with constrained < unconstrained, "
                          f"{drops} decreases in T, {took:.0f}s")
    assert ok


def test_criterion_6_low_contraction_feasibility():
    start = time.perf_counter()
    cfg = ExperimentConfig.load("builtin:lambda_sweep").replace(lams=(0.7,), alphas=(1.0,), Ts=(15,),
                                                                modes=("prior",))
    result = run_sweep(cfg)
    row = result.row(0.7, "prior", 15)
    rate = row.feasible_count / row.total
    took, fast = budget(start, 300)
    ok = record_criterion(6, rate >= 0.85 and fast,
                          f"feasible {row.feasible_count}/{row.total} at lambda=0.7, {took:.1f}s")
    assert ok


def test_criterion_7_nesting():
    cfg = ExperimentConfig.load("builtin:benchmark")
    assert cfg.samples == 500
    _, violations, _, strict = run_nesting(cfg)
    total = sum(violations.values())
    ok = record_criterion(7, total == 0 and strict.any(),
                          f"{total} nesting violations, {int(strict.sum())} strictly ordered hull entries")
    assert ok


def test_criterion_8_unification():
    cfg = ExperimentConfig.load("builtin:benchmark")
    root = np.random.SeedSequence(808)
    excluded = 0
    worse = 0
    compared = 0
    for k, seq in enumerate(root.spawn(50)):
        draws = draw_trial(cfg, seq, cfg.T)
        source = source_batch(cfg, draws)
        info = build_info_set(source, t_concat_disturbance(source_disturbance(cfg), source.T))
        excluded += not refine_prior(loose_prior(cfg), info).contains(THETA, 1e-7)
        if k % 5 == 0:
            # one-sample updates, the sequential path warns every step
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                online = refine_online(loose_prior(cfg), source, source_disturbance(cfg))
            excluded += not online.contains(THETA, 1e-7)
        batch = target_batch(cfg, draws, cfg.alpha)
        dc = t_concat_disturbance(disturbance(cfg), batch.T)
        rhos = []
        for prior in (learned_prior(cfg, source), loose_prior(cfg)):
            fam = build_family(batch, dc, prior, "full")
            cert = synth_polytope(SynthesisProblem(fam, safe_polytope(cfg), disturbance(cfg), cfg.lam,
                                                   batch), True, cfg.norm, cfg.y_mode)
            rhos.append(cert.rho if cert else None)
        if None not in rhos:
            compared += 1
            worse += rhos[0] > rhos[1] + 1e-6
    ok = record_criterion(8, excluded == 0 and worse == 0,
                          f"{excluded} exclusions of the true model, refined rho worse in "
                          f"{worse}/{compared} jointly feasible cases")
    assert ok

