"""Acceptance criteria 1-9.

Each test records one line (criterion, verdict, measured values) that is
printed in the pytest terminal summary. Thresholds below are pinned; they
are the acceptance bars, not tuning knobs.
"""
import itertools
import math
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from safe_imm._kernels import drift_bound as drift_bound_kernel
from safe_imm.association import solve_assignment
from safe_imm.config import load_config
from safe_imm.estimate import GaussianEstimate
from safe_imm.imm import ImmConfig, ModelBank, default_bank, imm_step, mixture_moments
from safe_imm.metrics import ospa
from safe_imm.models import ca_model, cv_model
from safe_imm.runner import bench_imm, bench_tracker, run_campaign

from conftest import record_acceptance

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
N_SEEDS = 50
SEEDS = list(range(N_SEEDS))

# Pinned bars
BOUND_INSTANCES = 100_000
BOUND_REL_SLACK = 1e-9
BOUND_TIME_LIMIT_S = 10.0
EPSILON = 0.5
P1_RMSE_MAX = 0.5
P2_RMSE_MAX = 0.05
ABLATION_MIN_WINS = 45
LIKELIHOOD_MIN_WINS = 40
ASSIGNMENT_CASES = 10_000
MC_SAMPLES = 1_000_000
MC_SIGMAS = 3.0
OSPA_TRIPLES = 10_000
TRIANGLE_SLACK = 1e-9
HYGIENE_STEPS = 10_000
NORMALISATION_TOL = 1e-9
IMM_STEPS_PER_S = 10_000
TRACKER_FPS = 1_000
REALTIME_HZ = 10.0

pytestmark = pytest.mark.acceptance


@lru_cache(maxsize=None)
def campaign(config: str, *overrides: str):
    return tuple(run_campaign(load_config(CONFIGS / config, list(overrides)), SEEDS))


# 1 --------------------------------------------------------------------------

def _random_banks(rng, K, M):
    """``K`` random ``M``-model banks in padded form, with a mix of easy and nasty cases."""
    N = 9
    dims = rng.choice([6, 9], size=(K, M))
    scale = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), size=(K, M)))
    A = rng.normal(size=(K, M, N, N))
    covs = np.einsum("kmij,kmlj->kmil", A, A) / N
    # a fifth of the instances get nearly rank-deficient covariances
    thin = rng.random((K, M)) < 0.2
    covs[thin] = np.einsum("kij,klj->kil", A[thin][:, :, :2], A[thin][:, :, :2]) + 1e-10 * np.eye(N)
    covs *= scale[..., None, None]
    means = rng.normal(size=(K, M, N)) * np.exp(rng.uniform(-3, 3, size=(K, M, 1)))
    for k in range(K):
        for i in range(M):
            n = dims[k, i]
            means[k, i, n:] = 0.0
            covs[k, i, n:, :] = 0.0
            covs[k, i, :, n:] = 0.0
    w = rng.dirichlet(np.full(M, 0.5), size=K)
    # near ties and near one-hot weights
    tie = rng.random(K) < 0.1
    w[tie, 0] = w[tie, 1] = 0.5 * (w[tie, 0] + w[tie, 1]) * (1 + 1e-12)
    w[tie] /= w[tie].sum(axis=1, keepdims=True)
    return means, covs, dims.astype(np.int64), w


def _mixture_gap(means, dims, w, win):
    """||mu_mix - mu_win|| in the winner's space, straight from the definition."""
    n = dims[win]
    mapped = means[:, :n]  # padded entries are zero, which is the zero-pad map
    mu = (w[:, None] * mapped).sum(axis=0)
    return float(np.linalg.norm(mu - means[win, :n]))


def test_1_drift_bound_theorem():
    rng = np.random.default_rng(2024)
    pad, scale = 25.0, np.ones(9)
    per_M = BOUND_INSTANCES // 2
    batches = [(M, _random_banks(rng, per_M, M)) for M in (2, 3)]
    violations = 0
    worst = 0.0
    t0 = time.perf_counter()
    for M, (means, covs, dims, w) in batches:
        for k in range(per_M):
            B, _, _, win, _ = drift_bound_kernel(means[k], covs[k], dims[k], w[k], pad, scale)
            gap = _mixture_gap(means[k], dims[k], w[k], win)
            if not gap <= B * (1 + BOUND_REL_SLACK):
                violations += 1
            if B > 0:
                worst = max(worst, gap / B)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < BOUND_TIME_LIMIT_S
    record_acceptance(1, "", ok, f"{2 * per_M} banks, {violations} violations, max gap/B = {worst:.4f}, "
                                 f"{elapsed:.2f} s (limit {BOUND_TIME_LIMIT_S:.0f} s)")
    assert ok


# 2 --------------------------------------------------------------------------

@pytest.mark.parametrize("config", ["profile1.yaml", "profile2.yaml"])
def test_2_gate_compliance(config):
    runs = campaign(config)
    fired = sum(r.fired_steps for r in runs)
    bad_runs = [r.seed for r in runs if r.compliant_fired != r.fired_steps]
    worst = max(r.max_drift_fired for r in runs)
    ok = not bad_runs and fired > 0
    record_acceptance(2, config.split(".")[0], ok,
                      f"{fired} fired steps over {len(runs)} runs, non-compliant runs {bad_runs}, "
                      f"max fired drift {worst:.4f} <= {EPSILON}")
    assert ok


# 3 / 4 ----------------------------------------------------------------------

def _rmse_table(runs):
    ids = runs[0].target_ids
    return {i: np.nanmean([r.rmse_xy[i] for r in runs], axis=0) for i in ids}


def _fmt_rmse(table):
    return " ".join(f"T{i}=({x:.3f},{y:.3f})" for i, (x, y) in table.items())


def test_3_profile1_rmse():
    table = _rmse_table(campaign("profile1.yaml"))
    worst = max(float(v.max()) for v in table.values())
    ok = worst <= P1_RMSE_MAX
    record_acceptance(3, "rmse", ok, f"mean x,y RMSE {_fmt_rmse(table)} m, worst {worst:.3f} vs bar {P1_RMSE_MAX}")
    assert ok


def test_3_profile1_ospa_ordering():
    on = campaign("profile1.yaml")
    off = campaign("profile1.yaml", "tracker=imm_mixture_only")
    m_on = float(np.mean([r.ospa_mean for r in on]))
    m_off = float(np.mean([r.ospa_mean for r in off]))
    ok = m_on < m_off
    record_acceptance(3, "ospa", ok, f"mean OSPA gate-on {m_on:.4f} < gate-off {m_off:.4f}")
    assert ok


def test_4_profile2_rmse():
    table = _rmse_table(campaign("profile2.yaml"))
    worst = max(float(v.max()) for v in table.values())
    ok = worst <= P2_RMSE_MAX
    record_acceptance(4, "", ok, f"mean x,y RMSE {_fmt_rmse(table)} m, worst {worst:.4f} vs bar {P2_RMSE_MAX}")
    assert ok


# 5 / 6 ----------------------------------------------------------------------

def test_5_gate_ablation_on_t2():
    on = campaign("t2_stress.yaml")
    off = campaign("t2_stress.yaml", "tracker=imm_mixture_only")
    assert [r.seed for r in on] == [r.seed for r in off]
    wins = sum(b.ospa_mean > a.ospa_mean for a, b in zip(on, off))
    ok = wins >= ABLATION_MIN_WINS
    record_acceptance(5, "", ok, f"gate-off OSPA > gate-on in {wins}/{N_SEEDS} paired seeds "
                                 f"(need {ABLATION_MIN_WINS}); means {np.mean([r.ospa_mean for r in on]):.4f} "
                                 f"vs {np.mean([r.ospa_mean for r in off]):.4f}")
    assert ok


def test_6_gaussian_vs_student_t_excursions():
    gauss = campaign("high_noise.yaml", "likelihood=gaussian")
    stud = campaign("high_noise.yaml", "likelihood=student_t")
    wins = sum(g.max_drift > s.max_drift for g, s in zip(gauss, stud))
    ok = wins >= LIKELIHOOD_MIN_WINS
    record_acceptance(6, "", ok, f"Gaussian max excursion > Student-t in {wins}/{N_SEEDS} paired seeds "
                                 f"(need {LIKELIHOOD_MIN_WINS}); mean max excursion "
                                 f"{np.mean([r.max_drift for r in gauss]):.3f} vs "
                                 f"{np.mean([r.max_drift for r in stud]):.3f} m")
    assert ok


# 7 --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _perms(r, c):
    return np.array(list(itertools.permutations(range(c), r)), dtype=np.int64).reshape(-1, r)


def _oracle_assignment(C):
    """Exhaustive search: most pairs first, then least total cost."""
    if C.shape[0] > C.shape[1]:
        return _oracle_assignment(C.T)
    r, c = C.shape
    picked = C[np.arange(r), _perms(r, c)]
    finite = np.isfinite(picked)
    count = finite.sum(axis=1)
    cost = np.where(finite, picked, 0.0).sum(axis=1)
    best = count == count.max()
    return int(count.max()), float(cost[best].min())


def test_7a_assignment_vs_brute_force():
    rng = np.random.default_rng(7)
    mismatches = 0
    for case in range(ASSIGNMENT_CASES):
        r, c = rng.integers(1, 7, size=2)
        C = rng.integers(0, 30, size=(r, c)).astype(float)  # integers keep sums exact
        C[rng.random((r, c)) < rng.uniform(0, 0.6)] = np.inf
        a = solve_assignment(C)
        n, cost = _oracle_assignment(C)
        mismatches += not (len(a.pairs) == n and a.total_cost == cost)
    ok = mismatches == 0
    record_acceptance(7, "a", ok, f"assignment vs permutation search: {mismatches}/{ASSIGNMENT_CASES} mismatches")
    assert ok


def test_7b_mixture_vs_monte_carlo():
    rng = np.random.default_rng(71)
    A6, A9 = rng.normal(size=(6, 6)), rng.normal(size=(9, 9))
    cv = GaussianEstimate(rng.normal(scale=3.0, size=6), A6 @ A6.T / 6 + 0.1 * np.eye(6))
    ca = GaussianEstimate(rng.normal(scale=3.0, size=9), A9 @ A9.T / 9 + 0.1 * np.eye(9))
    bank = ModelBank([cv_model(), ca_model()], [cv, ca], [0.35, 0.65], np.eye(2))
    mix = mixture_moments(bank, 1, 25.0)
    # sample the mixture after the CV component is zero-padded into CA space
    cv9 = GaussianEstimate(np.r_[cv.mean, np.zeros(3)], np.block([[cv.cov, np.zeros((6, 3))],
                                                                    [np.zeros((3, 6)), 25.0 * np.eye(3)]]))
    comp = rng.random(MC_SAMPLES) < bank.weights[0]
    x = np.empty((MC_SAMPLES, 9))
    x[comp] = rng.multivariate_normal(cv9.mean, cv9.cov, size=comp.sum())
    x[~comp] = rng.multivariate_normal(ca.mean, ca.cov, size=(~comp).sum())
    mean_mc = x.mean(axis=0)
    z_mean = np.abs(mean_mc - mix.mean) / np.sqrt(np.diag(mix.cov) / MC_SAMPLES)
    d = x - mean_mc
    prods = d[:, :, None] * d[:, None, :]
    cov_mc = prods.mean(axis=0)
    se_cov = prods.std(axis=0) / math.sqrt(MC_SAMPLES)
    iu = np.triu_indices(9)
    z_cov = (np.abs(cov_mc - mix.cov) / se_cov)[iu]
    worst = max(z_mean.max(), z_cov.max())
    ok = worst <= MC_SIGMAS
    record_acceptance(7, "b", ok, f"mixture moments vs {MC_SAMPLES:.0e} draws: max |z| mean {z_mean.max():.2f}, "
                                  f"cov {z_cov.max():.2f} (bar {MC_SIGMAS})")
    assert ok


def test_7c_ospa_axioms():
    rng = np.random.default_rng(72)
    asym = tri = 0
    worst = -np.inf
    for _ in range(OSPA_TRIPLES):
        X, Y, Z = (rng.uniform(-3, 3, size=(rng.integers(0, 5), 2)) for _ in range(3))
        dxy, dyx = ospa(X, Y).total, ospa(Y, X).total
        asym += dxy != dyx
        excess = ospa(X, Z).total - dxy - ospa(Y, Z).total
        worst = max(worst, excess)
        tri += excess > TRIANGLE_SLACK
    ok = asym == 0 and tri == 0
    record_acceptance(7, "c", ok, f"OSPA over {OSPA_TRIPLES} triples: {asym} asymmetric, {tri} triangle "
                                  f"violations (max excess {worst:.2e})")
    assert ok


# 8 --------------------------------------------------------------------------

@pytest.mark.parametrize("likelihood", ["gaussian", "student_t"])
def test_8_numerical_hygiene(likelihood):
    rng = np.random.default_rng(8)
    cfg = ImmConfig(likelihood=likelihood)
    R = 4.0 * np.eye(3)
    bank = default_bank(np.zeros(6), np.diag([4.0] * 3 + [100.0] * 3))
    x = np.zeros(6)
    x[3] = 8.0
    non_finite = not_psd = 0
    worst_norm = 0.0
    for k in range(HYGIENE_STEPS):
        # alternate quiet and manoeuvring stretches
        acc = np.r_[rng.normal(scale=4.0, size=2), 0.0] if (k // 300) % 2 else np.zeros(3)
        x[:3] += 0.1 * x[3:] + 0.005 * acc
        x[3:] += 0.1 * acc
        z = x[:3] + rng.normal(scale=2.0, size=3)
        if rng.random() < 0.01:
            z += rng.normal(scale=60.0, size=3)
        bank, out, _ = imm_step(bank, z, R, 0.1, cfg)
        non_finite += not (np.isfinite(bank.means).all() and np.isfinite(bank.covs).all()
                           and np.isfinite(out.mean).all() and np.isfinite(out.cov).all())
        not_psd += sum(not e.is_psd() for e in bank.estimates) + (not out.is_psd())
        worst_norm = max(worst_norm, abs(bank.weights.sum() - 1.0))
    ok = non_finite == 0 and not_psd == 0 and worst_norm <= NORMALISATION_TOL
    record_acceptance(8, likelihood, ok, f"{HYGIENE_STEPS} steps: {non_finite} non-finite, {not_psd} non-PSD, "
                                         f"max |sum w - 1| = {worst_norm:.1e}")
    assert ok


# 9 --------------------------------------------------------------------------

def test_9_real_time():
    imm = bench_imm(20_000)
    trk = bench_tracker(load_config(CONFIGS / "profile1.yaml"))
    ok = trk["frames_per_s"] >= REALTIME_HZ
    record_acceptance(9, "", ok,
                      f"tracker {trk['frames_per_s']:.0f} frames/s = {trk['frames_per_s'] / REALTIME_HZ:.0f}x the "
                      f"{REALTIME_HZ:.0f} Hz bar; reported: IMM-only {imm['steps_per_s']:.0f} steps/s "
                      f"(target {IMM_STEPS_PER_S}: {'met' if imm['steps_per_s'] >= IMM_STEPS_PER_S else 'missed'}), "
                      f"tracker target {TRACKER_FPS} fps "
                      f"{'met' if trk['frames_per_s'] >= TRACKER_FPS else 'missed'}; "
                      f"p99 IMM step {imm['latency_p99_us']:.0f} us")
    assert ok
