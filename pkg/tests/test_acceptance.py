"""Acceptance criteria A1-A9. Each test prints a single PASS/FAIL line."""

import time
from dataclasses import replace

import numpy as np
import pytest

from ldlr import harness
from ldlr.dataset import NoiseSpec, SynthSpec, synthesize
from ldlr.graph import affinity_kkt_residuals, laplacian, learn_affinity, project_simplex
from ldlr.metrics import MEASURES, average_ranks, critical_difference, friedman, score
from ldlr.msvr import (MsvrConfig, augmented_gram, fit_arrays, stationarity_residual)
from ldlr.recovery import recover, soft_threshold, svt

SEEDS = range(1, 11)
STEP = 1e-3
OFFSETS = [k * STEP for k in (-3, -2, -1, 1, 2, 3)]


@pytest.fixture
def verdict(capsys):
    def emit(tag, ok, detail):
        with capsys.disabled():
            print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def a3_spec(seed):
    return SynthSpec(n=200, m=10, rank=3, error_fraction=0.05, seed=seed)


@pytest.fixture(scope="module")
def planted_runs():
    runs = []
    t0 = time.perf_counter()
    for seed in SEEDS:
        data = synthesize(a3_spec(seed))
        lap = laplacian(learn_affinity(data.corrupted.features))
        runs.append((data, recover(data.corrupted.labels, lap)))
    return runs, time.perf_counter() - t0


def test_a1_prox_oracles(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        m = rng.standard_normal((5, 4))
        tau = rng.uniform(0.05, 2.0)
        # svt minimizes tau ||Z||_* + 0.5 ||Z - M||^2
        f_svt = lambda z: tau * np.linalg.norm(z, "nuc") + 0.5 * np.sum((z - m) ** 2)
        z = svt(m, tau)
        fz = f_svt(z)
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        sz = np.maximum(s - tau, 0)
        for i in range(s.size):
            for off in OFFSETS:
                sp = sz.copy()
                sp[i] += off
                worst = max(worst, fz - f_svt((u * sp) @ vt))
        for idx in np.ndindex(z.shape):
            for off in OFFSETS:
                zp = z.copy()
                zp[idx] += off
                worst = max(worst, fz - f_svt(zp))
        # soft_threshold minimizes omega |E|_1 + 0.5 ||E - M||^2
        omega = rng.uniform(0.05, 2.0)
        f_l1 = lambda e: omega * np.abs(e).sum() + 0.5 * np.sum((e - m) ** 2)
        e = soft_threshold(m, omega)
        fe = f_l1(e)
        for idx in np.ndindex(e.shape):
            for off in OFFSETS:
                ep = e.copy()
                ep[idx] += off
                worst = max(worst, fe - f_l1(ep))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    verdict("A1", ok, f"max objective gain from a grid perturbation {worst:.2e}, {elapsed:.1f}s")


def test_a2_simplex_and_kkt(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    t = np.arange(0, 1001) / 1000.0
    a, b = np.meshgrid(t, t, indexing="ij")
    keep = a + b <= 1 + 1e-12
    grid = np.column_stack([a[keep], b[keep], np.maximum(1 - a[keep] - b[keep], 0)])
    g2 = np.einsum("ij,ij->i", grid, grid)
    worst_grid = 0.0
    inputs = rng.uniform(-1.5, 1.5, size=(1000, 3))
    for chunk in np.array_split(inputs, 100):
        # argmin_g |g - v|^2 = argmin_g |g|^2 - 2 g.v
        best = grid[np.argmin(g2[:, None] - 2.0 * grid @ chunk.T, axis=0)]
        proj = np.array([project_simplex(v) for v in chunk])
        worst_grid = max(worst_grid, np.max(np.abs(proj - best)))
    worst_kkt = 0.0
    for n in (2, 5, 10, 25, 50):
        for gamma in (0.01, 0.5, 5.0):
            x = rng.standard_normal((n, 3))
            worst_kkt = max(worst_kkt, affinity_kkt_residuals(x, learn_affinity(x, gamma)).max())
    elapsed = time.perf_counter() - t0
    ok = worst_grid <= 2e-3 and worst_kkt <= 1e-8 and elapsed < 30
    verdict("A2", ok, f"grid gap {worst_grid:.1e}, KKT residual {worst_kkt:.1e}, {elapsed:.1f}s")


def test_a3_planted_recovery(verdict, planted_runs):
    runs, elapsed = planted_runs
    good = 0
    details = []
    for data, res in runs:
        star = data.clean.labels
        d = data.corrupted.labels
        ratio = (np.linalg.norm(res.d_tilde - star) / np.linalg.norm(d - star))
        # support of E: entries clearly above the solver's feasibility tolerance
        est = np.abs(res.error) > 1e-6
        planted = data.planted_error != 0
        jac = np.sum(est & planted) / np.sum(est | planted)
        good += ratio <= 0.5 and jac >= 0.5
        details.append(f"{ratio:.2f}/{jac:.2f}")
    ok = good >= 9 and elapsed < 120
    verdict("A3", ok, f"{good}/10 seeds with error ratio <= 0.5 and Jaccard >= 0.5 "
                      f"(ratio/jaccard per seed: {' '.join(details)}), {elapsed:.1f}s")


def test_a4_admm_feasibility(verdict, planted_runs):
    runs, _ = planted_runs
    finals = []
    for data, res in runs:
        d = data.corrupted.labels
        r = max(np.max(np.abs(res.d_tilde + res.error - d)), np.max(np.abs(res.d_tilde - res.z)))
        finals.append((r, res.iterations))
    ok = all(r <= 1e-7 and it <= 500 for r, it in finals)
    verdict("A4", ok, f"worst residual {max(r for r, _ in finals):.1e}, "
                      f"max iterations {max(it for _, it in finals)}")


def test_a5_irwls(verdict):
    rng = np.random.default_rng(5)
    worst_rise = -np.inf
    for _ in range(20):
        n, m = rng.integers(10, 40), rng.integers(2, 6)
        x = rng.standard_normal((n, 4))
        d = rng.dirichlet(np.ones(m), size=n)
        cfg = MsvrConfig(kappa=rng.uniform(0.1, 10), nu=rng.uniform(0, 0.5),
                         epsilon=rng.uniform(0, 0.1))
        _, diag = fit_arrays(x, d, cfg)
        worst_rise = max(worst_rise, np.max(np.diff(diag.objective_history), initial=-np.inf))
    worst_stat = 0.0
    for _ in range(20):
        n, m = rng.integers(10, 40), rng.integers(2, 6)
        x = rng.standard_normal((n, 4))
        d = rng.dirichlet(np.ones(m), size=n)
        cfg = MsvrConfig(kappa=rng.uniform(0.1, 10), nu=0.0, epsilon=0.0)
        model, diag = fit_arrays(x, d, cfg)
        k = augmented_gram(x, model.kernel)
        worst_stat = max(worst_stat, stationarity_residual(k, model.dual_coefficients, d, cfg))
    ok = worst_rise <= 0.0 and worst_stat <= 1e-6
    verdict("A5", ok, f"largest objective change {worst_rise:.1e}, stationarity {worst_stat:.1e}")


def test_a6_metric_identities(verdict):
    rng = np.random.default_rng(6)
    identity = {"chebyshev": 0, "clark": 0, "canberra": 0, "kl": 0, "cosine": 1,
                "intersection": 1, "sorensen": 0}
    worst_id = 0.0
    for p in rng.dirichlet(np.ones(5), size=200):
        for m in MEASURES:
            worst_id = max(worst_id, abs(score(p, p, m) - identity[m]))
    hand = {"chebyshev": 0.25, "canberra": 0.53333, "clark": 0.38873, "kl": 0.14384,
            "intersection": 0.75, "sorensen": 0.25}
    worst_hand = max(abs(score([0.5, 0.5], [0.25, 0.75], m) - v) for m, v in hand.items())
    ok = worst_id <= 1e-12 and worst_hand <= 1e-5
    verdict("A6", ok, f"identity error {worst_id:.1e}, hand-pair error {worst_hand:.1e}")


def test_a7_friedman(verdict):
    chi2, ff = friedman(average_ranks([[1, 2, 3], [1, 2, 3], [2, 1, 3]]))
    cd = critical_difference(2.724, 9, 12)
    ok = (abs(chi2 - 14 / 3) <= 1e-12 and abs(ff - 7) <= 1e-12 and abs(cd - 3.0455) <= 1e-4)
    verdict("A7", ok, f"chi2 {chi2:.15g}, F_F {ff:.15g}, CD {cd:.5f}")


def test_a8_arm_ordering(verdict):
    t0 = time.perf_counter()
    wins = 0
    gaps = []
    for seed in SEEDS:
        cfg = harness.ExperimentConfig(synth=a3_spec(seed), repetitions=1, seed=seed)
        cmp = harness.compare_arms(cfg)
        rec, noisy, gt = cmp.recovered_trained, cmp.noisy_trained, cmp.ground_truth_trained
        wins += rec.chebyshev < noisy.chebyshev and rec.cosine > noisy.cosine
        gaps.append(gt.chebyshev - rec.chebyshev)
    elapsed = time.perf_counter() - t0
    gap = float(np.mean(gaps))
    ok = wins >= 8 and gap <= 0.02 and elapsed < 300
    verdict("A8", ok, f"recovered beats noisy in {wins}/10 seeds, mean Chebyshev "
                      f"(ground truth - recovered) {gap:+.4f}, {elapsed:.1f}s")


def test_a9_zero_noise(verdict):
    cfg = harness.ExperimentConfig(synth=replace(a3_spec(1), error_fraction=0.0),
                                   noise=NoiseSpec(0.0, 0.0, 0), repetitions=3)
    cmp = harness.compare_arms(cfg)
    spread = np.max(cmp.raw_scores.max(axis=2) - cmp.raw_scores.min(axis=2))
    worst = MEASURES[int(np.argmax((cmp.raw_scores.max(axis=2) - cmp.raw_scores.min(axis=2)).max(axis=0)))]
    verdict("A9", spread <= 1e-6, f"largest spread across arms {spread:.2e} ({worst})")
