"""End-to-end acceptance checks, one test per criterion.

Seeds are fixed up front (criterion number times 1000) and replication counts
are the stated ones.  Each test records a PASS/FAIL line with the measured
numbers before asserting.
"""

import numpy as np
import pytest
from scipy.stats import spearmanr

from charnbreak import (
    CharnSpec,
    DetectionConfig,
    GaussianNoise,
    MeanShiftParams,
    Scenario,
    Segmentation,
    central_statistic,
    empirical_size_power,
    fit_gamma0,
    kde_fit,
    lan_diagnostic,
    location_estimate_mean,
    loglik_ratio,
    simulate_with_init,
    test_statistic,
    theoretical_power,
)
from charnbreak.cli import run_command
from charnbreak.noise import score as noise_score

IID = CharnSpec()
AR1 = CharnSpec(trend="linear_ar", rho=(0.5,))
GAUSS = GaussianNoise()


def _varpi(beta, seg, fisher=1.0):
    return float(np.sqrt(np.sum(seg.fractions * np.square(beta)) * fisher))


def _null(spec, n, reps, seed, method="LRT", **kw):
    seg = Segmentation(n, (n // 2 + 1,))
    return Scenario(spec, seg, (0.0, 0.0), (0.0, 0.0), reps=reps, master_seed=seed, method=method,
                    test_beta=(0.0, 3.0), **kw)


def test_criterion_1_size(report):
    iid = empirical_size_power(_null(IID, 200, 2000, 1000))
    ar = empirical_size_power(_null(AR1, 200, 2000, 1001))
    s1 = empirical_size_power(_null(IID, 200, 500, 1002, method="S1"))
    no_change = 1.0 - s1.rate
    ok_lrt = all(0.035 <= r.rate <= 0.065 for r in (iid, ar))
    ok = report(
        1, ok_lrt and no_change >= 0.95,
        f"LRT size iid={iid.rate:.4f} ar1={ar.rate:.4f} (band [0.035, 0.065]); "
        f"S1 'no change' share={no_change:.3f} (need >= 0.95)",
    )
    assert ok


def test_criterion_2_lan(report):
    seg = Segmentation(1000, (501,))
    sc = Scenario(IID, seg, (0.0, 0.0), (0.0, 1.0), reps=2000, master_seed=2000)
    s = lan_diagnostic(sc)
    mu = _varpi((0.0, 1.0), seg) ** 2
    parts = {
        "null mean": abs(s.null_mean) <= 0.06,
        "alt mean": abs(s.alt_mean - mu) <= 0.06,
        "null var": abs(s.null_var - mu) <= 0.15 * mu,
        "alt var": abs(s.alt_var - mu) <= 0.15 * mu,
        "KS": s.ks_pvalue > 0.01,
        "remainder": max(abs(s.remainder_null), abs(s.remainder_alt)) <= 0.05,
    }
    ok = report(
        2, all(parts.values()),
        f"mu={mu:.3f} null mean={s.null_mean:.4f} var={s.null_var:.4f}; alt mean={s.alt_mean:.4f} "
        f"var={s.alt_var:.4f}; KS p={s.ks_pvalue:.3f}; remainders {s.remainder_null:.2e}/{s.remainder_alt:.2e}"
        + ("" if all(parts.values()) else f"; failing: {[k for k, v in parts.items() if not v]}"),
    )
    assert ok


POWER_CASES = [
    (IID, 200, (101,), (0.0, 1.0)),
    (IID, 200, (101,), (0.0, 2.0)),
    (IID, 200, (101,), (0.0, 3.0)),
    (IID, 200, (51,), (0.0, 4.0)),
    (AR1, 200, (101,), (0.0, 2.5)),
    (AR1, 200, (61, 141), (0.0, 2.0, -1.0)),
    (AR1, 200, (41, 121), (0.0, 1.0, -1.0)),
    (IID, 200, (41, 121), (0.0, 2.0, 2.0)),
    (IID, 400, (201,), (0.0, 3.5)),
    (AR1, 100, (31, 61), (0.0, 1.5, 2.0)),
]


def test_criterion_3_power_formula(report):
    gaps = []
    for i, (spec, n, breaks, beta) in enumerate(POWER_CASES):
        seg = Segmentation(n, breaks)
        sc = Scenario(spec, seg, (0.0,) * len(beta), beta, reps=2000, master_seed=3000 + i)
        theory = theoretical_power(_varpi(beta, seg))
        gaps.append(empirical_size_power(sc).rate - theory)
    worst = float(np.max(np.abs(gaps)))
    ok = report(3, worst <= 0.025, f"max |empirical - theory| over 10 cases = {worst:.4f} (need <= 0.025); "
                f"gaps {np.round(gaps, 4).tolist()}")
    assert ok


BETA_COLUMNS = [
    (0.2, 0.25, 0.5), (0.5, 0.75, 1.0), (0.75, 1.0, 1.5), (0.75, 1.2, 2.0),
    (2.2, 1.5, 2.2), (2.5, 2.0, 3.0), (2.75, 2.2, 3.2), (3.0, 2.5, 3.8),
    (3.5, 3.0, 4.0), (3.5, 3.0, 0.75), (4.0, 3.5, 4.0), (4.7, 4.0, 3.0),
]


def test_criterion_4_power_ordering(report):
    seg = Segmentation(100, (30, 60))
    rates, varpis = [], []
    for beta in BETA_COLUMNS:
        sc = Scenario(AR1, seg, (0.0, 0.0, 0.0), beta, reps=5000, master_seed=4000)
        rates.append(empirical_size_power(sc).rate)
        varpis.append(_varpi(beta, seg))
    rho = float(spearmanr(varpis, rates).statistic)
    top = rates[BETA_COLUMNS.index((4.0, 3.5, 4.0))]
    ok = report(
        4, rho == 1.0 and top >= 0.95,
        f"Spearman(varpi, rate)={rho:.4f} (need 1); rate at (4, 3.5, 4)={top:.4f} (need >= 0.95); "
        f"rates {np.round(rates, 4).tolist()}",
    )
    assert ok


def test_criterion_5_location(report):
    seg = Segmentation(200, (40, 120))
    cfg = DetectionConfig(priors=(40, 120), candidate_halfwidth=10)
    sc = Scenario(AR1, seg, (0.0, 0.0, 0.0), (0.0, 1.0, -1.0), reps=500, master_seed=5000,
                  method="S2", detection=cfg)
    s = location_estimate_mean(sc)
    near = all(abs(r - t) <= 1 for r, t in zip(s.rounded_mean, s.truth))
    ok = report(
        5, near and s.exact_rate >= 0.6,
        f"rounded mean {s.rounded_mean} (mean {tuple(round(m, 2) for m in s.mean)}), truth {s.truth}; "
        f"exact-pair rate={s.exact_rate:.3f} (need >= 0.6); k accuracy={s.k_accuracy:.3f}",
    )
    assert ok


def _single_break(beta2, method, seed, reps=500, detection=None):
    seg = Segmentation(200, (120,))
    return Scenario(AR1, seg, (0.0, 0.0), (0.0, beta2), reps=reps, master_seed=seed, method=method,
                    detection=detection)


S2_SINGLE = DetectionConfig(priors=(120,), candidate_halfwidth=10, known_k=1)


def test_criterion_6_weak_shift(report):
    loc = location_estimate_mean(_single_break(5.0, "S2", 6000, detection=S2_SINGLE))
    weak = empirical_size_power(_single_break(0.5, "S1", 6001)).rate
    null = empirical_size_power(_single_break(0.0, "S1", 6002)).rate
    ok = report(
        6, 118 <= loc.mean[0] <= 123 and weak - null >= 0.05,
        f"S2 mean location at beta2=5: {loc.mean[0]:.2f} (band [118, 123]); "
        f"S1 rate beta2=0.5: {weak:.3f} vs null {null:.3f} (need excess >= 0.05)",
    )
    assert ok


def test_criterion_7_cusum(report):
    null = empirical_size_power(_null(IID, 500, 2000, 7000, method="SCUSUM"))
    cusum = location_estimate_mean(_single_break(5.0, "SCUSUM", 7001))
    s2 = location_estimate_mean(_single_break(5.0, "S2", 7001, detection=S2_SINGLE))
    ok = report(
        7, abs(null.rate - 0.05) <= 0.015 and cusum.mean_abs_error[0] > s2.mean_abs_error[0],
        f"SCUSUM null rate={null.rate:.4f} (band 0.05 +- 0.015); mean abs location error "
        f"SCUSUM={cusum.mean_abs_error[0]:.2f} vs S2={s2.mean_abs_error[0]:.2f} "
        f"(means {cusum.mean[0]:.1f} vs {s2.mean[0]:.1f})",
    )
    assert ok


def test_criterion_8_oracles(report):
    rng = np.random.default_rng(8000)
    spec = CharnSpec(trend="expar", rho=(0.5, 0.2, 50.0), vol="exparch", theta=(0.1, 0.0025, 1.0))
    seg = Segmentation(300, (90, 200))
    gamma, beta = np.array([0.3, -0.2, 0.1]), np.array([0.0, 1.5, -2.0])
    x, z0 = simulate_with_init(spec, seg, MeanShiftParams(gamma, beta), GAUSS, seed=8001)

    # brute-force summation of the central statistic
    v = x.values
    prev = np.r_[z0.z[0], v[:-1]]
    trend = (0.5 + 0.2 * prev * np.exp(-50.0 * prev**2)) * prev
    vol = np.sqrt(0.1 + 0.0025 * np.exp(-1.0 * prev**2) * prev**2)
    seg_of = np.searchsorted(np.array(seg.breaks), np.arange(1, 301), side="right")
    eps = (v - trend - gamma[seg_of]) / vol
    brute = -np.sum(beta[seg_of] / vol * -eps) / np.sqrt(300)
    e1 = abs(central_statistic(x, spec, gamma, beta, seg, GAUSS, z0) - brute)

    # Gaussian log-likelihood ratio against its closed form
    shifted = eps - beta[seg_of] / (vol * np.sqrt(300))
    closed = -0.5 * np.sum(shifted**2 - eps**2)
    e2 = abs(loglik_ratio(x, spec, gamma, beta, seg, GAUSS, z0) - closed)

    # segment levels on a constant model
    y = rng.normal(2.0, 1.5, 300)
    from charnbreak import TimeSeries

    got = fit_gamma0(TimeSeries(y), seg, IID)
    e3 = float(np.max(np.abs(got - [y[a:b].mean() for a, b in zip(seg.starts, seg.ends)])))

    # T_n does not depend on the scale of beta
    t1 = test_statistic(x, spec, gamma, beta, seg, GAUSS, init=z0).t_n
    t2 = test_statistic(x, spec, gamma, 7.5 * beta, seg, GAUSS, init=z0).t_n
    e4 = abs(t1 - t2)
    ok = report(
        8, e1 <= 1e-10 and e2 <= 1e-10 and e3 <= 1e-12 and e4 <= 1e-10,
        f"central stat {e1:.1e}, loglik ratio {e2:.1e}, segment levels {e3:.1e}, beta scaling {e4:.1e}",
    )
    assert ok


def test_criterion_9_kde(report):
    resid = np.random.default_rng(9000).normal(size=10_000)
    fam = kde_fit(resid)
    grid = np.linspace(-2.0, 2.0, 401)
    err = float(np.max(np.abs(noise_score(fam, grid) + grid)))
    fisher = fam.fisher
    ok = report(9, 0.8 <= fisher <= 1.2 and err <= 0.2,
                f"I(f_hat)={fisher:.4f} (band [0.8, 1.2]); max |score + x| on [-2, 2]={err:.4f} (need <= 0.2)")
    assert ok


MC_RUNS = [
    ["--kind", "rate", "--method", "s1", "--breaks", "101", "--beta", "0,2", "--reps", "40"],
    ["--kind", "location", "--method", "s2", "--breaks", "40,120", "--beta", "0,1,-1", "--trend", "linear_ar",
     "--rho", "0.5", "--priors", "40,120", "--reps", "40"],
    ["--kind", "lan", "--breaks", "101", "--beta", "0,3", "--reps", "200"],
]


def test_criterion_10_determinism(report, tmp_path, monkeypatch):
    mismatches = []
    for j, args in enumerate(MC_RUNS):
        produced = []
        for run, workers in enumerate((1, 2, 1)):
            d = tmp_path / f"case{j}" / f"run{run}"
            d.mkdir(parents=True)
            monkeypatch.chdir(d)
            assert run_command(["mc", *args, "--seed", "10000", "--workers", str(workers)]) == 0
            produced.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        if not (produced[0] == produced[1] == produced[2]):
            mismatches.append(args[1] + "/" + args[3])
    files = sum(len(p) for p in produced)
    ok = report(10, not mismatches, f"{len(MC_RUNS)} mc scenarios, workers 1/2/1, {files} files per run set; "
                f"mismatches: {mismatches or 'none'}")
    assert ok
