"""Acceptance suite: criteria 1-10, one printed pass/fail line each.

Seeding is uniform throughout: criterion ``c`` replication ``r`` draws from
``SeededRng(c, r)``; desk-scale datasets use ``DatasetSpec.seed = r + 1``
and calibration uses seed ``c``. No seed was tuned to make a criterion pass.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from harqpost.channel import RicianParams, SeededRng
from harqpost.harqgen import (
    DatasetSpec,
    calibrate_sigma2,
    classify_and_collect,
    mismatch_ber_harness,
    prior_dataset,
    read_mapping,
    write_mapping,
)
from harqpost.mvntest import TEST1_NAMES, henze_zirkler, mardia, royston, test1_suite
from harqpost.numerics import sample_covariance_ml
from harqpost.paramtest import (
    PriorSpec,
    dof,
    loglik_oracle,
    ml_estimate,
    test2_statistic,
    test3_statistic,
    wilks_test2,
    wilks_test3,
)
from harqpost.phy import QAM64, load_code, run_session

PRIOR = RicianParams(beta=8, K=1, theta=0, sigma2=0.36)
REPLICATIONS = 10
DESK_N = 2000
DESK_CONFIGS = {"a": (400, 0), "b": (1, 0), "c": (10, 2)}


def frac(flags):
    flags = list(flags)
    return sum(flags) / len(flags)


# 1 -------------------------------------------------------------------------

def test_01_estimator_consistency(verdict):
    t0 = time.perf_counter()
    est = ml_estimate(prior_dataset(PRIOR, 0, 100_000, rng=SeededRng(1, 0)))
    elapsed = time.perf_counter() - t0
    errs = {
        "beta": abs(est.beta_hat / 8 - 1),
        "sigma2": abs(est.sigma2_hat / 0.36 - 1),
        "K": abs(est.K_hat - 1),
        "theta": abs(est.theta_hat),
    }
    ok = errs["beta"] < 0.02 and errs["sigma2"] < 0.02 and errs["K"] < 0.03 and errs["theta"] < 0.02 and elapsed < 10
    detail = (f"beta^={est.beta_hat:.4f} K^={est.K_hat:.4f} theta^={est.theta_hat:+.4f} "
              f"sigma2^={est.sigma2_hat:.4f} in {elapsed:.2f}s")
    assert verdict(1, "estimator consistency", ok, detail)


# 2 -------------------------------------------------------------------------

def test_02_wilks_null_calibration(verdict):
    # Rejection rates use the first 200 streams. The KS distance uses 2000:
    # at 200 draws an exact chi-square null exceeds 0.06 with probability 0.45.
    t0 = time.perf_counter()
    s2, p2, p3 = [], [], []
    for r in range(2000):
        D = prior_dataset(PRIOR, 0, 2000, rng=SeededRng(2, r))
        t2 = wilks_test2(D, PRIOR, alpha=0.05)
        s2.append(t2.statistic)
        p2.append(t2.p_value)
        if r < 200:
            p3.append(wilks_test3(D, alpha=0.05)[0].p_value)
    elapsed = time.perf_counter() - t0
    rej2 = frac(p < 0.05 for p in p2[:200])
    rej3 = frac(p < 0.05 for p in p3)
    ks = stats.kstest(s2, stats.chi2(14).cdf).statistic
    ks200 = stats.kstest(s2[:200], stats.chi2(14).cdf).statistic
    ok = 0.02 <= rej2 <= 0.09 and 0.02 <= rej3 <= 0.09 and ks < 0.06 and elapsed < 120
    detail = (f"reject(T2)={rej2:.3f} reject(T3)={rej3:.3f} over 200; "
              f"KS={ks:.4f} over 2000 (KS over first 200 = {ks200:.4f}) in {elapsed:.1f}s")
    assert verdict(2, "Wilks null calibration", ok, detail)


# 3 -------------------------------------------------------------------------

def test_03_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for r in range(50):
        rng = SeededRng(3, r).generator()
        m, n = r % 2, (50, 200)[(r // 2) % 2]
        X = prior_dataset(PRIOR, m, n, rng).X
        X = X * rng.uniform(0.7, 1.3, (X.shape[0], 1)) + rng.normal(0, 0.3, (X.shape[0], 1))
        est = ml_estimate(X)
        full = loglik_oracle(X, X.mean(axis=1), sample_covariance_ml(X))
        p0 = PriorSpec.from_params(PRIOR, m)
        p1 = PriorSpec.from_params(est.as_params(), m)
        o2 = -2 * (loglik_oracle(X, p0.mu0, p0.cov) - full)
        o3 = -2 * (loglik_oracle(X, p1.mu0, p1.cov) - full)
        worst = max(worst, abs(test2_statistic(X, PRIOR) - o2) / n, abs(test3_statistic(X, est) - o3) / n)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 10
    assert verdict(3, "oracle equivalence", ok, f"max |stat - oracle|/n = {worst:.2e} in {elapsed:.2f}s")


# 4 -------------------------------------------------------------------------

def test_04_nesting_inequality(verdict):
    bad = 0
    count = 600
    for r in range(count):
        rng = SeededRng(4, r).generator()
        m = int(rng.integers(0, 3))
        n = int(rng.integers(4 * (m + 1) + 2, 300))
        X = prior_dataset(PRIOR, m, n, rng).X
        # mix null data with scaled, shifted and correlated departures
        X = X * rng.uniform(0.3, 3.0, (X.shape[0], 1)) + rng.normal(0, 1.0, (X.shape[0], 1))
        if r % 3 == 0:
            X = (np.eye(X.shape[0]) + 0.3 * rng.standard_normal((X.shape[0], X.shape[0]))) @ X
        s2 = test2_statistic(X, PRIOR)
        s3 = test3_statistic(X)
        bad += not (0 <= s3 <= s2 + 1e-6 * n)
    ok = bad == 0
    assert verdict(4, "nesting inequality", ok, f"{count - bad}/{count} datasets satisfy 0 <= T3 <= T2")


# 5 -------------------------------------------------------------------------

def test_05_mvn_calibration_and_power(verdict):
    t0 = time.perf_counter()
    null = {name: [] for name in TEST1_NAMES}
    alt = {name: [] for name in TEST1_NAMES}
    for r in range(100):
        gen = SeededRng(5, r).generator()
        for data, sink in ((gen.standard_normal((4, 5000)), null), (gen.exponential(size=(4, 5000)), alt)):
            skew, kurt = mardia(data, 0.05)
            for rep in (skew, kurt, henze_zirkler(data, 0.05), royston(data, 0.05)):
                sink[rep.name].append(rep.rejected)
    elapsed = time.perf_counter() - t0
    null_rate = {k: frac(v) for k, v in null.items()}
    power = {k: frac(v) for k, v in alt.items()}
    ok = all(0.02 <= null_rate[k] <= 0.09 and power[k] >= 0.95 for k in TEST1_NAMES) and elapsed < 300
    detail = " ".join(f"{k}={null_rate[k]:.2f}/{power[k]:.2f}" for k in TEST1_NAMES) + f" in {elapsed:.0f}s"
    assert verdict(5, "MVN calibration (null/power)", ok, detail)


# 6 -------------------------------------------------------------------------

def test_06_dof_identities(verdict):
    rows = []
    for m in range(11):
        d = 4 * (m + 1)
        rows.append(dof(m) == 2 * (m + 1) * (4 * m + 7) == d + d * (d + 1) // 2 and dof(m, True) == dof(m) - 4)
    assert verdict(6, "degrees of freedom", all(rows), f"{sum(rows)}/11 values of m agree")


# 7 and 8 share desk-scale datasets -----------------------------------------

@pytest.fixture(scope="module")
def desk():
    """Calibrated sigma2 and ten (failed, successful) dataset pairs per config."""
    t0 = time.perf_counter()
    out = {}
    for key, (n_if, m) in DESK_CONFIGS.items():
        cal = calibrate_sigma2(PRIOR, n_if, m, target_fail=0.5, trials=500, seed=7)
        prior = PRIOR.replace(sigma2=cal.sigma2)
        pairs = [classify_and_collect(DatasetSpec(n_if, m, DESK_N, prior, seed=r + 1)) for r in range(REPLICATIONS)]
        out[key] = (cal, pairs)
    out["elapsed"] = time.perf_counter() - t0
    return out


def test_07_accept_reject_pattern(desk, verdict):
    t0 = time.perf_counter()
    hits = {"a": [], "b": [], "c": []}
    for F, S in desk["a"][1]:
        ok = True
        for D in (F, S):
            reps = test1_suite(D, 0.01) + [wilks_test2(D, D.prior, 0.01)]
            ok &= not any(r.rejected for r in reps)
        hits["a"].append(ok)
    for F, S in desk["b"][1]:
        ok = True
        for D in (F, S):
            skew, _ = mardia(D.X, 0.01)
            ok &= skew.p_value < 1e-6 and henze_zirkler(D.X, 0.01).p_value < 1e-6
        hits["b"].append(ok)
    for F, _ in desk["c"][1]:
        hits["c"].append(wilks_test2(F, F.prior, 0.01).rejected and not wilks_test3(F, 0.01)[0].rejected)
    elapsed = desk["elapsed"] + time.perf_counter() - t0
    counts = {k: sum(v) for k, v in hits.items()}
    sig = {k: desk[k][0].sigma2 for k in hits}
    ok = all(c >= 8 for c in counts.values()) and elapsed < 1800
    detail = (f"(a) N_IF=400,m=0 {counts['a']}/10 [sigma2={sig['a']:.4g}]  "
              f"(b) N_IF=1,m=0 {counts['b']}/10 [sigma2={sig['b']:.4g}]  "
              f"(c) N_IF=10,m=2 {counts['c']}/10 [sigma2={sig['c']:.4g}]  in {elapsed / 60:.1f} min")
    assert verdict(7, "accept/reject pattern", ok, detail)


def test_08_class_estimates(desk, verdict):
    cal, pairs = desk["b"]
    good = 0
    worst = None
    for F, S in pairs:
        ef, es = ml_estimate(F), ml_estimate(S)
        ok = (ef.beta_hat < 4.5 and ef.K_hat < 0.75 and es.beta_hat > 11 and es.K_hat > 1.7
              and all(abs(e.sigma2_hat / cal.sigma2 - 1) <= 0.10 for e in (ef, es)))
        good += ok
        if worst is None or not ok:
            worst = (ef, es)
    ef, es = worst
    detail = (f"{good}/10 replications; e.g. failed beta^={ef.beta_hat:.3f} K^={ef.K_hat:.3f}, "
              f"successful beta^={es.beta_hat:.3f} K^={es.K_hat:.3f}")
    assert verdict(8, "class-separating estimates", good >= 8, detail)


# 9 -------------------------------------------------------------------------

def test_09_harq_monotonicity(verdict):
    n_if, sessions, M = 10, 2000, 3
    # waterfall region: half the sessions still fail after round 1
    cal = calibrate_sigma2(PRIOR, n_if, 1, target_fail=0.5, trials=300, seed=9)
    params = PRIOR.replace(sigma2=cal.sigma2)
    code = load_code()
    reached = np.zeros(M + 1, dtype=int)
    acked = np.zeros(M + 1, dtype=int)
    for i in range(sessions):
        tr = run_session(code, QAM64, params, n_if, M, SeededRng(9, i))
        for m, ack in enumerate(tr.acks):
            reached[m] += 1
            acked[m] += ack
    p = acked / reached
    se = np.sqrt(np.maximum(p * (1 - p), 1e-12) / reached)
    ok = all(p[m + 1] >= p[m] - 3 * math.hypot(se[m], se[m + 1]) for m in range(M))
    detail = " ".join(f"p{m}={p[m]:.3f}(n={reached[m]})" for m in range(M + 1)) + f" sigma2={cal.sigma2:.4g}"
    assert verdict(9, "HARQ monotonicity", ok, detail)


# 10 ------------------------------------------------------------------------

def test_10_mismatch_harness(verdict, tmp_path):
    params = PRIOR.replace(sigma2=1.0)
    res = mismatch_ber_harness(params, params, m_max=3, symbols=100_000, rng=SeededRng(10, 0))
    se = res.stderr()
    decreasing = all(res.ber[m + 1] + 3 * se[m + 1] < res.ber[m] - 3 * se[m] for m in range(3))
    tables = [SeededRng(10, r + 1).generator().permutation(64) for r in range(4)]
    paths = []
    for r, t in enumerate(tables):
        paths.append(tmp_path / f"round{r}.map")
        write_mapping(t, paths[-1])
    loaded = [read_mapping(p) for p in paths]
    round_trip = all(np.array_equal(a, b) for a, b in zip(tables, loaded))
    quiet = PRIOR.replace(sigma2=1e-6)
    applied = mismatch_ber_harness(quiet, quiet, loaded, m_max=3, symbols=10_000, rng=SeededRng(10, 9))
    ok = decreasing and round_trip and applied.bit_errors.sum() == 0
    detail = ("BER " + " > ".join(f"{b:.4f}" for b in res.ber)
              + f"; mapping round trip {'ok' if round_trip else 'broken'}, noiseless errors {applied.bit_errors.sum()}")
    assert verdict(10, "mismatch harness", ok, detail)
