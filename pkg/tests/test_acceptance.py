"""Acceptance suite: one PASS/FAIL line per criterion.

The twin-experiment criteria (1-4) run full 5500-cycle experiments and take
a few hours on one core; they are marked ``slow``.  Run only the fast ones
with ``pytest -m "not slow" tests/test_acceptance.py``.  Running this file as
a script prints every line without pytest.
"""
import functools
import math
import time

import numpy as np
import pytest

from nlenkf import anamorphosis as A
from nlenkf.ensemble import crps, inflate
from nlenkf.harness import ExperimentConfig, run_cycle_experiment, run_scalar_benchmark
from nlenkf.localization import LocalizationSpec, loc_matrix
from nlenkf.model import IntegratorConfig, integrate, make_reference
from nlenkf.scalar_update import rhf_prior

from oracles import oracle_gap
from test_ensemble import crps_integral

REL = 0.20
MASTER_SEED = 0

# (method, obs) -> (published analysis RMSE, loc radius, inflation) at N = 120
TABLES = {
    ("enkf", "linear"): (0.26, 3, 1.05), ("ga-pl", "linear"): (0.26, 3, 1.05),
    ("ga-kde", "linear"): (0.28, 5, 1.10), ("rhf", "linear"): (0.17, 15, 1.0),
    ("irhf", "linear"): (0.17, math.inf, 1.0),
    ("enkf", "logit-normal"): (0.55, 3, 1.05), ("ga-pl", "logit-normal"): (0.61, 3, 1.05),
    ("ga-kde", "logit-normal"): (0.52, 3, 1.05), ("rhf", "logit-normal"): (0.39, 9, 1.0),
    ("irhf", "logit-normal"): (0.38, 15, 1.0),
    ("enkf", "log-normal"): (5.20, 7, 1.0), ("ga-pl", "log-normal"): (0.83, 3, 1.05),
    ("ga-kde", "log-normal"): (0.72, 3, 1.10), ("rhf", "log-normal"): (0.41, 11, 1.0),
    ("irhf", "log-normal"): (0.41, 11, 1.0),
}

# N = 20 settings for RHF / iRHF (not published; chosen by a short pre-sweep,
# see the README).  The N = 200 GA runs reuse the N = 120 optimum.
SMALL_N = {
    ("rhf", "logit-normal"): (7, 1.05), ("irhf", "logit-normal"): (11, 1.05),
    ("rhf", "log-normal"): (9, 1.05), ("irhf", "log-normal"): (11, 1.05),
}

RESULTS = []


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


@functools.lru_cache(maxsize=None)
def run(method, obs, N, d, r):
    cfg = ExperimentConfig(method=method, obs=obs, N=N, loc_radius=float(d), inflation=r,
                           n_cycles=5500, spinup_cycles=500, seed=MASTER_SEED)
    return run_cycle_experiment(cfg)[0]


def within(value, target):
    return (not math.isnan(value)) and abs(value - target) <= REL * target


def _table(obs, methods):
    rows, ok = [], True
    for m in methods:
        target, d, r = TABLES[(m, obs)]
        s = run(m, obs, 120, d, r)
        good = within(s.analysis_rmse, target)
        ok &= good
        rows.append(f"{m} {s.analysis_rmse:.3f} (published {target}, d={d:g}, r={r:g})"
                    f"{'' if good else ' OUT'}")
    return ok, rows


@pytest.mark.slow
def test_criterion_1_linear_table():
    ok, rows = _table("linear", ("enkf", "ga-pl", "ga-kde", "rhf", "irhf"))
    assert report(1, ok, "linear obs, N=120: " + "; ".join(rows))


@pytest.mark.slow
def test_criterion_2_logit_table():
    ok, rows = _table("logit-normal", ("enkf", "ga-pl", "ga-kde", "rhf", "irhf"))
    a = {m: run(m, "logit-normal", 120, *TABLES[(m, "logit-normal")][1:]).analysis_rmse
         for m in ("enkf", "ga-pl", "ga-kde", "rhf", "irhf")}
    order = max(a["rhf"], a["irhf"]) < a["ga-kde"] < a["enkf"] < a["ga-pl"]
    assert report(2, ok and order, "logit-normal obs, N=120: " + "; ".join(rows)
                  + f"; ordering RHF/iRHF < GA-KDE < EnKF < GA-PL {'holds' if order else 'violated'}")


@pytest.mark.slow
def test_criterion_3_lognormal_table():
    _, d, r = TABLES[("enkf", "log-normal")]
    e = run("enkf", "log-normal", 120, d, r)
    enkf_fails = e.diverged or (e.analysis_spread < 1e-6 and e.analysis_rmse > 4)
    ok, rows = _table("log-normal", ("ga-pl", "ga-kde", "rhf", "irhf"))
    detail = (f"log-normal obs, N=120: enkf rmse {e.analysis_rmse:.3f} spread "
              f"{e.analysis_spread:.2e} diverged={e.diverged} "
              f"({'fails as expected' if enkf_fails else 'DID NOT FAIL'}); " + "; ".join(rows))
    assert report(3, ok and enkf_fails, detail)


@pytest.mark.slow
def test_criterion_4_small_ensemble_gap():
    parts, ok = [], True
    for obs, gap in (("log-normal", 0.15), ("logit-normal", 0.05)):
        a = {m: run(m, obs, 20, *SMALL_N[(m, obs)]).analysis_rmse for m in ("rhf", "irhf")}
        rel = a["rhf"] / a["irhf"] - 1
        good = rel >= gap
        ga = {m: run(m, obs, 200, *TABLES[(m, obs)][1:]) for m in ("ga-kde", "ga-pl")}
        beats = all(s.diverged or a["irhf"] < s.analysis_rmse for s in ga.values())
        ok &= good and beats
        parts.append(f"{obs}: RHF20 {a['rhf']:.3f} vs iRHF20 {a['irhf']:.3f} "
                     f"(+{100 * rel:.1f}%, need >= {100 * gap:.0f}%); "
                     + ", ".join(f"{m}200 {s.analysis_rmse:.3f}" for m, s in ga.items())
                     + f" ({'iRHF20 better' if beats else 'iRHF20 NOT better'})")
    assert report(4, ok, "; ".join(parts))


def test_criterion_5_scalar_benchmark():
    t0 = time.perf_counter()
    b = run_scalar_benchmark((20, 80), trials=100, seed=MASTER_SEED, filters=("rhf", "irhf"))
    wall = time.perf_counter() - t0
    frac = np.mean(b.errors[("irhf", 20)] <= b.errors[("rhf", 20)])
    r80 = np.median(b.errors[("rhf", 80)])
    i20 = np.median(b.errors[("irhf", 20)])
    ok = frac >= 0.8 and r80 > i20 and wall < 600
    assert report(5, ok, f"iRHF<=RHF at N=20 in {100 * frac:.1f}% of cells (need >= 80%); "
                  f"grid-median RHF80 {r80:.4f} vs iRHF20 {i20:.4f}; {wall:.0f} s")


def test_criterion_6_quadrature_oracle():
    worst = {}
    for kind in ("linear", "logit-normal", "log-normal"):
        worst[kind] = max(oracle_gap(s, kind, f) for s in range(200) for f in ("rhf", "irhf"))
    ok = max(worst.values()) <= 1e-8
    assert report(6, ok, "max |closed form - quadrature| over 200 cases x 2 filters: "
                  + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_7_linear_gaussian_convergence():
    Ns = (20, 40, 80, 160)
    b = run_scalar_benchmark(Ns, y_grid=[1.0], gamma_grid=[1.0], trials=100, seed=MASTER_SEED)
    parts, ok = [], True
    for f in ("rhf", "irhf"):
        e = [float(b.errors[(f, n)][0, 0]) for n in Ns]
        mono = all(x > y for x, y in zip(e, e[1:]))
        ok &= mono
        parts.append(f"{f} " + " > ".join(f"{x:.4f}" for x in e)
                     + ("" if mono else " (not monotone)"))
    assert report(7, ok, "median max-abs error at (y, gamma)=(1, 1), N=20,40,80,160: "
                  + "; ".join(parts))


def test_criterion_8_invariants():
    r = np.random.default_rng(8)
    checks = {}
    # RHF mass placement
    z = r.normal(size=30)
    F = rhf_prior(z)
    zs = np.sort(z)
    masses = np.r_[F.cdf(zs[:1]), F.piece_masses(), 1 - F.cdf(zs[-1:])]
    checks["rhf mass"] = np.max(np.abs(masses - 1 / 31)) < 1e-12
    # anamorphosis round trips
    worst = 0.0
    for domain, x in (("unbounded", 3 * r.normal(size=60)), ("unit", r.beta(2, 5, 60)),
                      ("positive", r.lognormal(0, 1, 60))):
        for build in (A.build_pl_map, A.build_kde_map):
            m = build(x, domain)
            v = r.uniform(x.min(), x.max(), 500)
            worst = max(worst, np.max(np.abs(m.inverse(m.forward(v)) - v) / (1 + np.abs(v))))
    checks["anamorphosis round trip"] = worst < 1e-8
    # CRPS
    gaps = [abs(crps(s, t) - crps_integral(s, t))
            for s, t in ((r.normal(size=n), r.normal()) for n in range(1, 30))]
    checks["crps energy = integral"] = max(gaps) < 1e-8
    # inflation
    E = 5 + 3 * r.normal(size=(20, 40))
    checks["inflate mean"] = np.max(np.abs(inflate(E, 1.3).mean(0) - E.mean(0))) < 1e-12
    # localization
    good = True
    for spec in (LocalizationSpec(3.0), LocalizationSpec(7.0, chordal=True)):
        L = loc_matrix(spec)
        good &= np.array_equal(L, L.T) and np.all(np.diag(L) == 1)
        good &= all(np.array_equal(np.roll(L[0], k), L[k]) for k in range(40))
    checks["localization structure"] = good
    # RK4 order
    x = make_reference(7, n_saves=200)[::20][:10]
    ratios = []
    for xi in x:
        ref = integrate(xi, IntegratorConfig(substeps=400))
        e1 = np.max(np.abs(integrate(xi, IntegratorConfig(substeps=5)) - ref))
        e2 = np.max(np.abs(integrate(xi, IntegratorConfig(substeps=10)) - ref))
        ratios.append(e1 / e2)
    checks["rk4 order 4"] = 12 < np.median(ratios) < 20
    assert report(8, all(checks.values()), ", ".join(
        f"{k} {'ok' if v else 'BROKEN'}" for k, v in checks.items()))


def test_criterion_9_determinism(tmp_path):
    from nlenkf.cli import main
    args = ["sweep", "--methods", "enkf,rhf,ga-pl", "--ns", "30", "--radii", "3,inf",
            "--inflations", "1.05,1.1", "--cycles", "60", "--spinup", "10", "--seed", "5"]
    codes = [main(args + ["--out", str(tmp_path / f"w{w}"), "--workers", str(w)])
             for w in (1, 1, 3)]
    same = all((tmp_path / "w1" / f).read_bytes() == (tmp_path / "w3" / f).read_bytes()
               for f in ("summary.csv", "table.txt"))
    run_args = ["run", "--method", "irhf", "--n", "20", "--cycles", "40", "--spinup", "5",
                "--loc", "5"]
    main(run_args + ["--out", str(tmp_path / "r1")])
    main(run_args + ["--out", str(tmp_path / "r2"), "--workers", "2"])
    same &= all((tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes()
                for f in ("cycles.csv", "summary.csv"))
    ok = codes == [0, 0, 0] and same
    assert report(9, ok, "sweep with 1 and 3 workers and repeated single runs give "
                  f"{'byte-identical' if same else 'DIFFERENT'} CSV output")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            pass
    sys.exit(0 if all(line.startswith("PASS") for line in RESULTS) else 1)
