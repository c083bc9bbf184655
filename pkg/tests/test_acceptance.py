"""Acceptance checks 1-12, one test per criterion.

Each test records ``PASS``/``FAIL``/``SKIP`` with the measured numbers; the
terminal summary prints one line per criterion. Tolerances are the stated
ones; nothing here is tuned to the outcome. Studies run at desk scale.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from jeffmix import (
    ComponentFamily,
    IntegratorConfig,
    McmcConfig,
    MixtureParams,
    Scenario,
    analytic_fim_gaussian_single,
    brute_force_log_likelihood,
    fim,
    from_reparam,
    log_delta_conditional,
    log_jeffreys,
    log_jeffreys_weights,
    log_likelihood,
    simulate,
    to_reparam,
    weights_fim,
)
from jeffmix.datasets import load_dataset
from jeffmix.experiments import (
    DESK_MCMC,
    THREE_COMPONENT_MODEL,
    StudyConfig,
    bayes_factor,
    dataset_analysis,
    integrator_benchmark,
    run_study,
)

GK = IntegratorConfig("gk")
R550 = IntegratorConfig("riemann", points=550)

pytestmark = pytest.mark.slow

# reference posterior-mean weights of the two dominant components
TABLE_TOP_TWO = {"galaxy": (0.437, 0.390), "enzyme": (0.606, 0.343), "acidity": (0.601, 0.378)}


@pytest.fixture
def record(request):
    def _record(key, ok, detail):
        request.config.acceptance_results[key] = ("PASS" if ok else "FAIL", detail)
        return ok

    return _record


@pytest.fixture
def skip_with(request):
    def _skip(key, reason):
        request.config.acceptance_results[key] = ("SKIP", reason)
        pytest.skip(reason)

    return _skip


def test_01_single_gaussian_fim(record):
    t0 = time.perf_counter()
    worst_gk = worst_r = 0.0
    for mu, sigma in [(0.0, 1.0), (3.0, 0.5), (-2.0, 4.0)]:
        ref = analytic_fim_gaussian_single(mu, sigma).entries
        m = MixtureParams([1.0], [mu], [sigma])
        diag = np.diag(ref)
        for cfg, slot in ((GK, "gk"), (R550, "r")):
            F = fim(m, Scenario.all(1), cfg).entries
            err = max(np.max(np.abs(np.diag(F) - diag) / diag), abs(F[0, 1]) / diag.max())
            if slot == "gk":
                worst_gk = max(worst_gk, err)
            else:
                worst_r = max(worst_r, err)
    elapsed = time.perf_counter() - t0
    ok = worst_gk < 1e-6 and worst_r < 1e-4 and elapsed < 1.0
    assert record("1", ok, f"gk rel err {worst_gk:.1e} (<1e-6), riemann-550 {worst_r:.1e} (<1e-4), {elapsed:.2f}s (<1s)")


def test_02_allocation_expansion(record):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    for k in (1, 2, 3):
        for n in range(1, 9):
            for _ in range(3):
                m = MixtureParams(rng.dirichlet(np.ones(k)), rng.normal(0, 3, k), rng.uniform(0.3, 3, k))
                x = rng.normal(0, 4, n)
                worst = max(worst, abs(log_likelihood(x, m) - brute_force_log_likelihood(x, m)))
                cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 10
    assert record("2", ok, f"{cases} cases, max |diff| {worst:.1e} (<1e-10), {elapsed:.1f}s (<10s)")


def _simplex_grid(k, n=50, margin=1e-3):
    if k == 2:
        t = np.linspace(margin, 1 - margin, n)
        return np.column_stack([t, 1 - t])
    m = 11
    pts = [(i, j, m - i - j) for i in range(1, m) for j in range(1, m) if m - i - j >= 1]
    return margin + (1 - 3 * margin) * np.array(pts[:n], float) / m


def test_03_weights_bound_and_flat_limit(record):
    models = [([-1.0, 1.0], [1.0, 1.0]), ([0.0, 2.0], [0.5, 2.0]), ([-2.0, 0.0, 3.0], [1.0, 0.5, 2.0]), ([0.0, 1.0, 4.0], [1.0, 1.0, 1.0])]
    worst = 0.0
    for locs, scales in models:
        for p in _simplex_grid(len(locs)):
            det = np.linalg.det(weights_fim(p, locs, scales, cfg=GK).entries)
            worst = max(worst, det * np.prod(p))
    spreads = []
    for locs, scales in (([0.0, 1e-3], [1.0, 1.0]), ([0.0, 1e-3, 0.0], [1.0, 1.0, 1.001])):
        vals = [log_jeffreys_weights(p, locs, scales, cfg=GK).value for p in _simplex_grid(len(locs), 20, 0.02)]
        spreads.append(math.exp(np.ptp(vals)) - 1)
    ok = worst <= 1 + 1e-9 and max(spreads) < 0.01
    assert record("3", ok, f"max det*prod(p) {worst:.6f} (<=1); identical-limit variation {max(spreads):.2%} (<1%)")


def test_04_translation_and_scale_laws(record):
    shift = 0.0
    for k in (2, 3):
        m = MixtureParams(np.arange(1, k + 1) / np.arange(1, k + 1).sum(), np.linspace(-2, 3, k), np.linspace(0.8, 1.6, k))
        a = log_jeffreys(m, Scenario.all(k), GK).value
        b = log_jeffreys(MixtureParams(m.weights, m.locations + 5.0, m.scales), Scenario.all(k), GK).value
        shift = max(shift, abs(a - b))
    slope_errs = {}
    for k in (2, 3):
        m = MixtureParams(np.full(k, 1.0 / k), np.linspace(0, 2.0 * (k - 1), k), np.linspace(1.0, 1.5, k))
        r = to_reparam(m)
        a = log_jeffreys(m, Scenario.all(k), GK, chart="reference").value
        for c in (2.0, 5.0):
            scaled = from_reparam(type(r)(r.mu, c * r.tau, r.deltas, r.ratios, r.p, r.q), k)
            b = log_jeffreys(scaled, Scenario.all(k), GK, chart="reference").value
            slope = (b - a) / math.log(c)
            slope_errs[(k, c)] = (slope, abs(slope + k))  # -(d/2) with d = 2k
    bad = {key: v for key, v in slope_errs.items() if v[1] >= 1e-3}
    ok = shift < 1e-5 and not bad
    detail = f"shift |diff| {shift:.1e} (<1e-5); tau slopes " + ", ".join(
        f"k={k},c={c:g}: {s:.4f} vs {-k}" for (k, c), (s, _) in sorted(slope_errs.items())
    )
    assert record("4", ok, detail)


def test_05_delta_prior(record):
    sym = max(abs(log_delta_conditional(d, 0.5, 1.0, 1.0) - log_delta_conditional(-d, 0.5, 1.0, 1.0)) for d in (0.5, 2.0, 7.0, 20.0))
    far = [log_delta_conditional(d, 0.5, 1.0, 1.0) for d in np.linspace(40, 50, 6)]
    flat = float(np.ptp(far))
    ok = sym < 1e-5 and flat < 1e-3
    assert record("5", ok, f"asymmetry {sym:.1e} (<1e-5); variation on [40, 50] {flat:.1e} (<1e-3)")


def test_06_integrator_benchmark(record):
    t0 = time.perf_counter()
    a = fim(THREE_COMPONENT_MODEL, Scenario.all(3), R550).entries
    b = fim(THREE_COMPONENT_MODEL, Scenario.all(3), GK).entries
    rel = float(np.max(np.abs(a - b) / np.abs(b)))
    cfg = StudyConfig("integrators", replications=100, options={"mc_sizes": [500, 1000, 1500], "riemann_knots": [550], "sigma_sweep": [1.0]})
    res = integrator_benchmark(THREE_COMPONENT_MODEL, cfg)
    sds = [res.summary["mc_sd"][str(s)] for s in (500, 1000, 1500)]
    elapsed = time.perf_counter() - t0
    ok = rel < 1e-3 and sds[0] >= sds[1] >= sds[2] and elapsed < 300
    sd_txt = ", ".join(f"{v:.4f}" for v in sds)
    assert record("6", ok, f"max rel element err {rel:.1e} (<1e-3); MC SD at 500/1000/1500: {sd_txt}; {elapsed:.0f}s (<300s)")


def test_07_null_overfit(record):
    t0 = time.perf_counter()
    res = run_study(StudyConfig("overfit-null", n=(100, 1000), replications=5, mcmc=DESK_MCMC, seed=7), write=False)
    elapsed = time.perf_counter() - t0
    small, big = res.summary["100"]["median"], res.summary["1000"]["median"]
    ok = big >= 0.9 and big > small and elapsed < 600
    assert record("7", ok, f"median max weight n=100: {small:.3f}, n=1000: {big:.3f} (>=0.9, increasing); {elapsed:.0f}s (<600s)")


def test_08_overfit_k(record):
    t0 = time.perf_counter()
    res = run_study(StudyConfig("overfit-k", n=(1000,), replications=3, k=(2, 4), mcmc=DESK_MCMC, seed=8), write=False)
    elapsed = time.perf_counter() - t0
    w2 = res.summary["n=1000,k=2"]["median_weights"]
    tail4 = res.summary["n=1000,k=4"]["median_sum_two_smallest"]
    per_rep = [sum(r["weights"][-2:]) for r in res.records if r["k"] == 4]
    ok = all(abs(w - 0.5) <= 0.05 for w in w2) and tail4 < 0.05 and elapsed < 1200
    detail = (
        f"k=2 weights {w2[0]:.3f}/{w2[1]:.3f} (0.5+-0.05); k=4 two smallest sum {tail4:.3f} (<0.05; "
        f"per replication {', '.join(f'{v:.3f}' for v in per_rep)}); {elapsed:.0f}s (<1200s)"
    )
    assert record("8", ok, detail)


def _analyse(name, k=10, iterations=50_000, burn_in=10_000):
    data = load_dataset(name)
    t0 = time.perf_counter()
    res = dataset_analysis(data, k=k, mcmc=McmcConfig(iterations=iterations, burn_in=burn_in, seed=9), name=name)
    return res, time.perf_counter() - t0


def test_09_galaxy(record):
    res, elapsed = _analyse("galaxy")
    s = res.summary
    top = s.weights[:2]
    want = TABLE_TOP_TWO["galaxy"]
    ok = s.n_detected == 5 and all(abs(a - b) <= 0.10 for a, b in zip(top, want)) and elapsed < 1800
    detail = (
        f"galaxy: {s.n_detected} weights > 0.02 (want 5); top two {top[0]:.3f}/{top[1]:.3f} "
        f"(want {want[0]}/{want[1]} +-0.10); {elapsed:.0f}s (<1800s)"
    )
    assert record("9", ok, detail)


@pytest.mark.parametrize("name", ["enzyme", "acidity"])
def test_09_other_datasets(name, record, skip_with):
    key = f"9.{name}"
    try:
        load_dataset(name)
    except FileNotFoundError:
        skip_with(key, f"{name} data not available (set JEFFMIX_DATA to a directory holding {name}.csv)")
    res, _ = _analyse(name)
    top = res.summary.weights[:2]
    want = TABLE_TOP_TWO[name]
    ok = all(abs(a - b) <= 0.10 for a, b in zip(top, want))
    assert record(key, ok, f"{name}: top two {top[0]:.3f}/{top[1]:.3f} (want {want[0]}/{want[1]} +-0.10)")


def test_10_improperness(record):
    t0 = time.perf_counter()
    cfg = StudyConfig(
        "improperness", n=(10,), k=(2,), replications=10, seed=10,
        mcmc=McmcConfig(iterations=7_000, burn_in=2_000),
        options={"scenarios": {"close": 1.0}},
    )
    res = run_study(cfg, write=False)
    elapsed = time.perf_counter() - t0
    s = {mode: res.summary[f"{mode}|close|k=2|n=10"] for mode in ("full-jeffreys", "hierarchical", "cond-sigma-proper")}
    ok = (
        s["full-jeffreys"]["stuck_or_diverged"] > 0
        and s["hierarchical"]["stuck_or_diverged"] == 0
        and s["cond-sigma-proper"]["diverged"] > 0
        and s["cond-sigma-proper"]["stuck"] <= 0.1
        and elapsed < 600
    )
    detail = "; ".join(f"{m}: stuck {v['stuck']:.1f}, diverged {v['diverged']:.1f}" for m, v in s.items()) + f"; {elapsed:.0f}s (<600s)"
    assert record("10", ok, detail)


def test_11_bayes_factor_simulated(record):
    gumbel = ComponentFamily.gumbel()
    truth = MixtureParams([0.6, 0.4], [0.0, 6.0], [1.0, 1.5], gumbel)
    x = simulate(300, truth, 11).values
    res = bayes_factor(x, (2, gumbel), (2, "gaussian"), McmcConfig(iterations=8_000, burn_in=2_000), seed=11)
    ok = res.log_bf > 0
    assert record("11", ok, f"simulated Gumbel mixture: log BF {res.log_bf:.2f} +- {res.se_log_bf:.2f} (BF > 1)")


def test_11_bayes_factor_network(record, skip_with):
    try:
        data = load_dataset("network")
    except FileNotFoundError:
        skip_with("11.network", "network data not available (set JEFFMIX_DATA to a directory holding network.csv)")
    res = bayes_factor(data, (10, "gumbel"), (10, "gaussian"), McmcConfig(iterations=50_000, burn_in=10_000), seed=11)
    assert record("11.network", res.log_bf > 0, f"network: log BF {res.log_bf:.2f} +- {res.se_log_bf:.2f} (BF > 1)")


def test_12_determinism(record, tmp_path):
    small = McmcConfig(iterations=600, burn_in=200)
    configs = [
        StudyConfig("overfit-null", n=(40,), replications=2, mcmc=small, seed=12),
        StudyConfig("overfit-k", n=(40,), replications=1, k=(2, 3), mcmc=small, seed=12, options={"grid": [-6, 6, 41]}),
        StudyConfig("improperness", n=(10,), k=(2,), replications=1, mcmc=small, seed=12, options={"scenarios": {"close": 1.0}}),
        StudyConfig("integrators", replications=3, seed=12, options={"mc_sizes": [500], "riemann_knots": [100], "sigma_sweep": [1.0]}),
        StudyConfig("weights-shape", options={"points": 9}),
    ]
    mismatched = []
    for cfg in configs:
        outs = []
        for run in ("a", "b"):
            d = tmp_path / f"{cfg.kind}-{run}"
            run_study(replace(cfg, out_dir=str(d)))
            outs.append({ext: (d / f"{cfg.kind}.{ext}").read_bytes() for ext in ("json", "csv")})
        if outs[0] != outs[1]:
            mismatched.append(cfg.kind)
    ok = not mismatched
    assert record("12", ok, f"{len(configs)} study kinds rerun; byte-identical JSON/CSV" + (f"; differing: {mismatched}" if mismatched else ""))

