import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jeffmix import ConfigError, McmcConfig, MixtureParams, ParameterDomainError
from jeffmix.experiments import (
    PosteriorSummary,
    StudyConfig,
    bayes_factor,
    cell_seed,
    dataset_analysis,
    integrator_benchmark,
    predictive_density,
    run_study,
    weights_prior_shape_study,
)
from jeffmix.mcmc import ChainTrace

TINY = McmcConfig(iterations=600, burn_in=200)


def _trace(w, mu, s):
    w = np.asarray(w, float)
    return ChainTrace(
        weights=w,
        locations=np.asarray(mu, float),
        scales=np.asarray(s, float),
        mu0=None,
        zeta0=None,
        log_post=np.zeros(len(w)),
        acceptance={},
        scale_history=np.ones((1, 1)),
        block_names=(),
    )


def _random_trace(rng, m=200, k=3):
    return _trace(rng.dirichlet(np.ones(k) * 2, m), rng.normal(0, 3, (m, k)), rng.uniform(0.5, 2, (m, k)))


class TestSeeds:
    def test_deterministic_and_distinct(self):
        assert cell_seed(7, 1, 2) == cell_seed(7, 1, 2)
        seeds = {cell_seed(7, a, b) for a in range(20) for b in range(20)}
        assert len(seeds) == 400
        assert cell_seed(7, 1, 2) != cell_seed(8, 1, 2)
        assert 0 <= cell_seed(123, 4) < 2**63


class TestStudyConfig:
    def test_round_trip(self):
        cfg = StudyConfig("overfit-k", n=(50, 200), replications=3, k=(2, 3), mcmc=TINY, seed=9, options={"grid": [-5, 5, 51]})
        again = StudyConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()

    def test_overrides_win(self):
        cfg = StudyConfig.from_dict({"kind": "overfit-null", "seed": 1}, seed=5, threads=2)
        assert cfg.seed == 5 and cfg.threads == 2

    @pytest.mark.parametrize(
        "d, field",
        [
            ({"kind": "nope"}, "kind"),
            ({}, "kind"),
            ({"kind": "overfit-null", "replications": 0}, "replications"),
            ({"kind": "overfit-null", "n": [0]}, "n"),
            ({"kind": "overfit-null", "schema_version": 2}, "schema_version"),
            ({"kind": "overfit-null", "colour": "blue"}, "config"),
            ({"kind": "overfit-null", "mcmc": {"burn_in": "x"}}, "mcmc.burn_in"),
        ],
    )
    def test_errors_name_the_field(self, d, field):
        with pytest.raises(ConfigError) as exc:
            StudyConfig.from_dict(d)
        assert exc.value.field == field


class TestPosteriorSummary:
    @settings(max_examples=20)
    @given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]))
    def test_label_permutation_invariant(self, seed, perm):
        t = _random_trace(np.random.default_rng(seed))
        perm = np.array(perm)
        u = _trace(t.weights[:, perm], t.locations[:, perm], t.scales[:, perm])
        a, b = PosteriorSummary.from_trace(t), PosteriorSummary.from_trace(u)
        assert a.to_dict() == b.to_dict()

    def test_weights_account_for_everything(self):
        s = PosteriorSummary.from_trace(_random_trace(np.random.default_rng(0), k=6))
        assert sum(s.weights) + s.tail_weight == pytest.approx(1.0)
        assert s.weights == sorted(s.weights, reverse=True)

    def test_detection_threshold(self):
        m = 100
        w = np.tile([0.6, 0.385, 0.015], (m, 1))
        s = PosteriorSummary.from_trace(_trace(w, np.tile([0.0, 5.0, 9.0], (m, 1)), np.ones((m, 3))))
        assert s.n_detected == 2 and len(s.components) == 3
        s = PosteriorSummary.from_trace(_trace(np.tile([0.6, 0.395, 0.005], (m, 1)), np.zeros((m, 3)), np.ones((m, 3))))
        assert len(s.components) == 2 and s.tail_weight == pytest.approx(0.005)
        assert "p1" in s.table()

    def test_intervals_contain_means(self):
        s = PosteriorSummary.from_trace(_random_trace(np.random.default_rng(4)))
        for c in s.components:
            for name in ("weight", "mu", "sigma"):
                lo, hi = c[f"{name}_ci"]
                assert lo <= c[f"{name}_mean"] <= hi


class TestPredictive:
    GRID = np.linspace(-20, 20, 2001)

    def test_single_draw_band_collapses(self):
        t = _trace([[0.3, 0.7]], [[-1.0, 2.0]], [[1.0, 0.5]])
        pd = predictive_density(t, self.GRID)
        assert np.array_equal(pd.lower, pd.mean) and np.array_equal(pd.upper, pd.mean)

    @settings(max_examples=15)
    @given(st.integers(0, 2**32 - 1))
    def test_integrates_to_one_and_band_holds_mean(self, seed):
        pd = predictive_density(_random_trace(np.random.default_rng(seed), m=50), self.GRID)
        assert pd.integral() == pytest.approx(1.0, abs=0.01)
        assert np.all(pd.lower <= pd.mean) and np.all(pd.mean <= pd.upper)

    def test_matches_direct_average(self):
        from jeffmix import log_density

        t = _random_trace(np.random.default_rng(2), m=30)
        direct = np.mean([np.exp(log_density(self.GRID, t.params(i))) for i in range(len(t))], axis=0)
        assert np.allclose(predictive_density(t, self.GRID, chunk=7).mean, direct, rtol=1e-10, atol=1e-300)

    def test_empty(self):
        with pytest.raises(ParameterDomainError):
            predictive_density(_trace(np.empty((0, 2)), np.empty((0, 2)), np.empty((0, 2))), self.GRID)

    def test_band_shrinks_with_sample_size(self):
        widths = []
        for n in (40, 400):
            x = np.random.default_rng(n).normal(size=n)
            res = dataset_analysis(x, k=1, mcmc=McmcConfig(iterations=1500, burn_in=500, seed=1), grid=np.linspace(-4, 4, 81))
            widths.append(np.median(res.predictive.upper - res.predictive.lower))
        assert widths[1] < widths[0]


@pytest.fixture(scope="module")
def res():
    return weights_prior_shape_study(points=41)


class TestShapes:
    def test_same_family_is_symmetric(self, res):
        d = np.array(res.records[0]["density"])
        assert res.records[0]["name"] == "normal-normal"
        assert np.allclose(d, d[::-1], rtol=1e-8)
        assert res.summary["normal-normal"]["asymmetry"] < 1e-10

    def test_heavy_tail_breaks_symmetry(self, res):
        s = res.summary
        assert s["normal-t1"]["asymmetry"] > 0.01
        assert s["normal-t1"]["asymmetry"] > s["normal-t5"]["asymmetry"] > s["normal-t30"]["asymmetry"]

    def test_densities_normalised(self, res):
        for r in res.records:
            assert np.mean(r["density"]) == pytest.approx(1.0)


class TestStudies:
    def test_overfit_null_outputs_and_threads(self, tmp_path):
        cfg = StudyConfig("overfit-null", n=(40,), replications=2, mcmc=TINY, out_dir=str(tmp_path / "a"), seed=3)
        res = run_study(cfg)
        assert len(res.records) == 2 and set(res.summary) == {"40"}
        assert 0.5 <= res.summary["40"]["median"] <= 1.0
        for ext in ("json", "csv", "svg"):
            assert (tmp_path / "a" / f"overfit-null.{ext}").stat().st_size > 0
        other = run_study(StudyConfig("overfit-null", n=(40,), replications=2, mcmc=TINY, out_dir=str(tmp_path / "b"), seed=3, threads=2))
        assert (tmp_path / "a" / "overfit-null.json").read_bytes() == (tmp_path / "b" / "overfit-null.json").read_bytes()
        assert other.records == res.records

    def test_overfit_k_shares_data_across_k(self):
        cfg = StudyConfig("overfit-k", n=(60,), replications=1, k=(2, 3), mcmc=TINY, options={"grid": [-6, 6, 61]})
        res = run_study(cfg, write=False)
        assert {"n=60,k=2", "n=60,k=3"} <= set(res.summary)
        assert "median_sum_two_smallest" in res.summary["n=60,k=3"]
        for r in res.records:
            assert r["l1_to_truth"] < 1.0 and len(r["predictive"]) == 61

    def test_improperness_cells(self):
        cfg = StudyConfig(
            "improperness", n=(30,), replications=1, k=(2,), mcmc=TINY,
            options={"modes": ["hierarchical"], "scenarios": {"close": 1.0}},
        )
        res = run_study(cfg, write=False)
        entry = res.summary["hierarchical|close|k=2|n=30"]
        assert set(entry) == {"stuck", "diverged", "stuck_or_diverged", "failed_cells"}
        assert entry["failed_cells"] == 0

    def test_integrator_benchmark(self):
        cfg = StudyConfig("integrators", replications=6, options={"mc_sizes": [500, 1500], "riemann_knots": [100, 550], "sigma_sweep": [1.0]})
        res = integrator_benchmark(cfg=cfg)
        assert res.summary["riemann_max_rel_element_error"]["550"] < 1e-3
        assert res.summary["riemann_abs_error"]["550"] < res.summary["riemann_abs_error"]["100"] + 1e-12
        assert all(np.isfinite(v) for v in res.summary["mc_sd"].values())


def test_identical_models_have_unit_bayes_factor():
    x = np.random.default_rng(5).normal(size=60)
    res = bayes_factor(x, (1, "gaussian"), (1, "gaussian"), McmcConfig(iterations=3000, burn_in=1000), seed=2)
    assert res.ml_a.log_ml != res.ml_b.log_ml  # two independent estimates
    assert abs(res.log_bf) < 3 * res.se_log_bf
    assert json.dumps(res.to_dict())


def test_dataset_analysis_writes(tmp_path):
    x = np.concatenate([np.random.default_rng(0).normal(-3, 1, 50), np.random.default_rng(1).normal(3, 1, 50)])
    res = dataset_analysis(x, k=3, mcmc=McmcConfig(iterations=800, burn_in=300), name="two")
    res.write(tmp_path, x)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"analysis_two.json", "analysis_two.csv", "analysis_two.svg"} <= names
    payload = json.loads((tmp_path / "analysis_two.json").read_text())
    assert payload["summary"]["n_components"] == 3
    assert MixtureParams  # keep the public type import exercised
