import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from jeffmix import LogPrior, McmcConfig, ParameterDomainError, run_chain
from jeffmix.bridge import bridge_log_marginal, from_unconstrained, to_unconstrained
from jeffmix.mcmc import relabel


class _Proper(LogPrior):
    """mu ~ N(0, 2^2), log sigma ~ N(0, 1): proper, so the evidence is finite."""

    def expensive(self, params):
        lp = 0.0
        for m, s in zip(params.locations, params.scales):
            lp += stats.norm.logpdf(m, 0, 2) + stats.norm.logpdf(math.log(s), 0, 1) - math.log(s)
        return float(lp)


def _standardised(seed, n):
    x = np.random.default_rng(seed).normal(size=n)
    return (x - x.mean()) / x.std(ddof=1)


def _quadrature_log_evidence(x):
    mu = np.linspace(-1.5, 1.5, 601)
    ls = np.linspace(-1.0, 0.8, 601)
    M, LS = np.meshgrid(mu, ls, indexing="ij")
    ll = -x.size * (LS + 0.5 * math.log(2 * math.pi)) - ((x[:, None, None] - M) ** 2).sum(0) / (2 * np.exp(2 * LS))
    lp = ll + stats.norm.logpdf(M, 0, 2) + stats.norm.logpdf(LS, 0, 1)
    return float(logsumexp(lp) + math.log((mu[1] - mu[0]) * (ls[1] - ls[0])))


def test_single_component_evidence_matches_quadrature():
    # standardised data: the sampler's internal scale equals the data scale
    x = _standardised(4, 60)
    t = run_chain(x, 1, config=McmcConfig(iterations=12_000, burn_in=2_000, seed=1, prior_mode=_Proper()))
    ml = bridge_log_marginal(t, x, seed=3)
    oracle = _quadrature_log_evidence(x)
    assert abs(ml.log_ml - oracle) < max(4 * ml.se_log, 0.02)
    assert ml.se_log < 0.05


def test_two_component_estimates_agree_across_chains():
    x = np.concatenate([np.random.default_rng(0).normal(-2, 1, 40), np.random.default_rng(1).normal(2, 1, 40)])
    x = (x - x.mean()) / x.std(ddof=1)
    vals = []
    for seed in (1, 2):
        cfg = McmcConfig(iterations=6_000, burn_in=1_500, seed=seed, prior_mode=_Proper())
        ml = bridge_log_marginal(run_chain(x, 2, config=cfg), x, seed=seed)
        vals.append(ml)
    a, b = vals
    assert abs(a.log_ml - b.log_ml) < 4 * math.hypot(a.se_log, b.se_log) + 0.05


def test_unconstrained_round_trip():
    x = np.random.default_rng(0).normal(size=50)
    t = relabel(run_chain(x, 3, config=McmcConfig(iterations=300, burn_in=100, seed=0)))
    theta = to_unconstrained(t)
    assert theta.shape == (len(t), 3 * 3 - 1 + 2)
    for i in (0, len(t) // 2, len(t) - 1):
        p, mu, sigma, hyper, _ = from_unconstrained(theta[i], 3, True)
        assert np.allclose(p, t.weights[i]) and np.allclose(mu, t.locations[i]) and np.allclose(sigma, t.scales[i])
        assert hyper.zeta0 == pytest.approx(t.zeta0[i])


def test_log_jacobian_of_the_weights_map():
    # d(p1)/d(eta) for k = 2 is p1 p2; with sigma = 1 that is the whole Jacobian
    th = np.array([0.3, 0.0, 0.0, 0.0, 0.0])
    p, *_, log_jac = from_unconstrained(th, 2, False)
    assert log_jac == pytest.approx(math.log(p[0] * p[1]))


def test_needs_draws():
    x = np.random.default_rng(0).normal(size=30)
    t = run_chain(x, 1, config=McmcConfig(iterations=110, burn_in=100))
    with pytest.raises(ParameterDomainError):
        bridge_log_marginal(t, x)
