"""Marginal likelihoods by bridge sampling from MCMC output.

Draws are mapped to unconstrained coordinates: additive log-ratios of the
weights (last weight as reference), locations, log scales and, with
hyperparameters, ``mu0`` and ``log zeta0``. The proposal is a normal
distribution moment-matched on the first half of the draws; the second
half enters the iterative (optimal-bridge) estimator. The relative mean
squared error uses the first-order approximation for bridge sampling
with a batch-means correction for autocorrelated posterior draws.

With components of one family the posterior is invariant under
relabelling. The relabelled draws sample the posterior restricted to
weight-sorted labellings, whose mass is ``1/k!`` of the total, so
``log k!`` is added back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import EstimationError, ParameterDomainError
from .hierarchical import HierarchicalHyper
from .mcmc import ChainTrace, log_posterior, make_prior, relabel
from .mixture import ComponentFamily, MixtureParams

__all__ = ["MarginalLikelihood", "to_unconstrained", "from_unconstrained", "bridge_log_marginal"]


@dataclass(frozen=True)
class MarginalLikelihood:
    log_ml: float
    se_log: float
    iterations: int
    n_posterior: int
    n_proposal: int

    def to_dict(self):
        return {
            "log_marginal_likelihood": self.log_ml,
            "se_log": self.se_log,
            "iterations": self.iterations,
            "n_posterior": self.n_posterior,
            "n_proposal": self.n_proposal,
        }


def to_unconstrained(trace: ChainTrace):
    """Draws as rows of ``(alr(p), mu, log sigma[, mu0, log zeta0])``."""
    p = np.clip(trace.weights, 1e-300, None)
    cols = [np.log(p[:, :-1]) - np.log(p[:, -1:]), trace.locations, np.log(trace.scales)]
    if trace.mu0 is not None:
        cols += [trace.mu0[:, None], np.log(trace.zeta0)[:, None]]
    return np.hstack(cols)


def from_unconstrained(theta, k, has_hyper):
    """Inverse of :func:`to_unconstrained` for one row.

    Returns ``(p, mu, sigma, hyper, log_jacobian)``, the Jacobian being that
    of the map from unconstrained to natural coordinates.
    """
    eta = np.append(theta[: k - 1], 0.0)
    m = eta.max()
    w = np.exp(eta - m)
    p = w / w.sum()
    mu = theta[k - 1 : 2 * k - 1]
    log_sigma = theta[2 * k - 1 : 3 * k - 1]
    sigma = np.exp(log_sigma)
    with np.errstate(divide="ignore"):
        log_jac = float(np.sum(np.log(p)) + np.sum(log_sigma))
    hyper = None
    if has_hyper:
        mu0, log_zeta0 = theta[3 * k - 1], theta[3 * k]
        hyper = HierarchicalHyper(float(mu0), float(math.exp(log_zeta0)))
        log_jac += float(log_zeta0)
    return p, mu, sigma, hyper, log_jac


def _batch_inefficiency(f, batches=20):
    """Integrated autocorrelation estimate from batch means (at least 1)."""
    n = f.size
    b = n // batches
    if b < 2:
        return 1.0
    means = f[: b * batches].reshape(batches, b).mean(axis=1)
    v = f.var(ddof=1)
    if not v > 0:
        return 1.0
    return max(1.0, b * means.var(ddof=1) / v)


def bridge_log_marginal(
    trace: ChainTrace,
    data,
    prior=None,
    integrator=None,
    seed=0,
    max_draws=2000,
    tol=1e-10,
    max_iter=1000,
) -> MarginalLikelihood:
    """Log marginal likelihood of ``data`` under the model sampled in ``trace``.

    Parameters
    ----------
    trace : ChainTrace
        Output of :func:`~jeffmix.mcmc.run_chain` (relabelled here).
    data : Dataset or array_like
    prior : prior mode or LogPrior, optional
        Defaults to the one recorded in ``trace.config``.
    max_draws : int
        Upper bound on draws used in each half (evenly thinned).

    Raises
    ------
    EstimationError
        The fixed-point iteration did not converge or no proposal draw has
        a finite posterior density.
    """
    if len(trace) < 20:
        raise ParameterDomainError("bridge sampling needs at least 20 posterior draws")
    cfg = trace.config
    prior = make_prior(prior if prior is not None else cfg.prior_mode, integrator or cfg.integrator)
    x = np.asarray(getattr(data, "values", data), dtype=float)
    exchangeable = isinstance(trace.family, ComponentFamily)
    tr = relabel(trace) if exchangeable else trace
    k = tr.k
    has_hyper = tr.mu0 is not None
    theta = to_unconstrained(tr)
    half = len(tr) // 2
    fit, post = theta[:half], theta[half:]
    if fit.shape[0] > max_draws:
        fit = fit[np.linspace(0, fit.shape[0] - 1, max_draws).astype(int)]
    if post.shape[0] > max_draws:
        post = post[np.linspace(0, post.shape[0] - 1, max_draws).astype(int)]
    d = theta.shape[1]
    mean = fit.mean(axis=0)
    cov = np.atleast_2d(np.cov(fit, rowvar=False)) + 1e-10 * np.eye(d)
    chol = np.linalg.cholesky(cov)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    rng = np.random.default_rng(seed)
    n1 = post.shape[0]
    n2 = n1
    prop = mean + rng.standard_normal((n2, d)) @ chol.T

    def log_g(th):
        z = np.linalg.solve(chol, (th - mean).T)
        return -0.5 * np.sum(z * z, axis=0) - 0.5 * log_det - 0.5 * d * math.log(2 * math.pi)

    def log_q(th):
        p, mu, sigma, hyper, log_jac = from_unconstrained(th, k, has_hyper)
        if exchangeable and k > 1:
            order = np.lexsort((mu, -p))
            if np.any(order != np.arange(k)):
                return -np.inf  # outside the weight-sorted region
        try:
            params = MixtureParams(p / p.sum(), mu, sigma, tr.family)
        except ParameterDomainError:
            return -np.inf
        return log_posterior(x, params, hyper, prior) + log_jac

    l1 = np.array([log_q(t) for t in post]) - log_g(post)
    l2 = np.array([log_q(t) for t in prop]) - log_g(prop)
    if not np.any(np.isfinite(l2)):
        raise EstimationError("no proposal draw has a finite posterior density", {"n_proposal": n2})
    if not np.all(np.isfinite(l1)):
        raise EstimationError("posterior draws with non-finite density", {"bad": int(np.sum(~np.isfinite(l1)))})
    s1 = n1 / (n1 + n2)
    s2 = n2 / (n1 + n2)
    lstar = float(np.median(l1))
    e1 = np.exp(l1 - lstar)
    e2 = np.exp(np.where(np.isfinite(l2), l2 - lstar, -np.inf))
    r = 1.0
    for it in range(1, max_iter + 1):
        num = np.mean(e2 / (s1 * e2 + s2 * r))
        den = np.mean(1.0 / (s1 * e1 + s2 * r))
        r_new = num / den
        if not (np.isfinite(r_new) and r_new > 0):
            raise EstimationError("bridge iteration left the positive reals", {"iteration": it, "r": r_new})
        if abs(r_new - r) / r_new < tol:
            r = r_new
            break
        r = r_new
    else:
        raise EstimationError("bridge iteration did not converge", {"iterations": max_iter, "r": r})
    log_ml = math.log(r) + lstar

    # relative MSE, first-order approximation
    with np.errstate(over="ignore"):
        f1 = 1.0 / (s1 + s2 * np.exp(-(l2 - log_ml)))
        f2 = 1.0 / (s1 * np.exp(l1 - log_ml) + s2)
    re2 = f1.var(ddof=1) / f1.mean() ** 2 / n2 + _batch_inefficiency(f2) * f2.var(ddof=1) / f2.mean() ** 2 / n1
    if exchangeable and k > 1:
        log_ml += float(gammaln(k + 1))
    return MarginalLikelihood(float(log_ml), float(math.sqrt(re2)), it, n1, n2)
