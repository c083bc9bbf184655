"""Adaptive Metropolis-within-Gibbs sampling of mixture posteriors.

One sweep updates, in order: the weights (a joint truncated-normal move on
``p_1..p_{k-1}`` with ``p_k`` as complement, then ``k - 1`` pairwise
transfers), every location (normal random walk), every scale (log-normal
random walk) and, under the hierarchical prior, ``mu0`` (normal) and
``zeta0`` (log-normal). Kernel scales are tuned during burn-in so the
acceptance rate of each block stays in ``[0.20, 0.40]`` and are frozen
afterwards.

The chain runs on standardised data ``(x - mean) / sd``. Every prior mode
here is equivariant under affine maps of the data, so the draws are mapped
back to data units exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    BoundaryEvaluationError,
    ConfigError,
    DegenerateInformationError,
    InitializationError,
    IntegrationError,
    ParameterDomainError,
)
from .fisher import IntegratorConfig, Scenario, fim
from .hierarchical import HierarchicalHyper, log_hyperprior, log_mu_prior, log_sigma_prior
from .jeffreys import log_det_psd, log_jeffreys, log_jeffreys_weights_at, reparam_jacobian
from .mixture import GAUSSIAN, ComponentFamily, Dataset, MixtureParams

__all__ = [
    "PriorMode",
    "LogPrior",
    "HierarchicalPrior",
    "FullJeffreysPrior",
    "CondSigmaProperPrior",
    "make_prior",
    "log_cond_sigma_proper",
    "DivergenceThresholds",
    "McmcConfig",
    "mcmc_config_from_dict",
    "ChainTrace",
    "save_trace",
    "load_trace",
    "DiagnosticsReport",
    "adapt_scales",
    "propose_weights",
    "run_chain",
    "diagnose",
    "relabel",
    "log_posterior",
]

_PRIOR_FAILURES = (
    DegenerateInformationError,
    BoundaryEvaluationError,
    IntegrationError,
    ParameterDomainError,
    FloatingPointError,
)


class PriorMode(str, Enum):
    HIERARCHICAL = "hierarchical"
    FULL_JEFFREYS = "full-jeffreys"
    COND_SIGMA_PROPER = "cond-sigma-proper"


# -- priors ----------------------------------------------------------------


class LogPrior:
    """Log prior split into a quadrature-based and a closed-form part.

    The sampler caches ``expensive`` and recomputes it only when weights,
    locations or scales change; hyperparameter moves only touch ``cheap``.
    """

    uses_hyper = False

    def __init__(self, integrator: IntegratorConfig | None = None):
        self.integrator = integrator or IntegratorConfig()

    def expensive(self, params: MixtureParams) -> float:
        return 0.0

    def cheap(self, params: MixtureParams, hyper: HierarchicalHyper | None) -> float:
        return 0.0

    def __call__(self, params, hyper=None):
        return self.expensive(params) + self.cheap(params, hyper)


class HierarchicalPrior(LogPrior):
    """Normal locations, half-uniform/half-Pareto scales, Jeffreys weights, ``1/zeta0``."""

    uses_hyper = True

    def expensive(self, params):
        return log_jeffreys_weights_at(params, self.integrator)

    def cheap(self, params, hyper):
        lp = np.sum(log_mu_prior(params.locations, hyper.mu0, hyper.zeta0))
        lp += np.sum(log_sigma_prior(params.scales, hyper.zeta0))
        return float(lp) + log_hyperprior(hyper.mu0, hyper.zeta0)


class FullJeffreysPrior(LogPrior):
    """Jeffreys prior of all parameters jointly (improper posterior)."""

    def expensive(self, params):
        return log_jeffreys(params, Scenario.all(params.k), self.integrator).value


def log_cond_sigma_proper(params: MixtureParams, cfg: IntegratorConfig | None = None) -> float:
    """Proper prior on scale ratios, conditional Jeffreys prior on the rest.

    In the nested chart of :func:`~jeffmix.jeffreys.reparam_jacobian` the
    ratios ``sigma_l / sigma_{l-1}`` get the density ``1/2`` on ``(0, 1)``
    and ``1/(2 r^2)`` on ``(1, inf)``; weights, reference location and scale
    and the location offsets get the Jeffreys prior of their information
    block given the ratios. Returned as a density in natural coordinates.
    """
    k = params.k
    F = fim(params, Scenario.all(k), cfg).entries
    J = reparam_jacobian(params)
    with np.errstate(over="ignore", invalid="ignore"):
        G = J.T @ F @ J
    keep = (k - 1) + 2 + (k - 1)  # weights, mu, tau, deltas; ratios come last
    logdet, _ = log_det_psd(G[:keep, :keep])
    ratios = params.scales[1:] / params.scales[:-1]
    lp = 0.5 * logdet + float(np.sum(log_sigma_prior(ratios, 1.0))) if k > 1 else 0.5 * logdet
    return lp - 2.0 * float(np.sum(np.log(params.scales[:-1])))


class CondSigmaProperPrior(LogPrior):
    """See :func:`log_cond_sigma_proper`."""

    def expensive(self, params):
        return log_cond_sigma_proper(params, self.integrator)


def make_prior(mode, integrator: IntegratorConfig | None = None) -> LogPrior:
    if isinstance(mode, LogPrior):
        return mode
    mode = PriorMode(mode)
    cls = {
        PriorMode.HIERARCHICAL: HierarchicalPrior,
        PriorMode.FULL_JEFFREYS: FullJeffreysPrior,
        PriorMode.COND_SIGMA_PROPER: CondSigmaProperPrior,
    }[mode]
    return cls(integrator)


def _safe(fn, *args):
    try:
        v = fn(*args)
    except _PRIOR_FAILURES:
        return -np.inf
    return v if np.isfinite(v) else -np.inf


# -- likelihood ------------------------------------------------------------


def _log_lik(L, logp):
    """Mixture log likelihood from the ``(k, n)`` matrix of ``log f_l(x_i)``."""
    A = L + logp[:, None]
    m = A.max(axis=0)
    if not np.all(np.isfinite(m)):
        return -np.inf
    return float(np.sum(np.log(np.exp(A - m).sum(axis=0)) + m))


def _log_weights(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def log_posterior(x, params: MixtureParams, hyper=None, prior=PriorMode.HIERARCHICAL, integrator=None) -> float:
    """Unnormalised log posterior at one parameter point."""
    prior = make_prior(prior, integrator)
    x = np.asarray(getattr(x, "values", x), dtype=float)
    L = params.component_logpdf_t(x)
    ll = _log_lik(L, _log_weights(params.weights))
    if not np.isfinite(ll):
        return -np.inf
    return ll + _safe(prior.expensive, params) + _safe(prior.cheap, params, hyper)


# -- configuration and results ----------------------------------------------


@dataclass(frozen=True)
class DivergenceThresholds:
    """Flags for chains that collapse a scale or send a location away.

    ``None`` fields are filled from the data: ``sigma_stuck_eps`` defaults
    to ``1e-3`` data SDs and ``mu_diverge_mult`` to 10 (data ranges away
    from the data mean).
    """

    sigma_stuck_eps: float | None = None
    stuck_run_length: int = 500
    mu_diverge_mult: float = 10.0

    def __post_init__(self):
        if self.sigma_stuck_eps is not None and not self.sigma_stuck_eps > 0:
            raise ParameterDomainError("sigma_stuck_eps must be positive")
        if self.stuck_run_length < 1 or not self.mu_diverge_mult > 0:
            raise ParameterDomainError("stuck_run_length and mu_diverge_mult must be positive")


_DEFAULT_SCALES = {"weights": 0.05, "weights_pair": 0.1, "mu": 0.5, "log_sigma": 0.3, "mu0": 0.5, "log_zeta0": 0.3}


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings.

    ``iterations`` counts all sweeps including ``burn_in``; kept draws are
    every ``thin``-th sweep after burn-in. ``initial_scales`` are in units
    of the standardised data.
    """

    iterations: int = 20000
    burn_in: int = 5000
    adaptation_window: int = 100
    target_acceptance: tuple = (0.20, 0.40)
    initial_scales: dict = field(default_factory=lambda: dict(_DEFAULT_SCALES))
    prior_mode: object = PriorMode.HIERARCHICAL
    thresholds: DivergenceThresholds = field(default_factory=DivergenceThresholds)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    seed: int = 0
    thin: int = 1
    pair_moves: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ParameterDomainError("need 0 <= burn_in < iterations")
        if self.adaptation_window < 1 or self.thin < 1:
            raise ParameterDomainError("adaptation_window and thin must be >= 1")
        lo, hi = self.target_acceptance
        if not 0 < lo < hi < 1:
            raise ParameterDomainError("target_acceptance must satisfy 0 < lo < hi < 1")
        scales = dict(_DEFAULT_SCALES)
        scales.update(self.initial_scales or {})
        if any(not v > 0 for v in scales.values()):
            raise ParameterDomainError("initial kernel scales must be positive")
        object.__setattr__(self, "initial_scales", scales)
        if not isinstance(self.prior_mode, LogPrior):
            object.__setattr__(self, "prior_mode", PriorMode(self.prior_mode))

    def to_dict(self):
        mode = self.prior_mode.value if isinstance(self.prior_mode, PriorMode) else type(self.prior_mode).__name__
        t = self.thresholds
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "adaptation_window": self.adaptation_window,
            "target_acceptance": list(self.target_acceptance),
            "initial_scales": dict(sorted(self.initial_scales.items())),
            "prior_mode": mode,
            "thresholds": {
                "sigma_stuck_eps": t.sigma_stuck_eps,
                "stuck_run_length": t.stuck_run_length,
                "mu_diverge_mult": t.mu_diverge_mult,
            },
            "integrator": self.integrator.label(),
            "seed": self.seed,
            "thin": self.thin,
            "pair_moves": self.pair_moves,
        }


_MCMC_KEYS = {
    "iterations", "burn_in", "adaptation_window", "thin", "initial_scales", "prior",
    "method", "thresholds", "target_acceptance", "pair_moves", "prior_mode", "integrator", "seed",
}


def mcmc_config_from_dict(d: dict | None, base: McmcConfig | None = None) -> McmcConfig:
    """Build an :class:`McmcConfig` from a plain mapping (config files).

    Raises :class:`ConfigError` naming the offending field.
    """
    base = base or McmcConfig()
    d = dict(d or {})
    # accept the key names written by McmcConfig.to_dict
    for alias, key in (("prior_mode", "prior"), ("integrator", "method")):
        if alias in d:
            d.setdefault(key, d.pop(alias))
    unknown = set(d) - _MCMC_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field="mcmc")
    kw = {}
    for key in ("iterations", "burn_in", "adaptation_window", "thin", "seed"):
        if key in d:
            if not isinstance(d[key], int) or isinstance(d[key], bool):
                raise ConfigError("must be an integer", field=f"mcmc.{key}")
            kw[key] = d[key]
    if "initial_scales" in d:
        kw["initial_scales"] = dict(d["initial_scales"])
    if "target_acceptance" in d:
        kw["target_acceptance"] = tuple(d["target_acceptance"])
    if "pair_moves" in d:
        kw["pair_moves"] = bool(d["pair_moves"])
    if "prior" in d:
        try:
            kw["prior_mode"] = PriorMode(d["prior"])
        except ValueError:
            raise ConfigError(f"unknown prior {d['prior']!r}", field="mcmc.prior") from None
    if "method" in d:
        try:
            kw["integrator"] = IntegratorConfig.parse(str(d["method"]))
        except (ParameterDomainError, ValueError) as exc:
            raise ConfigError(str(exc), field="mcmc.method") from None
    if "thresholds" in d:
        try:
            kw["thresholds"] = DivergenceThresholds(**d["thresholds"])
        except (TypeError, ParameterDomainError) as exc:
            raise ConfigError(str(exc), field="mcmc.thresholds") from None
    try:
        return replace(base, **kw)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc), field="mcmc") from None


@dataclass
class ChainTrace:
    """Kept draws of one chain, in data units.

    Attributes
    ----------
    weights, locations, scales : ndarray, shape (m, k)
    mu0, zeta0 : ndarray, shape (m,), or None without hyperparameters
    log_post : ndarray, shape (m,)
        Unnormalised log posterior on the standardised scale.
    acceptance : dict
        Post burn-in acceptance rate of every block.
    scale_history : ndarray, shape (windows + 1, blocks)
        Kernel scales at start and after every adaptation window.
    block_names : tuple
    """

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    mu0: np.ndarray | None
    zeta0: np.ndarray | None
    log_post: np.ndarray
    acceptance: dict
    scale_history: np.ndarray
    block_names: tuple
    family: object = GAUSSIAN
    center: float = 0.0
    spread: float = 1.0
    data_range: float = 1.0
    stuck: bool = False
    diverged: bool = False
    prior_failures: int = 0
    config: McmcConfig | None = None

    def __len__(self):
        return self.weights.shape[0]

    @property
    def k(self):
        return self.weights.shape[1]

    def params(self, i) -> MixtureParams:
        p = self.weights[i]
        return MixtureParams(p / p.sum(), self.locations[i], self.scales[i], self.family)

    def hyper(self, i):
        if self.mu0 is None:
            return None
        return HierarchicalHyper(float(self.mu0[i]), float(self.zeta0[i]))

    @property
    def draws(self):
        return [(self.params(i), self.hyper(i)) for i in range(len(self))]

    def subset(self, idx):
        """Trace restricted to draws ``idx`` (flags are kept)."""
        take = lambda a: None if a is None else a[idx]  # noqa: E731
        return replace(
            self,
            weights=self.weights[idx],
            locations=self.locations[idx],
            scales=self.scales[idx],
            mu0=take(self.mu0),
            zeta0=take(self.zeta0),
            log_post=self.log_post[idx],
        )


_TRACE_ARRAYS = ("weights", "locations", "scales", "mu0", "zeta0", "log_post", "scale_history")


def save_trace(trace: ChainTrace, path):
    """Write a trace as ``.npz``: the draw arrays plus a JSON metadata entry."""
    fam = trace.family
    meta = {
        "family": fam.to_dict() if isinstance(fam, ComponentFamily) else [f.to_dict() for f in fam],
        "acceptance": trace.acceptance,
        "block_names": list(trace.block_names),
        "center": trace.center,
        "spread": trace.spread,
        "data_range": trace.data_range,
        "stuck": trace.stuck,
        "diverged": trace.diverged,
        "prior_failures": trace.prior_failures,
        "config": trace.config.to_dict() if trace.config is not None else None,
    }
    arrays = {a: getattr(trace, a) for a in _TRACE_ARRAYS if getattr(trace, a) is not None}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_trace(path) -> ChainTrace:
    """Read a trace written by :func:`save_trace`."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {a: (z[a] if a in z.files else None) for a in _TRACE_ARRAYS}
    fam = meta["family"]
    fam = tuple(ComponentFamily.from_dict(f) for f in fam) if isinstance(fam, list) else ComponentFamily.from_dict(fam)
    cfg = meta["config"]
    if cfg is not None:
        cfg = mcmc_config_from_dict(cfg)
    return ChainTrace(
        block_names=tuple(meta["block_names"]),
        acceptance=meta["acceptance"],
        family=fam,
        center=meta["center"],
        spread=meta["spread"],
        data_range=meta["data_range"],
        stuck=meta["stuck"],
        diverged=meta["diverged"],
        prior_failures=meta["prior_failures"],
        config=cfg,
        **arrays,
    )


@dataclass(frozen=True)
class DiagnosticsReport:
    stuck: bool
    diverged: bool
    stuck_fraction: float
    diverged_fraction: float
    longest_stuck_run: int
    acceptance: dict

    def to_dict(self):
        return {
            "stuck": self.stuck,
            "diverged": self.diverged,
            "stuck_fraction": self.stuck_fraction,
            "diverged_fraction": self.diverged_fraction,
            "longest_stuck_run": self.longest_stuck_run,
            "acceptance": dict(sorted(self.acceptance.items())),
        }


# -- kernels -----------------------------------------------------------------


def adapt_scales(block_acceptance, scale, band=(0.20, 0.40), factor=1.3, floor=1e-8):
    """One adaptation step for a kernel scale.

    Grows the scale by ``factor`` above the band, shrinks it below, leaves
    it unchanged inside (inclusive). Never returns less than ``floor``.
    """
    lo, hi = band
    if block_acceptance > hi:
        scale = scale * factor
    elif block_acceptance < lo:
        scale = scale / factor
    return max(float(scale), floor)


def _log_tn_mass(x, scale, lo, hi):
    """``log P(lo < N(x, scale^2) < hi)`` for ``lo <= x <= hi``.

    With the centre inside the interval the mass is a sum of two
    non-negative erf terms, so there is no cancellation.
    """
    r2 = scale * math.sqrt(2.0)
    return math.log(0.5 * (math.erf((hi - x) / r2) + math.erf((x - lo) / r2)))


def _tn_draw(rng, x, scale, lo, hi):
    """Truncated-normal draw on ``[lo, hi]`` by inverse CDF; ``lo <= x <= hi``."""
    a = ndtr((lo - x) / scale)
    b = ndtr((hi - x) / scale)
    u = a + (b - a) * rng.random()
    return float(np.clip(x + scale * ndtri(u), lo, hi))


def propose_weights(p, scale, rng):
    """Joint truncated-normal move on ``p_1..p_{k-1}``; ``p_k`` is the complement.

    Returns
    -------
    p_new : ndarray or None
        ``None`` when the complement would be negative (count as a
        rejection).
    log_correction : float
        ``log q(p | p_new) - log q(p_new | p)``, the sum of the log
        truncation normalisers of the two points.
    """
    p = np.asarray(p, dtype=float)
    k = p.size
    if k == 1:
        return p.copy(), 0.0
    head = np.array([_tn_draw(rng, pj, scale, 0.0, 1.0) for pj in p[:-1]])
    last = 1.0 - head.sum()
    if last < 0:
        return None, 0.0
    corr = sum(_log_tn_mass(a, scale, 0.0, 1.0) - _log_tn_mass(b, scale, 0.0, 1.0) for a, b in zip(p[:-1], head))
    return np.append(head, last), float(corr)


def _propose_pair(p, scale, rng):
    k = p.size
    i, j = rng.choice(k, size=2, replace=False)
    c = p[i] + p[j]
    if not c > 0:
        return None, 0.0
    new_i = _tn_draw(rng, p[i], scale, 0.0, c)
    q = p.copy()
    q[i] = new_i
    q[j] = c - new_i
    corr = _log_tn_mass(p[i], scale, 0.0, c) - _log_tn_mass(new_i, scale, 0.0, c)
    return q, corr


# -- sampler ---------------------------------------------------------------


def _standardise(x):
    center = float(np.mean(x))
    spread = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if not spread > 0:
        spread = 1.0
    return (x - center) / spread, center, spread


class _Block:
    __slots__ = ("scale", "acc", "tries", "acc_kept", "tries_kept")

    def __init__(self, scale):
        self.scale = float(scale)
        self.acc = self.tries = self.acc_kept = self.tries_kept = 0


def run_chain(data, k: int, family=GAUSSIAN, config: McmcConfig | None = None) -> ChainTrace:
    """Sample the posterior of a ``k``-component mixture.

    Parameters
    ----------
    data : Dataset or array_like
    k : int
    family : ComponentFamily or sequence of them, one per component
    config : McmcConfig

    Raises
    ------
    InitializationError
        The log posterior is not finite at the starting point.
    ParameterDomainError
        Empty or non-finite data, or ``k < 1``.
    """
    config = config or McmcConfig()
    raw = np.asarray(getattr(data, "values", data), dtype=float).ravel()
    if raw.size == 0:
        raise ParameterDomainError("data must be non-empty")
    if not np.all(np.isfinite(raw)):
        raise ParameterDomainError("data contain non-finite values")
    if k < 1:
        raise ParameterDomainError("k must be >= 1")
    x, center, spread = _standardise(raw)
    n = x.size
    prior = make_prior(config.prior_mode, config.integrator)
    rng = np.random.default_rng(config.seed)
    fams = MixtureParams(np.full(k, 1.0 / k), np.zeros(k), np.ones(k), family).families

    # starting point
    p = np.full(k, 1.0 / k)
    mu = np.quantile(x, (np.arange(k) + 0.5) / k)
    sigma = np.ones(k)
    hyper = HierarchicalHyper(0.0, 1.0) if prior.uses_hyper else None

    fam_norm = MixtureParams(np.full(k, 1.0 / k), np.zeros(k), np.ones(k), family).family

    def mk(pp, mm, ss):
        return MixtureParams._trusted(pp, mm, ss, fam_norm)

    L = np.stack([f.logpdf(x, m, s) for f, m, s in zip(fams, mu, sigma)])
    logp = _log_weights(p)
    ll = _log_lik(L, logp)
    cur = mk(p, mu, sigma)
    lp_exp = _safe(prior.expensive, cur)
    lp_cheap = _safe(prior.cheap, cur, hyper)
    if not np.isfinite(ll + lp_exp + lp_cheap):
        raise InitializationError(
            f"log posterior is not finite at the starting point (loglik={ll}, prior={lp_exp + lp_cheap}); "
            "check the data for ties or non-finite values, or choose another family/prior mode"
        )

    names = []
    if k > 1:
        names.append("weights")
        if config.pair_moves and k > 2:
            names.append("weights_pair")
    names += [f"mu{l + 1}" for l in range(k)] + [f"log_sigma{l + 1}" for l in range(k)]
    if prior.uses_hyper:
        names += ["mu0", "log_zeta0"]
    init = config.initial_scales
    blocks = {}
    for b in names:
        key = b if b in ("mu0", "log_zeta0") else b.rstrip("0123456789")
        blocks[b] = _Block(init[key])

    n_keep = (config.iterations - config.burn_in + config.thin - 1) // config.thin
    out_p = np.empty((n_keep, k))
    out_mu = np.empty((n_keep, k))
    out_sigma = np.empty((n_keep, k))
    out_mu0 = np.empty(n_keep) if prior.uses_hyper else None
    out_zeta0 = np.empty(n_keep) if prior.uses_hyper else None
    out_lp = np.empty(n_keep)
    history = [[blocks[b].scale for b in names]]
    failures = 0
    band = tuple(config.target_acceptance)

    def accept(block, log_ratio, burn):
        blk = blocks[block]
        ok = np.isfinite(log_ratio) and math.log(rng.random()) < log_ratio
        if burn:
            blk.tries += 1
            blk.acc += ok
        else:
            blk.tries_kept += 1
            blk.acc_kept += ok
        return ok

    def note_reject(block, burn):
        blk = blocks[block]
        if burn:
            blk.tries += 1
        else:
            blk.tries_kept += 1

    keep_i = 0
    for it in range(config.iterations):
        burn = it < config.burn_in

        # weights
        if k > 1:
            moves = [("weights", None)]
            if "weights_pair" in blocks:
                moves += [("weights_pair", None)] * (k - 1)
            for block, _ in moves:
                s = blocks[block].scale
                if block == "weights":
                    q, corr = propose_weights(p, s, rng)
                else:
                    q, corr = _propose_pair(p, s, rng)
                if q is None or np.any(q < 0):
                    note_reject(block, burn)
                    continue
                q = q / q.sum()
                new_logp = _log_weights(q)
                ll_new = _log_lik(L, new_logp)
                prop = mk(q, mu, sigma)
                e_new = _safe(prior.expensive, prop)
                failures += not np.isfinite(e_new)
                c_new = _safe(prior.cheap, prop, hyper)
                ratio = (ll_new + e_new + c_new) - (ll + lp_exp + lp_cheap) + corr
                if accept(block, ratio, burn):
                    p, logp, ll, lp_exp, lp_cheap, cur = q, new_logp, ll_new, e_new, c_new, prop

        # locations, then scales
        for kind in ("mu", "log_sigma"):
            for l in range(k):
                block = f"{kind}{l + 1}"
                s = blocks[block].scale
                mu_new, sigma_new = mu, sigma
                jac = 0.0
                if kind == "mu":
                    mu_new = mu.copy()
                    mu_new[l] += s * rng.standard_normal()
                else:
                    sigma_new = sigma.copy()
                    step = s * rng.standard_normal()
                    sigma_new[l] = sigma[l] * math.exp(step)
                    jac = step  # log-normal kernel: q(s|s')/q(s'|s) = s'/s
                    if not (np.isfinite(sigma_new[l]) and sigma_new[l] > 0):
                        note_reject(block, burn)
                        continue
                col = fams[l].logpdf(x, mu_new[l], sigma_new[l])
                L_new = L.copy()
                L_new[l] = col
                ll_new = _log_lik(L_new, logp)
                prop = mk(p, mu_new, sigma_new)
                e_new = _safe(prior.expensive, prop)
                failures += not np.isfinite(e_new)
                c_new = _safe(prior.cheap, prop, hyper)
                ratio = (ll_new + e_new + c_new) - (ll + lp_exp + lp_cheap) + jac
                if accept(block, ratio, burn):
                    mu, sigma, L, ll, lp_exp, lp_cheap, cur = mu_new, sigma_new, L_new, ll_new, e_new, c_new, prop

        # hyperparameters: only the closed-form part of the prior changes
        if prior.uses_hyper:
            s = blocks["mu0"].scale
            h = HierarchicalHyper(hyper.mu0 + s * rng.standard_normal(), hyper.zeta0)
            c_new = _safe(prior.cheap, cur, h)
            if accept("mu0", c_new - lp_cheap, burn):
                hyper, lp_cheap = h, c_new
            s = blocks["log_zeta0"].scale
            step = s * rng.standard_normal()
            z = hyper.zeta0 * math.exp(step)
            if np.isfinite(z) and z > 0:
                h = HierarchicalHyper(hyper.mu0, z)
                c_new = _safe(prior.cheap, cur, h)
                if accept("log_zeta0", c_new - lp_cheap + step, burn):
                    hyper, lp_cheap = h, c_new
            else:
                note_reject("log_zeta0", burn)

        if burn and (it + 1) % config.adaptation_window == 0:
            for b in names:
                blk = blocks[b]
                if blk.tries:
                    blk.scale = adapt_scales(blk.acc / blk.tries, blk.scale, band)
                blk.acc = blk.tries = 0
            history.append([blocks[b].scale for b in names])

        if not burn and (it - config.burn_in) % config.thin == 0:
            out_p[keep_i] = p
            out_mu[keep_i] = mu
            out_sigma[keep_i] = sigma
            if hyper is not None:
                out_mu0[keep_i] = hyper.mu0
                out_zeta0[keep_i] = hyper.zeta0
            out_lp[keep_i] = ll + lp_exp + lp_cheap
            keep_i += 1

    acceptance = {b: (blocks[b].acc_kept / blocks[b].tries_kept if blocks[b].tries_kept else float("nan")) for b in names}
    trace = ChainTrace(
        weights=out_p,
        locations=center + spread * out_mu,
        scales=spread * out_sigma,
        mu0=None if out_mu0 is None else center + spread * out_mu0,
        zeta0=None if out_zeta0 is None else spread * out_zeta0,
        log_post=out_lp,
        acceptance=acceptance,
        scale_history=np.array(history),
        block_names=tuple(names),
        family=fam_norm,
        center=center,
        spread=spread,
        data_range=float(np.ptp(raw)) if raw.size > 1 else 1.0,
        prior_failures=int(failures),
        config=config,
    )
    rep = diagnose(trace, config.thresholds)
    trace.stuck, trace.diverged = rep.stuck, rep.diverged
    return trace


# -- post-processing -------------------------------------------------------


def _longest_run(mask):
    """Length of the longest run of True in a 1-d boolean array."""
    if not mask.any():
        return 0
    padded = np.concatenate(([0], mask.astype(np.int8), [0]))
    d = np.diff(padded)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return int(np.max(ends - starts))


def diagnose(trace: ChainTrace, thresholds: DivergenceThresholds | None = None) -> DiagnosticsReport:
    """Flag scale collapse and location divergence.

    ``stuck``: some scale stays below ``sigma_stuck_eps`` for at least
    ``stuck_run_length`` consecutive kept draws. ``diverged``: some location
    is further than ``mu_diverge_mult`` data ranges from the data mean.
    """
    if len(trace) == 0:
        raise ParameterDomainError("cannot diagnose an empty trace")
    t = thresholds or DivergenceThresholds()
    eps = t.sigma_stuck_eps if t.sigma_stuck_eps is not None else 1e-3 * trace.spread
    low = trace.scales < eps
    longest = max(_longest_run(low[:, l]) for l in range(trace.k))
    far = np.abs(trace.locations - trace.center) > t.mu_diverge_mult * trace.data_range
    return DiagnosticsReport(
        stuck=longest >= t.stuck_run_length,
        diverged=bool(far.any()),
        stuck_fraction=float(low.any(axis=1).mean()),
        diverged_fraction=float(far.any(axis=1).mean()),
        longest_stuck_run=longest,
        acceptance=dict(trace.acceptance),
    )


def relabel(trace: ChainTrace) -> ChainTrace:
    """Sort the components of every draw by weight (desc), then location (asc).

    Mixtures whose components belong to different families are not
    exchangeable and are returned unchanged.
    """
    if not isinstance(trace.family, type(GAUSSIAN)):
        return trace
    order = np.lexsort((trace.locations, -trace.weights), axis=1)
    pick = lambda a: np.take_along_axis(a, order, axis=1)  # noqa: E731
    return replace(trace, weights=pick(trace.weights), locations=pick(trace.locations), scales=pick(trace.scales))
