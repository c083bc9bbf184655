"""Expected Fisher information of a univariate mixture by 1-d quadrature.

For a mixture density ``g`` every information element is

    I_ij = int d_i g(x) d_j g(x) / g(x) dx = E_g[s_i(X) s_j(X)]

with ``s = d log g``. The scores are computed in closed form from the
component score functions, so only the outer integral is numerical. Three
integrators are available:

* ``riemann`` -- equally spaced knots over a truncated support,
* ``mc`` -- Monte Carlo importance sampling from the equal-weight mixture of
  the components, stratified by component (deterministic given the seed),
* ``gk`` -- adaptive Gauss-Kronrod (QUADPACK) on a segmented real line.

Where ``log g < -700`` the integrand is set to zero: between well-separated
narrow modes both the numerator and ``g`` underflow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import IntegrationError, ParameterDomainError
from .mixture import FamilyKind, MixtureParams

__all__ = [
    "Unknowns",
    "Scenario",
    "IntegratorConfig",
    "FisherMatrix",
    "score_matrix",
    "integrand",
    "integration_bounds",
    "select_integrator",
    "fim_element",
    "fim",
    "analytic_fim_gaussian_single",
]

LOG_G_FLOOR = -700.0
_GK_BREAKS = (-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0)


class Unknowns(str, Enum):
    WEIGHTS = "weights"
    LOCATIONS = "locations"
    ALL = "all"


@dataclass(frozen=True)
class Scenario:
    """Which parameters are unknown, and in which order they index the FIM.

    ``weights``: ``(p_1, ..., p_{k-1})`` with ``p_k = 1 - sum``.
    ``locations``: ``(mu_1, ..., mu_k)``.
    ``all``: ``(p_1..p_{k-1}, mu_1..mu_k, sigma_1..sigma_k)``.
    """

    unknowns: Unknowns
    k: int

    def __post_init__(self):
        object.__setattr__(self, "unknowns", Unknowns(self.unknowns))
        if self.k < 1:
            raise ParameterDomainError("k must be >= 1")

    @classmethod
    def weights(cls, k):
        return cls(Unknowns.WEIGHTS, k)

    @classmethod
    def locations(cls, k):
        return cls(Unknowns.LOCATIONS, k)

    @classmethod
    def all(cls, k):
        return cls(Unknowns.ALL, k)

    @cached_property
    def ordering(self):
        k = self.k
        w = tuple(f"p{l + 1}" for l in range(k - 1))
        m = tuple(f"mu{l + 1}" for l in range(k))
        s = tuple(f"sigma{l + 1}" for l in range(k))
        if self.unknowns is Unknowns.WEIGHTS:
            return w
        if self.unknowns is Unknowns.LOCATIONS:
            return m
        return w + m + s

    @property
    def dim(self):
        return len(self.ordering)


@dataclass(frozen=True)
class IntegratorConfig:
    """Quadrature settings.

    ``method`` is one of ``riemann``, ``mc``, ``gk`` or ``auto`` (resolved by
    :func:`select_integrator`). Bounds for ``riemann`` cover every component
    up to a tail mass of ``tail_mass`` (8 standard deviations for Gaussian
    components).
    """

    method: str = "auto"
    points: int = 550
    samples: int = 1500
    rel_tol: float = 1e-10
    sigma_switch_threshold: float = 0.05
    tail_mass: float = 1e-15
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("riemann", "mc", "gk", "auto"):
            raise ParameterDomainError(f"unknown integration method {self.method!r}")
        if self.points < 2 or self.samples < 1:
            raise ParameterDomainError("points must be >= 2 and samples >= 1")
        if not self.sigma_switch_threshold > 0:
            raise ParameterDomainError("sigma_switch_threshold must be positive")

    @classmethod
    def parse(cls, spec: str, **kw):
        """Build from ``riemann:N``, ``mc:N``, ``gk:TOL`` or ``auto``."""
        name, _, arg = spec.partition(":")
        name = name.strip().lower()
        if name == "auto":
            return cls("auto", **kw)
        if name == "riemann":
            return cls("riemann", points=int(arg or 550), **kw)
        if name == "mc":
            return cls("mc", samples=int(arg or 1500), **kw)
        if name == "gk":
            return cls("gk", rel_tol=float(arg or 1e-10), **kw)
        raise ParameterDomainError(f"cannot parse integration method {spec!r}")

    def label(self):
        if self.method == "riemann":
            return f"riemann:{self.points}"
        if self.method == "mc":
            return f"mc:{self.samples}"
        if self.method == "gk":
            return f"gk:{self.rel_tol:g}"
        return "auto"


@dataclass(frozen=True)
class FisherMatrix:
    entries: np.ndarray
    ordering: tuple
    method: IntegratorConfig = field(default_factory=IntegratorConfig)

    @property
    def dim(self):
        return len(self.ordering)

    def __getitem__(self, idx):
        return self.entries[idx]


def _tail_quantiles(fam, tail_mass):
    if fam.kind is FamilyKind.GAUSSIAN and tail_mass == 1e-15:
        return -8.0, 8.0
    return float(fam.std_ppf(tail_mass)), float(fam.std_isf(tail_mass))


def integration_bounds(params: MixtureParams, tail_mass=1e-15):
    """Truncated support covering each component up to ``tail_mass`` per tail."""
    mu, sigma = params.locations, params.scales
    if params.homogeneous:
        lo_z, hi_z = _tail_quantiles(params.family, tail_mass)
    else:
        z = np.array([_tail_quantiles(f, tail_mass) for f in params.families])
        lo_z, hi_z = z[:, 0], z[:, 1]
    return float((mu + lo_z * sigma).min()), float((mu + hi_z * sigma).max())


def score_matrix(x, params: MixtureParams, scenario: Scenario):
    """Scores ``d_i log g`` at the points ``x``.

    Returns
    -------
    S : ndarray, shape (dim, len(x))
        Score of every parameter in ``scenario.ordering``; zero where the
        mixture density underflows.
    log_g : ndarray, shape (len(x),)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if scenario.k != params.k:
        raise ParameterDomainError(f"scenario is for k={scenario.k}, params have k={params.k}")
    S, log_g, _ = _scores(x, params.component_logpdf_t(x), params, scenario)
    return S, log_g


def _scores(x, logf, params, scenario, proposal=None):
    """Scores from the ``(k, n)`` component log densities.

    Everything is scaled by ``exp(-m)``, ``m`` the columnwise max of
    ``log p_l + log f_l``, so one exponential pass serves the mixture
    density, the density ratios and (if ``proposal`` weights are given)
    the importance weights ``g / q``.
    """
    k = params.k
    with np.errstate(divide="ignore"):
        logp = np.log(params.weights)[:, None]
    m = (logf + logp).max(axis=0)
    # f_l / exp(m); capped where a zero-weight component dominates
    F = np.exp(np.minimum(logf - m, 700.0))
    g = params.weights @ F
    log_g = np.log(g) + m
    ratio = F / g
    rows = []
    if scenario.unknowns is not Unknowns.LOCATIONS and k > 1:
        rows.append(ratio[:-1] - ratio[-1])
    if scenario.unknowns is not Unknowns.WEIGHTS:
        resp = params.weights[:, None] * ratio
        with np.errstate(over="ignore", invalid="ignore"):
            d_mu, d_sigma = params.component_scores_t(x)
            # f_l decays faster than its scores grow: 0 * inf is 0 here
            rows.append(np.where(resp > 0, resp * d_mu, 0.0))
            if scenario.unknowns is Unknowns.ALL:
                rows.append(np.where(resp > 0, resp * d_sigma, 0.0))
    S = np.concatenate(rows) if rows else np.zeros((0, x.size))
    dead = log_g < LOG_G_FLOOR
    if dead.any():
        S[:, dead] = 0.0
    iw = None if proposal is None else g / (proposal @ F)
    return S, log_g, iw


def integrand(x, params: MixtureParams, scenario: Scenario, i: int, j: int):
    """``d_i g(x) d_j g(x) / g(x)``; zero where ``g`` underflows."""
    S, log_g = score_matrix(x, params, scenario)
    _check_index(scenario, i, j)
    out = S[i] * S[j] * np.exp(log_g)
    return float(out[0]) if np.ndim(x) == 0 else out


def _check_index(scenario, i, j):
    d = scenario.dim
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError(f"FIM index ({i}, {j}) out of range for dimension {d}")


def select_integrator(params: MixtureParams, cfg: IntegratorConfig | None = None) -> IntegratorConfig:
    """Resolve ``method='auto'``.

    Riemann sums when every scale is at least ``sigma_switch_threshold``
    (inclusive) and the knot spacing resolves the narrowest component;
    Monte Carlo otherwise. Heavy-tailed components (Student t) go to
    Gauss-Kronrod since a truncated grid cannot cover their tails.
    """
    cfg = cfg or IntegratorConfig()
    if cfg.method != "auto":
        return cfg
    if any(f.heavy_tailed for f in params.families):
        return replace(cfg, method="gk")
    smin = float(params.scales.min())
    lo, hi = integration_bounds(params, cfg.tail_mass)
    spacing = (hi - lo) / (cfg.points - 1)
    if smin >= cfg.sigma_switch_threshold and spacing <= smin:
        return replace(cfg, method="riemann")
    return replace(cfg, method="mc")


def _riemann_nodes(params, cfg):
    lo, hi = integration_bounds(params, cfg.tail_mass)
    x = np.linspace(lo, hi, cfg.points)
    w = np.full(cfg.points, (hi - lo) / (cfg.points - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


@lru_cache(maxsize=64)
def _mc_base(seed, n, families):
    """Standardised stratified draws: labels, noise and per-component counts."""
    rng = np.random.default_rng(seed)
    k = len(families)
    counts = np.full(k, n // k)
    counts[: n % k] += 1
    labels = np.repeat(np.arange(k), counts)
    eps = np.concatenate([f.std_rvs(rng, int(c)) for f, c in zip(families, counts)])
    for a in (labels, eps, counts):
        a.flags.writeable = False
    return labels, eps, counts


def _mc_nodes(params, cfg):
    """Stratified draws from the equal-weight mixture of the components.

    Each component gets ``n // k`` or ``n // k + 1`` draws, so small weights
    are still explored. Importance weights ``g / q`` use the realised
    allocation ``q = sum_l (n_l / n) f_l``.
    """
    labels, eps, counts = _mc_base(cfg.seed, cfg.samples, params.families)
    x = params.locations[labels] + params.scales[labels] * eps
    return x, counts / cfg.samples


def _gk_segments(params):
    pts = (params.locations[:, None] + np.asarray(_GK_BREAKS) * params.scales[:, None]).ravel()
    pts = np.unique(pts)
    return [(-np.inf, pts[0])] + list(zip(pts[:-1], pts[1:])) + [(pts[-1], np.inf)]


def _gk_element(params, scenario, i, j, cfg, epsabs):
    def f(x):
        S, log_g = score_matrix(np.array([x]), params, scenario)
        return S[i, 0] * S[j, 0] * np.exp(log_g[0])

    total = 0.0
    err = 0.0
    failed = None
    for a, b in _gk_segments(params):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            res = integrate.quad(f, a, b, epsabs=epsabs, epsrel=cfg.rel_tol, limit=200, full_output=1)
        val, abserr = res[0], res[1]
        total += val
        err += abserr
        # a fourth item is QUADPACK's message, present only when ier > 0
        if len(res) > 3 and "roundoff" not in str(res[3]):
            failed = (a, b)
    if failed is not None and err > 1e-6 * abs(total) + 10 * epsabs:
        raise IntegrationError(
            f"Gauss-Kronrod did not converge for element ({i}, {j}) on segment {failed}",
            estimate=total,
            abserr=err,
        )
    return total


def _gk_scales(params, scenario, cfg):
    # crude diagonal magnitudes, used only to set absolute tolerances
    x, w = _riemann_nodes(params, replace(cfg, points=4001, tail_mass=1e-12))
    S, log_g = score_matrix(x, params, scenario)
    return np.sqrt(np.abs((S * S) @ (w * np.exp(log_g)))) + 1e-300


def _matrix_from_nodes(params, scenario, cfg, rows=None):
    if cfg.method == "riemann":
        x, w = _riemann_nodes(params, cfg)
        S, log_g = score_matrix(x, params, scenario)
        W = w * np.exp(log_g)
    else:
        x, q = _mc_nodes(params, cfg)
        S, _, iw = _scores(x, params.component_logpdf_t(x), params, scenario, proposal=q)
        W = iw / x.size
    # collapsed scales push entries past the float range; inf is the limit
    with np.errstate(over="ignore", invalid="ignore"):
        if rows is None:
            return (S * W) @ S.T
        return (S[rows] * W) @ S.T


def fim_element(params: MixtureParams, scenario: Scenario, i: int, j: int, cfg: IntegratorConfig | None = None) -> float:
    """One element of the expected information matrix.

    Raises
    ------
    IntegrationError
        Gauss-Kronrod failed to converge; ``.estimate`` holds the partial
        value.
    """
    _check_index(scenario, i, j)
    cfg = select_integrator(params, cfg)
    if cfg.method == "gk":
        scale = _gk_scales(params, scenario, cfg)
        return _gk_element(params, scenario, i, j, cfg, epsabs=1e-14 * scale[i] * scale[j])
    return float(_matrix_from_nodes(params, scenario, cfg, rows=[i])[0, j])


def fim(params: MixtureParams, scenario: Scenario, cfg: IntegratorConfig | None = None, symmetrize=True) -> FisherMatrix:
    """Full information matrix under ``scenario``.

    Riemann and Monte Carlo use one set of nodes for every element, so the
    result is positive semi-definite by construction. Gauss-Kronrod
    integrates each element of the upper triangle separately.
    """
    cfg = select_integrator(params, cfg)
    d = scenario.dim
    if d == 0:
        return FisherMatrix(np.zeros((0, 0)), scenario.ordering, cfg)
    if cfg.method == "gk":
        scale = _gk_scales(params, scenario, cfg)
        F = np.empty((d, d))
        for i in range(d):
            for j in range(i, d):
                try:
                    F[i, j] = F[j, i] = _gk_element(params, scenario, i, j, cfg, 1e-14 * scale[i] * scale[j])
                except IntegrationError as exc:
                    raise IntegrationError(
                        f"{exc} [{scenario.ordering[i]}, {scenario.ordering[j]}]", exc.estimate, exc.abserr
                    ) from exc
    else:
        F = _matrix_from_nodes(params, scenario, cfg)
    if symmetrize:
        F = 0.5 * F + 0.5 * F.T  # halves first: no overflow near the float limit
    return FisherMatrix(F, scenario.ordering, cfg)


def analytic_fim_gaussian_single(mu: float, sigma: float) -> FisherMatrix:
    """Closed-form information of ``N(mu, sigma^2)`` in (location, scale)."""
    if not sigma > 0:
        raise ParameterDomainError(f"sigma must be positive, got {sigma}")
    return FisherMatrix(np.diag([1.0 / sigma**2, 2.0 / sigma**2]), ("mu1", "sigma1"), IntegratorConfig("gk"))
