"""Jeffreys priors for mixtures, on the log scale and unnormalised.

Besides the numerically integrated priors this module keeps a few closed
forms that serve as references: the Dirichlet(1/2, ..., 1/2) density (the
Jeffreys prior of the complete-data multinomial model), the two-piece
prior ``1 / (s1 s2 (s1 + s2))`` and the conditional prior of a location
offset in a two-component Gaussian mixture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import BoundaryEvaluationError, DegenerateInformationError, IntegrationError, ParameterDomainError
from .fisher import FisherMatrix, IntegratorConfig, Scenario, Unknowns, fim
from .mixture import GAUSSIAN, MixtureParams

__all__ = [
    "LogPriorValue",
    "log_det_psd",
    "log_jeffreys",
    "reparam_jacobian",
    "log_jeffreys_weights",
    "log_jeffreys_weights_at",
    "weights_fim",
    "log_dirichlet_half",
    "log_rubio_steel",
    "log_delta_conditional",
]

JITTER_REL = 1e-12
INDEFINITE_BUDGET = 1e-8
BOUNDARY_EPS = 1e-6


@dataclass(frozen=True)
class LogPriorValue:
    value: float
    scenario: Scenario
    method: IntegratorConfig
    jitter: bool = False

    def __float__(self):
        return self.value


def log_det_psd(F):
    """Log-determinant of a symmetric PSD matrix with an eigenvalue floor.

    Eigenvalues below ``1e-12 * lambda_max`` are clamped to that floor.

    Returns
    -------
    logdet : float
    jitter : bool
        Whether any eigenvalue was clamped.

    Raises
    ------
    DegenerateInformationError
        The matrix is zero or has a negative eigenvalue larger in magnitude
        than ``1e-8 * lambda_max``.
    """
    F = np.asarray(getattr(F, "entries", F), dtype=float)
    if F.size == 0:
        return 0.0, False
    with np.errstate(over="ignore", invalid="ignore"):
        F = 0.5 * F + 0.5 * F.T
    if not np.all(np.isfinite(F)):
        raise DegenerateInformationError("information matrix has non-finite entries")
    try:
        lam = np.linalg.eigvalsh(F)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInformationError(f"eigenvalues of the information matrix: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise DegenerateInformationError("information matrix eigenvalues overflow")
    lmax = lam[-1]
    if not lmax > 0:
        raise DegenerateInformationError("information matrix is numerically zero")
    if lam[0] < -INDEFINITE_BUDGET * lmax:
        raise DegenerateInformationError(
            f"information matrix is indefinite (min eigenvalue {lam[0]:.3g}, max {lmax:.3g})"
        )
    floor = JITTER_REL * lmax
    jitter = bool(lam[0] < floor)
    return float(np.sum(np.log(np.maximum(lam, floor)))), jitter


def reparam_jacobian(params: MixtureParams):
    """Jacobian of the natural coordinates w.r.t. the reference chart.

    Natural order: ``(p_1..p_{k-1}, mu_1..mu_k, sigma_1..sigma_k)``.
    Reference order: ``(p_1..p_{k-1}, mu, tau, delta_2..delta_k,
    ratio_2..ratio_k)`` with ``mu_l = mu_{l-1} + sigma_{l-1} delta_l`` and
    ``sigma_l = sigma_{l-1} ratio_l`` (weights are kept as they are).
    """
    k = params.k
    mu, sigma = params.locations, params.scales
    nw = k - 1
    b = nw + 2 * k
    J = np.zeros((b, b))
    J[:nw, :nw] = np.eye(nw)
    imu = lambda l: nw + l  # noqa: E731
    isg = lambda l: nw + k + l  # noqa: E731
    c_mu, c_tau = nw, nw + 1
    c_delta = lambda l: nw + 2 + (l - 1)  # noqa: E731  (l = 1..k-1, 0-based component)
    c_ratio = lambda l: nw + 2 + (k - 1) + (l - 1)  # noqa: E731
    ratios = sigma[1:] / sigma[:-1]
    tau = sigma[0]
    for l in range(k):
        J[imu(l), c_mu] = 1.0
        J[imu(l), c_tau] = (mu[l] - mu[0]) / tau
        J[isg(l), c_tau] = sigma[l] / tau
        for m in range(1, l + 1):
            J[imu(l), c_delta(m)] = sigma[m - 1]
            J[imu(l), c_ratio(m)] = (mu[l] - mu[m]) / ratios[m - 1]
            J[isg(l), c_ratio(m)] = sigma[l] / ratios[m - 1]
    return J


def log_jeffreys(params: MixtureParams, scenario: Scenario, cfg: IntegratorConfig | None = None, chart="natural") -> LogPriorValue:
    """``0.5 log det I`` under ``scenario``.

    ``chart='reference'`` (only for ``scenario.unknowns == 'all'``) returns
    the density in the coordinates of :func:`reparam_jacobian`, i.e. the
    natural-chart value plus ``log |det J|``. In that chart the prior is
    flat in the reference location and behaves as ``tau**-2``.
    """
    F = fim(params, scenario, cfg)
    logdet, jitter = log_det_psd(F.entries)
    value = 0.5 * logdet
    if chart == "reference":
        if scenario.unknowns is not Unknowns.ALL:
            raise ParameterDomainError("the reference chart needs all parameters unknown")
        value += 2.0 * float(np.sum(np.log(params.scales[:-1])))
    elif chart != "natural":
        raise ParameterDomainError(f"unknown chart {chart!r}")
    return LogPriorValue(value, scenario, F.method, jitter)


def _clamped_weights(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ParameterDomainError(f"weights must lie on the simplex, got {p}")
    if np.all(p >= BOUNDARY_EPS):
        return p
    q = np.maximum(p, BOUNDARY_EPS)
    return q / q.sum()


def weights_fim(p, locations, scales, family=GAUSSIAN, cfg: IntegratorConfig | None = None) -> FisherMatrix:
    """Per-observation information of ``(p_1..p_{k-1})`` for fixed components."""
    params = MixtureParams(_clamped_weights(p), locations, scales, family)
    return fim(params, Scenario.weights(params.k), cfg)


def log_jeffreys_weights(p, locations, scales, family=GAUSSIAN, cfg: IntegratorConfig | None = None) -> LogPriorValue:
    """Conditional Jeffreys prior of the weights given component parameters.

    Boundary weights are moved onto the simplex clamped at ``1e-6``. The
    result never exceeds the Dirichlet(1/2) bound
    ``-0.5 * sum(log p)`` (up to quadrature error).
    """
    if np.size(p) == 1:
        return LogPriorValue(0.0, Scenario.weights(1), IntegratorConfig("riemann"))
    return _log_jeffreys_weights(MixtureParams(_clamped_weights(p), locations, scales, family), p, cfg)


def log_jeffreys_weights_at(params: MixtureParams, cfg: IntegratorConfig | None = None) -> float:
    """:func:`log_jeffreys_weights` for a ready-made parameter set (value only)."""
    if params.k == 1:
        return 0.0
    p = params.weights
    if np.any(p < BOUNDARY_EPS):
        params = MixtureParams._trusted(_clamped_weights(p), params.locations, params.scales, params.family)
    return _log_jeffreys_weights(params, p, cfg).value


def _log_jeffreys_weights(params, p, cfg):
    k = params.k
    F = fim(params, Scenario.weights(k), cfg)
    try:
        logdet, jitter = log_det_psd(F.entries)
    except DegenerateInformationError as exc:
        if np.any(np.asarray(p) < BOUNDARY_EPS):
            raise BoundaryEvaluationError(
                f"weights prior degenerates at boundary point {np.asarray(p)}; "
                "evaluate at an interior point and take the limit"
            ) from exc
        raise
    return LogPriorValue(0.5 * logdet, Scenario.weights(k), F.method, jitter)


def log_dirichlet_half(p) -> float:
    """Normalised log density of Dirichlet(1/2, ..., 1/2) at interior ``p``."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1) or abs(p.sum() - 1) > 1e-9:
        raise ParameterDomainError("Dirichlet(1/2) density needs a strictly interior simplex point")
    k = p.size
    log_norm = gammaln(0.5 * k) - k * gammaln(0.5)
    return float(log_norm - 0.5 * np.sum(np.log(p)))


def log_rubio_steel(mu, sigma1, sigma2) -> float:
    """``log 1 / (s1 s2 (s1 + s2))``; flat in ``mu``."""
    if not (sigma1 > 0 and sigma2 > 0):
        raise ParameterDomainError("scales must be positive")
    return -math.log(sigma1) - math.log(sigma2) - math.log(sigma1 + sigma2)


def _delta_integrand(x, delta, p, sigma, tau):
    x = np.asarray(x, dtype=float)
    a = (1 - p) * np.exp(-0.5 * x * x)
    b = p * sigma * np.exp(-0.5 * sigma**2 * (x + delta / (sigma * tau)) ** 2)
    den = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, (x * a) ** 2 / den, 0.0)
    return out


def log_delta_conditional(delta, p, sigma, tau, cfg: IntegratorConfig | None = None) -> float:
    """Conditional Jeffreys prior of the offset ``delta`` (two Gaussians).

    Half the log of

        int [(1-p) x e^{-x^2/2}]^2 /
            (p sigma e^{-sigma^2 (x + delta/(sigma tau))^2 / 2} + (1-p) e^{-x^2/2}) dx

    The value tends to a constant as ``|delta|`` grows, so the prior is
    improper.
    """
    if not (sigma > 0 and tau > 0):
        raise ParameterDomainError("sigma and tau must be positive")
    if not 0 < p < 1:
        raise ParameterDomainError("p must lie in (0, 1)")
    cfg = cfg or IntegratorConfig("gk")
    if cfg.method == "riemann":
        x = np.linspace(-40.0, 40.0, cfg.points)
        val = float(integrate.trapezoid(_delta_integrand(x, delta, p, sigma, tau), x))
    else:
        shift = -delta / (sigma * tau)
        pts = np.unique([-12.0, -6.0, 0.0, 6.0, 12.0, shift - 6 / sigma, shift, shift + 6 / sigma])
        segs = [(-np.inf, pts[0])] + list(zip(pts[:-1], pts[1:])) + [(pts[-1], np.inf)]
        val = 0.0
        for a, b in segs:
            res = integrate.quad(lambda t: float(_delta_integrand(t, delta, p, sigma, tau)), a, b,
                                 epsabs=1e-14, epsrel=cfg.rel_tol, limit=200, full_output=1)
            if len(res) > 3 and "roundoff" not in str(res[3]):
                raise IntegrationError(f"delta-prior integral failed on segment ({a}, {b})", res[0], res[1])
            val += res[0]
    if not val > 0:
        raise IntegrationError("delta-prior integral is not positive", val)
    return 0.5 * math.log(val)
