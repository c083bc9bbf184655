"""Three-level prior for mixtures with a data-scale hyperparameter.

Second level, for every component ``l``::

    mu_l    ~ N(mu0, zeta0^2)
    sigma_l ~ density  1/(2 zeta0)       on (0, zeta0)
                       zeta0/(2 sigma^2) on (zeta0, inf)
    p | mu, sigma ~ conditional Jeffreys prior of the weights

Third level: ``pi(mu0, zeta0) ~ 1/zeta0``. ``zeta0`` is a standard
deviation, in data units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError
from .fisher import IntegratorConfig
from .jeffreys import log_jeffreys_weights
from .mixture import MixtureParams

__all__ = [
    "HierarchicalHyper",
    "log_sigma_prior",
    "log_mu_prior",
    "log_hyperprior",
    "log_hier_prior",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class HierarchicalHyper:
    """Third-level parameters: location ``mu0`` and scale ``zeta0``."""

    mu0: float
    zeta0: float

    def __post_init__(self):
        if not np.isfinite(self.mu0):
            raise ParameterDomainError("mu0 must be finite")
        if not (np.isfinite(self.zeta0) and self.zeta0 > 0):
            raise ParameterDomainError(f"zeta0 must be positive, got {self.zeta0}")

    def to_dict(self):
        return {"mu0": float(self.mu0), "zeta0": float(self.zeta0)}


def log_sigma_prior(sigma, zeta0):
    """Log density of the half-uniform / half-Pareto scale prior.

    Uniform with mass 1/2 on ``(0, zeta0)`` and ``zeta0 / (2 sigma^2)`` on
    ``(zeta0, inf)``; the two pieces meet at ``1 / (2 zeta0)``, so the
    density is continuous and integrates to one. Vectorised over ``sigma``.
    """
    s = np.asarray(sigma, dtype=float)
    if not zeta0 > 0:
        raise ParameterDomainError(f"zeta0 must be positive, got {zeta0}")
    if np.any(~(s > 0)):
        raise ParameterDomainError("scales must be positive")
    lz = math.log(zeta0)
    out = np.where(s <= zeta0, -math.log(2.0) - lz, lz - math.log(2.0) - 2.0 * np.log(s))
    return float(out) if out.ndim == 0 else out


def log_mu_prior(mu, mu0, zeta0):
    """``log N(mu; mu0, zeta0^2)``, vectorised over ``mu``."""
    if not zeta0 > 0:
        raise ParameterDomainError(f"zeta0 must be positive, got {zeta0}")
    z = (np.asarray(mu, dtype=float) - mu0) / zeta0
    out = -0.5 * z * z - 0.5 * _LOG_2PI - math.log(zeta0)
    return float(out) if np.ndim(out) == 0 else out


def log_hyperprior(mu0, zeta0) -> float:
    """``-log zeta0``; flat in ``mu0`` and improper."""
    if not zeta0 > 0:
        raise ParameterDomainError(f"zeta0 must be positive, got {zeta0}")
    return -math.log(zeta0)


def log_hier_prior(params: MixtureParams, hyper: HierarchicalHyper, cfg: IntegratorConfig | None = None) -> float:
    """Joint log prior of ``(p, mu, sigma, mu0, zeta0)`` (unnormalised).

    The weights term is the unnormalised conditional Jeffreys prior and
    vanishes for ``k = 1``.
    """
    lp = float(np.sum(log_mu_prior(params.locations, hyper.mu0, hyper.zeta0)))
    lp += float(np.sum(log_sigma_prior(params.scales, hyper.zeta0)))
    lp += log_jeffreys_weights(params.weights, params.locations, params.scales, params.family, cfg).value
    return lp + log_hyperprior(hyper.mu0, hyper.zeta0)
