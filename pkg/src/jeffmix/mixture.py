"""Univariate location-scale mixtures.

A mixture with ``k`` components has density

    g(x) = sum_l p_l f((x - mu_l) / sigma_l) / sigma_l

where ``f`` is a standard Gaussian, Student t (fixed degrees of freedom)
or Gumbel density. Gumbel components use the maximum convention,
``f(z) = exp(-z - exp(-z))``, i.e. ``scipy.stats.gumbel_r``.

Densities are always combined on the log scale; zero weights are legal and
simply drop out of every sum.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .errors import AllocationError, InstanceTooLargeError, ParameterDomainError

__all__ = [
    "FamilyKind",
    "ComponentFamily",
    "GAUSSIAN",
    "MixtureParams",
    "ReparamParams",
    "Dataset",
    "log_density",
    "component_log_densities",
    "log_likelihood",
    "complete_log_likelihood",
    "to_reparam",
    "from_reparam",
    "simulate",
    "brute_force_log_likelihood",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SIMPLEX_TOL = 1e-12
BRUTE_FORCE_GUARD = 10**7


class FamilyKind(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "student_t"
    GUMBEL = "gumbel"


@dataclass(frozen=True)
class ComponentFamily:
    """Standardised component law shared by all components of a mixture.

    Parameters
    ----------
    kind : FamilyKind
        Component family.
    df : float, optional
        Degrees of freedom, required for (and only for) Student t.
    """

    kind: FamilyKind = FamilyKind.GAUSSIAN
    df: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if self.kind is FamilyKind.STUDENT_T:
            if self.df is None or not self.df > 0:
                raise ParameterDomainError("Student t components need df > 0")
        elif self.df is not None:
            raise ParameterDomainError(f"df is only meaningful for Student t, got kind={self.kind.value}")

    @classmethod
    def gaussian(cls):
        return cls(FamilyKind.GAUSSIAN)

    @classmethod
    def student_t(cls, df):
        return cls(FamilyKind.STUDENT_T, float(df))

    @classmethod
    def gumbel(cls):
        return cls(FamilyKind.GUMBEL)

    @classmethod
    def from_dict(cls, d):
        return cls(FamilyKind(d.get("kind", "gaussian")), d.get("df"))

    def to_dict(self):
        out = {"kind": self.kind.value}
        if self.df is not None:
            out["df"] = self.df
        return out

    @property
    def heavy_tailed(self):
        return self.kind is FamilyKind.STUDENT_T

    # -- standardised law -------------------------------------------------

    def std_logpdf(self, z):
        """Log density of the standard (loc 0, scale 1) member at ``z``."""
        if self.kind is FamilyKind.GAUSSIAN:
            return -0.5 * z * z - _LOG_SQRT_2PI
        if self.kind is FamilyKind.GUMBEL:
            return -z - np.exp(-z)
        nu = self.df
        const = gammaln(0.5 * (nu + 1)) - gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
        return const - 0.5 * (nu + 1) * np.log1p(z * z / nu)

    def std_dlogpdf(self, z):
        """Derivative of :meth:`std_logpdf` with respect to ``z``."""
        if self.kind is FamilyKind.GAUSSIAN:
            return -z
        if self.kind is FamilyKind.GUMBEL:
            return -1.0 + np.exp(-z)
        nu = self.df
        return -(nu + 1) * z / (nu + z * z)

    def std_rvs(self, rng, size):
        if self.kind is FamilyKind.GAUSSIAN:
            return rng.standard_normal(size)
        if self.kind is FamilyKind.GUMBEL:
            return rng.gumbel(0.0, 1.0, size)
        return rng.standard_t(self.df, size)

    def std_isf(self, q):
        """Upper ``q`` quantile of the standard member."""
        if self.kind is FamilyKind.GAUSSIAN:
            return stats.norm.isf(q)
        if self.kind is FamilyKind.GUMBEL:
            return stats.gumbel_r.isf(q)
        return stats.t.isf(q, self.df)

    def std_ppf(self, q):
        if self.kind is FamilyKind.GAUSSIAN:
            return stats.norm.ppf(q)
        if self.kind is FamilyKind.GUMBEL:
            return stats.gumbel_r.ppf(q)
        return stats.t.ppf(q, self.df)

    # -- location-scale member -----------------------------------------

    def logpdf(self, x, loc, scale):
        with np.errstate(over="ignore"):  # overflow of z is the -inf limit
            return self.std_logpdf((x - loc) / scale) - np.log(scale)

    def scores(self, x, loc, scale):
        """Derivatives of ``log f(x | loc, scale)`` w.r.t. loc and scale."""
        z = (x - loc) / scale
        d = self.std_dlogpdf(z)
        return -d / scale, -(1.0 + z * d) / scale


GAUSSIAN = ComponentFamily()


def log_sum_exp_cols(B):
    """``log(sum(exp(B), axis=0))`` with the max shifted out.

    A lean :func:`scipy.special.logsumexp` for the inner loops, which keep
    components on the leading axis so the reductions run over contiguous
    rows. Columns that are entirely ``-inf`` give ``-inf``.
    """
    m = B.max(axis=0)
    if not np.all(np.isfinite(m)):
        m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(B - m).sum(axis=0)) + m


def log_sum_exp_rows(A):
    """``log(sum(exp(A), axis=-1))`` for a 2-d (or 1-d) array."""
    A = np.asarray(A)
    if A.ndim == 1:
        return log_sum_exp_cols(A[:, None])[0]
    return log_sum_exp_cols(np.ascontiguousarray(A.T))


def _as_family(family):
    if family is None:
        return GAUSSIAN
    if isinstance(family, ComponentFamily):
        return family
    if isinstance(family, dict):
        return ComponentFamily.from_dict(family)
    return ComponentFamily(FamilyKind(family))


@dataclass(frozen=True)
class MixtureParams:
    """Weights, locations and scales of a ``k``-component mixture.

    Arrays are copied to read-only float64 vectors on construction and the
    simplex / positivity invariants are checked.
    """

    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    family: ComponentFamily = field(default=GAUSSIAN)

    def __post_init__(self):
        p = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.locations, dtype=float).reshape(-1)
        sigma = np.array(self.scales, dtype=float).reshape(-1)
        if not (p.size == mu.size == sigma.size) or p.size == 0:
            raise ParameterDomainError("weights, locations and scales must have the same length k >= 1")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ParameterDomainError(f"weights must lie in [0, 1], got {p}")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL * max(1, p.size):
            raise ParameterDomainError(f"weights must sum to 1, got {p.sum()!r}")
        if not np.all(np.isfinite(mu)):
            raise ParameterDomainError("locations must be finite")
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ParameterDomainError(f"scales must be positive, got {sigma}")
        for name, arr in (("weights", p), ("locations", mu), ("scales", sigma)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        fam = self.family
        if isinstance(fam, (list, tuple)):
            fams = tuple(_as_family(f) for f in fam)
            if len(fams) != p.size:
                raise ParameterDomainError(f"{len(fams)} component families given for k={p.size}")
            fam = fams[0] if all(f == fams[0] for f in fams) else fams
        else:
            fam = _as_family(fam)
        object.__setattr__(self, "family", fam)

    @classmethod
    def _trusted(cls, weights, locations, scales, family):
        """Build without validation; ``family`` must already be normalised.

        For inner loops whose inputs are valid by construction.
        """
        obj = object.__new__(cls)
        object.__setattr__(obj, "weights", weights)
        object.__setattr__(obj, "locations", locations)
        object.__setattr__(obj, "scales", scales)
        object.__setattr__(obj, "family", family)
        return obj

    @property
    def k(self):
        return self.weights.size

    @property
    def homogeneous(self):
        return isinstance(self.family, ComponentFamily)

    @property
    def families(self):
        """One :class:`ComponentFamily` per component."""
        return (self.family,) * self.k if self.homogeneous else self.family

    def component_logpdf(self, x):
        """``log f_l(x)`` for every component, shape ``x.shape + (k,)``."""
        x = np.asarray(x, dtype=float)[..., None]
        if self.homogeneous:
            return self.family.logpdf(x, self.locations, self.scales)
        return np.concatenate(
            [f.logpdf(x, m, s) for f, m, s in zip(self.family, self.locations, self.scales)], axis=-1
        )

    def component_logpdf_t(self, x):
        """``log f_l(x_i)`` as a ``(k, n)`` array for 1-d ``x``."""
        x = np.asarray(x, dtype=float)
        if self.homogeneous:
            return self.family.logpdf(x, self.locations[:, None], self.scales[:, None])
        return np.stack([f.logpdf(x, m, s) for f, m, s in zip(self.family, self.locations, self.scales)])

    def component_scores_t(self, x):
        """Location and scale scores as two ``(k, n)`` arrays for 1-d ``x``."""
        x = np.asarray(x, dtype=float)
        if self.homogeneous:
            return self.family.scores(x, self.locations[:, None], self.scales[:, None])
        parts = [f.scores(x, m, s) for f, m, s in zip(self.family, self.locations, self.scales)]
        return np.stack([a for a, _ in parts]), np.stack([b for _, b in parts])

    def component_scores(self, x):
        """Location and scale scores of every component at ``x``."""
        x = np.asarray(x, dtype=float)[..., None]
        if self.homogeneous:
            return self.family.scores(x, self.locations, self.scales)
        parts = [f.scores(x, m, s) for f, m, s in zip(self.family, self.locations, self.scales)]
        return np.concatenate([a for a, _ in parts], axis=-1), np.concatenate([b for _, b in parts], axis=-1)

    def draw(self, rng, n):
        """``n`` draws with their component labels (labels drawn first)."""
        u = rng.random(n)
        cum = np.cumsum(self.weights)
        labels = np.minimum(np.searchsorted(cum / cum[-1], u, side="right"), self.k - 1)
        if self.homogeneous:
            eps = self.family.std_rvs(rng, n)
        else:
            eps = np.empty(n)
            for l, f in enumerate(self.family):
                sel = labels == l
                eps[sel] = f.std_rvs(rng, int(sel.sum()))
        return self.locations[labels] + self.scales[labels] * eps, labels

    def permuted(self, order):
        order = np.asarray(order)
        fam = self.family if self.homogeneous else tuple(self.family[i] for i in order)
        return MixtureParams(self.weights[order], self.locations[order], self.scales[order], fam)

    def to_dict(self):
        return {
            "family": self.family.to_dict() if self.homogeneous else [f.to_dict() for f in self.family],
            "weights": self.weights.tolist(),
            "locations": self.locations.tolist(),
            "scales": self.scales.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            fam = d.get("family")
            fam = [_as_family(f) for f in fam] if isinstance(fam, list) else _as_family(fam)
            return cls(d["weights"], d["locations"], d["scales"], fam)
        except KeyError as exc:
            raise ParameterDomainError(f"model description is missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class ReparamParams:
    """Reference-component parametrisation of a mixture.

    Component 1 is the reference: ``location = mu``, ``scale = tau``. Each
    later component is a perturbation of the previous one::

        mu_l    = mu_{l-1} + sigma_{l-1} * delta_l
        sigma_l = sigma_{l-1} * ratio_l

    and the weights are stick-breaking fractions: ``p_1 = p``,
    ``p_l = (1-p)(1-q_1)...(1-q_{l-2}) q_{l-1}`` for ``2 <= l < k`` and the
    last component takes the remaining mass.
    """

    mu: float
    tau: float
    deltas: np.ndarray
    ratios: np.ndarray
    p: float
    q: np.ndarray
    family: ComponentFamily = field(default=GAUSSIAN)

    def __post_init__(self):
        if not self.tau > 0:
            raise ParameterDomainError(f"reference scale tau must be positive, got {self.tau}")
        for name in ("deltas", "ratios", "q"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.ratios <= 0):
            raise ParameterDomainError("scale ratios must be positive")


def to_reparam(params: MixtureParams) -> ReparamParams:
    """Express ``params`` relative to component 1 (see :class:`ReparamParams`)."""
    p, mu, sigma = params.weights, params.locations, params.scales
    k = params.k
    deltas = (mu[1:] - mu[:-1]) / sigma[:-1]
    ratios = sigma[1:] / sigma[:-1]
    q = np.zeros(max(k - 2, 0))
    remaining = 1.0 - p[0]
    for l in range(1, k - 1):
        q[l - 1] = p[l] / remaining if remaining > 0 else 0.0
        remaining -= p[l]
    return ReparamParams(float(mu[0]), float(sigma[0]), deltas, ratios, float(p[0]) if k > 1 else 1.0, q, params.family)


def from_reparam(r: ReparamParams, k: int) -> MixtureParams:
    """Inverse of :func:`to_reparam` for a ``k``-component mixture."""
    if r.deltas.size != k - 1 or r.ratios.size != k - 1 or r.q.size != max(k - 2, 0):
        raise ParameterDomainError(f"reparametrised vectors do not match k={k}")
    mu = np.empty(k)
    sigma = np.empty(k)
    mu[0], sigma[0] = r.mu, r.tau
    for l in range(1, k):
        mu[l] = mu[l - 1] + sigma[l - 1] * r.deltas[l - 1]
        sigma[l] = sigma[l - 1] * r.ratios[l - 1]
    p = np.empty(k)
    if k == 1:
        p[0] = 1.0
    else:
        p[0] = r.p
        stick = 1.0 - r.p
        for l in range(1, k - 1):
            p[l] = stick * r.q[l - 1]
            stick *= 1.0 - r.q[l - 1]
        p[k - 1] = stick
    return MixtureParams(p, mu, sigma, r.family)


@dataclass(frozen=True)
class Dataset:
    """A univariate sample.

    ``values`` hold the analysed observations, after ``transform`` (``"none"``
    or ``"log"``) was applied to the values as read.
    """

    values: np.ndarray
    name: str = "data"
    transform: str = "none"

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size == 0:
            raise ParameterDomainError("a dataset needs at least one observation")
        if not np.all(np.isfinite(v)):
            raise ParameterDomainError("observations must be finite")
        if self.transform not in ("none", "log"):
            raise ParameterDomainError(f"unknown transform {self.transform!r}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_raw(cls, raw, name="data", transform="none"):
        raw = np.asarray(raw, dtype=float)
        if transform == "log":
            if np.any(raw <= 0):
                raise ParameterDomainError("log transform requires strictly positive values")
            raw = np.log(raw)
        return cls(raw, name, transform)

    @property
    def n(self):
        return self.values.size

    def __len__(self):
        return self.values.size

    def to_csv(self, path, header="value"):
        Path(path).write_text(header + "\n" + "".join(f"{x!r}\n" for x in self.values.tolist()))


def _values(data):
    if isinstance(data, Dataset):
        return data.values
    return np.asarray(data, dtype=float).reshape(-1)


def component_log_densities(x, params: MixtureParams):
    """Matrix of ``log p_l + log f_l(x_i)``, shape ``(len(x), k)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.log(params.weights)
    return logp + params.component_logpdf(x)


def log_density(x, params: MixtureParams):
    """Log mixture density at ``x`` (scalar or array), via log-sum-exp."""
    out = log_sum_exp_rows(component_log_densities(x, params))
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(data, params: MixtureParams) -> float:
    """Sum of :func:`log_density` over the observations."""
    x = _values(data)
    if x.size == 0:
        raise ParameterDomainError("empty dataset")
    return float(np.sum(log_density(x, params)))


def complete_log_likelihood(data, z, params: MixtureParams) -> float:
    """Log-likelihood of the data augmented with 0-based allocations ``z``.

    ``sum_l sum_{i: z_i = l} log f_l(x_i) + sum_l n_l log p_l``; components
    with ``n_l = 0`` contribute nothing, even when ``p_l = 0``.
    """
    x = _values(data)
    z = np.asarray(z)
    if z.shape != x.shape:
        raise AllocationError(f"allocation vector has length {z.size}, expected {x.size}")
    if not np.issubdtype(z.dtype, np.integer) or np.any(z < 0) or np.any(z >= params.k):
        raise AllocationError(f"allocations must be integers in 0..{params.k - 1}")
    logf = np.take_along_axis(params.component_logpdf(x), z[:, None], axis=1)[:, 0]
    counts = np.bincount(z, minlength=params.k)
    used = counts > 0
    with np.errstate(divide="ignore"):
        logp = np.log(params.weights[used])
    return float(np.sum(logf) + np.sum(counts[used] * logp))


def brute_force_log_likelihood(data, params: MixtureParams, guard: int = BRUTE_FORCE_GUARD) -> float:
    """Log-likelihood by explicit summation over all ``k**n`` allocations.

    Slow by construction; used to check :func:`log_likelihood`.
    """
    x = _values(data)
    n, k = x.size, params.k
    if k**n > guard:
        raise InstanceTooLargeError(f"k**n = {k}**{n} exceeds the enumeration guard {guard}")
    terms = np.fromiter(
        (complete_log_likelihood(x, np.array(z), params) for z in itertools.product(range(k), repeat=n)),
        dtype=float,
        count=k**n,
    )
    return float(logsumexp(terms))


def simulate(n: int, params: MixtureParams, seed) -> Dataset:
    """Draw ``n`` i.i.d. observations: a component label, then its law."""
    if int(n) != n or n <= 0:
        raise ValueError(f"sample size must be a positive integer, got {n!r}")
    x, _ = params.draw(np.random.default_rng(seed), int(n))
    return Dataset(x, name="simulated")
