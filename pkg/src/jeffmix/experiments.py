"""Simulation studies, data analyses and benchmarks.

Every study is a grid of independent cells (sample size, number of
components, replication, ...). Each cell draws its data and its chain from
seeds derived from the master seed and the cell's indices, so results do
not depend on the order or process in which cells run. Outputs go through
:mod:`jeffmix.outputs`: a JSON summary, a long-format CSV and an SVG
quick-look per study.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bridge import bridge_log_marginal
from .errors import ConfigError, JeffmixError, ParameterDomainError
from .fisher import IntegratorConfig, Scenario, fim
from .jeffreys import log_det_psd, log_jeffreys, log_jeffreys_weights
from .mcmc import ChainTrace, McmcConfig, PriorMode, diagnose, mcmc_config_from_dict, relabel, run_chain
from .mixture import GAUSSIAN, ComponentFamily, MixtureParams, log_density, simulate
from .outputs import LongRow, write_json, write_long_csv, write_svg

__all__ = [
    "STUDY_KINDS",
    "StudyConfig",
    "StudyResult",
    "PosteriorSummary",
    "PredictiveDensity",
    "AnalysisResult",
    "BayesFactorResult",
    "cell_seed",
    "mcmc_config_from_dict",
    "overfit_null_study",
    "overfit_k_study",
    "dataset_analysis",
    "predictive_density",
    "weights_prior_shape_study",
    "improperness_study",
    "integrator_benchmark",
    "bayes_factor",
    "run_study",
    "THREE_COMPONENT_MODEL",
    "OVERFIT_TRUTH",
]

STUDY_KINDS = ("overfit-null", "overfit-k", "improperness", "weights-shape", "integrators")

THREE_COMPONENT_MODEL = MixtureParams([0.25, 0.10, 0.65], [-10.0, 0.0, 15.0], [1.0, 5.0, 7.0])
OVERFIT_TRUTH = MixtureParams([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])


def cell_seed(master: int, *key: int) -> int:
    """Independent 63-bit seed for the cell ``key`` of a study."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- configuration -----------------------------------------------------------

# desk-scale defaults: 2e4 sweeps, 5e3 burn-in, 5 replications
DESK_MCMC = McmcConfig(iterations=20000, burn_in=5000)


@dataclass(frozen=True)
class StudyConfig:
    """Declarative description of one study.

    ``options`` carries study-specific settings (grids, scenario lists,
    benchmark sizes); see each study function.
    """

    kind: str
    n: tuple = (100, 1000)
    replications: int = 5
    k: tuple = (2,)
    mcmc: McmcConfig = field(default_factory=lambda: DESK_MCMC)
    out_dir: str | None = None
    seed: int = 0
    threads: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}; choose from {STUDY_KINDS}", field="kind")
        if self.replications < 1:
            raise ConfigError("must be >= 1", field="replications")
        if any(int(n) < 1 for n in self.n):
            raise ConfigError("all sample sizes must be >= 1", field="n")
        if any(int(k) < 1 for k in self.k):
            raise ConfigError("all k must be >= 1", field="k")
        if self.threads < 1:
            raise ConfigError("must be >= 1", field="threads")
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))

    @classmethod
    def from_dict(cls, d: dict, **overrides):
        d = dict(d)
        version = d.pop("schema_version", 1)
        if version != 1:
            raise ConfigError(f"unsupported schema_version {version}", field="schema_version")
        known = {"kind", "n", "replications", "k", "mcmc", "out", "seed", "threads", "options"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", field="config")
        if "kind" not in d and "kind" not in overrides:
            raise ConfigError("missing", field="kind")
        kw = {
            "kind": d.get("kind"),
            "n": tuple(_as_list(d.get("n", cls.n), "n")),
            "replications": _as_int(d.get("replications", cls.replications), "replications"),
            "k": tuple(_as_list(d.get("k", cls.k), "k")),
            "mcmc": mcmc_config_from_dict(d.get("mcmc"), DESK_MCMC),
            "out_dir": d.get("out"),
            "seed": _as_int(d.get("seed", 0), "seed"),
            "threads": _as_int(d.get("threads", 1), "threads"),
            "options": dict(d.get("options", {})),
        }
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def to_dict(self):
        return {
            "kind": self.kind,
            "n": list(self.n),
            "replications": self.replications,
            "k": list(self.k),
            "mcmc": self.mcmc.to_dict(),
            "seed": self.seed,
            "options": self.options,
        }


def _as_int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"must be an integer, got {v!r}", field=name)
    return v


def _as_list(v, name):
    v = v if isinstance(v, (list, tuple)) else [v]
    return [_as_int(x, name) for x in v]


@dataclass
class StudyResult:
    kind: str
    config: dict
    records: list
    summary: dict
    rows: list = field(default_factory=list)
    figure: object = None  # callable(result) -> matplotlib figure

    def payload(self):
        return {"study": self.kind, "config": self.config, "summary": self.summary, "records": self.records}

    def write(self, out_dir):
        """Write ``<kind>.json``, ``<kind>.csv`` and ``<kind>.svg``; return the paths."""
        out = Path(out_dir)
        paths = [write_json(out / f"{self.kind}.json", self.payload()), write_long_csv(out / f"{self.kind}.csv", self.rows)]
        if self.figure is not None:
            paths.append(write_svg(out / f"{self.kind}.svg", self.figure(self)))
        return paths


def _map(fn, tasks, threads):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class PredictiveDensity:
    """Posterior mean of the mixture density on a grid, with a pointwise band."""

    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    def integral(self):
        return float(np.trapezoid(self.mean, self.grid))

    def to_dict(self):
        return {"grid": self.grid, "mean": self.mean, "lower": self.lower, "upper": self.upper, "level": self.level}


def predictive_density(trace: ChainTrace, grid, level=0.95, max_draws=None, chunk=500) -> PredictiveDensity:
    """Average the per-draw mixture densities over ``grid``.

    The band holds the pointwise ``(1 - level)/2`` and ``(1 + level)/2``
    quantiles across draws. ``max_draws`` thins the trace evenly.
    """
    if len(trace) == 0:
        raise ParameterDomainError("predictive density of an empty trace")
    grid = np.asarray(grid, dtype=float)
    idx = np.arange(len(trace))
    if max_draws is not None and idx.size > max_draws:
        idx = np.linspace(0, idx.size - 1, max_draws).astype(int)
    dens = np.empty((idx.size, grid.size))
    fams = trace.params(0).families
    for start in range(0, idx.size, chunk):
        sel = idx[start : start + chunk]
        p = trace.weights[sel][:, :, None]
        mu = trace.locations[sel][:, :, None]
        s = trace.scales[sel][:, :, None]
        logf = np.stack([fams[l].logpdf(grid[None, :], mu[:, l], s[:, l]) for l in range(trace.k)], axis=1)
        with np.errstate(divide="ignore"):
            A = logf + np.log(p)
        m = A.max(axis=1)
        dens[start : start + sel.size] = np.exp(m) * np.exp(A - m[:, None, :]).sum(axis=1)
    a = (1 - level) / 2
    lower, upper = np.quantile(dens, [a, 1 - a], axis=0)
    mean = dens.mean(axis=0)
    # the mean can leave a very skewed pointwise band; keep the invariant
    return PredictiveDensity(grid, mean, np.minimum(lower, mean), np.maximum(upper, mean), level)


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-component posterior summaries, sorted by posterior-mean weight.

    ``components`` holds one dict per displayed component (posterior-mean
    weight at least ``display_threshold``) with means, standard deviations
    and central credible intervals of weight, location and scale.
    ``tail_weight`` is the total posterior-mean weight of the rest.
    """

    components: list
    tail_weight: float
    n_detected: int
    n_components: int
    level: float = 0.95
    detect_threshold: float = 0.02
    display_threshold: float = 0.01

    @classmethod
    def from_trace(cls, trace: ChainTrace, level=0.95, detect_threshold=0.02, display_threshold=0.01):
        tr = relabel(trace)
        a = (1 - level) / 2
        w_mean = tr.weights.mean(axis=0)
        order = np.argsort(-w_mean, kind="stable")
        comps = []
        for rank, l in enumerate(order):
            if w_mean[l] < display_threshold:
                continue
            row = {"rank": rank + 1}
            for name, arr in (("weight", tr.weights[:, l]), ("mu", tr.locations[:, l]), ("sigma", tr.scales[:, l])):
                lo, hi = np.quantile(arr, [a, 1 - a])
                row[f"{name}_mean"] = float(arr.mean())
                row[f"{name}_sd"] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                row[f"{name}_ci"] = [float(lo), float(hi)]
            comps.append(row)
        tail = float(w_mean[w_mean < display_threshold].sum())
        return cls(comps, tail, int(np.sum(w_mean > detect_threshold)), tr.k, level, detect_threshold, display_threshold)

    @property
    def weights(self):
        return [c["weight_mean"] for c in self.components]

    def to_dict(self):
        return {
            "components": self.components,
            "tail_weight": self.tail_weight,
            "n_detected": self.n_detected,
            "n_components": self.n_components,
            "level": self.level,
            "detect_threshold": self.detect_threshold,
            "display_threshold": self.display_threshold,
        }

    def table(self) -> str:
        """Plain-text table: weight, then (mean, sd) of location and of scale."""
        lines = [f"{'':4s} {'weight':>8s}  {'mu (mean, sd)':>22s}  {'sigma (mean, sd)':>22s}"]
        for c in self.components:
            lines.append(
                f"p{c['rank']:<3d} {c['weight_mean']:8.3f}  ({c['mu_mean']:9.3f}, {c['mu_sd']:7.3f})  "
                f"({c['sigma_mean']:9.3f}, {c['sigma_sd']:7.3f})"
            )
        lines.append(f"tail {self.tail_weight:8.3f}  (components with weight < {self.display_threshold})")
        lines.append(f"components with weight > {self.detect_threshold}: {self.n_detected}")
        return "\n".join(lines)


# -- overfitting studies -----------------------------------------------------


def _fit_cell(task):
    """Run one chain; returns a record (errors are recorded, not raised)."""
    name, x, k, family, mcmc, meta, grid, truth = task
    rec = dict(meta)
    try:
        tr = run_chain(x, k, family, mcmc)
    except JeffmixError as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
        return rec
    r = relabel(tr)
    w = np.sort(r.weights.mean(axis=0))[::-1]
    rec.update(
        weights=w.tolist(),
        max_weight=float(r.weights.max(axis=1).mean()),
        stuck=bool(tr.stuck),
        diverged=bool(tr.diverged),
        acceptance=dict(sorted(tr.acceptance.items())),
    )
    if grid is not None:
        pd = predictive_density(tr, grid, max_draws=2000)
        rec["predictive"] = pd.mean.tolist()
        rec["band_width"] = float(np.median(pd.upper - pd.lower))
        if truth is not None:
            rec["l1_to_truth"] = float(np.trapezoid(np.abs(pd.mean - np.exp(log_density(grid, truth))), grid))
    return rec


def overfit_null_study(cfg: StudyConfig) -> StudyResult:
    """Two-component fits to standard normal samples.

    For each ``n`` and replication: posterior mean of the largest weight
    under the hierarchical prior. Options: none.
    """
    mcmc = replace(cfg.mcmc, prior_mode=PriorMode.HIERARCHICAL)
    truth = MixtureParams([1.0], [0.0], [1.0])
    tasks = []
    for i, n in enumerate(cfg.n):
        for rep in range(cfg.replications):
            x = simulate(n, truth, cell_seed(cfg.seed, 0, n, rep)).values
            m = replace(mcmc, seed=cell_seed(cfg.seed, 1, n, rep))
            tasks.append(("overfit-null", x, 2, GAUSSIAN, m, {"n": n, "k": 2, "replication": rep}, None, None))
    records = _map(_fit_cell, tasks, cfg.threads)
    summary = {}
    rows = []
    for n in cfg.n:
        vals = np.array([r["max_weight"] for r in records if r["n"] == n and "max_weight" in r])
        q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75]) if vals.size else (np.nan,) * 3
        summary[str(n)] = {"median": med, "q25": q1, "q75": q3, "iqr": q3 - q1, "failures": int(sum(1 for r in records if r["n"] == n and "error" in r))}
    for r in records:
        if "max_weight" in r:
            rows.append(LongRow("overfit-null", r["n"], 2, r["replication"], "max_weight", None, r["max_weight"]))
            for c, w in enumerate(r["weights"], start=1):
                rows.append(LongRow("overfit-null", r["n"], 2, r["replication"], "weight", c, w))
    return StudyResult("overfit-null", cfg.to_dict(), records, summary, rows, _fig_overfit_null)


def _fig_overfit_null(res):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ns = sorted({r["n"] for r in res.records})
    data = [[r["max_weight"] for r in res.records if r["n"] == n and "max_weight" in r] for n in ns]
    ax.boxplot(data)
    ax.set_xticks(np.arange(1, len(ns) + 1), [str(n) for n in ns])
    ax.set_xlabel("n")
    ax.set_ylabel("posterior mean of the largest weight")
    ax.set_ylim(0.45, 1.02)
    fig.tight_layout()
    return fig


def overfit_k_study(cfg: StudyConfig) -> StudyResult:
    """Fits with ``k`` components to samples of an equal two-Gaussian mixture.

    Options: ``grid`` as ``[lo, hi, points]`` for predictive densities
    (default ``[-8, 8, 321]``).
    """
    mcmc = replace(cfg.mcmc, prior_mode=PriorMode.HIERARCHICAL)
    lo, hi, pts = cfg.options.get("grid", [-8.0, 8.0, 321])
    grid = np.linspace(lo, hi, int(pts))
    tasks = []
    for n in cfg.n:
        for rep in range(cfg.replications):
            x = simulate(n, OVERFIT_TRUTH, cell_seed(cfg.seed, 0, n, rep)).values
            for k in cfg.k:
                m = replace(mcmc, seed=cell_seed(cfg.seed, 1, n, k, rep))
                tasks.append(("overfit-k", x, k, GAUSSIAN, m, {"n": n, "k": k, "replication": rep}, grid, OVERFIT_TRUTH))
    records = _map(_fit_cell, tasks, cfg.threads)
    summary = {}
    rows = []
    for n in cfg.n:
        for k in cfg.k:
            cell = [r for r in records if r["n"] == n and r["k"] == k and "weights" in r]
            if not cell:
                continue
            W = np.array([r["weights"] for r in cell])
            entry = {
                "median_weights": np.median(W, axis=0).tolist(),
                "median_l1_to_truth": float(np.median([r["l1_to_truth"] for r in cell])),
                "median_band_width": float(np.median([r["band_width"] for r in cell])),
            }
            if k >= 3:
                entry["median_sum_two_smallest"] = float(np.median(W[:, -2:].sum(axis=1)))
            summary[f"n={n},k={k}"] = entry
    for r in records:
        if "weights" not in r:
            continue
        for c, w in enumerate(r["weights"], start=1):
            rows.append(LongRow("overfit-k", r["n"], r["k"], r["replication"], "weight", c, w))
        rows.append(LongRow("overfit-k", r["n"], r["k"], r["replication"], "l1_to_truth", None, r["l1_to_truth"]))
    res = StudyResult("overfit-k", cfg.to_dict(), records, summary, rows, _fig_overfit_k)
    res.summary["grid"] = grid.tolist()
    return res


def _fig_overfit_k(res):
    plt = _pyplot()
    ks = sorted({r["k"] for r in res.records})
    ns = sorted({r["n"] for r in res.records})
    grid = np.asarray(res.summary["grid"])
    fig, axes = plt.subplots(2, len(ks), figsize=(3.2 * len(ks), 6), squeeze=False)
    truth = np.exp(log_density(grid, OVERFIT_TRUTH))
    for j, k in enumerate(ks):
        cell = [r for r in res.records if r["k"] == k and "weights" in r]
        ax = axes[0, j]
        for c in range(k):
            ax.boxplot(
                [[r["weights"][c] for r in cell if r["n"] == n] for n in ns],
                positions=np.arange(len(ns)) + c / (k + 1),
                widths=0.8 / (k + 1),
                manage_ticks=False,
            )
        ax.set_xticks(np.arange(len(ns)) + 0.4, [str(n) for n in ns])
        ax.set_title(f"k = {k}")
        ax.set_ylim(-0.02, 1.02)
        ax = axes[1, j]
        for r in cell:
            if r["n"] == ns[-1]:
                ax.plot(grid, r["predictive"], color="0.6", lw=0.7)
        ax.plot(grid, truth, color="C3", lw=1.2)
        ax.set_xlabel(f"x (n = {ns[-1]})")
    axes[0, 0].set_ylabel("posterior mean weights")
    axes[1, 0].set_ylabel("predictive density")
    fig.tight_layout()
    return fig


# -- data analyses -----------------------------------------------------------


@dataclass
class AnalysisResult:
    summary: PosteriorSummary
    predictive: PredictiveDensity
    trace: ChainTrace
    dataset: str = "data"
    n_obs: int = 0

    def payload(self):
        diag = diagnose(self.trace, self.trace.config.thresholds)
        return {
            "dataset": self.dataset,
            "k": self.trace.k,
            "family": _family_dict(self.trace.family),
            "mcmc": self.trace.config.to_dict(),
            "summary": self.summary.to_dict(),
            "predictive": self.predictive.to_dict(),
            "diagnostics": diag.to_dict(),
        }

    def rows(self):
        out = []
        for c in self.summary.components:
            for name in ("weight", "mu", "sigma"):
                for stat in ("mean", "sd"):
                    out.append(LongRow("analyze", self.n_obs, self.trace.k, None, f"{name}_{stat}", c["rank"], c[f"{name}_{stat}"]))
        out.append(LongRow("analyze", self.n_obs, self.trace.k, None, "tail_weight", None, self.summary.tail_weight))
        return out

    def write(self, out_dir, x):
        out = Path(out_dir)
        stem = f"analysis_{self.dataset}"
        return [
            write_json(out / f"{stem}.json", self.payload()),
            write_long_csv(out / f"{stem}.csv", self.rows()),
            write_svg(out / f"{stem}.svg", self.figure(x)),
        ]

    def figure(self, x):
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(x, bins=min(40, max(10, len(x) // 5)), density=True, color="0.85", edgecolor="0.6")
        pd = self.predictive
        ax.fill_between(pd.grid, pd.lower, pd.upper, color="C0", alpha=0.3, lw=0)
        ax.plot(pd.grid, pd.mean, color="C3")
        ax.set_xlabel(self.dataset)
        ax.set_ylabel("density")
        fig.tight_layout()
        return fig


def _family_dict(fam):
    if isinstance(fam, ComponentFamily):
        return fam.to_dict()
    return [f.to_dict() for f in fam]


def dataset_analysis(data, k=10, family=GAUSSIAN, mcmc: McmcConfig | None = None, grid=None, name=None) -> AnalysisResult:
    """Fit a ``k``-component mixture to a dataset and summarise it.

    Parameters
    ----------
    data : Dataset or array_like
        Already transformed as required (e.g. log scale).
    grid : array_like, optional
        Predictive-density grid; default spans the data range padded by 10%
        on each side, 400 points.
    """
    x = np.asarray(getattr(data, "values", data), dtype=float)
    mcmc = mcmc or McmcConfig(iterations=50000, burn_in=10000)
    tr = run_chain(x, k, family, mcmc)
    if grid is None:
        pad = 0.1 * (x.max() - x.min() or 1.0)
        grid = np.linspace(x.min() - pad, x.max() + pad, 400)
    summary = PosteriorSummary.from_trace(tr)
    pd = predictive_density(tr, grid)
    return AnalysisResult(summary, pd, tr, name or getattr(data, "name", "data"), x.size)


# -- prior shapes --------------------------------------------------------------

DEFAULT_SHAPE_SPECS = (
    {"name": "normal-normal", "locations": [-10.0, 10.0], "scales": [1.0, 1.0], "families": [{"kind": "gaussian"}, {"kind": "gaussian"}]},
    *(
        {
            "name": f"normal-t{df}",
            "locations": [-10.0, 10.0],
            "scales": [1.0, 1.0],
            "families": [{"kind": "gaussian"}, {"kind": "student_t", "df": float(df)}],
        }
        for df in (1, 5, 30)
    ),
)


def weights_prior_shape_study(specs=DEFAULT_SHAPE_SPECS, points=199, cfg: IntegratorConfig | None = None) -> StudyResult:
    """Grid-normalised conditional Jeffreys priors of ``p_1`` for ``k = 2``.

    The grid holds the midpoints of ``points`` equal cells of ``(0, 1)``,
    so it is symmetric about 1/2. For each spec the result records the
    normalised density and the prior mass above and below 1/2.
    """
    cfg = cfg or IntegratorConfig("gk")
    grid = (np.arange(points) + 0.5) / points
    records = []
    rows = []
    for spec in specs:
        fams = [ComponentFamily.from_dict(f) for f in spec.get("families", [{"kind": "gaussian"}] * 2)]
        if len(spec["locations"]) != 2:
            raise ParameterDomainError("prior shapes are studied for two components")
        lv = np.array([log_jeffreys_weights([p, 1 - p], spec["locations"], spec["scales"], fams, cfg).value for p in grid])
        dens = np.exp(lv - lv.max())
        dens /= dens.sum() / points
        above = float(dens[grid > 0.5].sum() / points)
        below = float(dens[grid < 0.5].sum() / points)
        records.append({"name": spec["name"], "spec": spec, "density": dens.tolist(), "mass_above": above, "mass_below": below, "asymmetry": abs(above - below)})
        for i, d in enumerate(dens):
            rows.append(LongRow("weights-shape", None, 2, None, f"density[{spec['name']}]", i, float(d)))
    summary = {r["name"]: {"mass_above": r["mass_above"], "mass_below": r["mass_below"], "asymmetry": r["asymmetry"]} for r in records}
    summary["grid"] = grid.tolist()
    return StudyResult("weights-shape", {"points": points, "integrator": cfg.label()}, records, summary, rows, _fig_shapes)


def _fig_shapes(res):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = np.asarray(res.summary["grid"])
    for r in res.records:
        ax.plot(grid, r["density"], label=r["name"])
    ax.set_xlabel("weight of the first component")
    ax.set_ylabel("normalised prior density")
    ax.legend()
    fig.tight_layout()
    return fig


# -- improperness -------------------------------------------------------------

DEFAULT_SCENARIOS = {"close": 1.0, "separated": 5.0}


def _scenario_truth(k, spread):
    mu = np.linspace(-spread, spread, k) if k > 1 else np.zeros(1)
    return MixtureParams(np.full(k, 1.0 / k), mu, np.ones(k))


def improperness_study(cfg: StudyConfig) -> StudyResult:
    """Proportions of stuck and diverging chains per prior and scenario.

    Options: ``modes`` (default all three prior modes), ``scenarios``
    mapping a name to the half-spread of equally spaced true locations
    (default close 1, separated 5), unit scales and equal weights.
    """
    modes = [PriorMode(m) for m in cfg.options.get("modes", [m.value for m in PriorMode])]
    scenarios = dict(cfg.options.get("scenarios", DEFAULT_SCENARIOS))
    tasks = []
    for mi, mode in enumerate(modes):
        for si, (sname, spread) in enumerate(sorted(scenarios.items())):
            for k in cfg.k:
                truth = _scenario_truth(k, spread)
                for n in cfg.n:
                    for rep in range(cfg.replications):
                        x = simulate(n, truth, cell_seed(cfg.seed, 0, si, k, n, rep)).values
                        m = replace(cfg.mcmc, prior_mode=mode, seed=cell_seed(cfg.seed, 1, mi, si, k, n, rep))
                        meta = {"mode": mode.value, "scenario": sname, "n": n, "k": k, "replication": rep}
                        tasks.append(("improperness", x, k, GAUSSIAN, m, meta, None, None))
    records = _map(_fit_cell, tasks, cfg.threads)
    summary = {}
    rows = []
    for mode in modes:
        for sname in sorted(scenarios):
            for k in cfg.k:
                for n in cfg.n:
                    cell = [r for r in records if (r["mode"], r["scenario"], r["k"], r["n"]) == (mode.value, sname, k, n)]
                    ok = [r for r in cell if "error" not in r]
                    st = float(np.mean([r["stuck"] for r in ok])) if ok else float("nan")
                    dv = float(np.mean([r["diverged"] for r in ok])) if ok else float("nan")
                    either = float(np.mean([r["stuck"] or r["diverged"] for r in ok])) if ok else float("nan")
                    summary[f"{mode.value}|{sname}|k={k}|n={n}"] = {
                        "stuck": st,
                        "diverged": dv,
                        "stuck_or_diverged": either,
                        "failed_cells": len(cell) - len(ok),
                    }
    for r in records:
        if "error" in r:
            continue
        tag = f"{r['mode']}|{r['scenario']}"
        rows.append(LongRow("improperness", r["n"], r["k"], r["replication"], f"stuck[{tag}]", None, float(r["stuck"])))
        rows.append(LongRow("improperness", r["n"], r["k"], r["replication"], f"diverged[{tag}]", None, float(r["diverged"])))
    return StudyResult("improperness", cfg.to_dict(), records, summary, rows, _fig_improper)


def _fig_improper(res):
    plt = _pyplot()
    keys = [k for k in res.summary]
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(keys) + 1.5))
    y = np.arange(len(keys))
    ax.barh(y - 0.2, [res.summary[k]["stuck"] for k in keys], height=0.4, color="C0", label="stuck")
    ax.barh(y + 0.2, [res.summary[k]["diverged"] for k in keys], height=0.4, color="C3", label="diverged")
    ax.set_yticks(y, keys, fontsize=7)
    ax.set_xlim(0, 1)
    ax.set_xlabel("proportion of chains")
    ax.legend()
    fig.tight_layout()
    return fig


# -- integrators -----------------------------------------------------------------


def _log_prior_value(model, scenario, cfg):
    F = fim(model, scenario, cfg).entries
    logdet, _ = log_det_psd(F)
    return 0.5 * logdet


def integrator_benchmark(model: MixtureParams = THREE_COMPONENT_MODEL, cfg: StudyConfig | None = None) -> StudyResult:
    """Stability of Monte Carlo and Riemann approximations of the log prior.

    Options: ``mc_sizes`` (default 500..1700 by 200), ``riemann_knots``
    (default 100..1700), ``scenario`` (default ``all``), ``sigma_sweep``
    (scales for the ``0.5 N(-1, s) + 0.5 N(2, s)`` sweep). Replications
    default to 100. The Gauss-Kronrod value is the reference.
    """
    cfg = cfg or StudyConfig("integrators", replications=100)
    opt = cfg.options
    scenario = Scenario(opt.get("scenario", "all"), model.k)
    mc_sizes = [int(v) for v in opt.get("mc_sizes", range(500, 1701, 200))]
    knots = [int(v) for v in opt.get("riemann_knots", [100, 200, 300, 400, 550, 700, 900, 1100, 1300, 1500, 1700])]
    sweep = [float(v) for v in opt.get("sigma_sweep", [1.0, 0.5, 0.2, 0.1, 0.05])]
    M = cfg.replications
    ref_cfg = IntegratorConfig("gk")
    F_ref = fim(model, scenario, ref_cfg).entries
    reference = 0.5 * log_det_psd(F_ref)[0]
    records = []
    rows = []
    for size in mc_sizes:
        vals = [_log_prior_value(model, scenario, IntegratorConfig("mc", samples=size, seed=cell_seed(cfg.seed, 0, size, r))) for r in range(M)]
        records.append({"method": "mc", "size": size, "values": vals, "mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)) if M > 1 else 0.0})
    for pts in knots:
        v = _log_prior_value(model, scenario, IntegratorConfig("riemann", points=pts))
        vals = [v] * M  # deterministic: every replication is identical
        rel = float(np.max(np.abs(fim(model, scenario, IntegratorConfig("riemann", points=pts)).entries - F_ref) / np.abs(F_ref)))
        records.append({"method": "riemann", "size": pts, "values": vals, "mean": v, "sd": 0.0, "max_rel_element_error": rel})
    sweep_records = []
    for s in sweep:
        m2 = MixtureParams([0.5, 0.5], [-1.0, 2.0], [s, s])
        sc2 = Scenario(scenario.unknowns, 2)
        vals = [_log_prior_value(m2, sc2, IntegratorConfig("mc", samples=1500, seed=cell_seed(cfg.seed, 1, r))) for r in range(M)]
        sweep_records.append({"sigma": s, "mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)) if M > 1 else 0.0})
    for r in records:
        for i, v in enumerate(r["values"]):
            rows.append(LongRow("integrators", r["size"], model.k, i, f"log_prior[{r['method']}]", None, float(v)))
    for r in sweep_records:
        rows.append(LongRow("integrators", 1500, 2, None, f"mc_sd_at_sigma={r['sigma']}", None, r["sd"]))
    summary = {
        "reference": reference,
        "reference_method": ref_cfg.label(),
        "mc_sd": {str(r["size"]): r["sd"] for r in records if r["method"] == "mc"},
        "riemann_abs_error": {str(r["size"]): abs(r["mean"] - reference) for r in records if r["method"] == "riemann"},
        "riemann_max_rel_element_error": {str(r["size"]): r["max_rel_element_error"] for r in records if r["method"] == "riemann"},
        "sigma_sweep": sweep_records,
        "model": model.to_dict(),
        "scenario": scenario.unknowns.value,
    }
    return StudyResult("integrators", cfg.to_dict(), records, summary, rows, _fig_integrators)


def _fig_integrators(res):
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    ref = res.summary["reference"]
    for ax, method in zip(axes, ("mc", "riemann")):
        recs = [r for r in res.records if r["method"] == method]
        ax.boxplot([r["values"] for r in recs])
        ax.set_xticks(np.arange(1, len(recs) + 1), [str(r["size"]) for r in recs])
        ax.axhline(ref, color="C3")
        ax.set_title("Monte Carlo" if method == "mc" else "Riemann")
        ax.set_xlabel("samples" if method == "mc" else "knots")
        ax.tick_params(axis="x", labelrotation=90)
    axes[0].set_ylabel("log prior")
    fig.tight_layout()
    return fig


# -- Bayes factor ------------------------------------------------------------------


@dataclass(frozen=True)
class BayesFactorResult:
    log_bf: float
    se_log_bf: float
    ml_a: object
    ml_b: object
    spec_a: dict
    spec_b: dict

    @property
    def bf(self):
        return math.exp(self.log_bf)

    def to_dict(self):
        return {
            "log_bayes_factor": self.log_bf,
            "bayes_factor": self.bf,
            "se_log_bayes_factor": self.se_log_bf,
            "model_a": {**self.spec_a, **self.ml_a.to_dict()},
            "model_b": {**self.spec_b, **self.ml_b.to_dict()},
        }


def _spec(spec):
    k, fam = spec
    if not isinstance(fam, ComponentFamily):
        fam = ComponentFamily.from_dict(fam) if isinstance(fam, dict) else ComponentFamily(fam)
    return int(k), fam


def bayes_factor(data, spec_a, spec_b, mcmc: McmcConfig | None = None, seed=0) -> BayesFactorResult:
    """Bayes factor of model A against model B by bridge sampling.

    Each spec is ``(k, family)``. Both models use the prior mode of
    ``mcmc`` (hierarchical by default, whose improper third level is
    shared by the two models). Chains and proposals use seeds derived from
    ``seed`` and the model slot, so two identical specs still give two
    independent estimates.
    """
    mcmc = mcmc or DESK_MCMC
    x = np.asarray(getattr(data, "values", data), dtype=float)
    mls = []
    specs = []
    for slot, spec in enumerate((spec_a, spec_b)):
        k, fam = _spec(spec)
        tr = run_chain(x, k, fam, replace(mcmc, seed=cell_seed(seed, slot, 0)))
        mls.append(bridge_log_marginal(tr, x, seed=cell_seed(seed, slot, 1)))
        specs.append({"k": k, "family": fam.to_dict()})
    a, b = mls
    return BayesFactorResult(a.log_ml - b.log_ml, math.hypot(a.se_log, b.se_log), a, b, specs[0], specs[1])


# -- dispatch ----------------------------------------------------------------------


def run_study(cfg: StudyConfig, write=True) -> StudyResult:
    """Run the study named by ``cfg.kind`` and write its outputs."""
    if cfg.kind == "overfit-null":
        res = overfit_null_study(cfg)
    elif cfg.kind == "overfit-k":
        res = overfit_k_study(cfg)
    elif cfg.kind == "improperness":
        res = improperness_study(cfg)
    elif cfg.kind == "weights-shape":
        res = weights_prior_shape_study(**({"points": int(cfg.options["points"])} if "points" in cfg.options else {}))
    elif cfg.kind == "integrators":
        model = MixtureParams.from_dict(cfg.options["model"]) if "model" in cfg.options else THREE_COMPONENT_MODEL
        res = integrator_benchmark(model, cfg)
    else:  # pragma: no cover - rejected by StudyConfig
        raise ConfigError(f"unknown study kind {cfg.kind!r}", field="kind")
    if write and cfg.out_dir:
        res.write(cfg.out_dir)
    return res


def default_threads():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
