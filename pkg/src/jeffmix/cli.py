"""Command-line front end.

Every subcommand is non-interactive. Config files are JSON with an optional
``schema_version`` (currently 1); command-line flags override them. The
output directory is ``--out``, else ``$JEFFMIX_OUT``, else ``jeffmix_out``.

Exit status: 0 on success, 2 on usage or configuration errors, 1 on
runtime errors (including a missing dataset).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .datasets import load_dataset
from .errors import ConfigError, JeffmixError, ParameterDomainError
from .fisher import IntegratorConfig, Scenario, fim
from .hierarchical import HierarchicalHyper, log_hier_prior
from .jeffreys import log_det_psd, log_jeffreys
from .mcmc import PriorMode, diagnose, load_trace, make_prior, mcmc_config_from_dict, run_chain, save_trace
from .mixture import ComponentFamily, FamilyKind, MixtureParams
from .outputs import write_json

OUT_ENV = "JEFFMIX_OUT"
DEFAULT_OUT = "jeffmix_out"


# -- argument helpers ----------------------------------------------------------


def parse_family(text: str) -> ComponentFamily:
    """``gaussian``, ``gumbel``, ``student_t:DF`` (alias ``t:DF``)."""
    name, _, arg = text.partition(":")
    name = {"t": "student_t", "normal": "gaussian"}.get(name.strip().lower(), name.strip().lower())
    try:
        kind = FamilyKind(name)
    except ValueError:
        raise ConfigError(f"unknown family {text!r}", field="family") from None
    if kind is FamilyKind.STUDENT_T:
        if not arg:
            raise ConfigError("student_t needs degrees of freedom, e.g. student_t:5", field="family")
        try:
            return ComponentFamily.student_t(float(arg))
        except (ValueError, ParameterDomainError) as exc:
            raise ConfigError(str(exc), field="family") from None
    return ComponentFamily(kind)


def _method(text):
    try:
        return IntegratorConfig.parse(text)
    except (ValueError, ParameterDomainError) as exc:
        raise ConfigError(str(exc), field="method") from None


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}", field="config") from None
    if not isinstance(d, dict):
        raise ConfigError("top level must be an object", field="config")
    return d


def _read_model(path) -> MixtureParams:
    d = _read_config(path)
    d.pop("schema_version", None)
    try:
        return MixtureParams.from_dict(d)
    except (ParameterDomainError, ValueError) as exc:
        raise ConfigError(str(exc), field="model") from None


def _out_dir(args, config=None):
    out = args.out or (config or {}).get("out") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    return Path(out)


def _mcmc(args, config):
    cfg = mcmc_config_from_dict(config.get("mcmc"))
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if getattr(args, "prior", None):
        kw["prior_mode"] = PriorMode(args.prior)
    if getattr(args, "method", None):
        kw["integrator"] = _method(args.method)
    if getattr(args, "iterations", None) is not None:
        kw["iterations"] = args.iterations
    if getattr(args, "burn_in", None) is not None:
        kw["burn_in"] = args.burn_in
    try:
        return replace(cfg, **kw)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc), field="mcmc") from None


def _threads(args, config):
    if args.threads is not None:
        return args.threads
    if "threads" in config:
        return config["threads"]
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _data(args, config):
    source = args.data or config.get("data")
    if source is None:
        raise ConfigError("a dataset is required (--data or 'data' in the config)", field="data")
    return load_dataset(source, transform=args.transform or config.get("transform"))


# -- subcommands ------------------------------------------------------------------


def cmd_fim(args):
    model = _read_model(args.model)
    scenario = Scenario(args.scenario, model.k)
    cfg = _method(args.method or "auto")
    F = fim(model, scenario, cfg)
    lj = log_jeffreys(model, scenario, cfg)
    np.set_printoptions(precision=8, suppress=False, linewidth=120)
    print(f"Fisher information ({scenario.unknowns.value}, {F.method.label()}), order {list(F.ordering)}")
    print(F.entries)
    print(f"log Jeffreys = {lj.value:.10g}")
    if args.out or os.environ.get(OUT_ENV):
        payload = {"model": model.to_dict(), "scenario": scenario.unknowns.value, "method": F.method.label(),
                   "ordering": list(F.ordering), "fim": F.entries, "log_jeffreys": lj.value, "jitter": lj.jitter}
        write_json(_out_dir(args) / "fim.json", payload)
    return 0


def cmd_prior_eval(args):
    model = _read_model(args.model)
    cfg = _method(args.method or "auto")
    mode = PriorMode(args.prior or "hierarchical")
    if mode is PriorMode.HIERARCHICAL:
        hyper = HierarchicalHyper(args.mu0, args.zeta0)
        value = log_hier_prior(model, hyper, cfg)
        extra = {"mu0": args.mu0, "zeta0": args.zeta0}
    else:
        value = make_prior(mode, cfg).expensive(model)
        extra = {}
    print(f"log prior ({mode.value}) = {value:.10g}")
    if args.out or os.environ.get(OUT_ENV):
        write_json(_out_dir(args) / "prior.json", {"model": model.to_dict(), "prior": mode.value, "method": cfg.label(), "log_prior": value, **extra})
    return 0


def _k_family(args, config):
    k = args.k if args.k is not None else config.get("k", 10)
    fam = parse_family(args.family or config.get("family", "gaussian"))
    if not isinstance(k, int) or k < 1:
        raise ConfigError("must be a positive integer", field="k")
    return k, fam


def cmd_sample(args):
    config = _read_config(args.config)
    data = _data(args, config)
    k, fam = _k_family(args, config)
    mcmc = _mcmc(args, config)
    tr = run_chain(data, k, fam, mcmc)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    save_trace(tr, out / f"trace_{data.name}.npz")
    report = diagnose(tr, mcmc.thresholds)
    write_json(out / f"sample_{data.name}.json", {"dataset": data.name, "k": k, "family": fam.to_dict(), "mcmc": mcmc.to_dict(),
                                                   "draws": len(tr), "diagnostics": report.to_dict(), "prior_failures": tr.prior_failures})
    print(f"{len(tr)} draws of a {k}-component {fam.kind.value} mixture -> {out / f'trace_{data.name}.npz'}")
    return 0


def cmd_analyze(args):
    from .experiments import dataset_analysis

    config = _read_config(args.config)
    data = _data(args, config)
    k, fam = _k_family(args, config)
    mcmc = _mcmc(args, config)
    res = dataset_analysis(data, k, fam, mcmc, name=data.name)
    out = _out_dir(args, config)
    res.write(out, data.values)
    print(res.summary.table())
    print(f"outputs in {out}")
    return 0


def cmd_study(args):
    from .experiments import StudyConfig, run_study

    config = _read_config(args.config)
    overrides = {"kind": args.kind, "seed": args.seed, "threads": _threads(args, config)}
    if args.prior or args.method:
        overrides["mcmc"] = _mcmc(args, config)
    cfg = StudyConfig.from_dict(config, **overrides)
    cfg = replace(cfg, out_dir=str(_out_dir(args, config)))
    res = run_study(cfg)
    print(f"{cfg.kind}: {len(res.records)} records -> {cfg.out_dir}")
    return 0


def cmd_diagnose(args):
    try:
        tr = load_trace(args.trace)
    except FileNotFoundError:
        raise FileNotFoundError(f"trace file not found: {args.trace}") from None
    report = diagnose(tr, tr.config.thresholds if tr.config else None)
    d = report.to_dict()
    print(json.dumps({k: d[k] for k in ("stuck", "diverged", "longest_stuck_run")}, sort_keys=True))
    if args.out or os.environ.get(OUT_ENV):
        write_json(_out_dir(args) / f"diagnostics_{Path(args.trace).stem}.json", d)
    return 0


def cmd_benchmark(args):
    from .experiments import THREE_COMPONENT_MODEL, StudyConfig, integrator_benchmark

    config = _read_config(args.config)
    config.setdefault("kind", "integrators")
    config.setdefault("replications", 100)
    cfg = StudyConfig.from_dict(config, seed=args.seed)
    model = _read_model(args.model) if args.model else THREE_COMPONENT_MODEL
    res = integrator_benchmark(model, cfg)
    out = _out_dir(args, config)
    res.write(out)
    s = res.summary
    print(f"reference {s['reference']:.8g} ({s['reference_method']}); MC SD by size: "
          + ", ".join(f"{k}: {v:.4f}" for k, v in s["mc_sd"].items()))
    return 0


def cmd_bayes_factor(args):
    from .experiments import bayes_factor

    config = _read_config(args.config)
    data = _data(args, config)
    spec_a = (args.k_a, parse_family(args.family_a))
    spec_b = (args.k_b, parse_family(args.family_b))
    mcmc = _mcmc(args, config)
    res = bayes_factor(data, spec_a, spec_b, mcmc, seed=mcmc.seed)
    write_json(_out_dir(args, config) / f"bayes_factor_{data.name}.json", res.to_dict())
    print(f"BF(A vs B) = {res.bf:.6g}  (log {res.log_bf:.4f} +/- {res.se_log_bf:.4f})")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or {DEFAULT_OUT})")
    common.add_argument("--threads", type=int, help="maximum worker processes (default: available cores)")
    common.add_argument("--method", help="riemann:N | mc:N | gk:TOL | auto")
    common.add_argument("--prior", choices=[m.value for m in PriorMode])

    p = argparse.ArgumentParser(prog="jeffmix", description="Jeffreys-type priors and posterior sampling for mixture models.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("fim", parents=[common], help="Fisher information and log Jeffreys prior of a model")
    s.add_argument("--model", required=True, help="model JSON (weights, locations, scales, family)")
    s.add_argument("--scenario", default="all", choices=["weights", "locations", "all"])
    s.set_defaults(func=cmd_fim)

    s = sub.add_parser("prior-eval", parents=[common], help="log prior density at a model")
    s.add_argument("--model", required=True)
    s.add_argument("--mu0", type=float, default=0.0)
    s.add_argument("--zeta0", type=float, default=1.0)
    s.set_defaults(func=cmd_prior_eval)

    def data_args(s):
        s.add_argument("--data", help="bundled name, name under $JEFFMIX_DATA, or CSV path")
        s.add_argument("--transform", choices=["none", "log"])
        s.add_argument("--k", type=int)
        s.add_argument("--family", help="gaussian | gumbel | student_t:DF")
        s.add_argument("--iterations", type=int)
        s.add_argument("--burn-in", type=int, dest="burn_in")

    s = sub.add_parser("sample", parents=[common], help="run one chain and save the trace")
    data_args(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("analyze", parents=[common], help="fit a dataset and write summary tables and plots")
    data_args(s)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("study", parents=[common], help="run a simulation study")
    s.add_argument("--kind", help="overfit-null | overfit-k | improperness | weights-shape | integrators")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("diagnose", parents=[common], help="stuck/divergence diagnostics of a saved trace")
    s.add_argument("--trace", required=True)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("benchmark-integrators", parents=[common], help="stability of the quadrature rules")
    s.add_argument("--model", help="model JSON (default: the three-component benchmark model)")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("bayes-factor", parents=[common], help="Bayes factor between two mixture models")
    s.add_argument("--data")
    s.add_argument("--transform", choices=["none", "log"])
    s.add_argument("--k-a", type=int, default=2, dest="k_a")
    s.add_argument("--family-a", default="gumbel", dest="family_a")
    s.add_argument("--k-b", type=int, default=2, dest="k_b")
    s.add_argument("--family-b", default="gaussian", dest="family_b")
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", type=int, dest="burn_in")
    s.set_defaults(func=cmd_bayes_factor)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"jeffmix: configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"jeffmix: {exc}", file=sys.stderr)
        return 1
    except JeffmixError as exc:
        print(f"jeffmix: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
