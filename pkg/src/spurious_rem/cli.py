"""Command-line runs: ``fit``, ``simulate`` and ``study``.

Every run reads one JSON config, validates it against the shipped schema
before any computation, and writes outputs that embed the resolved config
and seed. Exit codes: 0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .augment import ChainConfig, ChainError, SpuriousEventSampler, SplineConfig, combine, fit_rem, run_chain
from .augment import baseline_curve
from .events import IngestionError, RiskSet, ingest_covariates, ingest_dyadic, ingest_events
from .events import write_covariates, write_events
from .netstats import StatisticSpec
from .ppois import FitError, ModelSpec
from .simulate import GenerationError, GeneratorSpec, dg_spec, generate, realized_pfe
from .study import SCALES, run_study

logger = logging.getLogger("spurious_rem")

REPORT_FORMAT = "spurious-rem-report/1"
BASELINE_GRID = 201
EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    pass


def load_schema(name: str) -> dict:
    return json.loads(resources.files("spurious_rem").joinpath("schemas", f"{name}.schema.json").read_text())


def validate(obj: dict, name: str) -> None:
    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{name} invalid at {where}: {exc.message}") from None


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    validate(config, "config")
    return config


def resolve(config: dict, command: str, seed: int | None) -> dict:
    """Fill defaults and settle the seed: ``--seed`` > ``seed`` > ``chain.seed`` > 0."""
    cfg = copy.deepcopy(config)
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for command {cfg['command']!r}, not {command!r}")
    cfg["command"] = command
    if seed is None:
        seed = cfg.get("seed", cfg.get("chain", {}).get("seed", 0))
    cfg["seed"] = int(seed)
    cfg["chain"] = {**{"burn_in": 30, "draws": 30, "parallel_chains": 1}, **cfg.get("chain", {}), "seed": cfg["seed"]}
    cfg["fit"] = {**{"gamma": "auto", "max_irls_iter": 50, "tol": 1e-8}, **cfg.get("fit", {})}
    cfg["spline"] = {**{"K": 10, "degree": 3, "penalty_order": 2}, **cfg.get("spline", {})}
    for key in ("true_model", "spurious_model"):
        if key in cfg:
            block = cfg[key]
            cfg[key] = {"statistics": list(block.get("statistics", [])),
                        "baseline": block.get("baseline", key == "true_model")}
    if command == "fit":
        if "true_model" not in cfg:
            cfg["true_model"] = {"statistics": [], "baseline": True}
        io = cfg.setdefault("io", {})
        if "events" not in io:
            raise ConfigError("fit needs io.events")
        io.setdefault("categorical", [])
        io.setdefault("jitter_ties", True)
    if command == "simulate":
        sim = cfg.setdefault("simulate", {})
        if "dg" not in sim and "true_coef" not in sim:
            sim["dg"] = 1
        if "dg" in sim:
            sim.setdefault("n_actors", 40)
            sim.setdefault("continuous", "sim_cont")
            if "horizon" not in sim:
                sim.setdefault("true_events", 500)
        sim.setdefault("n_categories", 7)
    if command == "study":
        study = {"dg": 1, "reps": 100, "scale": "desk", "n_jobs": 1, "continuous": "sim_cont"}
        cfg["study"] = {**study, **cfg.get("study", {})}
    return cfg


def model_spec(block: dict) -> ModelSpec:
    try:
        stats = tuple(StatisticSpec.parse(s) for s in block["statistics"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad statistic: {exc}") from None
    return ModelSpec(stats, baseline=block["baseline"])


def _models(cfg: dict) -> tuple[ModelSpec, ModelSpec | None]:
    true_model = model_spec(cfg["true_model"])
    spur = model_spec(cfg["spurious_model"]) if "spurious_model" in cfg else None
    if spur is not None:
        shared = {s.name for s in true_model.statistics} & {s.name for s in spur.statistics}
        if shared:
            raise ConfigError(f"true and spurious models share statistics {sorted(shared)}")
    return true_model, spur


def _chain_config(cfg: dict, seed: int) -> ChainConfig:
    chain, fit = cfg["chain"], cfg["fit"]
    return ChainConfig(chain["burn_in"], chain["draws"], seed, fit["gamma"], fit["max_irls_iter"], fit["tol"])


def _read_risk_set(path) -> RiskSet:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"risk set file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"actor_a", "actor_b"} <= set(reader.fieldnames or []):
            raise IngestionError(f"{path}: header must contain actor_a,actor_b")
        return RiskSet(tuple((r["actor_a"].strip(), r["actor_b"].strip()) for r in reader))


def load_data(io: dict, models):
    """Events plus covariates named in ``io``; checks every covariate a statistic needs."""
    stream = ingest_events(io["events"], io.get("schema"), io.get("horizon"), io.get("jitter_ties", True))
    if len(stream) == 0:
        raise IngestionError(f"{io['events']}: no events to fit")
    actors = stream.actors
    if "covariates" in io:
        actors = ingest_covariates(io["covariates"], actors, io.get("categorical", ()))
    for name, path in io.get("dyadic", {}).items():
        actors = ingest_dyadic(path, actors, name)
    for model in models:
        for s in model.statistics if model else ():
            pool = {"match_cat": actors.categorical, "dyadic_network": actors.dyadic}.get(s.kind, actors.continuous)
            if not s.endogenous and s.covariate not in pool:
                raise IngestionError(f"statistic {s.name} needs covariate {s.covariate!r}, which was not loaded")
    stream = stream.with_actors(actors)
    rs = _read_risk_set(io["risk_set"]) if "risk_set" in io else RiskSet.all_pairs(actors)
    return stream, rs


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _coefficients(report) -> list[dict]:
    d = report.to_dict()["coefficients"]
    for c in d:
        if not all(np.isfinite([c["estimate"], c["std_error"], c["z_value"], *c["ci95"]])):
            raise FitError(f"non-finite estimate for {c['name']}")
    return d


def summary_table(report, model: str) -> str:
    """Coefficient, 95% interval and Z value per row, PFE last."""
    lines = [f"{model}", f"{'':<28}{'Coef.':>10}  {'CI':<22}{'Z Val.':>9}"]
    ci = report.ci95
    for k, name in enumerate(report.names):
        if ":spline_" in name:
            continue
        interval = f"[{ci[k, 0]:.3f}, {ci[k, 1]:.3f}]"
        lines.append(f"{name:<28}{report.posterior_mean[k]:>10.3f}  {interval:<22}{report.z_values[k]:>9.3f}")
    lines.append(f"{'PFE (in %)':<28}{report.pfe_estimate:>10.3f}")
    return "\n".join(lines)


def cmd_fit(cfg: dict, out: Path, quiet: bool = False) -> int:
    true_model, spur = _models(cfg)
    stream, rs = load_data(cfg["io"], (true_model, spur))
    spline = SplineConfig(**cfg["spline"])
    chain = cfg["chain"]
    fit = cfg["fit"]
    sampler = SpuriousEventSampler(stream, true_model, spur, rs, spline, fit["gamma"], fit["max_irls_iter"], fit["tol"])
    names = sampler.report_names()
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg["seed"]]
    chains = []
    if spur is None:
        model = "REM"
        report = fit_rem(sampler)
        failed = 0
        trace = [{"chain": 0, "iteration": 0, "spurious_count": 0, "failed": False, "theta": report.posterior_mean}]
    else:
        model = "REMSE"
        P = chain["parallel_chains"]
        if P > 1:
            seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg["seed"]).spawn(P)]
        results = [run_chain(sampler, _chain_config(cfg, s)) for s in seeds]
        report = combine([d for r in results for d in r.draws], names, chain["burn_in"])
        failed = sum(r.failures for r in results)
        trace = [
            {"chain": c, "iteration": row["iteration"], "spurious_count": row["spurious_count"],
             "failed": row["failed"], "theta": row["theta_hat"]}
            for c, r in enumerate(results)
            for row in r.trace
        ]
        if P > 1:
            for s, r in zip(seeds, results):
                rep = combine(r.draws, names, chain["burn_in"])
                chains.append({"seed": s, "coefficients": _coefficients(rep), "pfe_estimate": rep.pfe_estimate,
                               "failed_psteps": r.failures})
    doc = {
        "format": REPORT_FORMAT,
        "model": model,
        "seed": cfg["seed"],
        "config": cfg,
        "data": {"n_events": len(stream), "n_actors": len(stream.actors), "risk_set_size": len(rs),
                 "horizon": stream.horizon},
        "coefficients": _coefficients(report),
        "posterior_cov": report.posterior_cov.tolist(),
        "pfe_estimate": float(report.pfe_estimate),
        "draws_used": int(report.draws_used),
        "burn_in": int(report.burn_in),
        "failed_psteps": int(failed),
        "chains": chains,
    }
    validate(doc, "report")
    _dump(doc, out / "report.json")
    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iteration", "spurious_count", "failed"] + names)
        for row in trace:
            w.writerow([row["chain"], row["iteration"], row["spurious_count"], int(row["failed"])]
                       + [repr(float(v)) for v in row["theta"]])
    grid = np.linspace(0.0, stream.horizon, BASELINE_GRID)
    rate, lo, hi = baseline_curve(report, sampler.basis, grid)
    with (out / "baseline.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "baseline", "lower", "upper"])
        for row in zip(grid, rate, lo, hi):
            w.writerow([repr(float(v)) for v in row])
    if not quiet:
        print(summary_table(report, model))
    return EXIT_OK


def generator_spec(cfg: dict) -> GeneratorSpec:
    sim = cfg["simulate"]
    if "dg" in sim:
        spec = dg_spec(sim["dg"], sim["n_actors"], sim.get("true_events", 500), sim["continuous"])
        if "horizon" in sim:
            spec = GeneratorSpec(spec.n_actors, spec.true_model, spec.true_coef, spec.spurious_model,
                                 spec.spurious_coef, None, sim["horizon"], sim["n_categories"])
        elif sim["n_categories"] != 7 or "max_events" in sim:
            spec = GeneratorSpec(spec.n_actors, spec.true_model, spec.true_coef, spec.spurious_model,
                                 spec.spurious_coef, spec.true_events, None, sim["n_categories"],
                                 sim.get("max_events", 10**6))
        return spec
    if "true_model" not in cfg:
        raise ConfigError("custom simulation needs true_model and simulate.true_coef")
    true_model, spur = _models(cfg)
    try:
        return GeneratorSpec(
            sim.get("n_actors", 40),
            true_model,
            tuple(sim["true_coef"]),
            spur,
            tuple(sim["spurious_coef"]) if "spurious_coef" in sim else None,
            sim.get("true_events"),
            sim.get("horizon"),
            sim["n_categories"],
            sim.get("max_events", 10**6),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(cfg: dict, out: Path, quiet: bool = False) -> int:
    spec = generator_spec(cfg)
    stream = generate(spec, np.random.default_rng(cfg["seed"]))
    out.mkdir(parents=True, exist_ok=True)
    write_events(stream, out / "events.csv", labels=True)
    write_covariates(stream.actors, out / "covariates.csv")
    meta = {
        "config": cfg,
        "seed": cfg["seed"],
        "n_events": len(stream),
        "n_true": int(np.sum(stream.labels == 1)),
        "horizon": stream.horizon,
        "realized_pfe": realized_pfe(stream),
    }
    _dump(meta, out / "meta.json")
    if not quiet:
        print(f"{len(stream)} events ({meta['n_true']} true), horizon {stream.horizon:.4g}, "
              f"realized PFE {meta['realized_pfe']:.3f} %")
    return EXIT_OK


def cmd_study(cfg: dict, out: Path, quiet: bool = False) -> int:
    st = cfg["study"]
    chain = _chain_config(cfg, cfg["seed"])
    result = run_study(st["dg"], st["reps"], st["scale"], cfg["seed"], st["n_jobs"], chain, st["continuous"])
    result.write(out)
    _dump({"config": cfg, "seed": cfg["seed"], "failures": result.failures}, out / "meta.json")
    if not quiet:
        print(result.to_markdown(), end="")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spurious-rem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
        if name == "study":
            p.add_argument("--dg", type=int, choices=(1, 2))
            p.add_argument("--reps", type=int)
            p.add_argument("--scale", choices=sorted(SCALES))
            p.add_argument("--jobs", type=int)
        if name == "simulate":
            p.add_argument("--dg", type=int, choices=(1, 2))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = load_config(args.config) if args.config else {}
        if args.command in ("study", "simulate"):
            block = config.setdefault(args.command, {})
            for key, flag in (("dg", "dg"), ("reps", "reps"), ("scale", "scale"), ("n_jobs", "jobs")):
                value = getattr(args, flag, None)
                if value is not None:
                    block[key] = value
            validate(config, "config")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = resolve(config, args.command, args.seed)
        return COMMANDS[args.command](cfg, Path(args.out), args.quiet)
    except (ConfigError, IngestionError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, ChainError, GenerationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
