"""Command-line interface: ``carmap fit | simulate | moran``.

Exit codes: 0 success, 2 bad input, 3 fit failure, 4 too many failed
simulation replicates.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, comparators, io, mcmc, simstudy
from .graph import morans_i
from .model import ExposureSet

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_REPLICATES = 0, 2, 3, 4
SPATIAL_MODELS = ("car", "local", "local-agg", "hh")
DEFAULT_INCREMENT = {"no2": 5.0}
SPEC_KEYS = ("G", "hh_q")

log = logging.getLogger("carmap")


class UsageError(Exception):
    pass


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _manifest(command: str, argv, config: dict, inputs: dict[str, str], seed) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "config": config,
        "seed": seed,
        "inputs": {name: {"path": str(p), "sha256": io.sha256(p)} for name, p in inputs.items() if p},
        "started": _now(),
    }


def _finish(manifest: dict, out: Path) -> None:
    manifest["finished"] = _now()
    io.write_json(out / "manifest.json", manifest)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SRE_THREADS", "1")))
    except ValueError:
        raise UsageError("SRE_THREADS must be an integer") from None


def _fit_config(raw: dict, path) -> tuple[mcmc.FitConfig, dict]:
    """Split a config JSON object into FitConfig fields and model-spec options."""
    known = {f.name for f in fields(mcmc.FitConfig)}
    unknown = set(raw) - known - set(SPEC_KEYS)
    if unknown:
        raise io.InputError(path, f"unknown config keys {sorted(unknown)}")
    try:
        cfg = mcmc.FitConfig(**{k: v for k, v in raw.items() if k in known})
    except (TypeError, ValueError) as exc:
        raise io.InputError(path, str(exc)) from None
    return cfg, {k: raw[k] for k in SPEC_KEYS if k in raw}


def cmd_fit(args, argv) -> int:
    if args.model in SPATIAL_MODELS and not args.adjacency:
        raise UsageError(f"--adjacency is required for --model {args.model}")
    raw = io.read_json(args.config) if args.config else {}
    config, spec_opts = _fit_config(raw, args.config)
    config = replace(config, workers=config.workers or _workers())
    increment = args.delta if args.delta is not None else DEFAULT_INCREMENT.get(args.pollutant, 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"health": args.health, "exposure": args.exposure, "adjacency": args.adjacency, "config": args.config}
    resolved = {"model": args.model, "increment": increment, **asdict(config), **spec_opts}
    manifest = _manifest("fit", argv, resolved, inputs, config.seed)

    data = io.read_health(args.health)
    exposures = io.read_exposure(args.exposure, data.area_ids)
    graph = io.read_adjacency(args.adjacency, data.area_ids) if args.adjacency else None

    try:
        if args.model == "glm":
            res = comparators.fit_glm(data, exposures.weighted_means())
            params = {
                name: {"mean": float(c), "sd": float(s), "lo95": float(lo), "hi95": float(hi)}
                for name, c, s, lo, hi in zip(res.names, res.coef, res.se, res.ci_low, res.ci_high)
            }
            a = params["alpha"]
            summary = {
                "parameters": params,
                "dispersion": res.dispersion,
                "relative_risk": {
                    "increment": increment,
                    "mean": float(np.exp(a["mean"] * increment)),
                    "lo95": float(np.exp(a["lo95"] * increment)),
                    "hi95": float(np.exp(a["hi95"] * increment)),
                },
            }
        else:
            if args.model == "hh":
                q = int(spec_opts.get("hh_q", min(50, max(1, data.n // 6))))
                manifest["config"]["hh_q"] = q
                spec = mcmc.ModelSpec("hh", "ecological", increment=increment, hh_q=q)
                traces = comparators.fit_hh(data, exposures.weighted_means(), graph, q, config, increment)
            else:
                spec = replace(mcmc.MODEL_PRESETS[args.model], increment=increment,
                               **{k: v for k, v in spec_opts.items() if k == "G"})
                if spec.link == "ecological":
                    exposures = ExposureSet.point(exposures.weighted_means())
                traces = mcmc.run_chains(data, exposures, graph, spec, config)
            io.write_trace_csv(out / "trace.csv", traces)
            summary = mcmc.summarize(traces, spec).to_dict()
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"carmap fit: model fit failed: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        _finish(manifest, out)
        return EXIT_FIT
    summary["model"] = args.model
    io.write_json(out / "summary.json", summary)
    _finish(manifest, out)
    return EXIT_OK


PRESETS = {
    "study1": lambda: simstudy.study1_scenarios(),
    "study2": lambda: simstudy.study2_scenarios(),
    "study2-quick": lambda: simstudy.study2_scenarios(replicates=2),
}
QUICK_CONFIG = {"n_iterations": 2000, "burn_in": 1000, "thin": 5}


def cmd_simulate(args, argv) -> int:
    if (args.scenario is None) == (args.preset is None):
        raise UsageError("give exactly one of --scenario or --preset")
    if args.scenario:
        raw = io.read_json(args.scenario)
        try:
            scenarios = [simstudy.SimScenario.from_dict(raw)]
        except (TypeError, ValueError) as exc:
            raise io.InputError(args.scenario, str(exc)) from None
    else:
        scenarios = PRESETS[args.preset]()
    raw_cfg = io.read_json(args.config) if args.config else (QUICK_CONFIG if args.preset == "study2-quick" else {})
    config, spec_opts = _fit_config(raw_cfg, args.config)
    models = [m.strip() for m in args.models.split(",") if m.strip()] if args.models else None
    for m in models or ():
        if m not in ("glm", "bayes-glm", *SPATIAL_MODELS):
            raise UsageError(f"unknown model {m!r} in --models")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "scenarios": [s.to_dict() for s in scenarios],
        "models": models,
        "fit": asdict(config),
        **spec_opts,
    }
    manifest = _manifest("simulate", argv, resolved, {"scenario": args.scenario, "config": args.config},
                         [s.seed for s in scenarios])
    records = []
    try:
        for sc in scenarios:
            use = models or list(simstudy.STUDY1_MODELS if sc.study == 1 else simstudy.STUDY2_MODELS)
            table = simstudy.run_study(sc, use, config, workers=_workers(), hh_q=int(spec_opts.get("hh_q", 50)))
            records += table.records()
    except simstudy.StudyError as exc:
        print(f"carmap simulate: {exc}", file=sys.stderr)
        manifest["error"] = str(exc)
        _finish(manifest, out)
        return EXIT_REPLICATES
    io.write_metric_csv(out / "metrics.csv", records)
    _finish(manifest, out)
    return EXIT_OK


def cmd_moran(args, argv) -> int:
    ids, resid = io.read_residuals(args.residuals)
    graph = io.read_adjacency(args.adjacency, ids)
    inputs = {"residuals": args.residuals, "adjacency": args.adjacency}
    resolved = {"permutations": args.permutations}
    manifest = _manifest("moran", argv, resolved, inputs, args.seed)
    try:
        stat, p = morans_i(graph, resid, n_permutations=args.permutations, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"I={io.fmt(stat)} p={io.fmt(p)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest["result"] = {"I": stat, "p": p}
        _finish(manifest, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carmap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"carmap {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit one model to area-level data")
    f.add_argument("--health", required=True, help="CSV: area_id,Y,E,<covariates>")
    f.add_argument("--exposure", required=True, help="CSV: area_id,concentration,weight")
    f.add_argument("--adjacency", help="CSV: area_i,area_j (required for spatial models)")
    f.add_argument("--model", required=True, choices=("glm", *SPATIAL_MODELS))
    f.add_argument("--config", help="JSON with FitConfig fields, G and hh_q")
    f.add_argument("--delta", type=float, help="pollutant increment for the relative risk")
    f.add_argument("--pollutant", default="", type=str.lower,
                   help="pollutant name; sets the default increment (no2: 5, otherwise 1)")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--scenario", help="JSON mirroring SimScenario fields")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--models", help="comma-separated model names (default: the study's roster)")
    s.add_argument("--config", help="JSON with FitConfig fields")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("moran", help="Moran's I with a permutation p-value")
    m.add_argument("--residuals", required=True, help="CSV: area_id,residual")
    m.add_argument("--adjacency", required=True)
    m.add_argument("--permutations", type=int, default=9999)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", help="directory for manifest.json")
    m.set_defaults(func=cmd_moran)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except (io.InputError, UsageError) as exc:
        print(f"carmap {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"carmap {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
