"""Command line: ``generate``, ``map``, ``mcmc``, ``analyze``, ``validate``.

Every subcommand takes ``--manifest``, ``--out``, ``--seed`` and ``--jobs``.
Without ``--manifest`` the manifest echoed into ``--out`` by an earlier
``generate`` is used, falling back to the built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment, validate
from .io_core import ManifestError, load_manifest, resolve_manifest, save_manifest, write_json


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--manifest", type=Path, help="JSON manifest (defaults fill missing keys)")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="root seed; overrides the manifest")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="geobayes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="draw a truth and noisy data")
    p.add_argument("--model", help="geometry model tag; overrides the manifest")

    p = sub.add_parser("map", parents=[common], help="alternating MAP minimisation from random inits")
    p.add_argument("--model", help="geometry model tag to fit; overrides the manifest")
    p.add_argument("--inits", type=int, help="number of initialisations (manifest map.inits)")

    p = sub.add_parser("mcmc", parents=[common], help="Metropolis-within-Gibbs chains from MAP results")
    p.add_argument("--init", type=Path, action="append",
                   help="MAP result directory to start a chain from (repeatable; default: all)")
    p.add_argument("--samples", type=int)
    p.add_argument("--burnin", type=int)

    sub.add_parser("analyze", parents=[common], help="clusters, traces and conditional means")

    p = sub.add_parser("validate", parents=[common], help="numerical checks with pass/fail")
    p.add_argument("--checks", nargs="+", default=list(validate.CHECKS), choices=validate.CHECKS)
    p.add_argument("--n-mc", type=int, default=10**6, help="prior samples per small-ball pair")
    return parser


def _manifest(args) -> dict:
    if args.manifest is not None:
        m = load_manifest(args.manifest)
    elif (args.out / "manifest.json").exists():
        m = load_manifest(args.out / "manifest.json")
    else:
        m = resolve_manifest({})
    if args.seed is not None:
        m["seed"] = args.seed
    if getattr(args, "model", None) and args.model != m["model"]:
        m = json.loads(json.dumps(m))
        m["model"] = args.model
        m["priors"] = None
        m = resolve_manifest(m)
    return m


def _override(m: dict, section: str, **values) -> dict:
    given = {k: v for k, v in values.items() if v is not None}
    if not given:
        return m
    m = json.loads(json.dumps(m))
    m[section].update(given)
    return resolve_manifest(m)


def cmd_generate(args, m) -> int:
    ds = experiment.generate(m, m["seed"])
    experiment.write_generated(m, ds, args.out)
    table = experiment.error_table([ds])[ds.model]
    print(f"{ds.model}: mean relative error {table['mean']:.3f}%, range "
          f"[{table['min']:.3f}%, {table['max']:.3f}%]")
    return 0


def _need_data(out: Path) -> dict:
    if not (out / "data.json").exists():
        raise SystemExit(f"no data in {out}; run 'generate' first")
    return experiment.load_data(out)


def cmd_map(args, m) -> int:
    m = _override(m, "map", inits=args.inits)
    data = _need_data(args.out)
    save_manifest(m, args.out / "map" / "manifest.json")
    results = experiment.run_map(m, data["y"], m["seed"], jobs=args.jobs)
    experiment.write_map_results(m, results, data["y"], args.out)
    for r in sorted(results, key=lambda r: r.om.total):
        print(f"init {r.init_id:3d}  I = {r.om.total:.6g}  Phi = {r.om.phi:.6g}  "
              f"converged = {r.converged}")
    return 0


def cmd_mcmc(args, m) -> int:
    m = _override(m, "mcmc", samples=args.samples, burn_in=args.burnin)
    data = _need_data(args.out)
    inits = args.init or experiment.map_dirs(args.out)
    if not inits:
        raise SystemExit("no MAP results to start from; run 'map' first or pass --init")
    if m["mcmc"]["chains"] is not None:
        inits = inits[: int(m["mcmc"]["chains"])]
    save_manifest(m, args.out / "mcmc" / "manifest.json")
    rows = experiment.run_mcmc(m, data["y"], m["seed"], args.out, inits, jobs=args.jobs)
    for r in rows:
        rates = ", ".join(f"{v:.3f}" for v in r["accept_fields"])
        print(f"chain {r['chain']}: acceptance fields [{rates}], geometry {r['accept_geom']:.3f}")
    return 0


def cmd_analyze(args, m) -> int:
    summary = experiment.analyze(m, args.out)
    if "n_classes" in summary:
        print(f"{summary['n_minimizers']} minimizers in {summary['n_classes']} classes "
              f"(threshold {m['analyze']['cluster_threshold']})")
    return 0


def cmd_validate(args, m) -> int:
    report = validate.run_checks(args.checks, seed=m["seed"], n_mc=args.n_mc)
    vdir = args.out / "validate"
    for name, rep in report.items():
        write_json(rep, vdir / f"{name}.json")
        print(f"{name:10s} {'PASS' if rep['pass'] else 'FAIL'}")
    return 0 if all(r["pass"] for r in report.values()) else 1


COMMANDS = {
    "generate": cmd_generate,
    "map": cmd_map,
    "mcmc": cmd_mcmc,
    "analyze": cmd_analyze,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        raise SystemExit("--jobs must be >= 1")
    try:
        m = _manifest(args)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](args, m)
