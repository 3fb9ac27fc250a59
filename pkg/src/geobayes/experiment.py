"""Data generation, MAP/MCMC orchestration and reporting.

Output tree under ``out``::

    manifest.json            resolved manifest
    truth/                   field_<i>/ (spectral), a.json, u_a.csv (truth mesh)
    data.json                points, epsilon, gamma, y, y_clean, noise
    map/init_<k>/            fields/field_<i>/, a.json, om.json, trace.csv, u_a.csv
    mcmc/chain_<k>/          phi_trace.csv, mn_trace.csv, acceptance.json,
                             conditional_mean.csv, states/
    analysis/                clusters.csv, summary.json, *.dat (gnuplot blocks)
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from . import darcy, gfield
from .darcy import ObservationSetup, PdeProblem
from .geometry import GeometryModel, model_from_tag
from .grid import Grid
from .io_core import (
    BinaryGridWriter,
    read_csv_matrix,
    save_manifest,
    seeded_rng,
    write_csv_matrix,
    write_json,
)
from .mapopt import MapConfig, MapResult, initial_state, map_estimate
from .mcmc import McmcConfig, dwell_fractions, run_chain
from .posterior import Posterior, default_geometric_prior, field_priors

log = logging.getLogger(__name__)

REL_ERROR_FLOOR = 1e-12


class InverseCrimeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# manifest -> objects


def build_model(m: dict) -> GeometryModel:
    return model_from_tag(m["model"], m["multilayer"]["K"], m["multilayer"]["N"])


def build_problem(m: dict) -> PdeProblem:
    return PdeProblem(f=m["f"], g=m["g"], sigma=m["sigma"])


def build_setup(m: dict) -> ObservationSetup:
    o = m["obs"]
    return darcy.default_setup(o["count"], o["epsilon"], o["gamma"])


def inversion_truncation(m: dict) -> int:
    return int(m["truncation"]) if m["truncation"] is not None else int(m["mesh"]) - 1


def build_posterior(m: dict, y=None) -> Posterior:
    model = build_model(m)
    priors = field_priors(m["priors"], inversion_truncation(m))
    return Posterior(
        model, priors, default_geometric_prior(model), Grid(int(m["mesh"])),
        build_problem(m), build_setup(m), None if y is None else np.asarray(y, dtype=float),
    )


# ---------------------------------------------------------------------------
# data generation


@dataclass
class DataSet:
    model: str
    y: np.ndarray
    y_clean: np.ndarray
    noise: np.ndarray
    rel_errors: np.ndarray  # |noise| / |y_clean|; nan where excluded
    truth_fields: list = field(repr=False)
    truth_a: np.ndarray = None
    truth_u_a: np.ndarray = field(default=None, repr=False)
    setup: ObservationSetup = None


def relative_errors(y_clean, noise) -> np.ndarray:
    """``|eta_j| / |y_j|``; data with ``|y_j| < 1e-12`` are excluded (nan) with a warning."""
    y_clean = np.abs(np.asarray(y_clean, dtype=float))
    noise = np.abs(np.asarray(noise, dtype=float))
    small = y_clean < REL_ERROR_FLOOR
    if small.any():
        warnings.warn(f"{int(small.sum())} observations too close to zero; excluded", RuntimeWarning)
    out = np.full(y_clean.shape, np.nan)
    out[~small] = noise[~small] / y_clean[~small]
    return out


def generate(m: dict, seed: int | None = None) -> DataSet:
    """Truth from the prior on the truth mesh, forward solve there, noisy observations."""
    seed = m["seed"] if seed is None else seed
    if int(m["truth_mesh"]) <= int(m["mesh"]) and not m["allow_inverse_crime"]:
        raise InverseCrimeError(
            f"truth mesh {m['truth_mesh']} must be finer than the inversion mesh {m['mesh']}"
            " (set allow_inverse_crime to override)"
        )
    model = build_model(m)
    grid = Grid(int(m["truth_mesh"]))
    priors = field_priors(m["priors"], grid.n - 1)
    fields = [gfield.sample(p, seeded_rng(seed, f"truth.fields.{i + 1}")) for i, p in enumerate(priors)]
    a = default_geometric_prior(model).sample(seeded_rng(seed, "truth.geom"))
    setup = build_setup(m)
    state = darcy.forward_state(fields, a, model, build_problem(m), setup, grid)
    noise = setup.gamma * seeded_rng(seed, "noise").standard_normal(setup.count)
    y_clean = state.y_pred
    return DataSet(
        model=m["model"], y=y_clean + noise, y_clean=y_clean, noise=noise,
        rel_errors=relative_errors(y_clean, noise), truth_fields=fields, truth_a=a,
        truth_u_a=state.u_a, setup=setup,
    )


def error_table(datasets) -> dict:
    """Per-model mean and range of relative data errors, in percent."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("error_table needs at least one data set")
    table = {}
    for tag in sorted({d.model for d in datasets}):
        rel = np.concatenate([d.rel_errors for d in datasets if d.model == tag])
        rel = 100 * rel[np.isfinite(rel)]
        if rel.size == 0:
            table[tag] = {"mean": math.nan, "min": math.nan, "max": math.nan, "count": 0}
        else:
            table[tag] = {"mean": float(rel.mean()), "min": float(rel.min()),
                          "max": float(rel.max()), "count": int(rel.size)}
    return table


def save_dataset(ds: DataSet, priors, out) -> None:
    out = Path(out)
    tdir = out / "truth"
    for i, (f, p) in enumerate(zip(ds.truth_fields, priors)):
        gfield.save_field(f, p, tdir / f"field_{i + 1}", binary=True)
    write_json({"a": ds.truth_a, "model": ds.model}, tdir / "a.json")
    write_csv_matrix(tdir / "u_a.csv", ds.truth_u_a)
    write_json({
        "points": ds.setup.points, "epsilon": ds.setup.epsilon, "gamma": ds.setup.gamma,
        "y": ds.y, "y_clean": ds.y_clean, "noise": ds.noise,
    }, out / "data.json")


def load_data(out) -> dict:
    with open(Path(out) / "data.json") as fh:
        d = json.load(fh)
    d["y"] = np.asarray(d["y"], dtype=float)
    return d


def load_truth(out) -> tuple[list, np.ndarray]:
    tdir = Path(out) / "truth"
    fields = [gfield.load_field(p) for p in sorted(tdir.glob("field_*"), key=lambda p: int(p.name.split("_")[1]))]
    with open(tdir / "a.json") as fh:
        a = np.asarray(json.load(fh)["a"], dtype=float)
    return fields, a


# ---------------------------------------------------------------------------
# MAP runs


def _map_worker(args) -> MapResult:
    m, y, seed, k = args
    post = build_posterior(m, y)
    fields0, a0 = initial_state(post, seeded_rng(seed, f"map.init.{k}"))
    return map_estimate(post, fields0, a0, MapConfig.from_manifest(m),
                        seeded_rng(seed, f"map.escape.{k}"), init_id=k)


def _pool_map(fn, jobs_args, jobs: int):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [fn(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, jobs_args))


def run_map(m: dict, y, seed: int, init_ids=None, jobs: int = 1) -> list[MapResult]:
    """One alternating minimisation per init; each init owns its random streams."""
    if init_ids is None:
        init_ids = range(int(m["map"]["inits"]))
    args = [(m, np.asarray(y, dtype=float), seed, int(k)) for k in init_ids]
    return _pool_map(_map_worker, args, jobs)


def save_map_result(res: MapResult, post: Posterior, path) -> None:
    path = Path(path)
    for i, (f, p) in enumerate(zip(res.fields, post.priors)):
        gfield.save_field(f, p, path / "fields" / f"field_{i + 1}")
    write_json({"a": res.a}, path / "a.json")
    write_json({
        "phi": res.om.phi, "J": res.om.j, "K": res.om.k, "I": res.om.total,
        "converged": res.converged, "n_outer": res.n_outer, "n_escapes": res.n_escapes,
        "init": res.init_id,
    }, path / "om.json")
    write_csv_matrix(path / "trace.csv", np.array([(i, *t.row()) for i, t in enumerate(res.trace)]))
    write_csv_matrix(path / "u_a.csv", post.construct(res.fields, res.a))


def load_map_result(path) -> tuple[list, np.ndarray, dict]:
    path = Path(path)
    fdir = path / "fields"
    fields = [gfield.load_field(p) for p in sorted(fdir.glob("field_*"), key=lambda p: int(p.name.split("_")[1]))]
    with open(path / "a.json") as fh:
        a = np.asarray(json.load(fh)["a"], dtype=float)
    with open(path / "om.json") as fh:
        om = json.load(fh)
    return fields, a, om


def map_dirs(out) -> list[Path]:
    d = Path(out) / "map"
    if not d.is_dir():
        return []
    return sorted(d.glob("init_*"), key=lambda p: int(p.name.split("_")[1]))


# ---------------------------------------------------------------------------
# clustering


def cluster_minimizers(library, threshold: float, grid: Grid, values=None) -> np.ndarray:
    """Single-linkage classes of nodal ``u^a`` under the weighted L2 distance.

    Two minimisers share a class when a chain of pairwise distances
    ``<= threshold`` connects them.  Class 0 holds the minimiser with the
    lowest ``values`` (``I``), class 1 the best of the rest, and so on.
    """
    lib = np.asarray(library, dtype=float)
    if lib.ndim == 2:
        lib = lib[None]
    L = lib.shape[0]
    if L == 0:
        raise ValueError("no minimizers to cluster")
    values = np.arange(L, dtype=float) if values is None else np.asarray(values, dtype=float)
    if L == 1:
        return np.zeros(1, dtype=int)
    X = (lib * np.sqrt(grid.weights)).reshape(L, -1)
    raw = fcluster(linkage(X, method="single"), t=threshold, criterion="distance")
    order = np.lexsort((np.arange(L), values))
    relabel = {}
    for idx in order:
        relabel.setdefault(raw[idx], len(relabel))
    return np.array([relabel[r] for r in raw], dtype=int)


# ---------------------------------------------------------------------------
# MCMC runs


def _chain_worker(args) -> dict:
    m, y, seed, k, init_dir, library, out = args
    post = build_posterior(m, y)
    fields, a, _ = load_map_result(init_dir)
    cfg = McmcConfig.from_manifest(m)
    cdir = Path(out) / "mcmc" / f"chain_{k}"
    sdir = cdir / "states"
    n_stored = cfg.n_samples // cfg.thin
    with ExitStack() as stack:
        writers = [stack.enter_context(BinaryGridWriter(sdir / "a.bin", n_stored, post.model.k))]
        writers += [
            stack.enter_context(BinaryGridWriter(sdir / f"field_{i + 1}.bin", n_stored, (p.truncation + 1) ** 2))
            for i, p in enumerate(post.priors)
        ]

        def sink(step, flds, a_now):
            writers[0].write_row(a_now)
            for w, f in zip(writers[1:], flds):
                w.write_row(f.coeffs)

        res = run_chain(post, fields, a, cfg, seeded_rng(seed, f"mcmc.chain.{k}"),
                        library=library, store_states=False, sink=sink)
    write_csv_matrix(sdir / "steps.csv", res.state_steps[:, None])
    write_csv_matrix(cdir / "phi_trace.csv", res.phi_trace[:, None])
    if res.mn_trace is not None:
        write_csv_matrix(cdir / "mn_trace.csv", np.column_stack([res.mn_steps, res.mn_trace]))
    write_json({
        "fields": res.accept_fields, "geometry": res.accept_geom,
        "init": str(Path(init_dir).name), "samples": cfg.n_samples, "burn_in": cfg.burn_in,
    }, cdir / "acceptance.json")
    write_csv_matrix(cdir / "conditional_mean.csv", res.conditional_mean)
    return {"chain": k, "accept_fields": res.accept_fields.tolist(), "accept_geom": res.accept_geom}


def library_nodal(out) -> np.ndarray | None:
    dirs = map_dirs(out)
    if not dirs:
        return None
    return np.stack([read_csv_matrix(d / "u_a.csv") for d in dirs])


def run_mcmc(m: dict, y, seed: int, out, init_dirs, chain_ids=None, jobs: int = 1) -> list[dict]:
    """One chain per init directory; the library for ``m_n`` is every MAP result under ``out``."""
    init_dirs = [Path(p) for p in init_dirs]
    if chain_ids is None:
        chain_ids = range(len(init_dirs))
    library = library_nodal(out)
    args = [(m, np.asarray(y, dtype=float), seed, int(k), d, library, str(out))
            for k, d in zip(chain_ids, init_dirs)]
    return _pool_map(_chain_worker, args, jobs)


def chain_dirs(out) -> list[Path]:
    d = Path(out) / "mcmc"
    if not d.is_dir():
        return []
    return sorted(d.glob("chain_*"), key=lambda p: int(p.name.split("_")[1]))


# ---------------------------------------------------------------------------
# analysis


def write_gnuplot_grid(path, values, grid: Grid) -> None:
    """``x y value`` lines, one block per x with blank separators (``splot`` format)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    x = grid.coords
    with open(path, "w") as fh:
        for i in range(grid.n):
            for j in range(grid.n):
                fh.write(f"{x[i]:.17g} {x[j]:.17g} {values[i, j]:.17g}\n")
            fh.write("\n")


def write_gnuplot_columns(path, columns, header: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cols = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for row in cols:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def analyze(m: dict, out) -> dict:
    """Cluster report, Phi and m_n traces and conditional means as data files."""
    out = Path(out)
    adir = out / "analysis"
    grid = Grid(int(m["mesh"]))
    summary: dict = {}
    dirs = map_dirs(out)
    if dirs:
        lib = np.stack([read_csv_matrix(d / "u_a.csv") for d in dirs])
        oms = []
        for d in dirs:
            with open(d / "om.json") as fh:
                oms.append(json.load(fh))
        totals = [float(o["I"]) for o in oms]
        labels = cluster_minimizers(lib, m["analyze"]["cluster_threshold"], grid, totals)
        rows = np.array([[o["init"], lab, o["phi"], o["J"], o["K"], o["I"]] for o, lab in zip(oms, labels)])
        write_csv_matrix(adir / "clusters.csv", rows)
        summary["n_minimizers"] = len(dirs)
        summary["n_classes"] = int(labels.max()) + 1
        summary["class_sizes"] = np.bincount(labels).tolist()
        summary["best_init"] = int(oms[int(np.argmin(totals))]["init"])
    for c in chain_dirs(out):
        phi = read_csv_matrix(c / "phi_trace.csv")[:, 0]
        write_gnuplot_columns(adir / f"{c.name}_phi.dat", [np.arange(phi.size), phi], "step phi")
        entry = {"phi_post_burn_mean": None}
        with open(c / "acceptance.json") as fh:
            acc = json.load(fh)
        entry["acceptance"] = acc
        burn = int(acc["burn_in"])
        if phi.size > burn + 1:
            entry["phi_post_burn_mean"] = float(phi[burn + 1:].mean())
        if (c / "mn_trace.csv").exists():
            mn = read_csv_matrix(c / "mn_trace.csv").astype(int)
            write_gnuplot_columns(adir / f"{c.name}_mn.dat", [mn[:, 0], mn[:, 1]], "step m_n")
            entry["dwell"] = dwell_fractions(mn[:, 1], len(dirs)).tolist()
        cm = read_csv_matrix(c / "conditional_mean.csv")
        write_gnuplot_grid(adir / f"{c.name}_conditional_mean.dat", cm, grid)
        summary[c.name] = entry
    write_json(summary, adir / "summary.json")
    return summary


def write_generated(m: dict, ds: DataSet, out) -> None:
    save_manifest(m, Path(out) / "manifest.json")
    save_dataset(ds, field_priors(m["priors"], int(m["truth_mesh"]) - 1), out)


def write_map_results(m: dict, results, y, out) -> None:
    post = build_posterior(m, y)
    for r in results:
        save_map_result(r, post, Path(out) / "map" / f"init_{r.init_id}")
