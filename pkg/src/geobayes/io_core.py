"""Manifests, labelled RNG streams and numeric file formats.

RNG streams
-----------
Every random quantity is drawn from ``seeded_rng(root_seed, label)``.  The
stream for a label is ``numpy.random.Generator(PCG64(SeedSequence(root_seed,
spawn_key=key)))`` where ``key`` is the first four little-endian uint32 words
of ``sha256(label.encode("utf-8"))``.  Both SeedSequence and PCG64 are fixed
algorithms in numpy, so reruns reproduce across versions.

Standard labels: ``truth.fields.i``, ``truth.geom``, ``noise``,
``map.init.k``, ``mcmc.chain.k``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MANIFEST_VERSION = 1

GRID_MAGIC = b"GBGRID\x00\x01"


class ManifestError(ValueError):
    """Raised when a manifest violates the schema."""


def seeded_rng(root_seed: int, label: str) -> np.random.Generator:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = struct.unpack("<4I", digest[:16])
    ss = np.random.SeedSequence(int(root_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# manifest

# Field priors per model: (mean, alpha, scale).
DEFAULT_PRIORS = {
    "layer2": [(1.0, 1.4, 1.0), (-1.0, 1.8, 1.0)],
    "curve2": [(1.0, 1.4, 1.0), (-1.0, 1.8, 1.0)],
    "fault3": [(2.0, 1.4, 2.0), (0.0, 1.8, 1.0), (-2.0, 1.4, 2.0)],
    "channel": [(1.0, 1.4, 1.0), (-1.0, 1.8, 1.0)],
}

DEFAULTS: dict = {
    "version": MANIFEST_VERSION,
    "model": "layer2",
    "multilayer": {"K": 3, "N": 3},
    "priors": None,  # None -> DEFAULT_PRIORS[model]
    "truncation": None,  # None -> mesh - 1
    "truth_mesh": 256,
    "mesh": 64,
    "allow_inverse_crime": False,
    "f": "0",
    "g": "1 + y",
    "sigma": "exp",
    "obs": {"count": 25, "epsilon": 0.05, "gamma": 0.01},
    "seed": 0,
    "map": {
        "inits": 50,
        "tol": 1e-5,
        "max_outer": 100,
        "nm_edge": 0.05,
        "nm_maxiter": 200,
        "nm_xtol": 1e-6,
        "gn_inner": 5,
        "escape_count": 50,
        "escape_geom": 0.05,
        "escape_field": 0.1,
    },
    "mcmc": {
        "samples": 100000,
        "burn_in": 20000,
        "beta": 0.05,
        "tau": 0.02,
        "thin": 10,
        "chains": None,  # None -> one chain per MAP init
    },
    "analyze": {"cluster_threshold": 0.1},
}


def _merge(defaults: dict, given: dict, path: str, bad: list[str]) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        full = f"{path}{key}"
        if key not in defaults:
            bad.append(full)
            continue
        if isinstance(defaults[key], dict) and defaults[key] and key != "multilayer":
            if not isinstance(value, dict):
                bad.append(full)
                continue
            out[key] = _merge(defaults[key], value, full + ".", bad)
        elif key == "multilayer":
            if not isinstance(value, dict) or set(value) - {"K", "N"}:
                bad.append(full)
                continue
            out[key].update(value)
        else:
            out[key] = value
    return out


def resolve_manifest(given: dict) -> dict:
    """Fill defaults into ``given`` and validate it."""
    if not isinstance(given, dict):
        raise ManifestError("manifest must be a JSON object")
    bad: list[str] = []
    m = _merge(DEFAULTS, given, "", bad)
    if bad:
        raise ManifestError(f"unknown or malformed manifest keys: {', '.join(sorted(bad))}")
    if m["version"] != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {m['version']!r}")
    tags = set(DEFAULT_PRIORS) | {"multilayer"}
    if m["model"] not in tags:
        raise ManifestError(f"model: unknown tag {m['model']!r}")
    if m["priors"] is None:
        if m["model"] == "multilayer":
            n_regions = int(m["multilayer"]["N"])
            m["priors"] = [[0.0, 1.4, 1.0] for _ in range(n_regions)]
        else:
            m["priors"] = [list(p) for p in DEFAULT_PRIORS[m["model"]]]
    else:
        m["priors"] = [list(map(float, p)) for p in m["priors"]]
    problems = []
    for i, (_, alpha, scale) in enumerate(m["priors"]):
        if alpha <= 1.0:
            problems.append(f"priors[{i}].alpha")
        if scale <= 0.0:
            problems.append(f"priors[{i}].scale")
    if int(m["mesh"]) < 3:
        problems.append("mesh")
    if int(m["truth_mesh"]) < 3:
        problems.append("truth_mesh")
    if m["obs"]["epsilon"] <= 0:
        problems.append("obs.epsilon")
    if m["obs"]["gamma"] < 0:
        problems.append("obs.gamma")
    if int(round(np.sqrt(m["obs"]["count"]))) ** 2 != m["obs"]["count"]:
        problems.append("obs.count")
    if m["map"]["tol"] <= 0:
        problems.append("map.tol")
    if m["map"]["escape_count"] < 1:
        problems.append("map.escape_count")
    if not 0.0 <= m["mcmc"]["beta"] <= 1.0:
        problems.append("mcmc.beta")
    if m["mcmc"]["tau"] <= 0:
        problems.append("mcmc.tau")
    if m["mcmc"]["burn_in"] >= m["mcmc"]["samples"]:
        problems.append("mcmc.burn_in")
    if m["sigma"] != "exp":
        problems.append("sigma")
    if problems:
        raise ManifestError(f"invalid manifest values: {', '.join(problems)}")
    return m


def load_manifest(path) -> dict:
    with open(path) as fh:
        given = json.load(fh)
    return resolve_manifest(given)


def save_manifest(manifest: dict, path) -> None:
    write_json(manifest, path)


def write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


# ---------------------------------------------------------------------------
# numeric files


def write_csv_matrix(path, arr) -> None:
    """Row-major CSV; first line ``# rows,cols``; 17 significant digits."""
    arr = np.atleast_2d(np.asarray(arr))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fmt = "%d" if np.issubdtype(arr.dtype, np.integer) else "%.17g"
    with open(path, "w") as fh:
        fh.write(f"# {arr.shape[0]},{arr.shape[1]}\n")
        np.savetxt(fh, arr, fmt=fmt, delimiter=",")


def read_csv_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing dimension header")
        rows, cols = (int(v) for v in header[1:].split(","))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(rows, cols)
    if data.shape != (rows, cols):
        raise ValueError(f"{path}: header says {(rows, cols)}, found {data.shape}")
    return data


def write_binary_grid(path, arr) -> None:
    arr = np.ascontiguousarray(np.atleast_2d(arr), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<2I", *arr.shape))
        fh.write(arr.tobytes())


def read_binary_grid(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(len(GRID_MAGIC)) != GRID_MAGIC:
            raise ValueError(f"{path}: bad magic bytes")
        rows, cols = struct.unpack("<2I", fh.read(8))
        payload = fh.read()
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()


class BinaryGridWriter:
    """Streams rows into the binary grid format; the row count is fixed up front."""

    def __init__(self, path, rows: int, cols: int):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.rows, self.cols, self.written = rows, cols, 0
        self._fh = open(path, "wb")
        self._fh.write(GRID_MAGIC)
        self._fh.write(struct.pack("<2I", rows, cols))

    def write_row(self, values) -> None:
        row = np.ascontiguousarray(np.ravel(values), dtype="<f8")
        if row.size != self.cols or self.written >= self.rows:
            raise ValueError("row does not fit the declared grid shape")
        self._fh.write(row.tobytes())
        self.written += 1

    def close(self) -> None:
        self._fh.close()
        if self.written != self.rows:
            raise ValueError(f"wrote {self.written} rows, header declares {self.rows}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
