"""Configuration, deterministic parallel execution and persistence.

An experiment is a JSON config naming a distribution, a disorder grid, a
growth law, an energy grid, shell and trial counts and a master seed.  The
harness expands the config into independent (grid cell x trial chunk)
tasks, runs them inline or on a process pool, and reduces the results in a
fixed order, so output files are byte-identical across reruns and across
worker counts: every trial's randomness is keyed by (seed, cell, trial) and
never by schedule.  Data files are written atomically (temp file + rename)
and a JSON manifest records the canonicalized config, its digest, and a
SHA-256 digest per emitted file.  Cell failures are isolated: the sweep
continues, the manifest marks the cell, and the run exits with code 2.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AntitreeError, ConfigError
from .engine import dirichlet_window_average, lyapunov_batch
from .geometry import GrowthLaw, load_custom_sizes, zd_brute_force, zd_printed_variant_count, zd_shell_counts
from .harmonic import mc_moments
from .potentials import PotentialDistribution, effective_quantities, i_lambda, j_lambda
from .spectral import classify, essential_spectrum, free_density_theory

EXPERIMENTS = ("phase-diagram", "lyapunov", "density", "harmonic-check",
               "geometry-audit", "spectrum-sets")

HEADERS = {
    "lyapunov": "E,lambda,d,C,N,trials,slope_mean,slope_stderr,gamma_theory",
    "density": "E,rho_hat,rho_free_theory",
    "phase-diagram": "E,lambda,d,C,verdict,gamma,decay_kind,decay_constant",
    "harmonic-check": "n,m1,m1_stderr,m1_bound,m2,m2_stderr,m2_lo,m2_hi,m3,exact_m1,exact_m2",
    "geometry-counts": "d,n,k,s_formula,s_bruteforce,s_printed_variant,formula_matches,variant_matches",
    "geometry-hopping": "d,n,alpha_formula,alpha_bruteforce,a_formula,a_bruteforce",
    "spectrum-sets": "lambda,set,component,lo,hi,lo_closed,hi_closed",
}

_TRIAL_CHUNK = 32
_HARMONIC_LADDER = (2, 4, 8, 100, 1000, 10000)
_GEOMETRY_DIMS = (2, 3, 4)
_GEOMETRY_NMAX = 8


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config missing required key {key!r}")
    return cfg[key]


def build_distribution(block: dict) -> PotentialDistribution:
    kind = _require(block, "kind")
    try:
        if kind == "bernoulli":
            return PotentialDistribution.bernoulli()
        if kind == "uniform":
            return PotentialDistribution.uniform()
        if kind == "triangular":
            return PotentialDistribution.triangular()
        if kind == "discrete":
            return PotentialDistribution.discrete(_require(block, "atoms"))
    except AntitreeError as exc:
        raise ConfigError(f"bad distribution: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")


def build_growth(block: dict, base_dir: Path) -> GrowthLaw:
    try:
        if "custom_path" in block:
            return load_custom_sizes(base_dir / block["custom_path"])
        return GrowthLaw.uniform_power(float(_require(block, "d")),
                                       float(block.get("C", 1.0)))
    except AntitreeError as exc:
        raise ConfigError(f"bad growth law: {exc}") from exc


def normalize_config(cfg: dict, *, experiment: str | None = None,
                     seed: int | None = None, out_dir: str | None = None) -> dict:
    """Validate, apply CLI overrides, and return the canonical config dict."""
    cfg = dict(cfg)
    exp = cfg.get("experiment", experiment)
    if experiment is not None and cfg.get("experiment") not in (None, experiment):
        raise ConfigError(
            f"config experiment {cfg['experiment']!r} conflicts with {experiment!r}")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["output_dir"] = out_dir

    lam = cfg.get("lambda", 1.0)
    lambdas = [float(x) for x in (lam if isinstance(lam, (list, tuple)) else [lam])]
    if not lambdas:
        raise ConfigError("lambda grid is empty")

    energy = cfg.get("energy", {"min": 0.0, "max": 0.0, "steps": 1})
    try:
        e_min, e_max = float(energy["min"]), float(energy["max"])
        steps = int(energy.get("steps", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad energy grid: {exc}") from exc
    if steps < 1 or (steps > 1 and not e_min < e_max):
        raise ConfigError("energy grid needs steps >= 1 and min < max for steps > 1")

    N = int(cfg.get("N", 1000))
    trials = int(cfg.get("trials", 1))
    if N < 1 or trials < 1:
        raise ConfigError("need N >= 1 and trials >= 1")
    seed_val = int(cfg.get("seed", 0))
    if not 0 <= seed_val < 2 ** 64:
        raise ConfigError("seed must fit in 64 bits")

    normalized = {
        "experiment": exp,
        "distribution": cfg.get("distribution", {"kind": "bernoulli"}),
        "lambda": lambdas,
        "growth": cfg.get("growth", {"d": 1.0, "C": 1.0}),
        "energy": {"min": e_min, "max": e_max, "steps": steps},
        "N": N,
        "trials": trials,
        "seed": seed_val,
        "output_dir": str(cfg.get("output_dir", "out")),
    }
    # fail early on malformed blocks
    build_distribution(normalized["distribution"])
    return normalized


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def energy_grid(cfg: dict) -> np.ndarray:
    e = cfg["energy"]
    if e["steps"] == 1:
        return np.array([e["min"]])
    return np.linspace(e["min"], e["max"], e["steps"])


# ---------------------------------------------------------------------------
# formatting and atomic output
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    """Full-precision CSV field: 17 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp~")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# task construction and execution
# ---------------------------------------------------------------------------

def _growth_params(cfg: dict) -> tuple[float, float]:
    g = cfg["growth"]
    if "custom_path" in g:
        return math.nan, math.nan
    return float(g["d"]), float(g.get("C", 1.0))


def build_tasks(cfg: dict, base_dir: Path) -> list[dict]:
    exp = cfg["experiment"]
    dist = build_distribution(cfg["distribution"])
    lambdas = cfg["lambda"]
    energies = energy_grid(cfg)
    N, trials, seed = cfg["N"], cfg["trials"], cfg["seed"]
    tasks = []

    if exp == "lyapunov":
        law = build_growth(cfg["growth"], base_dir)
        cell = 0
        for lam in lambdas:
            for E in energies:
                for t0 in range(0, trials, _TRIAL_CHUNK):
                    t1 = min(trials, t0 + _TRIAL_CHUNK)
                    tasks.append({"kind": "lyapunov", "cell": cell, "dist": dist,
                                  "law": law, "E": float(E), "lam": float(lam),
                                  "N": N, "trials": list(range(t0, t1)), "seed": seed})
                cell += 1
    elif exp == "density":
        if len(lambdas) != 1:
            raise ConfigError("density experiment takes a single lambda")
        law = build_growth(cfg["growth"], base_dir)
        if len(energies) >= 2:
            halfwidth = 0.5 * float(np.min(np.diff(energies)))
        else:
            halfwidth = 0.02
        for i, E in enumerate(energies):
            tasks.append({"kind": "density", "cell": i, "dist": dist, "law": law,
                          "E": float(E), "lam": lambdas[0], "N": N, "trials": trials,
                          "seed": seed, "halfwidth": halfwidth})
    elif exp == "phase-diagram":
        d, C = _growth_params(cfg)
        if math.isnan(d):
            raise ConfigError("phase-diagram needs a (d, C) growth law")
        cell = 0
        for lam in lambdas:
            for E in energies:
                tasks.append({"kind": "phase", "cell": cell, "dist": dist,
                              "E": float(E), "lam": float(lam), "d": d, "C": C})
                cell += 1
    elif exp == "harmonic-check":
        if len(lambdas) != 1 or len(energies) != 1:
            raise ConfigError("harmonic-check takes a single lambda and energy")
        for i, n in enumerate(_HARMONIC_LADDER):
            tasks.append({"kind": "harmonic", "cell": i, "dist": dist,
                          "E": float(energies[0]), "lam": lambdas[0], "n": n,
                          "trials": max(1000, trials), "seed": seed})
    elif exp == "geometry-audit":
        for i, d in enumerate(_GEOMETRY_DIMS):
            tasks.append({"kind": "geometry", "cell": i, "d": d, "n_max": _GEOMETRY_NMAX})
    elif exp == "spectrum-sets":
        _, C = _growth_params(cfg)
        if math.isnan(C):
            C = 1.0
        for i, lam in enumerate(lambdas):
            tasks.append({"kind": "sets", "cell": i, "dist": dist, "lam": float(lam),
                          "C": C})
    else:  # pragma: no cover - normalize_config already rejects
        raise ConfigError(f"unknown experiment {exp!r}")
    return tasks


def _execute_task(task: dict) -> dict:
    """Run one task; never raises (errors are data for the manifest)."""
    try:
        kind = task["kind"]
        if kind == "lyapunov":
            records = lyapunov_batch(task["dist"], task["law"], task["E"], task["lam"],
                                     task["N"], task["trials"], task["seed"],
                                     cell=task["cell"])
            return {"cell": task["cell"], "slopes": [r.slope for r in records]}
        if kind == "density":
            vals = dirichlet_window_average(
                task["dist"], task["lam"], task["law"], [task["E"]], task["N"],
                task["trials"], task["seed"], task["halfwidth"],
                energy_ids=[task["cell"]])
            return {"cell": task["cell"], "rho": float(vals[0]) / math.pi}
        if kind == "phase":
            c = classify(task["dist"], task["lam"], task["d"], task["C"], task["E"])
            return {"cell": task["cell"], "classification": c}
        if kind == "harmonic":
            report = mc_moments(task["dist"], task["E"], task["lam"], task["n"],
                                task["trials"], task["seed"])
            return {"cell": task["cell"], "report": report}
        if kind == "geometry":
            return {"cell": task["cell"], "audit": _geometry_audit(task["d"], task["n_max"])}
        if kind == "sets":
            return {"cell": task["cell"], "sets": _spectrum_sets(task["dist"],
                                                                 task["lam"], task["C"])}
        raise ConfigError(f"unknown task kind {kind!r}")
    except AntitreeError as exc:
        return {"cell": task["cell"], "error": str(exc), "error_type": type(exc).__name__}


def _geometry_audit(d: int, n_max: int) -> dict:
    counts_rows = []
    hopping_rows = []
    for n in range(1, n_max + 1):
        formula = zd_shell_counts(d, n)
        oracle = zd_brute_force(d, n)
        for k in range(d + 1):
            s_f = formula.by_zero_count[k]
            s_o = oracle.by_zero_count[k]
            # the printed closed form is stated for n >= d > k only
            in_domain = n >= d > k
            s_p = zd_printed_variant_count(d, n, k) if in_domain else None
            counts_rows.append((d, n, k, s_f, s_o, s_p, s_f == s_o,
                                (s_p == s_o) if in_domain else None))
        if n >= 2:
            hopping_rows.append((d, n, formula.edge_count_out, oracle.edge_count_out,
                                 formula.hopping, oracle.hopping))
    return {"counts": counts_rows, "hopping": hopping_rows}


def _spectrum_sets(dist: PotentialDistribution, lam: float, C: float) -> list[tuple]:
    rows = []
    for name, iset in (("I", i_lambda(dist, lam)),
                       ("J", j_lambda(dist, lam, C)),
                       ("ess", essential_spectrum(dist, lam))):
        for i, iv in enumerate(iset.intervals):
            rows.append((lam, name, i, iv.lo, iv.hi, iv.lo_closed, iv.hi_closed))
    return rows


# ---------------------------------------------------------------------------
# reduction to CSV rows
# ---------------------------------------------------------------------------

def _reduce(cfg: dict, tasks: list[dict], results: list[dict]):
    """Assemble CSV payloads in deterministic cell order."""
    exp = cfg["experiment"]
    dist = build_distribution(cfg["distribution"])
    d, C = _growth_params(cfg)
    energies = energy_grid(cfg)
    lambdas = cfg["lambda"]
    failures: dict[int, str] = {}
    for res in results:
        if "error" in res:
            failures.setdefault(res["cell"], f"{res['error_type']}: {res['error']}")

    files: dict[str, list[str]] = {}
    cells: list[dict] = []

    def cell_status(cell: int, key: str):
        if cell in failures:
            cells.append({"key": key, "status": "failed", "error": failures[cell]})
            return False
        cells.append({"key": key, "status": "ok"})
        return True

    if exp == "lyapunov":
        rows = []
        by_cell: dict[int, list[float]] = {}
        for res in results:
            if "slopes" in res:
                by_cell.setdefault(res["cell"], []).extend(res["slopes"])
        cell = 0
        for lam in lambdas:
            for E in energies:
                key = f"lambda={lam},E={E}"
                if cell_status(cell, key):
                    slopes = np.array(by_cell.get(cell, []))
                    gamma = effective_quantities(dist, float(E), lam).gamma
                    stderr = slopes.std(ddof=1) / math.sqrt(len(slopes)) if len(slopes) > 1 else math.nan
                    rows.append([E, lam, d, C, cfg["N"], len(slopes),
                                 slopes.mean(), stderr, gamma])
                cell += 1
        files["lyapunov.csv"] = _csv(HEADERS["lyapunov"], rows)
    elif exp == "density":
        rows = []
        by_cell = {res["cell"]: res.get("rho") for res in results}
        lam = lambdas[0]
        for i, E in enumerate(energies):
            if cell_status(i, f"E={E}"):
                theory = free_density_theory(float(E)) if lam == 0.0 else None
                rows.append([E, by_cell[i], theory])
        files["density.csv"] = _csv(HEADERS["density"], rows)
    elif exp == "phase-diagram":
        rows = []
        by_cell = {res["cell"]: res.get("classification") for res in results}
        cell = 0
        for lam in lambdas:
            for E in energies:
                if cell_status(cell, f"lambda={lam},E={E}"):
                    c = by_cell[cell]
                    rows.append([c.E, c.lam, c.d, c.C, c.verdict, c.gamma,
                                 c.decay_kind, c.decay_constant])
                cell += 1
        files["phase_diagram.csv"] = _csv(HEADERS["phase-diagram"], rows)
    elif exp == "harmonic-check":
        rows = []
        by_cell = {res["cell"]: res.get("report") for res in results}
        for i, n in enumerate(_HARMONIC_LADDER):
            if cell_status(i, f"n={n}"):
                r = by_cell[i]
                exact1 = r.exact["m1"] if r.exact else None
                exact2 = r.exact["m2"] if r.exact else None
                rows.append([r.n, r.m1, r.m1_stderr, r.bounds.first_upper,
                             r.m2, r.m2_stderr, r.bounds.second_lo, r.bounds.second_hi,
                             r.m3, exact1, exact2])
        files["harmonic_check.csv"] = _csv(HEADERS["harmonic-check"], rows)
    elif exp == "geometry-audit":
        count_rows, hop_rows = [], []
        by_cell = {res["cell"]: res.get("audit") for res in results}
        for i, dim in enumerate(_GEOMETRY_DIMS):
            if cell_status(i, f"d={dim}"):
                count_rows.extend(by_cell[i]["counts"])
                hop_rows.extend(by_cell[i]["hopping"])
        files["geometry_counts.csv"] = _csv(HEADERS["geometry-counts"], count_rows)
        files["geometry_hopping.csv"] = _csv(HEADERS["geometry-hopping"], hop_rows)
    elif exp == "spectrum-sets":
        rows = []
        by_cell = {res["cell"]: res.get("sets") for res in results}
        for i, lam in enumerate(lambdas):
            if cell_status(i, f"lambda={lam}"):
                rows.extend(by_cell[i])
        files["spectrum_sets.csv"] = _csv(HEADERS["spectrum-sets"], rows)

    return files, cells


def _csv(header: str, rows) -> list[str]:
    lines = [header]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return lines


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_experiment(config: dict, *, threads: int = 1, base_dir: Path | str = ".") -> tuple[dict, int]:
    """Run a normalized config; returns (manifest, exit_code) and writes files.

    Exit code 0 on full success, 2 when some cells failed (their rows are
    dropped, the rest of the sweep survives).  Config errors raise before
    anything is written.
    """
    t_start = time.monotonic()
    base_dir = Path(base_dir)
    tasks = build_tasks(config, base_dir)
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_execute_task, tasks))
    else:
        results = [_execute_task(t) for t in tasks]
    files, cells = _reduce(config, tasks, results)

    out_dir = base_dir / config["output_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    file_entries = []
    mirror = {}
    for name in sorted(files):
        data = ("\n".join(files[name]) + "\n").encode()
        atomic_write(out_dir / name, data)
        file_entries.append({"name": name, "sha256": _sha256(data), "bytes": len(data)})
        mirror[name] = {"header": files[name][0].split(","),
                        "rows": [line.split(",") for line in files[name][1:]]}

    failed = [c for c in cells if c["status"] != "ok"]
    manifest = {
        "tool": "antitree",
        "version": __version__,
        "experiment": config["experiment"],
        "config": config,
        "config_digest": config_digest(config),
        "seed": config["seed"],
        "stream_scheme": "philox(seed_sequence(entropy=seed, "
                         "spawn_key=(domain, cell, trial, block)))",
        "threads": threads,
        "wall_time_s": time.monotonic() - t_start,
        "files": file_entries,
        "data": mirror,
        "cells": cells,
        "status": "partial" if failed else "ok",
        "audit_notes": _audit_notes(config),
    }
    atomic_write(out_dir / "manifest.json",
                 (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest, (2 if failed else 0)


def _audit_notes(config: dict) -> list[str]:
    notes = []
    if config["experiment"] == "geometry-audit":
        notes.append(
            "shell counts use the enumeration-validated formula "
            "C(d,k)*2^(d-k)*C(n-1,d-k-1); the s_printed_variant column shows "
            "the widely quoted variant C(d,k)*2^(d-k)*C(n-1-k,d-1-k), which "
            "disagrees for 0 < k < d-1")
    if config["experiment"] == "spectrum-sets" and \
            config["distribution"].get("kind") == "bernoulli":
        notes.append(
            "for the two-point law the positive essential-spectrum component is "
            "[sqrt(1+lambda^2)-1, 1+sqrt(1+lambda^2)]; a printed closed form "
            "elsewhere starts it at 1-sqrt(1+lambda^2), which direct evaluation "
            "of |h|<=2 rules out")
    return notes
