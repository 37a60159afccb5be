"""Command-line front end: config files, subcommands, and the process farm.

Subcommands
-----------
trajectory      one stochastic trajectory, written as record files
steady          density-matrix steady state and photon distribution
phase-diagram   mean-field bistability boundaries over detuning, per g
sweep           simulate the (g, eta) study grid and reduce it to point stats
scale           full scaling pipeline: sweep + eta*, tau*, exponent fits
analyze         re-run telegraph analysis on stored trajectory records
selftest        quick oracle battery (exact identities plus short runs)

Config file format
------------------
UTF-8 text, ``key = value`` lines grouped under ``[section]`` headers; blank
lines and lines starting with ``#`` are ignored.  Unknown sections or keys,
duplicate keys, malformed numbers and out-of-range values are all errors
that name the offending line.  All rates are in units of kappa, which is
fixed to 1.  Required keys: g, delta and eta under [model], t_final under
[trajectory]; everything else has the defaults shown by ``format_config``.
[model] g and eta drive the single-point commands; sweeps take delta and
gamma from [model] and their grids from [study].

Flags --config, --out, --workers, --seed and --resume override the file;
environment variables JCBLINK_CONFIG, JCBLINK_OUT, JCBLINK_WORKERS,
JCBLINK_SEED and JCBLINK_RESUME sit between the two (flag wins over
environment, environment over file).

Every run writes its fully resolved config next to its outputs, and every
CSV the CLI composes starts with a ``#`` comment block carrying the SHA-256
of that resolved config.  Trajectory record files carry no such block: they
are specified to be byte-identical for identical seeds.
"""
from __future__ import annotations

import argparse
import dataclasses
import glob
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np

from . import neoclassical, scaling, steadystate, telegraph
from .mcwf import TrajectoryConfig, load_record, run_trajectory, save_record
from .model import (
    ModelParams,
    build_hamiltonian,
    build_operators,
    dressed_energy,
    suggested_cutoff,
)
from .scaling import SweepBudget, TrajectoryJob, fit_power_law

log = logging.getLogger(__name__)

ENV_PREFIX = "JCBLINK_"
COMMANDS = (
    "trajectory", "steady", "phase-diagram", "sweep", "scale", "analyze",
    "selftest",
)
_NEEDS_CONFIG = ("trajectory", "steady", "phase-diagram", "sweep", "scale")

_METHODS = ("auto", "eig", "expm", "rk45")

# detuning grid for the phase-diagram command, in units of kappa
PHASE_DELTAS = np.linspace(-10.0, -0.25, 40)


class ConfigError(ValueError):
    """Config-file or flag problem; carries the line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class CliError(RuntimeError):
    """Runtime failure that should become a clean nonzero exit."""


# ---------------------------------------------------------------------------
# config schema

@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description.

    Invariant: trajectory.seed always equals master_seed (parse_config and
    the flag plumbing keep them in lockstep), and format_config followed by
    parse_config reproduces the instance exactly.
    """

    params: ModelParams
    trajectory: TrajectoryConfig
    g_values: tuple[float, ...]
    eta_over_g: tuple[float, ...]
    total_time: float
    n_seeds: int
    exclude_largest_g: bool
    out: str
    workers: int
    master_seed: int
    resume: bool

    @property
    def budget(self) -> SweepBudget:
        return SweepBudget(
            total_time=self.total_time,
            n_seeds=self.n_seeds,
            burn_in=self.trajectory.burn_in,
            dt_sample=self.trajectory.dt_sample,
        )


_REQUIRED = object()

# (section, key) -> (kind, default); _REQUIRED marks keys that must appear.
# cutoff defaults to None, meaning "derive from the model parameters".
_SCHEMA: dict[tuple[str, str], tuple[str, object]] = {
    ("model", "g"): ("float", _REQUIRED),
    ("model", "delta"): ("float", _REQUIRED),
    ("model", "eta"): ("float", _REQUIRED),
    ("model", "gamma"): ("float", 0.0),
    ("model", "kappa"): ("float", 1.0),
    ("model", "cutoff"): ("int", None),
    ("trajectory", "t_final"): ("float", _REQUIRED),
    ("trajectory", "dt_sample"): ("float", 0.1),
    ("trajectory", "dt_max"): ("float", 0.1),
    ("trajectory", "norm_tolerance"): ("float", 1e-6),
    ("trajectory", "burn_in"): ("float", 200.0),
    ("trajectory", "method"): ("str", "auto"),
    ("study", "g_values"): ("floats", (20.0, 30.0, 40.0, 50.0)),
    ("study", "eta_over_g"): ("floats", (0.18, 0.21, 0.24, 0.27, 0.30)),
    ("study", "total_time"): ("float", 5e4),
    ("study", "n_seeds"): ("int", 4),
    ("study", "exclude_largest_g"): ("bool", False),
    ("run", "out"): ("str", "runs"),
    ("run", "workers"): ("int", 1),
    ("run", "master_seed"): ("int", 0),
    ("run", "resume"): ("bool", False),
}
_SECTIONS = tuple(dict.fromkeys(section for section, _ in _SCHEMA))

_TRUE_WORDS = ("true", "1", "yes", "on")
_FALSE_WORDS = ("false", "0", "no", "off")


def _convert(kind: str, raw: str, key: str, line: int):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw, 10)
        if kind == "floats":
            parts = [p.strip() for p in raw.split(",")]
            if not all(parts):
                raise ValueError("empty element")
            return tuple(float(p) for p in parts)
        if kind == "bool":
            word = raw.lower()
            if word in _TRUE_WORDS:
                return True
            if word in _FALSE_WORDS:
                return False
            raise ValueError("not a boolean")
        return raw
    except ValueError:
        article = "an" if kind == "int" else "a"
        raise ConfigError(
            f"{key} expects {article} {kind} value, got {raw!r}", line
        ) from None


def _range_check(section: str, key: str, value) -> str | None:
    """Return an error message when the value is out of range, else None."""
    if key in ("g", "eta", "gamma", "burn_in") and value < 0:
        return f"{key} must be >= 0"
    if key == "kappa" and value != 1.0:
        return "kappa is fixed to 1 (all rates are in units of kappa)"
    if key == "cutoff" and value is not None and value < 1:
        return "cutoff must be >= 1"
    if key in ("t_final", "dt_sample", "dt_max", "total_time") and value <= 0:
        return f"{key} must be > 0"
    if key == "norm_tolerance" and not 0 < value <= 0.1:
        return "norm_tolerance must be in (0, 0.1]"
    if key == "method" and value not in _METHODS:
        return f"method must be one of {', '.join(_METHODS)}"
    if key in ("g_values", "eta_over_g"):
        if not value or any(v <= 0 for v in value):
            return f"{key} needs positive entries"
    if key in ("n_seeds", "workers") and value < 1:
        return f"{key} must be >= 1"
    if key == "master_seed" and value < 0:
        return "master_seed must be >= 0"
    if key == "out" and not value:
        return "out must not be empty"
    if section == "model" and key == "delta" and not math.isfinite(value):
        return "delta must be finite"
    return None


def parse_config(text: str) -> RunConfig:
    """Parse and validate the config format described in the module docstring."""
    seen: dict[tuple[str, str], tuple[str, int]] = {}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("malformed section header", lineno)
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", lineno)
            section = name
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, _, raw_value = line.partition("=")
        key, raw_value = key.strip(), raw_value.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"unknown key {key} in [{section}]", lineno)
        if (section, key) in seen:
            first = seen[(section, key)][1]
            raise ConfigError(
                f"duplicate key {key} (first set on line {first})", lineno
            )
        if not raw_value:
            raise ConfigError(f"empty value for {key}", lineno)
        seen[(section, key)] = (raw_value, lineno)

    values: dict[tuple[str, str], object] = {}
    lines: dict[tuple[str, str], int] = {}
    for (sec, key), (kind, default) in _SCHEMA.items():
        if (sec, key) in seen:
            raw_value, lineno = seen[(sec, key)]
            values[(sec, key)] = _convert(kind, raw_value, key, lineno)
            lines[(sec, key)] = lineno
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key} in [{sec}]")
        else:
            values[(sec, key)] = default
    for (sec, key), value in values.items():
        message = _range_check(sec, key, value)
        if message is not None:
            raise ConfigError(message, lines.get((sec, key)))
    if values[("trajectory", "burn_in")] >= values[("trajectory", "t_final")]:
        raise ConfigError(
            "burn_in must be below t_final", lines.get(("trajectory", "burn_in"))
        )

    cutoff = values[("model", "cutoff")]
    if cutoff is None:
        cutoff = suggested_cutoff(
            values[("model", "g")], values[("model", "delta")],
            values[("model", "eta")], values[("model", "kappa")],
        )
    try:
        params = ModelParams(
            g=values[("model", "g")],
            delta=values[("model", "delta")],
            eta=values[("model", "eta")],
            gamma=values[("model", "gamma")],
            kappa=values[("model", "kappa")],
            cutoff=int(cutoff),
        )
        trajectory = TrajectoryConfig(
            seed=values[("run", "master_seed")],
            t_final=values[("trajectory", "t_final")],
            dt_sample=values[("trajectory", "dt_sample")],
            dt_max=values[("trajectory", "dt_max")],
            norm_tolerance=values[("trajectory", "norm_tolerance")],
            burn_in=values[("trajectory", "burn_in")],
            method=values[("trajectory", "method")],
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return RunConfig(
        params=params,
        trajectory=trajectory,
        g_values=values[("study", "g_values")],
        eta_over_g=values[("study", "eta_over_g")],
        total_time=values[("study", "total_time")],
        n_seeds=values[("study", "n_seeds")],
        exclude_largest_g=values[("study", "exclude_largest_g")],
        out=values[("run", "out")],
        workers=values[("run", "workers")],
        master_seed=values[("run", "master_seed")],
        resume=values[("run", "resume")],
    )


def format_config(config: RunConfig) -> str:
    """Canonical text form of a RunConfig; parse_config inverts it exactly."""

    def num(v: float) -> str:
        return repr(float(v))

    def nums(vs) -> str:
        return ", ".join(num(v) for v in vs)

    p, t = config.params, config.trajectory
    lines = [
        "[model]",
        f"g = {num(p.g)}",
        f"delta = {num(p.delta)}",
        f"eta = {num(p.eta)}",
        f"gamma = {num(p.gamma)}",
        f"kappa = {num(p.kappa)}",
        f"cutoff = {p.cutoff}",
        "",
        "[trajectory]",
        f"t_final = {num(t.t_final)}",
        f"dt_sample = {num(t.dt_sample)}",
        f"dt_max = {num(t.dt_max)}",
        f"norm_tolerance = {num(t.norm_tolerance)}",
        f"burn_in = {num(t.burn_in)}",
        f"method = {t.method}",
        "",
        "[study]",
        f"g_values = {nums(config.g_values)}",
        f"eta_over_g = {nums(config.eta_over_g)}",
        f"total_time = {num(config.total_time)}",
        f"n_seeds = {config.n_seeds}",
        f"exclude_largest_g = {'true' if config.exclude_largest_g else 'false'}",
        "",
        "[run]",
        f"out = {config.out}",
        f"workers = {config.workers}",
        f"master_seed = {config.master_seed}",
        f"resume = {'true' if config.resume else 'false'}",
        "",
    ]
    return "\n".join(lines)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(format_config(config).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# the process farm

@dataclass
class FarmReport:
    completed: list[str]
    failed: list[tuple[str, str]]  # (job path, error text)


def _farm_worker(job: TrajectoryJob, workdir: str) -> str:
    scaling.run_job(job, workdir)
    return job.path


def farm(jobs: list[TrajectoryJob], workdir: str, workers: int) -> FarmReport:
    """Execute independent jobs, each persisting its own summary file.

    Results do not depend on scheduling: every job carries its seed, writes
    only its own file, and all aggregation happens later in sorted job
    order.  A failing job is recorded and the rest continue; a crashed
    worker process fails its job (and any not yet started on a broken
    pool) without taking the farm down.
    """
    os.makedirs(workdir, exist_ok=True)
    completed: list[str] = []
    failed: list[tuple[str, str]] = []
    if workers <= 1:
        for i, job in enumerate(jobs, 1):
            try:
                _farm_worker(job, workdir)
                completed.append(job.path)
                log.info("[%d/%d] done %s", i, len(jobs), job.path)
            except Exception as err:
                failed.append((job.path, f"{type(err).__name__}: {err}"))
                log.warning("[%d/%d] FAILED %s: %s", i, len(jobs), job.path, err)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_farm_worker, job, workdir): job for job in jobs}
            for i, future in enumerate(as_completed(futures), 1):
                job = futures[future]
                try:
                    future.result()
                    completed.append(job.path)
                    log.info("[%d/%d] done %s", i, len(futures), job.path)
                except Exception as err:
                    failed.append((job.path, f"{type(err).__name__}: {err}"))
                    log.warning(
                        "[%d/%d] FAILED %s: %s", i, len(futures), job.path, err
                    )
    completed.sort()
    failed.sort()
    return FarmReport(completed=completed, failed=failed)


# ---------------------------------------------------------------------------
# shared plumbing

def _emit_resolved(config: RunConfig) -> str:
    """Write the resolved config into the output directory; return its hash."""
    os.makedirs(config.out, exist_ok=True)
    text = format_config(config)
    with open(os.path.join(config.out, "resolved.cfg"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _prepend_provenance(path: str, command: str, sha: str) -> None:
    """Put the CSV comment block (command + config hash) above the header."""
    with open(path, encoding="utf-8") as fh:
        body = fh.read()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# jcblink {command}\n# config-sha256: {sha}\n{body}")


def _study_jobs(config: RunConfig) -> tuple[str, list[TrajectoryJob]]:
    """Expand the study grid into jobs and verify the drive windows."""
    grid = [
        (g, round(g * r, 12)) for g in config.g_values for r in config.eta_over_g
    ]
    delta, gamma = config.params.delta, config.params.gamma
    for g in dict.fromkeys(config.g_values):
        scaling._require_in_window(
            g, np.array([e for gg, e in grid if gg == g]), delta, 1.0
        )
    jobs = scaling._jobs_for_points(
        grid, config.budget, delta, gamma, 1.0, config.master_seed
    )
    return os.path.join(config.out, "points"), jobs


def _check_resume(workdir: str, jobs: list[TrajectoryJob], resume: bool) -> None:
    existing = [
        j.path for j in jobs if os.path.exists(os.path.join(workdir, j.path))
    ]
    if existing and not resume:
        raise CliError(
            f"{len(existing)} job summaries already exist in {workdir}; "
            "pass --resume to reuse them or point --out elsewhere"
        )


def _report_failures(report: FarmReport, out: str) -> None:
    doc = {
        "schema": "farm-report/1",
        "completed": len(report.completed),
        "failed": [{"path": p, "error": e} for p, e in report.failed],
    }
    with open(os.path.join(out, "farm_report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        json.dumps(
            {"error": "farm", "message": f"{len(report.failed)} jobs failed",
             "failed": [p for p, _ in report.failed]}
        ),
        file=sys.stderr,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_trajectory(config: RunConfig) -> int:
    _emit_resolved(config)
    record = run_trajectory(config.params, config.trajectory)
    stem = os.path.join(config.out, f"trajectory_seed{config.master_seed}")
    save_record(record, stem)
    mask = record.sample_times >= config.trajectory.burn_in
    print(
        f"trajectory: {record.jump_times.size} jumps, "
        f"<n> = {record.photon_number[mask].mean():.4f} after burn-in, "
        f"records at {stem}.*"
    )
    return 0


def cmd_steady(config: RunConfig) -> int:
    sha = _emit_resolved(config)
    params = config.params
    rho = steadystate.steady_state(params)
    ops = build_operators(params.cutoff)
    n = float(steadystate.expectation(rho, ops.number).real)
    atom = float(steadystate.expectation(rho, ops.sigma_dag @ ops.sigma).real)
    q = steadystate.mandel_q(rho, ops)
    doc = {
        "schema": "steady-state/1",
        "config_sha256": sha,
        "photon_number": n,
        "atom_population": atom,
        "mandel_q": q,
        "cavity_jump_rate": 2.0 * params.kappa * n,
        "atom_jump_rate": 2.0 * params.gamma * atom,
    }
    with open(os.path.join(config.out, "steady.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    dist_path = os.path.join(config.out, "photon_distribution.csv")
    steadystate.save_photon_distribution(rho, dist_path)
    _prepend_provenance(dist_path, "steady", sha)
    print(f"steady: <n> = {n:.6f}, <sigma+sigma-> = {atom:.6f}, Q = {q:.4f}")
    return 0


def cmd_phase_diagram(config: RunConfig) -> int:
    sha = _emit_resolved(config)
    for g in dict.fromkeys(config.g_values):
        boundary = neoclassical.phase_diagram(PHASE_DELTAS, g)
        path = os.path.join(config.out, f"phase_g{g:g}.csv")
        neoclassical.save_phase_diagram(boundary, path)
        _prepend_provenance(path, "phase-diagram", sha)
        print(f"phase-diagram: wrote {path}")
    return 0


def cmd_sweep(config: RunConfig) -> int:
    sha = _emit_resolved(config)
    workdir, jobs = _study_jobs(config)
    _check_resume(workdir, jobs, config.resume)
    scaling.prepare_workdir(
        workdir, jobs, config.budget, config.params.delta, config.params.gamma,
        1.0, config.master_seed,
    )
    pending = [
        j for j in jobs if not os.path.exists(os.path.join(workdir, j.path))
    ]
    log.info("sweep: %d of %d jobs to run", len(pending), len(jobs))
    report = farm(pending, workdir, config.workers)
    if report.failed:
        _report_failures(report, config.out)
        return 3
    summaries = [
        scaling.load_summary(os.path.join(workdir, j.path)) for j in jobs
    ]
    points = scaling._points_from_summaries(summaries)
    scaling.save_points(points, os.path.join(workdir, "points.json"))
    csv_path = os.path.join(workdir, "sweep.csv")
    scaling.save_sweep_csv(points, csv_path)
    _prepend_provenance(csv_path, "sweep", sha)
    for p in points:
        print(
            f"sweep: g={p.g:g} eta={p.eta:g} F={p.stats.filling:.3f} "
            f"tau={p.stats.tau:.1f}"
        )
    return 0


def cmd_scale(config: RunConfig) -> int:
    sha = _emit_resolved(config)
    workdir, jobs = _study_jobs(config)
    _check_resume(workdir, jobs, config.resume)
    report_box: list[FarmReport] = []

    def runner(pending: list[TrajectoryJob]) -> None:
        report_box.append(farm(pending, workdir, config.workers))

    try:
        result = scaling.run_study(
            workdir,
            g_list=config.g_values,
            eta_over_g=config.eta_over_g,
            budget=config.budget,
            delta=config.params.delta,
            gamma=config.params.gamma,
            master_seed=config.master_seed,
            exclude_largest_g=config.exclude_largest_g,
            runner=runner,
        )
    except RuntimeError:
        # summaries missing after the farm pass means failed jobs
        if report_box and report_box[0].failed:
            _report_failures(report_box[0], config.out)
            return 3
        raise
    for name in ("sweep.csv", "aggregate.csv"):
        _prepend_provenance(os.path.join(workdir, name), "scale", sha)
    for name, fit in result.fits.items():
        if fit is None:
            print(f"scale: {name}: no fit (too few usable points)")
        else:
            print(
                f"scale: {name} exponent = {fit.exponent:.3f} "
                f"+- {fit.exponent_se:.3f} over {fit.n_points} points"
            )
    return 0


def _record_stems(directory: str) -> list[str]:
    """Stems of trajectory records in a directory, found by header schema."""
    stems = []
    for path in glob.glob(os.path.join(directory, "*.json")):
        try:
            with open(path, encoding="utf-8") as fh:
                header = json.load(fh)
        except (json.JSONDecodeError, OSError):
            continue
        if isinstance(header, dict) and header.get("schema") == "trajectory-record/1":
            stems.append(path[: -len(".json")])
    return sorted(stems)


def cmd_analyze(config: RunConfig) -> int:
    sha = _emit_resolved(config)
    stems = _record_stems(config.out)
    if not stems:
        raise CliError(f"no trajectory records found in {config.out}")
    rows = []
    for stem in stems:
        record = load_record(stem)
        signal = telegraph.binarize(record)
        stats = telegraph.telegraph_stats(record, signal)
        telegraph.save_stats(stats, stem + ".stats.json")
        on_dur, off_dur = telegraph.dwell_times(signal)
        telegraph.save_dwell_times(on_dur, off_dur, stem + ".dwells.csv")
        rows.append((os.path.basename(stem), stats,
                     telegraph.verify_binary_identity(signal)))
    table = os.path.join(config.out, "analyze.csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write(
            "record,filling,filling_se,on_level,mu,lam,tau,"
            "n_on_periods,n_off_periods,identity_dev\n"
        )
        for name, st, dev in rows:
            fields = [name] + [
                repr(float(v))
                for v in (st.filling, st.filling_se, st.on_level, st.mu,
                          st.lam, st.tau)
            ] + [str(st.n_on_periods), str(st.n_off_periods), repr(float(dev))]
            fh.write(",".join(fields) + "\n")
    _prepend_provenance(table, "analyze", sha)
    print(f"analyze: {len(rows)} records -> {table}")
    return 0


# ---------------------------------------------------------------------------
# selftest

def _selftest_checks() -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []

    # exact dressed spectrum of the undriven Hamiltonian; the top atom-excited
    # state has no partner inside the truncation and stays bare
    params = ModelParams(g=8.0, delta=-3.0, eta=0.0, cutoff=12)
    energies = np.sort(np.linalg.eigvalsh(build_hamiltonian(params)))
    expected = sorted(
        [0.0]
        + [dressed_energy(n, s, params.delta, params.g)
           for n in range(1, params.cutoff + 1) for s in (+1, -1)]
        + [-params.delta * (params.cutoff + 1)]
    )
    dev = float(np.max(np.abs(energies - np.array(expected))))
    checks.append(("dressed-spectrum", dev < 1e-9, f"max deviation {dev:.2e}"))

    # mean-field boundaries: low edge at 0.1 g, critical point at g/2
    lo50 = neoclassical.bistability_boundaries(-5.0, 50.0)[0] / 50.0
    lo100 = neoclassical.bistability_boundaries(-5.0, 100.0)[0] / 100.0
    checks.append(
        ("boundary-low-edge", abs(lo50 - 0.1) < 0.005, f"eta_low/g = {lo50:.4f}")
    )
    checks.append(
        ("boundary-g-independence", abs(lo100 / lo50 - 1.0) < 0.02,
         f"g=100 vs g=50 ratio {lo100 / lo50:.4f}")
    )
    # near the critical point the window collapses; a dense scan resolves it
    fine = np.linspace(0.40, 0.60, 801) * 50.0
    near = neoclassical.bistability_boundaries(-0.05, 50.0, fine)[0] / 50.0
    checks.append(
        ("boundary-critical-point", abs(near - 0.5) < 0.01,
         f"eta_low/g -> {near:.4f} as delta -> 0")
    )

    # exact power-law recovery
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_power_law(x, 3.0 * x**2)
    checks.append(
        ("power-law-exact", abs(fit.exponent - 2.0) < 1e-10,
         f"exponent {fit.exponent:.12f}")
    )

    # telegraph estimators on an exact two-state Markov signal
    record = telegraph.synthesize_telegraph(
        mu=0.02, lam=0.04, on_level=5.0, t_final=2e4, dt_sample=0.1, seed=42
    )
    signal = telegraph.binarize(record)
    stats = telegraph.telegraph_stats(record, signal)
    dev = telegraph.verify_binary_identity(signal)
    f_true = 0.02 / 0.06
    ok = (
        dev < 1e-12
        and abs(stats.filling - f_true) <= 3 * stats.filling_se
        and abs(stats.tau - 1.0 / 0.06) <= 3 * stats.tau_se
    )
    checks.append(
        ("telegraph-estimators", ok,
         f"identity {dev:.1e}, F {stats.filling:.3f} (true {f_true:.3f})")
    )

    # driven empty cavity: coherent state with <n> = (eta/kappa)^2
    empty = ModelParams(g=0.0, delta=0.0, eta=2.0, cutoff=24)
    cfg = TrajectoryConfig(seed=5, t_final=800.0, burn_in=100.0)
    rec = run_trajectory(empty, cfg)
    mask = rec.sample_times >= cfg.burn_in
    nbar = float(rec.photon_number[mask].mean())
    span = cfg.t_final - cfg.burn_in
    rate = float(np.sum(rec.jump_times >= cfg.burn_in)) / span
    ok = abs(nbar - 4.0) < 0.4 and abs(rate - 8.0) < 0.8
    checks.append(
        ("empty-cavity", ok, f"<n> = {nbar:.3f} (4), rate = {rate:.3f} (8)")
    )

    # trajectory average against the density-matrix steady state
    work = ModelParams(g=10.0, delta=-5.0, eta=2.5, cutoff=40)
    rho = steadystate.steady_state(work)
    ops = build_operators(work.cutoff)
    n_ss = float(steadystate.expectation(rho, ops.number).real)
    rec = run_trajectory(work, TrajectoryConfig(seed=3, t_final=1200.0))
    mask = rec.sample_times >= 200.0
    n_traj = float(rec.photon_number[mask].mean())
    ok = abs(n_traj / n_ss - 1.0) < 0.10
    checks.append(
        ("steady-state-match", ok, f"trajectory {n_traj:.4f} vs exact {n_ss:.4f}")
    )
    return checks


def cmd_selftest(config: RunConfig) -> int:
    checks = _selftest_checks()
    os.makedirs(config.out, exist_ok=True)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    doc = {
        "schema": "selftest/1",
        "passed": int(sum(bool(ok) for _, ok, _ in checks)),
        "total": len(checks),
        "checks": [
            {"name": name, "ok": bool(ok), "detail": detail}
            for name, ok, detail in checks
        ],
    }
    with open(os.path.join(config.out, "selftest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0 if all(ok for _, ok, _ in checks) else 1


# ---------------------------------------------------------------------------
# dispatch and entry point

_HANDLERS = {
    "trajectory": cmd_trajectory,
    "steady": cmd_steady,
    "phase-diagram": cmd_phase_diagram,
    "sweep": cmd_sweep,
    "scale": cmd_scale,
    "analyze": cmd_analyze,
    "selftest": cmd_selftest,
}


def dispatch(subcommand: str, config: RunConfig) -> int:
    """Run one subcommand against a resolved config; returns the exit code."""
    if subcommand not in _HANDLERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return _HANDLERS[subcommand](config)


# config used when a command that does not need one runs without --config
_FALLBACK_CONFIG = """\
[model]
g = 50
delta = -5
eta = 12.5

[trajectory]
t_final = 1000
"""


def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    path = args.config if args.config is not None else _env("CONFIG")
    if path is None and args.command in _NEEDS_CONFIG:
        raise ConfigError(f"{args.command} requires --config (or JCBLINK_CONFIG)")
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
    else:
        text = _FALLBACK_CONFIG
    config = parse_config(text)

    out = args.out if args.out is not None else _env("OUT")
    if out is not None:
        config = dataclasses.replace(config, out=out)
    workers = args.workers
    if workers is None and _env("WORKERS") is not None:
        workers = _convert("int", _env("WORKERS"), "JCBLINK_WORKERS", 0)
    if workers is not None:
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        config = dataclasses.replace(config, workers=workers)
    seed = args.seed
    if seed is None and _env("SEED") is not None:
        seed = _convert("int", _env("SEED"), "JCBLINK_SEED", 0)
    if seed is not None:
        if seed < 0:
            raise ConfigError("master seed must be >= 0")
        config = dataclasses.replace(
            config,
            master_seed=seed,
            trajectory=dataclasses.replace(config.trajectory, seed=seed),
        )
    resume = args.resume
    if not resume and _env("RESUME") is not None:
        resume = _convert("bool", _env("RESUME"), "JCBLINK_RESUME", 0)
    if resume:
        config = dataclasses.replace(config, resume=True)
    return config


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="jcblink",
        description="Driven Jaynes-Cummings blinking-trajectory toolkit",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--out", help="output directory (overrides [run] out)")
    parser.add_argument("--workers", type=int, help="farm process count")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument(
        "--resume", action="store_true",
        help="reuse existing job summaries in the output directory",
    )
    args = parser.parse_args(argv)
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=logging.INFO, stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
    try:
        config = _resolve_config(args)
        return dispatch(args.command, config)
    except ConfigError as err:
        print(json.dumps({"error": "config", "message": str(err)}), file=sys.stderr)
        return 2
    except CliError as err:
        print(json.dumps({"error": "run", "message": str(err)}), file=sys.stderr)
        return 1
    except Exception as err:  # pragma: no cover - last-resort guard
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
