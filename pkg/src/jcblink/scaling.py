"""Finite-size scaling of the blinking transition.

Orchestrates grids of trajectory runs over (g, eta), reduces every grid point
to pooled telegraph statistics, locates the half-filling drive eta*(g) by a
weighted linear fit of the bright fraction, and fits power laws in g to
eta*, to the switching timescale tau* evaluated there, and to the mean
blink-off rate.

Each (g, eta, seed) trajectory is an independent job whose reduced summary
is persisted as one small JSON file, so a study can be resumed, farmed out
over processes, or re-reduced without re-simulating.  Reduction is a pure
function of the summary set and does not depend on completion order.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import neoclassical
from .mcwf import CutoffBreachError, TrajectoryConfig, TrajectoryRecord, run_trajectory
from .model import ModelParams, suggested_cutoff
from .telegraph import (
    TelegraphStats,
    _aligned,
    _run_lengths,
    binarize,
    dwell_times,
)

log = logging.getLogger(__name__)

# A point enters fits only if its longest run (censored runs included) stays
# below this fraction of the point's total simulated time; a longer run means
# the window cannot have sampled enough switches for unbiased dwell means.
DWELL_GUARD_FRACTION = 0.1

# Cutoff escalation when a trajectory trips the truncation guard.
CUTOFF_RETRY_STEP = 4
CUTOFF_RETRIES = 8

# Bright-fraction band used for the linear eta* fit; outside it the response
# saturates and a straight line is the wrong model.
FIT_F_WINDOW = (0.05, 0.95)

# eta* may land at most this fraction of the grid span outside the grid.
EXTRAPOLATION_MARGIN = 0.1

# Default study grid: coupling values and drive strengths as fractions of g.
STUDY_G = (20.0, 30.0, 40.0, 50.0)
STUDY_ETA_OVER_G = (0.18, 0.21, 0.24, 0.27, 0.30)

SUMMARY_SCHEMA = "trajectory-summary/1"
MANIFEST_SCHEMA = "scaling-study/1"


# ---------------------------------------------------------------------------
# types

@dataclass(frozen=True)
class SweepBudget:
    """Simulation time per grid point and how it is split over seeds."""

    total_time: float = 5e4
    n_seeds: int = 4
    burn_in: float = 200.0
    dt_sample: float = 0.1

    def __post_init__(self) -> None:
        if self.total_time <= 0:
            raise ValueError("total_time must be positive")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")

    @property
    def per_seed_time(self) -> float:
        return self.total_time / self.n_seeds


@dataclass(frozen=True)
class TrajectoryJob:
    """One independent simulation unit: a (g, eta, seed) trajectory."""

    g: float
    eta: float
    seed_index: int
    seed: int  # derived from the master seed and the job's position
    t_final: float
    burn_in: float
    dt_sample: float
    delta: float
    gamma: float
    kappa: float
    cutoff: int  # starting guess; breaches escalate it
    path: str  # summary filename relative to the study workdir


@dataclass
class TrajectorySummary:
    """Reduced per-trajectory data, sufficient for every downstream fit."""

    g: float
    eta: float
    seed_index: int
    seed: int
    cutoff: int
    threshold: float
    sim_time: float
    n_samples: int
    n_on_samples: int
    on_sum: float  # sum of photon number over ON samples
    on_period_means: np.ndarray
    on_durations: np.ndarray
    off_durations: np.ndarray
    longest_run: float  # censored boundary runs included
    q_off_mean: float
    q_off_samples: int
    degenerate: bool  # all-dark record
    n_jumps: int
    wall_time: float


@dataclass(frozen=True)
class SweepPoint:
    """Pooled statistics of one (g, eta) grid point."""

    g: float
    eta: float
    stats: TelegraphStats
    q_dim: float
    q_dim_se: float
    total_time: float
    n_seeds: int
    longest_dwell: float
    cutoffs: tuple[int, ...]
    degenerate: bool  # too few complete periods for rate estimates

    @property
    def guard_ok(self) -> bool:
        """Whether the point is admissible for fits (dwell-truncation guard)."""
        return (
            not self.degenerate
            and self.longest_dwell < DWELL_GUARD_FRACTION * self.total_time
        )


@dataclass(frozen=True)
class EtaStar:
    """Half-filling drive strength for one g, from a linear fit of F(eta)."""

    g: float
    eta_star: float
    eta_star_se: float
    residual: float  # rms of fit residuals in F units
    f_window: tuple[float, float]  # range of bright fractions used
    n_points: int
    slope: float
    intercept: float


@dataclass(frozen=True)
class TauStar:
    """Switching timescale interpolated at eta*(g)."""

    g: float
    tau_star: float
    tau_star_se: float
    eta_star: float


@dataclass(frozen=True)
class LambdaPoint:
    """Mean blink-off rate at one g, averaged over admissible drive points."""

    g: float
    lam: float
    lam_se: float
    n_points: int


@dataclass(frozen=True)
class ExponentFit:
    """Weighted power-law fit y = A x^p on log-log axes."""

    exponent: float
    exponent_se: float
    intercept: float  # log amplitude
    intercept_se: float
    residuals: tuple[float, ...]  # per point, in log y
    covariance: tuple[tuple[float, float], tuple[float, float]]
    n_points: int
    excluded: tuple[float, ...]  # x values dropped before fitting

    @property
    def amplitude(self) -> float:
        return math.exp(self.intercept)


@dataclass
class StudyResult:
    """Everything the full pipeline produces, keyed by coupling strength."""

    points: dict[float, list[SweepPoint]]
    eta_stars: list[EtaStar]
    tau_stars: list[TauStar]
    lambdas: list[LambdaPoint]
    fits: dict[str, ExponentFit | None]


# ---------------------------------------------------------------------------
# job construction and execution

def _job_seed(master_seed: int, job_index: int) -> int:
    ss = np.random.SeedSequence([master_seed, job_index])
    return int(ss.generate_state(1, np.uint64)[0])


def _summary_filename(g: float, eta: float, seed_index: int) -> str:
    return f"g{g:g}_eta{eta:.6g}_s{seed_index}.json"


def _jobs_for_points(
    points: list[tuple[float, float]],
    budget: SweepBudget,
    delta: float,
    gamma: float,
    kappa: float,
    master_seed: int,
) -> list[TrajectoryJob]:
    """Expand grid points into per-seed jobs with deterministic seeds.

    Jobs are ordered by (g, eta, seed_index) and each one's RNG seed derives
    from (master_seed, position in that ordering), so the same grid always
    maps to the same seeds no matter how execution is scheduled.  Changing
    the grid changes the positions, hence the manifest check on resume.
    """
    ordered = sorted(set(points))
    jobs = []
    index = 0
    for g, eta in ordered:
        for k in range(budget.n_seeds):
            jobs.append(
                TrajectoryJob(
                    g=g,
                    eta=eta,
                    seed_index=k,
                    seed=_job_seed(master_seed, index),
                    t_final=budget.burn_in + budget.per_seed_time,
                    burn_in=budget.burn_in,
                    dt_sample=budget.dt_sample,
                    delta=delta,
                    gamma=gamma,
                    kappa=kappa,
                    cutoff=suggested_cutoff(g, delta, eta, kappa),
                    path=_summary_filename(g, eta, k),
                )
            )
            index += 1
    return jobs


def run_job(job: TrajectoryJob, workdir: str | None = None) -> TrajectorySummary:
    """Simulate one job, escalating the cutoff until no truncation breach.

    Every escalation restarts the trajectory from scratch with the same seed,
    so the final record is exactly what a run started at the final cutoff
    would have produced.  With `workdir` the summary is also written to
    job.path inside it.
    """
    cutoff = job.cutoff
    t0 = time.monotonic()
    for attempt in range(CUTOFF_RETRIES + 1):
        params = ModelParams(
            g=job.g,
            delta=job.delta,
            eta=job.eta,
            gamma=job.gamma,
            kappa=job.kappa,
            cutoff=cutoff,
        )
        config = TrajectoryConfig(
            seed=job.seed,
            t_final=job.t_final,
            dt_sample=job.dt_sample,
            burn_in=job.burn_in,
        )
        try:
            record = run_trajectory(params, config)
            break
        except CutoffBreachError as err:
            if attempt == CUTOFF_RETRIES:
                raise
            cutoff += CUTOFF_RETRY_STEP
            log.info(
                "g=%g eta=%g seed %d: %s; retrying at cutoff %d",
                job.g, job.eta, job.seed_index, err, cutoff,
            )
    summary = summarize_trajectory(record, seed_index=job.seed_index)
    summary.wall_time = time.monotonic() - t0
    if workdir is not None:
        save_summary(summary, os.path.join(workdir, job.path))
    return summary


def summarize_trajectory(
    record: TrajectoryRecord,
    seed_index: int = 0,
    *,
    g: float | None = None,
    eta: float | None = None,
) -> TrajectorySummary:
    """Reduce a record to the additive pieces point statistics pool over.

    g and eta default to the record's model parameters; synthetic records
    carry none and must state them explicitly.
    """
    params = record.params
    if g is None or eta is None:
        if params is None:
            raise ValueError("record has no model parameters; pass g and eta")
        g = params.g if g is None else g
        eta = params.eta if eta is None else eta
    signal = binarize(record)
    values = signal.values
    dt = signal.dt
    on_dur, off_dur = dwell_times(signal)
    rvals, rlens = _run_lengths(values)
    longest_run = float(rlens.max() * dt) if rlens.size else 0.0

    photon = _aligned(record, signal, "photon_number")
    on_mask = values == 1
    bounds = np.concatenate(([0], np.cumsum(rlens)))
    period_means = np.array(
        [
            photon[bounds[i] : bounds[i + 1]].mean()
            for i in range(1, rvals.size - 1)
            if rvals[i] == 1
        ]
    )

    q = _aligned(record, signal, "mandel_q")[values == 0]
    finite = np.isfinite(q)
    if q.size and finite.mean() >= 0.5:
        q_off_mean = float(q[finite].mean())
        q_off_samples = int(finite.sum())
    else:
        q_off_mean, q_off_samples = float("nan"), 0

    return TrajectorySummary(
        g=float(g),
        eta=float(eta),
        seed_index=seed_index,
        seed=record.config.seed,
        cutoff=params.cutoff if params is not None else 0,
        threshold=signal.threshold,
        sim_time=float(signal.sample_times[-1] - signal.sample_times[0]),
        n_samples=int(values.size),
        n_on_samples=int(on_mask.sum()),
        on_sum=float(photon[on_mask].sum()),
        on_period_means=period_means,
        on_durations=on_dur,
        off_durations=off_dur,
        longest_run=longest_run,
        q_off_mean=q_off_mean,
        q_off_samples=q_off_samples,
        degenerate=signal.degenerate,
        n_jumps=int(record.jump_times.size),
        wall_time=0.0,
    )


def reduce_point(
    g: float, eta: float, summaries: list[TrajectorySummary]
) -> SweepPoint:
    """Pool per-seed summaries into one grid point.

    Dwell times and sample counts pool directly; the ON-level error comes
    from the scatter of per-period means across all seeds, and the dim-phase
    Q error from the seed-to-seed scatter of its per-record means.
    """
    if not summaries:
        raise ValueError("no summaries to reduce")
    for s in summaries:
        if (s.g, s.eta) != (g, eta):
            raise ValueError(
                f"summary for g={s.g} eta={s.eta} mixed into point ({g}, {eta})"
            )
    on_all = np.concatenate([s.on_durations for s in summaries])
    off_all = np.concatenate([s.off_durations for s in summaries])
    k_on, k_off = int(on_all.size), int(off_all.size)
    n_samples = sum(s.n_samples for s in summaries)
    n_on = sum(s.n_on_samples for s in summaries)
    filling = n_on / n_samples
    total_time = sum(s.sim_time for s in summaries)

    period_means = np.concatenate([s.on_period_means for s in summaries])
    if n_on > 0:
        a = sum(s.on_sum for s in summaries) / n_on
        a_se = (
            float(np.std(period_means, ddof=1) / math.sqrt(period_means.size))
            if period_means.size >= 2
            else float("nan")
        )
    else:
        a, a_se = float("nan"), float("nan")

    degenerate = k_on < 2 or k_off < 2
    if not degenerate:
        lam = 1.0 / float(on_all.mean())
        mu = 1.0 / float(off_all.mean())
        lam_se = lam / math.sqrt(k_on)
        mu_se = mu / math.sqrt(k_off)
        tau = 1.0 / (mu + lam)
        tau_se = tau * tau * math.hypot(mu_se, lam_se)
        filling_se = filling * (1.0 - filling) * math.sqrt(1.0 / k_on + 1.0 / k_off)
    else:
        lam = mu = lam_se = mu_se = tau = tau_se = filling_se = float("nan")

    stats = TelegraphStats(
        on_level=float(a),
        on_level_se=a_se,
        mu=mu,
        mu_se=mu_se,
        lam=lam,
        lam_se=lam_se,
        filling=float(filling),
        filling_se=filling_se,
        tau=tau,
        tau_se=tau_se,
        n_on_periods=k_on,
        n_off_periods=k_off,
    )

    q_vals = np.array([s.q_off_mean for s in summaries], dtype=float)
    q_wts = np.array([s.q_off_samples for s in summaries], dtype=float)
    ok = np.isfinite(q_vals) & (q_wts > 0)
    if ok.any():
        q_dim = float(np.average(q_vals[ok], weights=q_wts[ok]))
        q_dim_se = (
            float(np.std(q_vals[ok], ddof=1) / math.sqrt(ok.sum()))
            if ok.sum() >= 2
            else float("nan")
        )
    else:
        q_dim, q_dim_se = float("nan"), float("nan")

    return SweepPoint(
        g=g,
        eta=eta,
        stats=stats,
        q_dim=q_dim,
        q_dim_se=q_dim_se,
        total_time=float(total_time),
        n_seeds=len(summaries),
        longest_dwell=max(s.longest_run for s in summaries),
        cutoffs=tuple(s.cutoff for s in sorted(summaries, key=lambda s: s.seed_index)),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# sweeping

def _require_in_window(
    g: float, etas: np.ndarray, delta: float, kappa: float
) -> None:
    """Raise unless every drive value sits inside the bistable window."""
    window = neoclassical.bistability_boundaries(delta, g, kappa=kappa)
    if window is None:
        raise ValueError(f"no bistable window at delta={delta}, g={g}")
    lo, hi = window
    if etas.min() <= lo or etas.max() >= hi:
        raise ValueError(
            f"eta_grid [{etas.min():g}, {etas.max():g}] leaves the "
            f"bistable window ({lo:g}, {hi:g}) at g={g:g}"
        )


def sweep_eta(
    g: float,
    eta_grid: np.ndarray,
    budget: SweepBudget | None = None,
    *,
    delta: float = -5.0,
    gamma: float = 0.0,
    kappa: float = 1.0,
    master_seed: int = 0,
    workdir: str | None = None,
    check_window: bool = True,
) -> list[SweepPoint]:
    """Simulate a drive sweep at fixed g and reduce it to grid points.

    The grid must sit inside the bistable window (checked against the
    mean-field boundaries unless check_window is False).  With `workdir`,
    per-trajectory summaries are persisted there and existing files are
    loaded instead of re-simulated, which makes the sweep resumable and
    lets several processes share the work.  Drive values are rounded to
    12 decimals so grids given as fractions of g produce stable file names.
    """
    budget = budget or SweepBudget()
    eta_grid = np.round(np.sort(np.asarray(eta_grid, dtype=float)), 12)
    if eta_grid.size < 2:
        raise ValueError("eta_grid needs at least two points")
    if check_window:
        _require_in_window(g, eta_grid, delta, kappa)
    jobs = _jobs_for_points(
        [(g, float(e)) for e in eta_grid], budget, delta, gamma, kappa, master_seed
    )
    summaries = _execute_jobs(jobs, workdir)
    points = _points_from_summaries(summaries)
    _check_filling_monotone(points)
    return points


def _execute_jobs(
    jobs: list[TrajectoryJob], workdir: str | None
) -> list[TrajectorySummary]:
    """Run jobs serially, loading any summary already present in workdir."""
    summaries = []
    for job in jobs:
        path = os.path.join(workdir, job.path) if workdir is not None else None
        if path is not None and os.path.exists(path):
            summaries.append(load_summary(path))
        else:
            summaries.append(run_job(job, workdir))
    return summaries


def _points_from_summaries(
    summaries: list[TrajectorySummary],
) -> list[SweepPoint]:
    groups: dict[tuple[float, float], list[TrajectorySummary]] = {}
    for s in summaries:
        groups.setdefault((s.g, s.eta), []).append(s)
    return [
        reduce_point(g, eta, group) for (g, eta), group in sorted(groups.items())
    ]


def _check_filling_monotone(points: list[SweepPoint]) -> None:
    """Warn when the bright fraction decreases with drive beyond noise."""
    usable = [p for p in points if not p.degenerate]
    for a, b in zip(usable, usable[1:]):
        slack = 3.0 * math.hypot(a.stats.filling_se, b.stats.filling_se)
        if b.stats.filling < a.stats.filling - slack:
            log.warning(
                "filling not monotone at g=%g: F(%g)=%.3f > F(%g)=%.3f",
                a.g, a.eta, a.stats.filling, b.eta, b.stats.filling,
            )


# ---------------------------------------------------------------------------
# fits

def _weighted_line(
    x: np.ndarray, y: np.ndarray, w: np.ndarray
) -> tuple[float, float, np.ndarray]:
    """Weighted least-squares line y = a + b x.

    Returns (a, b, covariance) with covariance ordered ((var_a, cov),
    (cov, var_b)), taking the weights as inverse variances.
    """
    s = w.sum()
    sx = (w * x).sum()
    sy = (w * y).sum()
    sxx = (w * x * x).sum()
    sxy = (w * x * y).sum()
    det = s * sxx - sx * sx
    # relative test: det/(s sxx) is the weighted variance fraction of x
    if det <= 1e-12 * s * sxx:
        raise ValueError("degenerate abscissa: fit needs distinct x values")
    a = (sxx * sy - sx * sxy) / det
    b = (s * sxy - sx * sy) / det
    cov = np.array([[sxx, -sx], [-sx, s]]) / det
    return float(a), float(b), cov


def find_eta_star(sweep: list[SweepPoint]) -> EtaStar:
    """Locate the half-filling drive by a weighted linear fit of F(eta).

    Only admissible points (guard_ok) with bright fraction inside
    FIT_F_WINDOW enter; the saturated tails are not linear.  The crossing
    must land within EXTRAPOLATION_MARGIN of the grid span outside the
    fitted points, otherwise the sweep does not bracket half filling and
    the result would be an extrapolation.
    """
    pts = [
        p
        for p in sweep
        if p.guard_ok and FIT_F_WINDOW[0] < p.stats.filling < FIT_F_WINDOW[1]
    ]
    if len(pts) < 2:
        raise ValueError(
            "need at least two admissible points with intermediate filling"
        )
    pts = sorted(pts, key=lambda p: p.eta)
    eta = np.array([p.eta for p in pts])
    f = np.array([p.stats.filling for p in pts])
    se = np.array([p.stats.filling_se for p in pts])
    a, b, cov = _weighted_line(eta, f, 1.0 / se**2)
    if b <= 0:
        raise ValueError("bright fraction does not increase with drive")
    eta_star = (0.5 - a) / b
    grad = np.array([-1.0 / b, -(0.5 - a) / (b * b)])
    eta_star_se = float(math.sqrt(grad @ cov @ grad))
    span = eta[-1] - eta[0]
    margin = EXTRAPOLATION_MARGIN * span
    if not (eta[0] - margin <= eta_star <= eta[-1] + margin):
        raise ValueError(
            f"half filling at eta={eta_star:g} lies outside the fitted "
            f"range [{eta[0]:g}, {eta[-1]:g}] by more than {margin:g}"
        )
    residuals = f - (a + b * eta)
    return EtaStar(
        g=pts[0].g,
        eta_star=float(eta_star),
        eta_star_se=eta_star_se,
        residual=float(np.sqrt(np.mean(residuals**2))),
        f_window=(float(f.min()), float(f.max())),
        n_points=len(pts),
        slope=b,
        intercept=a,
    )


def timescale_at_eta_star(
    g: float, sweep: list[SweepPoint], eta_star: EtaStar | None = None
) -> TauStar:
    """Interpolate the switching timescale tau(eta) at the half-filling drive.

    tau varies smoothly across the window, so a weighted line through the
    admissible points evaluated at eta* suffices; the eta* uncertainty is
    propagated through the local slope.
    """
    star = eta_star if eta_star is not None else find_eta_star(sweep)
    if star.g != g:
        raise ValueError(f"eta_star is for g={star.g:g}, not g={g:g}")
    pts = [
        p
        for p in sweep
        if p.guard_ok and math.isfinite(p.stats.tau) and p.stats.tau_se > 0
    ]
    if len(pts) < 2:
        raise ValueError("need at least two admissible points with finite tau")
    pts = sorted(pts, key=lambda p: p.eta)
    eta = np.array([p.eta for p in pts])
    if not eta[0] <= star.eta_star <= eta[-1]:
        raise ValueError(
            f"eta*={star.eta_star:g} outside the sweep range "
            f"[{eta[0]:g}, {eta[-1]:g}]"
        )
    tau = np.array([p.stats.tau for p in pts])
    se = np.array([p.stats.tau_se for p in pts])
    a, b, cov = _weighted_line(eta, tau, 1.0 / se**2)
    tau_star = a + b * star.eta_star
    grad = np.array([1.0, star.eta_star])
    var = float(grad @ cov @ grad) + (b * star.eta_star_se) ** 2
    if tau_star <= 0:
        raise ValueError("interpolated timescale is not positive")
    return TauStar(
        g=g,
        tau_star=float(tau_star),
        tau_star_se=math.sqrt(var),
        eta_star=star.eta_star,
    )


def lambda_vs_g(
    sweeps: dict[float, list[SweepPoint]]
) -> list[LambdaPoint]:
    """Mean blink-off rate per coupling, averaged over admissible points.

    The error is the larger of the point-to-point scatter and the
    propagated per-point errors, so slow drive dependence within the
    window is not hidden.
    """
    out = []
    for g in sorted(sweeps):
        pts = [
            p
            for p in sweeps[g]
            if p.guard_ok and math.isfinite(p.stats.lam) and p.stats.lam_se > 0
        ]
        if len(pts) < 2:
            raise ValueError(f"g={g:g}: need at least two admissible points")
        lam = np.array([p.stats.lam for p in pts])
        se = np.array([p.stats.lam_se for p in pts])
        scatter = float(np.std(lam, ddof=1) / math.sqrt(lam.size))
        propagated = float(np.sqrt((se**2).sum()) / lam.size)
        out.append(
            LambdaPoint(
                g=g,
                lam=float(lam.mean()),
                lam_se=max(scatter, propagated),
                n_points=len(pts),
            )
        )
    return out


def fit_power_law(
    x: np.ndarray,
    y: np.ndarray,
    errors: np.ndarray | None = None,
    *,
    exclude_largest: bool = False,
) -> ExponentFit:
    """Fit y = A x^p by weighted least squares on log-log axes.

    `errors` are absolute 1-sigma errors on y; they enter as inverse
    variances of log y via the relative error.  Without errors the fit is
    unweighted and the parameter covariance is scaled by the residual
    variance.  `exclude_largest` drops the largest-x point first and
    records it in the result, for checking how much the top of the range
    drives the exponent.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be matching 1d arrays")
    if errors is not None:
        errors = np.asarray(errors, dtype=float)
        if errors.shape != x.shape:
            raise ValueError("errors must match x")
        if not (np.isfinite(errors).all() and (errors > 0).all()):
            raise ValueError("errors must be finite and positive")
    if not ((x > 0).all() and (y > 0).all()):
        raise ValueError("power-law fit needs strictly positive x and y")

    excluded: tuple[float, ...] = ()
    if exclude_largest:
        drop = int(np.argmax(x))
        excluded = (float(x[drop]),)
        keep = np.arange(x.size) != drop
        x, y = x[keep], y[keep]
        if errors is not None:
            errors = errors[keep]
    if x.size < 3:
        raise ValueError("power-law fit needs at least three points")

    lx = np.log(x)
    ly = np.log(y)
    w = (y / errors) ** 2 if errors is not None else np.ones_like(lx)
    a, b, cov = _weighted_line(lx, ly, w)
    residuals = ly - (a + b * lx)
    if errors is None:
        # unweighted: estimate the noise scale from the residuals
        cov = cov * float((residuals**2).sum() / max(x.size - 2, 1))
    return ExponentFit(
        exponent=b,
        exponent_se=float(math.sqrt(cov[1, 1])),
        intercept=a,
        intercept_se=float(math.sqrt(cov[0, 0])),
        residuals=tuple(float(r) for r in residuals),
        covariance=((float(cov[0, 0]), float(cov[0, 1])),
                    (float(cov[1, 0]), float(cov[1, 1]))),
        n_points=int(x.size),
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# persistence

def _none_if_nan(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


def _nan_if_none(value: float | None) -> float:
    return float("nan") if value is None else float(value)


def save_summary(summary: TrajectorySummary, path) -> None:
    """Write one per-trajectory summary as JSON (NaN encoded as null)."""
    doc = {
        "schema": SUMMARY_SCHEMA,
        "g": summary.g,
        "eta": summary.eta,
        "seed_index": summary.seed_index,
        "seed": summary.seed,
        "cutoff": summary.cutoff,
        "threshold": summary.threshold,
        "sim_time": summary.sim_time,
        "n_samples": summary.n_samples,
        "n_on_samples": summary.n_on_samples,
        "on_sum": summary.on_sum,
        "on_period_means": [float(v) for v in summary.on_period_means],
        "on_durations": [float(v) for v in summary.on_durations],
        "off_durations": [float(v) for v in summary.off_durations],
        "longest_run": summary.longest_run,
        "q_off_mean": _none_if_nan(summary.q_off_mean),
        "q_off_samples": summary.q_off_samples,
        "degenerate": summary.degenerate,
        "n_jumps": summary.n_jumps,
        "wall_time": summary.wall_time,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)  # atomic: a crashed job never leaves a partial file


def load_summary(path) -> TrajectorySummary:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{path}: not a {SUMMARY_SCHEMA} file")
    return TrajectorySummary(
        g=float(doc["g"]),
        eta=float(doc["eta"]),
        seed_index=int(doc["seed_index"]),
        seed=int(doc["seed"]),
        cutoff=int(doc["cutoff"]),
        threshold=float(doc["threshold"]),
        sim_time=float(doc["sim_time"]),
        n_samples=int(doc["n_samples"]),
        n_on_samples=int(doc["n_on_samples"]),
        on_sum=float(doc["on_sum"]),
        on_period_means=np.asarray(doc["on_period_means"], dtype=float),
        on_durations=np.asarray(doc["on_durations"], dtype=float),
        off_durations=np.asarray(doc["off_durations"], dtype=float),
        longest_run=float(doc["longest_run"]),
        q_off_mean=_nan_if_none(doc["q_off_mean"]),
        q_off_samples=int(doc["q_off_samples"]),
        degenerate=bool(doc["degenerate"]),
        n_jumps=int(doc["n_jumps"]),
        wall_time=float(doc["wall_time"]),
    )


def _stats_doc(stats: TelegraphStats) -> dict:
    doc = dataclasses.asdict(stats)
    return {
        k: (_none_if_nan(v) if isinstance(v, float) else v) for k, v in doc.items()
    }


def save_points(points: list[SweepPoint], path) -> None:
    """Per-point statistics of a study as one JSON document."""
    doc = {
        "schema": "sweep-points/1",
        "points": [
            {
                "g": p.g,
                "eta": p.eta,
                "stats": _stats_doc(p.stats),
                "q_dim": _none_if_nan(p.q_dim),
                "q_dim_se": _none_if_nan(p.q_dim_se),
                "total_time": p.total_time,
                "n_seeds": p.n_seeds,
                "longest_dwell": p.longest_dwell,
                "cutoffs": list(p.cutoffs),
                "degenerate": p.degenerate,
                "guard_ok": p.guard_ok,
            }
            for p in points
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def save_sweep_csv(points: list[SweepPoint], path) -> None:
    """Drive-resolved sweep table, one row per (g, eta) point."""
    cols = (
        "g,eta,filling,filling_se,on_level,on_level_se,mu,mu_se,lam,lam_se,"
        "tau,tau_se,q_dim,q_dim_se,n_on_periods,n_off_periods,longest_dwell,"
        "degenerate,guard_ok"
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cols + "\n")
        for p in points:
            st = p.stats
            row = [
                repr(float(v))
                for v in (
                    p.g, p.eta, st.filling, st.filling_se, st.on_level,
                    st.on_level_se, st.mu, st.mu_se, st.lam, st.lam_se,
                    st.tau, st.tau_se, p.q_dim, p.q_dim_se,
                )
            ]
            row += [
                str(st.n_on_periods),
                str(st.n_off_periods),
                repr(float(p.longest_dwell)),
                str(int(p.degenerate)),
                str(int(p.guard_ok)),
            ]
            fh.write(",".join(row) + "\n")


def save_aggregate(
    eta_stars: list[EtaStar],
    tau_stars: list[TauStar],
    lambdas: list[LambdaPoint],
    path,
) -> None:
    """Per-g aggregate table: eta*, tau*, and mean blink-off rate."""
    stars = {s.g: s for s in eta_stars}
    taus = {t.g: t for t in tau_stars}
    lams = {lp.g: lp for lp in lambdas}
    nan = float("nan")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "g,eta_star,eta_star_se,tau_star,tau_star_se,lambda_mean,lambda_mean_se\n"
        )
        for g in sorted(set(stars) | set(taus) | set(lams)):
            s, t, lp = stars.get(g), taus.get(g), lams.get(g)
            vals = (
                g,
                s.eta_star if s else nan,
                s.eta_star_se if s else nan,
                t.tau_star if t else nan,
                t.tau_star_se if t else nan,
                lp.lam if lp else nan,
                lp.lam_se if lp else nan,
            )
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def _fit_doc(fit: ExponentFit | None) -> dict | None:
    if fit is None:
        return None
    return {
        "exponent": fit.exponent,
        "exponent_se": fit.exponent_se,
        "intercept": fit.intercept,
        "intercept_se": fit.intercept_se,
        "amplitude": fit.amplitude,
        "residuals": list(fit.residuals),
        "n_points": fit.n_points,
        "excluded": list(fit.excluded),
    }


def save_exponent_report(fits: dict[str, ExponentFit | None], path) -> None:
    doc = {"schema": "exponent-report/1"}
    doc.update({name: _fit_doc(fit) for name, fit in fits.items()})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _manifest_doc(
    jobs: list[TrajectoryJob],
    budget: SweepBudget,
    delta: float,
    gamma: float,
    kappa: float,
    master_seed: int,
) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "master_seed": master_seed,
        "delta": delta,
        "gamma": gamma,
        "kappa": kappa,
        "budget": dataclasses.asdict(budget),
        "jobs": [
            {
                "g": j.g,
                "eta": j.eta,
                "seed_index": j.seed_index,
                "seed": j.seed,
                "cutoff": j.cutoff,
                "path": j.path,
            }
            for j in jobs
        ],
    }


def save_manifest(
    workdir: str,
    jobs: list[TrajectoryJob],
    budget: SweepBudget,
    delta: float,
    gamma: float,
    kappa: float,
    master_seed: int,
) -> None:
    """Record the full study plan, including every job's derived seed."""
    doc = _manifest_doc(jobs, budget, delta, gamma, kappa, master_seed)
    with open(os.path.join(workdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _check_manifest(workdir: str, doc: dict) -> None:
    """Refuse to mix summaries produced under a different study plan."""
    path = os.path.join(workdir, "manifest.json")
    if not os.path.exists(path):
        return
    with open(path, encoding="utf-8") as fh:
        existing = json.load(fh)
    for key in ("schema", "master_seed", "delta", "gamma", "kappa", "budget", "jobs"):
        if existing.get(key) != doc.get(key):
            raise ValueError(
                f"{path} was written for a different study (mismatch in {key}); "
                "use a fresh workdir"
            )


def prepare_workdir(
    workdir: str,
    jobs: list[TrajectoryJob],
    budget: SweepBudget,
    delta: float,
    gamma: float,
    kappa: float,
    master_seed: int,
) -> None:
    """Create the study directory, verifying any existing manifest matches."""
    os.makedirs(workdir, exist_ok=True)
    _check_manifest(
        workdir, _manifest_doc(jobs, budget, delta, gamma, kappa, master_seed)
    )
    save_manifest(workdir, jobs, budget, delta, gamma, kappa, master_seed)


# ---------------------------------------------------------------------------
# full pipeline

def run_study(
    workdir: str,
    g_list: tuple[float, ...] = STUDY_G,
    eta_over_g: tuple[float, ...] = STUDY_ETA_OVER_G,
    budget: SweepBudget | None = None,
    *,
    delta: float = -5.0,
    gamma: float = 0.0,
    kappa: float = 1.0,
    master_seed: int = 7,
    exclude_largest_g: bool = False,
    runner=None,
) -> StudyResult:
    """Run (or resume) the whole scaling study and write its outputs.

    Drive grids are fractions of g so every coupling sees the same slice of
    its bistable window.  `runner`, when given, is called with the list of
    pending jobs and must write each one's summary file into `workdir`
    (this is the hook the process farm uses); the default executes them
    serially in this process.  Completed jobs are detected by their files
    and never re-run, so interrupted studies resume for free.

    Writes into workdir: manifest.json, points.json, sweep.csv,
    aggregate.csv and exponents.json.
    """
    budget = budget or SweepBudget()
    os.makedirs(workdir, exist_ok=True)
    grid = [(g, round(g * r, 12)) for g in g_list for r in eta_over_g]
    for g in set(g_list):
        _require_in_window(
            g, np.array([e for gg, e in grid if gg == g]), delta, kappa
        )
    jobs = _jobs_for_points(grid, budget, delta, gamma, kappa, master_seed)
    prepare_workdir(workdir, jobs, budget, delta, gamma, kappa, master_seed)

    pending = [j for j in jobs if not os.path.exists(os.path.join(workdir, j.path))]
    if pending:
        log.info("study: %d of %d jobs to run", len(pending), len(jobs))
        if runner is not None:
            runner(pending)
        else:
            for job in pending:
                run_job(job, workdir)
    missing = [j.path for j in jobs if not os.path.exists(os.path.join(workdir, j.path))]
    if missing:
        raise RuntimeError(f"{len(missing)} job summaries missing, first: {missing[0]}")

    summaries = [load_summary(os.path.join(workdir, j.path)) for j in jobs]
    all_points = _points_from_summaries(summaries)
    sweeps = {g: [p for p in all_points if p.g == g] for g in sorted(set(g_list))}
    for pts in sweeps.values():
        _check_filling_monotone(pts)

    eta_stars = []
    tau_stars = []
    for g, pts in sweeps.items():
        try:
            star = find_eta_star(pts)
            eta_stars.append(star)
            tau_stars.append(timescale_at_eta_star(g, pts, star))
        except ValueError as err:
            log.warning("g=%g: %s", g, err)
    lambdas = []
    for g, pts in sweeps.items():
        try:
            lambdas.extend(lambda_vs_g({g: pts}))
        except ValueError as err:
            log.warning("%s", err)

    fits: dict[str, ExponentFit | None] = {}
    for name, series in (
        ("eta_star", [(s.g, s.eta_star, s.eta_star_se) for s in eta_stars]),
        ("tau_star", [(t.g, t.tau_star, t.tau_star_se) for t in tau_stars]),
        ("lambda_mean", [(lp.g, lp.lam, lp.lam_se) for lp in lambdas]),
    ):
        usable = [(g, v, e) for g, v, e in series if v > 0 and e > 0]
        need = 4 if exclude_largest_g else 3
        if len(usable) < need:
            log.warning("%s: only %d usable points, skipping fit", name, len(usable))
            fits[name] = None
            continue
        gx = np.array([u[0] for u in usable])
        vy = np.array([u[1] for u in usable])
        ve = np.array([u[2] for u in usable])
        fits[name] = fit_power_law(gx, vy, ve, exclude_largest=exclude_largest_g)

    save_points(all_points, os.path.join(workdir, "points.json"))
    save_sweep_csv(all_points, os.path.join(workdir, "sweep.csv"))
    save_aggregate(eta_stars, tau_stars, lambdas, os.path.join(workdir, "aggregate.csv"))
    save_exponent_report(fits, os.path.join(workdir, "exponents.json"))
    return StudyResult(
        points=sweeps,
        eta_stars=eta_stars,
        tau_stars=tau_stars,
        lambdas=lambdas,
        fits=fits,
    )
