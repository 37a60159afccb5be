"""Scaling pipeline: synthetic-truth fits, pooling identities, persistence."""
import math
import os

import numpy as np
import pytest

from jcblink.mcwf import CutoffBreachError
from jcblink.scaling import (
    DWELL_GUARD_FRACTION,
    EtaStar,
    SweepBudget,
    SweepPoint,
    TrajectoryJob,
    fit_power_law,
    find_eta_star,
    lambda_vs_g,
    load_summary,
    reduce_point,
    run_job,
    run_study,
    save_summary,
    summarize_trajectory,
    sweep_eta,
    timescale_at_eta_star,
)
from jcblink.telegraph import TelegraphStats, synthesize_telegraph, telegraph_stats


# ---------------------------------------------------------------------------
# synthetic sweep points

def make_stats(
    filling,
    filling_se=0.01,
    tau=50.0,
    tau_se=5.0,
    lam=0.01,
    lam_se=0.001,
    mu=0.01,
    mu_se=0.001,
):
    return TelegraphStats(
        on_level=10.0,
        on_level_se=1.0,
        mu=mu,
        mu_se=mu_se,
        lam=lam,
        lam_se=lam_se,
        filling=filling,
        filling_se=filling_se,
        tau=tau,
        tau_se=tau_se,
        n_on_periods=100,
        n_off_periods=100,
    )


def make_point(g, eta, filling, **kw):
    degenerate = kw.pop("degenerate", False)
    longest = kw.pop("longest_dwell", 100.0)
    total = kw.pop("total_time", 5e4)
    return SweepPoint(
        g=g,
        eta=eta,
        stats=make_stats(filling, **kw),
        q_dim=0.5,
        q_dim_se=0.1,
        total_time=total,
        n_seeds=4,
        longest_dwell=longest,
        cutoffs=(30, 30, 30, 30),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# power-law fitting

@pytest.mark.parametrize("exponent", [0.5, 1.0, 2.0, 3.0])
def test_fit_power_law_exact_recovery(exponent):
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    y = 3.0 * x**exponent
    fit = fit_power_law(x, y)
    assert abs(fit.exponent - exponent) < 1e-10
    assert abs(fit.amplitude - 3.0) < 3e-10
    assert max(abs(r) for r in fit.residuals) < 1e-12
    # uniform relative errors reweight nothing
    fit_w = fit_power_law(x, y, 0.05 * y)
    assert abs(fit_w.exponent - exponent) < 1e-10


def test_fit_power_law_negative_exponent():
    x = np.array([20.0, 30.0, 40.0, 50.0])
    y = 5.0 * x**-2.0
    fit = fit_power_law(x, y, 0.01 * y)
    assert abs(fit.exponent + 2.0) < 1e-10


def test_fit_power_law_noisy_coverage():
    # with lognormal noise and matching errors the exponent estimate should
    # land within one standard error about 68% of the time
    rng = np.random.default_rng(0)
    x = np.array([20.0, 30.0, 40.0, 50.0])
    hits = 0
    trials = 300
    for _ in range(trials):
        y = 5.0 * x**-2.0 * np.exp(rng.normal(0.0, 0.05, x.size))
        fit = fit_power_law(x, y, 0.05 * y)
        if abs(fit.exponent + 2.0) <= fit.exponent_se:
            hits += 1
    assert hits / trials >= 0.60


def test_fit_power_law_exclude_largest():
    x = np.array([10.0, 20.0, 30.0, 40.0])
    y = x**2.0
    y[-1] *= 1.5  # contaminate the top of the range
    full = fit_power_law(x, y)
    trimmed = fit_power_law(x, y, exclude_largest=True)
    assert trimmed.excluded == (40.0,)
    assert trimmed.n_points == 3
    assert abs(trimmed.exponent - 2.0) < 1e-10
    assert full.exponent > 2.05


def test_fit_power_law_validation():
    x = np.array([1.0, 2.0, 3.0])
    y = x**2
    with pytest.raises(ValueError):
        fit_power_law(np.array([0.0, 2.0, 3.0]), y)
    with pytest.raises(ValueError):
        fit_power_law(x, -y)
    with pytest.raises(ValueError):
        fit_power_law(x[:2], y[:2])
    with pytest.raises(ValueError):
        fit_power_law(x, y, exclude_largest=True)  # leaves two points
    with pytest.raises(ValueError):
        fit_power_law(x, y, np.array([0.1, 0.1]))
    with pytest.raises(ValueError):
        fit_power_law(x, y, np.array([0.1, -0.1, 0.1]))
    with pytest.raises(ValueError):
        fit_power_law(np.array([2.0, 2.0, 2.0]), y)  # degenerate abscissa


# ---------------------------------------------------------------------------
# eta* location

def test_find_eta_star_exact_line():
    # F = 0.1 + 0.8 (eta/g) crosses one half exactly at eta = g/2
    g = 40.0
    pts = [
        make_point(g, g * r, 0.1 + 0.8 * r) for r in (0.30, 0.40, 0.50, 0.60)
    ]
    star = find_eta_star(pts)
    assert abs(star.eta_star - g / 2) < 1e-9
    assert star.n_points == 4
    assert star.residual < 1e-12
    assert star.eta_star_se > 0
    assert abs(star.slope - 0.8 / g) < 1e-12
    assert star.f_window == (pytest.approx(0.34), pytest.approx(0.58))


def test_find_eta_star_filters_inadmissible_points():
    g = 40.0
    pts = [make_point(g, g * r, 0.1 + 0.8 * r) for r in (0.30, 0.40, 0.50, 0.60)]
    pts.append(make_point(g, g * 0.70, 0.97))  # saturated, outside the F band
    pts.append(make_point(g, g * 0.20, 0.26, degenerate=True))
    pts.append(make_point(g, g * 0.45, 0.46, longest_dwell=2e4))  # guard trips
    star = find_eta_star(sorted(pts, key=lambda p: p.eta))
    assert star.n_points == 4
    assert abs(star.eta_star - g / 2) < 1e-9


def test_find_eta_star_rejects_extrapolation():
    g = 40.0
    # crossing sits far below the grid: F from 0.6 to 0.9 over the span
    pts = [
        make_point(g, g * r, 0.6 + 1.0 * (r - 0.30)) for r in (0.30, 0.40, 0.50, 0.60)
    ]
    with pytest.raises(ValueError, match="outside the fitted range"):
        find_eta_star(pts)


def test_find_eta_star_allows_near_edge_crossing():
    # crossing 0.5 grid units below the grid, within the 10% margin
    pts = [make_point(40.0, 10.0, 0.52), make_point(40.0, 20.0, 0.92)]
    star = find_eta_star(pts)
    assert star.eta_star == pytest.approx(9.5)


def test_find_eta_star_needs_increasing_filling():
    pts = [make_point(40.0, 12.0, 0.7), make_point(40.0, 16.0, 0.4)]
    with pytest.raises(ValueError, match="does not increase"):
        find_eta_star(pts)


def test_find_eta_star_needs_two_points():
    pts = [make_point(40.0, 12.0, 0.4, degenerate=True)]
    with pytest.raises(ValueError, match="at least two"):
        find_eta_star(pts)


# ---------------------------------------------------------------------------
# tau* and lambda reductions

def test_timescale_at_eta_star_exact_line():
    g = 40.0
    star = EtaStar(
        g=g, eta_star=18.0, eta_star_se=0.5, residual=0.0,
        f_window=(0.3, 0.7), n_points=4, slope=0.02, intercept=0.1,
    )
    pts = [
        make_point(g, e, 0.5, tau=100.0 - 2.0 * e, tau_se=1.0)
        for e in (12.0, 16.0, 20.0, 24.0)
    ]
    res = timescale_at_eta_star(g, pts, star)
    assert res.tau_star == pytest.approx(100.0 - 2.0 * 18.0)
    # the eta* uncertainty alone contributes |slope| * se = 1.0
    assert res.tau_star_se >= 1.0
    assert res.eta_star == 18.0


def test_timescale_requires_eta_star_in_range():
    g = 40.0
    star = EtaStar(
        g=g, eta_star=30.0, eta_star_se=0.5, residual=0.0,
        f_window=(0.3, 0.7), n_points=4, slope=0.02, intercept=0.1,
    )
    pts = [make_point(g, e, 0.5) for e in (12.0, 16.0, 20.0, 24.0)]
    with pytest.raises(ValueError, match="outside the sweep range"):
        timescale_at_eta_star(g, pts, star)


def test_timescale_rejects_foreign_eta_star():
    star = EtaStar(
        g=30.0, eta_star=18.0, eta_star_se=0.5, residual=0.0,
        f_window=(0.3, 0.7), n_points=4, slope=0.02, intercept=0.1,
    )
    pts = [make_point(40.0, e, 0.5) for e in (12.0, 24.0)]
    with pytest.raises(ValueError, match="is for g=30"):
        timescale_at_eta_star(40.0, pts, star)


def test_lambda_vs_g_mean_and_error():
    pts = [
        make_point(40.0, 12.0, 0.4, lam=0.10, lam_se=0.005),
        make_point(40.0, 16.0, 0.6, lam=0.12, lam_se=0.005),
    ]
    (lp,) = lambda_vs_g({40.0: pts})
    assert lp.g == 40.0
    assert lp.lam == pytest.approx(0.11)
    scatter = np.std([0.10, 0.12], ddof=1) / math.sqrt(2)
    assert lp.lam_se == pytest.approx(scatter)
    assert lp.n_points == 2


def test_lambda_vs_g_needs_two_admissible_points():
    pts = [
        make_point(40.0, 12.0, 0.4, lam=0.10, lam_se=0.005),
        make_point(40.0, 16.0, 0.6, lam=0.12, lam_se=0.005, longest_dwell=1e4),
    ]
    with pytest.raises(ValueError, match="at least two"):
        lambda_vs_g({40.0: pts})


def test_guard_flag():
    ok = make_point(40.0, 12.0, 0.4, longest_dwell=4999.0, total_time=5e4)
    bad = make_point(40.0, 12.0, 0.4, longest_dwell=5001.0, total_time=5e4)
    assert ok.guard_ok and not bad.guard_ok
    assert DWELL_GUARD_FRACTION == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# summarize / reduce identities

@pytest.fixture(scope="module")
def markov_record():
    return synthesize_telegraph(
        mu=0.02, lam=0.04, on_level=8.0, t_final=5000.0, dt_sample=0.1, seed=3
    )


def test_single_record_reduction_matches_direct_stats(markov_record):
    # pooling one summary must reproduce telegraph_stats exactly
    direct = telegraph_stats(markov_record)
    summary = summarize_trajectory(markov_record, g=40.0, eta=9.0)
    point = reduce_point(40.0, 9.0, [summary])
    st = point.stats
    assert st.filling == direct.filling
    assert st.filling_se == direct.filling_se
    assert st.mu == direct.mu and st.mu_se == direct.mu_se
    assert st.lam == direct.lam and st.lam_se == direct.lam_se
    assert st.tau == direct.tau and st.tau_se == direct.tau_se
    assert st.on_level == pytest.approx(direct.on_level, rel=1e-12)
    assert st.on_level_se == pytest.approx(direct.on_level_se, rel=1e-12)
    assert st.n_on_periods == direct.n_on_periods
    assert st.n_off_periods == direct.n_off_periods
    assert math.isnan(point.q_dim)  # synthetic records carry no Q
    assert not point.degenerate
    assert point.longest_dwell > 0


def test_multi_seed_pooling(markov_record):
    other = synthesize_telegraph(
        mu=0.02, lam=0.04, on_level=8.0, t_final=5000.0, dt_sample=0.1, seed=4
    )
    s1 = summarize_trajectory(markov_record, 0, g=1.0, eta=1.0)
    s2 = summarize_trajectory(other, 1, g=1.0, eta=1.0)
    point = reduce_point(1.0, 1.0, [s1, s2])
    assert point.n_seeds == 2
    assert point.stats.n_on_periods == s1.on_durations.size + s2.on_durations.size
    pooled_f = (s1.n_on_samples + s2.n_on_samples) / (s1.n_samples + s2.n_samples)
    assert point.stats.filling == pooled_f
    on_all = np.concatenate([s1.on_durations, s2.on_durations])
    assert point.stats.lam == pytest.approx(1.0 / on_all.mean())
    assert point.stats.tau == pytest.approx(
        1.0 / (point.stats.mu + point.stats.lam)
    )
    assert point.longest_dwell == max(s1.longest_run, s2.longest_run)
    assert point.total_time == pytest.approx(s1.sim_time + s2.sim_time)


def test_reduce_point_rejects_mixed_points(markov_record):
    s = summarize_trajectory(markov_record, g=1.0, eta=1.0)
    with pytest.raises(ValueError, match="mixed into point"):
        reduce_point(1.0, 2.0, [s])


def test_summarize_requires_parameters(markov_record):
    with pytest.raises(ValueError, match="pass g and eta"):
        summarize_trajectory(markov_record)


def test_summary_roundtrip(tmp_path, markov_record):
    summary = summarize_trajectory(markov_record, 2, g=40.0, eta=9.0)
    path = tmp_path / "s.json"
    save_summary(summary, path)
    back = load_summary(path)
    for field in (
        "g", "eta", "seed_index", "seed", "cutoff", "threshold", "sim_time",
        "n_samples", "n_on_samples", "on_sum", "longest_run", "q_off_samples",
        "degenerate", "n_jumps", "wall_time",
    ):
        a, b = getattr(summary, field), getattr(back, field)
        assert a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))
    assert math.isnan(back.q_off_mean)  # NaN survives the null encoding
    for field in ("on_period_means", "on_durations", "off_durations"):
        assert np.array_equal(getattr(summary, field), getattr(back, field))


def test_load_summary_rejects_other_schema(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"schema": "something-else/1"}', encoding="utf-8")
    with pytest.raises(ValueError, match="not a trajectory-summary"):
        load_summary(path)


def test_budget_validation():
    with pytest.raises(ValueError):
        SweepBudget(total_time=0.0)
    with pytest.raises(ValueError):
        SweepBudget(n_seeds=0)
    assert SweepBudget(total_time=1000.0, n_seeds=4).per_seed_time == 250.0


# ---------------------------------------------------------------------------
# job execution

def test_run_job_escalates_cutoff_on_breach(tmp_path):
    # resonant drive to n ~ 9 with a cutoff of 6 must breach, then recover
    job = TrajectoryJob(
        g=0.0, eta=3.0, seed_index=0, seed=11, t_final=30.0, burn_in=0.0,
        dt_sample=0.1, delta=0.0, gamma=0.0, kappa=1.0, cutoff=6, path="esc.json",
    )
    summary = run_job(job, str(tmp_path))
    assert summary.cutoff >= 26  # several escalation steps above the start
    assert summary.cutoff <= job.cutoff + 8 * 4
    assert (tmp_path / "esc.json").exists()
    assert load_summary(tmp_path / "esc.json").cutoff == summary.cutoff


def test_run_job_gives_up_after_max_retries():
    # a hard-driven point with a tiny budgetless ladder cannot recover
    job = TrajectoryJob(
        g=0.0, eta=12.0, seed_index=0, seed=11, t_final=30.0, burn_in=0.0,
        dt_sample=0.1, delta=0.0, gamma=0.0, kappa=1.0, cutoff=4, path="fail.json",
    )
    with pytest.raises(CutoffBreachError):
        run_job(job)


# ---------------------------------------------------------------------------
# real sweep, resume, and the study pipeline

G_SMALL = 10.0
RATIOS_SMALL = (0.2, 0.22)  # inside the narrow g=10 window (0.095, 0.235)
BUDGET_SMALL = SweepBudget(total_time=1600.0, n_seeds=2, burn_in=100.0)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("sweepdir")
    points = sweep_eta(
        G_SMALL,
        np.array([G_SMALL * r for r in RATIOS_SMALL]),
        BUDGET_SMALL,
        master_seed=7,
        workdir=str(workdir),
    )
    return workdir, points


def point_digest(points):
    return [
        (p.eta, p.stats.filling, p.stats.n_on_periods, p.stats.n_off_periods)
        for p in points
    ]


def test_sweep_returns_reduced_points(small_sweep):
    workdir, points = small_sweep
    assert [p.eta for p in points] == [2.0, 2.2]
    for p in points:
        assert p.n_seeds == BUDGET_SMALL.n_seeds
        assert 0.0 <= p.stats.filling <= 1.0
        assert math.isfinite(p.stats.filling)
        assert p.total_time == pytest.approx(BUDGET_SMALL.total_time, rel=1e-3)
        assert all(c >= 26 for c in p.cutoffs)
    files = sorted(os.listdir(workdir))
    assert files == [
        "g10_eta2.2_s0.json", "g10_eta2.2_s1.json",
        "g10_eta2_s0.json", "g10_eta2_s1.json",
    ]


def test_sweep_resume_is_bitwise_stable(small_sweep):
    workdir, points = small_sweep
    again = sweep_eta(
        G_SMALL,
        np.array([G_SMALL * r for r in RATIOS_SMALL]),
        BUDGET_SMALL,
        master_seed=7,
        workdir=str(workdir),
    )
    assert point_digest(again) == point_digest(points)
    assert [p.stats for p in again] == [p.stats for p in points]


def test_sweep_rejects_grid_outside_window():
    # the window at g=20 is about (1.96, 7.74); both edges are enforced
    with pytest.raises(ValueError, match="leaves the bistable window"):
        sweep_eta(20.0, np.array([1.0, 3.0]), BUDGET_SMALL)
    with pytest.raises(ValueError, match="leaves the bistable window"):
        sweep_eta(20.0, np.array([5.5, 8.5]), BUDGET_SMALL)


def test_sweep_rejects_short_grid():
    with pytest.raises(ValueError, match="at least two"):
        sweep_eta(20.0, np.array([4.0]), BUDGET_SMALL)


def test_study_adopts_compatible_sweep_files(small_sweep):
    workdir, points = small_sweep
    result = run_study(
        str(workdir),
        g_list=(G_SMALL,),
        eta_over_g=RATIOS_SMALL,
        budget=BUDGET_SMALL,
        master_seed=7,
    )
    # same grid, budget and master seed: every summary is reused as-is
    assert point_digest(result.points[G_SMALL]) == point_digest(points)
    for name in ("manifest.json", "points.json", "sweep.csv",
                 "aggregate.csv", "exponents.json"):
        assert (workdir / name).exists()
    assert result.fits["eta_star"] is None  # one g cannot fix an exponent
    header = (workdir / "aggregate.csv").read_text().splitlines()[0]
    assert header.startswith("g,eta_star,eta_star_se,tau_star")


def test_study_refuses_foreign_manifest(small_sweep):
    workdir, _ = small_sweep
    with pytest.raises(ValueError, match="different study"):
        run_study(
            str(workdir),
            g_list=(G_SMALL,),
            eta_over_g=RATIOS_SMALL,
            budget=BUDGET_SMALL,
            master_seed=8,
        )
