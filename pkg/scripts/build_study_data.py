"""Build the committed trajectory data under tests/data/.

Produces three datasets, all resumable (existing summary files are reused):

  tests/data/study/    the default scaling study grid
  tests/data/selfsim/  re-simulations at the fitted eta*(g) for each g
  tests/data/decay/    g=50, eta=g/4 with and without atomic decay

Run from the repository root:  python3 scripts/build_study_data.py
"""
import json
import logging
import os
import sys
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from jcblink import scaling  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "tests", "data")

logging.basicConfig(
    level=logging.INFO, format="%(asctime)s %(name)s %(message)s"
)
log = logging.getLogger("build")


def verbose_runner(workdir):
    def run(jobs):
        for i, job in enumerate(jobs, 1):
            t0 = time.time()
            summary = scaling.run_job(job, workdir)
            log.info(
                "[%d/%d] g=%g eta=%g s%d: %.1fs, %d jumps, F=%.3f, cutoff=%d",
                i, len(jobs), job.g, job.eta, job.seed_index,
                time.time() - t0, summary.n_jumps,
                summary.n_on_samples / summary.n_samples, summary.cutoff,
            )
    return run


def run_extra_points(workdir, points, budget, gamma, master_seed):
    """Simulate a small list of (g, eta) points outside the main study."""
    os.makedirs(workdir, exist_ok=True)
    jobs = scaling._jobs_for_points(points, budget, -5.0, gamma, 1.0, master_seed)
    scaling.save_manifest(workdir, jobs, budget, -5.0, gamma, 1.0, master_seed)
    pending = [j for j in jobs if not os.path.exists(os.path.join(workdir, j.path))]
    log.info("%s: %d of %d jobs to run", workdir, len(pending), len(jobs))
    verbose_runner(workdir)(pending)


def main():
    t_start = time.time()
    # the extra datasets trade half the study's time budget for wall clock;
    # their acceptance checks are phrased in estimated sigmas, so they stay
    # self-consistent at any budget
    extra_budget = scaling.SweepBudget(total_time=2.5e4, n_seeds=4)

    study_dir = os.path.join(DATA, "study")
    result = scaling.run_study(
        study_dir, master_seed=7, runner=verbose_runner(study_dir)
    )
    for star in result.eta_stars:
        log.info("g=%g: eta*=%.4f +- %.4f", star.g, star.eta_star, star.eta_star_se)
    for name, fit in result.fits.items():
        if fit is not None:
            log.info("%s exponent %.3f +- %.3f", name, fit.exponent, fit.exponent_se)

    # re-simulate on the self-similar orbit (g, eta*(g))
    selfsim_dir = os.path.join(DATA, "selfsim")
    os.makedirs(selfsim_dir, exist_ok=True)
    plan = {star.g: round(star.eta_star, 12) for star in result.eta_stars}
    with open(os.path.join(selfsim_dir, "plan.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {"schema": "selfsim-plan/1",
             "points": [{"g": g, "eta_star": e} for g, e in sorted(plan.items())]},
            fh, indent=1, sort_keys=True,
        )
        fh.write("\n")
    run_extra_points(
        selfsim_dir, sorted(plan.items()), extra_budget, gamma=0.0, master_seed=17
    )

    # atomic-decay comparison at the bright workpoint
    run_extra_points(
        os.path.join(DATA, "decay", "gamma0"),
        [(50.0, 12.5)], extra_budget, gamma=0.0, master_seed=11,
    )
    run_extra_points(
        os.path.join(DATA, "decay", "gamma1e-2"),
        [(50.0, 12.5)], extra_budget, gamma=0.01, master_seed=13,
    )

    log.info("all datasets complete in %.1f min", (time.time() - t_start) / 60)


if __name__ == "__main__":
    main()
