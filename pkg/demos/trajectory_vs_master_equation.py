"""Ergodicity check: one long trajectory against the exact steady state.

The master-equation steady state is computed directly from the Liouvillian
null space; a Monte Carlo wave-function trajectory must time-average to the
same expectation values.  At g = 10 the switching is fast, so a few thousand
kappa^-1 already give tight statistics on both the photon number and the
atomic excitation.

Runtime: well under a minute.
"""
import math

import numpy as np

from jcblink import (
    ModelParams,
    TrajectoryConfig,
    build_operators,
    expectation,
    run_trajectory,
    steady_state,
)

PARAMS = ModelParams(g=10.0, delta=-5.0, eta=2.5, cutoff=40)


def batch_se(values: np.ndarray, n_batches: int = 20) -> float:
    usable = (values.size // n_batches) * n_batches
    means = values[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def main():
    rho = steady_state(PARAMS)
    ops = build_operators(PARAMS.cutoff)
    n_exact = expectation(rho, ops.number).real
    s_exact = expectation(rho, ops.sigma_dag @ ops.sigma).real
    print(f"steady state:  <n> = {n_exact:.5f}   <sigma+sigma-> = {s_exact:.5f}")

    config = TrajectoryConfig(seed=2, t_final=4000.0)
    record = run_trajectory(PARAMS, config)
    mask = record.sample_times >= config.burn_in
    nbar = record.photon_number[mask]
    atom = record.atom_population[mask]
    n_se, s_se = batch_se(nbar), batch_se(atom)
    print(f"trajectory:    <n> = {nbar.mean():.5f} +- {n_se:.5f}   "
          f"<sigma+sigma-> = {atom.mean():.5f} +- {s_se:.5f}")
    print(f"deviations:    {abs(nbar.mean() - n_exact) / n_se:.2f} and "
          f"{abs(atom.mean() - s_exact) / s_se:.2f} standard errors")

    # photon flux balance: every cavity photon leaves through the mirror
    span = config.t_final - config.burn_in
    rate = np.sum(record.jump_times >= config.burn_in) / span
    print(f"jump rate:     {rate:.4f} /kappa vs 2 kappa <n> = {2 * n_exact:.4f}")


if __name__ == "__main__":
    main()
