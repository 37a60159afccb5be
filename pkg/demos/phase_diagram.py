"""Mean-field phase diagram: where the bistable window lives.

The factorized (neoclassical) theory reduces the driven Jaynes-Cummings
model to a one-variable self-consistency equation.  Scanning the drive at
fixed detuning counts its solutions: one root outside the bistable window,
three inside.  This script maps the window edges over detuning for a few
couplings and prints the two landmark numbers, the kappa/(2|delta|) law of
the lower edge and the critical point at eta/g = 1/2 where the window
closes.

Runtime: seconds.  Output lands in demos/out/.
"""
import os

import numpy as np

from jcblink import bistability_boundaries, lower_boundary_estimate, phase_diagram
from jcblink.neoclassical import save_phase_diagram

OUT = os.path.join(os.path.dirname(__file__), "out")

DELTAS = np.linspace(-10.0, -0.25, 40)
G_VALUES = (20.0, 50.0, 100.0)


def main():
    os.makedirs(OUT, exist_ok=True)
    for g in G_VALUES:
        boundary = phase_diagram(DELTAS, g)
        path = os.path.join(OUT, f"phase_g{g:g}.csv")
        save_phase_diagram(boundary, path)
        print(f"g = {g:g}: boundaries over {DELTAS.size} detunings -> {path}")

    print("\nlower edge against the kappa/(2|delta|) law (g = 50):")
    for delta in (-2.0, -5.0, -8.0):
        lo, hi = bistability_boundaries(delta, 50.0)
        est = lower_boundary_estimate(delta)
        print(f"  delta = {delta:5.1f}: eta_low/g = {lo / 50.0:.4f} "
              f"(law: {est:.4f}), window up to eta/g = {hi / 50.0:.4f}")

    print("\nwindow collapse toward the critical point eta/g = 1/2:")
    for delta in (-1.0, -0.3, -0.1):
        grid = np.linspace(0.30, 0.70, 801) * 50.0
        lo, hi = bistability_boundaries(delta, 50.0, grid)
        print(f"  delta = {delta:5.1f}: window ({lo / 50.0:.4f}, {hi / 50.0:.4f}), "
              f"width {100.0 * (hi - lo) / 50.0:.2f}% of g")


if __name__ == "__main__":
    main()
