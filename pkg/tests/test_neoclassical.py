"""Self-consistency roots, phase boundaries, and the closed-form estimates."""

import math

import numpy as np
import pytest

from jcblink.model import ModelParams
from jcblink import neoclassical as nc


def test_residual_rejects_nonnegative_detuning():
    with pytest.raises(ValueError):
        nc.residual(0.1, 0.0, 1.0, 50.0)
    with pytest.raises(ValueError):
        nc.residual(0.1, 2.0, 1.0, 50.0)
    with pytest.raises(ValueError):
        nc.residual(-0.1, -5.0, 1.0, 50.0)


def test_residual_without_drive():
    for x in (1e-6, 0.3, 2.0):
        assert nc.residual(x, -5.0, 0.0, 50.0) == x
    assert nc.solve_branches(-5.0, 0.0, 50.0).solutions == (0.0,)


def test_residual_three_sign_changes_at_workpoint():
    g, eta, delta = 50.0, 12.5, -5.0
    x_max = 4.0 * (2.0 * eta / g) ** 2 + 1.0
    xs = np.concatenate(
        [np.geomspace(1e-9, 1e-3, 4000), np.linspace(1e-3, x_max, 8000)]
    )
    res = np.array([nc.residual(x, delta, eta, g) for x in xs])
    changes = int(np.sum(np.sign(res[:-1]) * np.sign(res[1:]) < 0))
    assert changes == 3


def test_branch_photon_number_scaling():
    bs = nc.solve_branches(-5.0, 12.5, 50.0)
    assert bs.n_scale == pytest.approx(625.0)
    for x, n in zip(bs.solutions, bs.photon_numbers):
        assert n == pytest.approx(x * 625.0, rel=1e-14)


def test_branch_counts_across_the_window():
    below = nc.solve_branches(-5.0, 0.05 * 50.0, 50.0)
    assert len(below.solutions) == 1
    assert below.photon_numbers[0] < 0.1  # dim

    inside = nc.solve_branches(-5.0, 0.25 * 50.0, 50.0)
    assert len(inside.solutions) == 3
    assert inside.bistable

    above = nc.solve_branches(-5.0, 0.6 * 50.0, 50.0)
    assert len(above.solutions) == 1
    assert above.photon_numbers[0] > 50.0  # bright


def test_branch_residuals_tiny():
    for eta_over_g in (0.05, 0.15, 0.25, 0.4, 0.6):
        bs = nc.solve_branches(-5.0, eta_over_g * 50.0, 50.0)
        assert len(bs.solutions) % 2 == 1
        for x in bs.solutions:
            assert abs(nc.residual(x, -5.0, eta_over_g * 50.0, 50.0)) < 1e-10


def test_bright_branch_near_estimate():
    bs = nc.solve_branches(-5.0, 12.5, 50.0)
    assert bs.photon_numbers[-1] == pytest.approx(
        nc.bright_photon_estimate(50.0, -5.0), rel=0.01
    )


def test_branch_continuity_under_small_perturbations():
    # away from the folds, 1% parameter nudges move each root < 5%
    base = nc.solve_branches(-5.0, 12.5, 50.0)
    for deta in (0.99, 1.01):
        moved = nc.solve_branches(-5.0, 12.5 * deta, 50.0)
        assert len(moved.solutions) == 3
        for a, b in zip(base.solutions, moved.solutions):
            assert abs(b - a) / a < 0.05


def test_boundaries_at_reference_detuning():
    lo, hi = nc.bistability_boundaries(-5.0, 50.0)
    assert lo / 50.0 == pytest.approx(0.1, rel=0.05)
    assert hi > lo


def test_lower_boundary_g_independent_upper_not():
    lowers, uppers = {}, {}
    for g in (50.0, 75.0, 100.0):
        lo, hi = nc.bistability_boundaries(-8.0, g)
        lowers[g], uppers[g] = lo / g, hi / g
    lo_vals = list(lowers.values())
    assert (max(lo_vals) - min(lo_vals)) / min(lo_vals) < 0.02
    up_vals = list(uppers.values())
    assert (max(up_vals) - min(up_vals)) / min(up_vals) > 0.05


def test_lower_boundary_tracks_estimate():
    # the kappa/(2|delta|) law holds to 5% once |delta| >~ 4 kappa and
    # degrades toward its validity edge (measured ~11% at delta = -2)
    for delta in (-4.0, -5.0, -8.0, -10.0):
        est = nc.lower_boundary_estimate(delta)
        for g in (50.0, 100.0):
            grid = np.linspace(0.4 * est, 1.0, 200) * g
            lo, _ = nc.bistability_boundaries(delta, g, grid)
            assert abs(lo / g - est) / est < 0.05
    lo2, _ = nc.bistability_boundaries(-2.0, 50.0)
    est2 = nc.lower_boundary_estimate(-2.0)
    assert abs(lo2 / 50.0 - est2) / est2 < 0.12


def test_boundaries_converge_to_half_at_small_detuning():
    prev_width = None
    for delta in (-1.0, -0.5, -0.2):
        grid = np.linspace(0.3, 0.9, 241) * 50.0
        lo, hi = nc.bistability_boundaries(delta, 50.0, grid)
        width = hi - lo
        if prev_width is not None:
            assert width < prev_width
        prev_width = width
    # at delta = -0.2 both edges sit within 2% of the critical drive g/2
    assert abs(lo / 50.0 - 0.5) < 0.02 * 0.5
    assert abs(hi / 50.0 - 0.5) < 0.02 * 0.5


def test_no_window_reported_as_none():
    # grid kept entirely below the window
    grid = np.linspace(0.01, 0.05, 20) * 50.0
    assert nc.bistability_boundaries(-5.0, 50.0, grid) is None


def test_phase_diagram_and_csv(tmp_path):
    deltas = np.array([-6.0, -5.0, -4.0])
    pb = nc.phase_diagram(deltas, 50.0)
    mask = ~np.isnan(pb.eta_lower)
    assert mask.all()
    assert np.all(pb.eta_lower[mask] <= pb.eta_upper[mask])
    out = tmp_path / "phase.csv"
    nc.save_phase_diagram(pb, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "delta_over_kappa,eta_lower_over_g,eta_upper_over_g,g_over_kappa"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert float(first[0]) == -6.0
    assert float(first[3]) == 50.0


def test_lower_boundary_estimate_values():
    assert nc.lower_boundary_estimate(-5.0) == pytest.approx(0.1)
    assert nc.lower_boundary_estimate(-1.0) == pytest.approx(0.5)
    assert nc.lower_boundary_estimate(-10.0) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        nc.lower_boundary_estimate(1.0)


def test_resonance_photon_number():
    assert nc.resonance_photon_number(5.0) == pytest.approx(25.0)
    assert nc.resonance_photon_number(0.0) == 0.0
    # inverting the resonance condition: delta=-5, N=25 -> g = 2 sqrt(N)|delta|
    n = nc.resonance_photon_number(5.0)
    g = 2.0 * math.sqrt(n) * 5.0
    assert g == pytest.approx(50.0)


def test_bright_photon_estimate():
    assert nc.bright_photon_estimate(50.0, -5.0) == pytest.approx(50.0)
    assert nc.bright_photon_estimate(100.0, -5.0) == pytest.approx(200.0)
    with pytest.raises(ValueError):
        nc.bright_photon_estimate(50.0, 0.0)


def test_bright_estimate_self_consistency():
    # N = g^2/(2 delta^2) with eta = g/4 closes the amplitude equation to 1%
    g, delta, kappa = 50.0, -5.0, 1.0
    n = nc.bright_photon_estimate(g, delta)
    eta = g / 4.0
    n_rhs = eta**2 / (kappa**2 + (delta + g / (2.0 * math.sqrt(n))) ** 2)
    assert abs(n_rhs / n - 1.0) < 1e-2


def test_expected_bright_phase():
    p = ModelParams(g=50.0, delta=-5.0, eta=12.5, cutoff=5)
    n_res = (50.0 / (2.0 * 5.0)) ** 2  # resonance: delta = -g/(2 sqrt N)
    assert nc.expected_bright_phase(n_res, p) == pytest.approx(0.0, abs=1e-12)

    phase = nc.expected_bright_phase(50.0, p)
    frozen = float(np.angle(1.0 / (1.0 - 1j * (-5.0 + 50.0 / (2.0 * math.sqrt(50.0))))))
    assert phase == pytest.approx(frozen, rel=1e-12)

    # flipping the detuning mirrors (conjugates) the phase
    p_mirror = ModelParams(g=50.0, delta=5.0, eta=12.5, cutoff=5)
    for n in (30.0, 50.0, 80.0):
        assert nc.expected_bright_phase(n, p_mirror) == pytest.approx(
            -nc.expected_bright_phase(n, p), rel=1e-12
        )


def test_blink_off_rate_law():
    assert nc.blink_off_rate_law(50.0) == pytest.approx(0.02)
    assert nc.blink_off_rate_law(100.0) == pytest.approx(0.01)
    # combining per-jump switch odds with the photon escape rate lands on
    # the same scale with prefactor 1/8
    from jcblink.model import ladder_switch_probability

    n = 50
    combined = ladder_switch_probability(n) * (2.0 * n)
    assert combined == pytest.approx(nc.blink_off_rate_law(n) / 8.0, rel=0.05)
