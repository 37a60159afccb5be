"""Factorized-field (neoclassical) self-consistency and the phase diagram.

The mean-field factorization of the driven lossy Jaynes-Cummings model
reduces, for negative detuning, to one real fixed-point equation for the
scaled intracavity intensity x = |alpha|^2 / N_scale with N_scale =
g^2/(4 kappa^2):

    x = (2 eta / g)^2 / (1 + (delta/kappa + 1/sqrt(delta^2 kappa^2/g^4 + x))^2)

The atomic term 1/sqrt(...) opposes the detuning, so the cavity can pull
itself into resonance: for drives above eta/g ~ kappa/(2|delta|) the equation
acquires three roots (dim, unstable middle, bright).  All functions here take
plain rates; `kappa` defaults to 1 so rates are in units of kappa.

Root count conventions: solutions are sorted ascending, the middle branch is
labeled unstable purely by this ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import ModelParams


@dataclass(frozen=True)
class BranchSet:
    """Roots of the self-consistency at one (delta, eta, g) point."""

    delta: float
    eta: float
    g: float
    solutions: tuple[float, ...]  # x = |alpha|^2 / n_scale, ascending
    n_scale: float

    @property
    def photon_numbers(self) -> tuple[float, ...]:
        return tuple(x * self.n_scale for x in self.solutions)

    @property
    def bistable(self) -> bool:
        return len(self.solutions) == 3


@dataclass(frozen=True)
class PhaseBoundary:
    """Bistability window edges over a detuning grid, drive in units of g."""

    delta: np.ndarray
    eta_lower: np.ndarray  # eta/g, NaN where no window was bracketed
    eta_upper: np.ndarray
    g: float


def _check_negative_detuning(delta: float) -> None:
    if delta >= 0:
        raise ValueError(
            "the self-consistent equation is used only for delta < 0 "
            "(the positive half-plane is its mirror image)"
        )


def _rhs(x, delta: float, eta: float, g: float, kappa: float):
    # works on scalars and arrays; x must be > 0
    c = (delta * kappa) ** 2 / g**4
    pull = delta / kappa + 1.0 / np.sqrt(c + x)
    return (2.0 * eta / g) ** 2 / (1.0 + pull * pull)


def residual(x: float, delta: float, eta: float, g: float, kappa: float = 1.0) -> float:
    """x minus the self-consistency right-hand side; roots are field solutions."""
    _check_negative_detuning(delta)
    if x <= 0:
        raise ValueError("x must be > 0")
    if eta == 0:
        return float(x)
    return float(x - _rhs(x, delta, eta, g, kappa))


def _scan_grid(x_left: float, x_max: float, points: int) -> np.ndarray:
    # logarithmic below 1e-3 to catch tiny dim roots, linear above
    split = 1.0e-3
    if x_max <= split:
        return np.geomspace(x_left, x_max, points)
    n_log = points // 2
    lo = np.geomspace(x_left, split, n_log, endpoint=False)
    hi = np.linspace(split, x_max, points - n_log)
    return np.concatenate([lo, hi])


def solve_branches(
    delta: float, eta: float, g: float, kappa: float = 1.0, points: int = 2000
) -> BranchSet:
    """All roots of the self-consistency, bracketed by a scan and refined.

    The scan is guaranteed to start below the dim root: the right-hand side
    at x -> 0 tends to the positive constant rhs(0), so any x below it makes
    the residual negative.  An even bracket count means the grid straddled a
    fold too coarsely; the scan is refined once and then reported as an error.
    """
    _check_negative_detuning(delta)
    n_scale = g * g / (4.0 * kappa * kappa)
    if eta == 0:
        return BranchSet(delta, eta, g, (0.0,), n_scale)

    rhs0 = float(_rhs(0.0, delta, eta, g, kappa))
    x_left = min(rhs0 / 2.0, 1.0e-4)
    x_max = 4.0 * (2.0 * eta / g) ** 2 + 1.0

    def roots_from_scan(npts: int) -> list[float]:
        xs = _scan_grid(x_left, x_max, npts)
        res = xs - _rhs(xs, delta, eta, g, kappa)
        sign = np.sign(res)
        hits = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        found = []
        for i in hits:
            root = brentq(
                lambda x: x - float(_rhs(x, delta, eta, g, kappa)),
                xs[i],
                xs[i + 1],
                xtol=1e-300,
                rtol=1e-13,
            )
            found.append(float(root))
        # exact grid hits are vanishingly unlikely but keep them anyway
        found.extend(float(x) for x in xs[sign == 0])
        return sorted(found)

    roots = roots_from_scan(points)
    if len(roots) % 2 == 0:
        roots = roots_from_scan(10 * points)
        if len(roots) % 2 == 0:
            raise RuntimeError(
                f"even root count {len(roots)} after refinement at "
                f"delta={delta}, eta={eta}, g={g}"
            )
    return BranchSet(delta, eta, g, tuple(roots), n_scale)


def bistability_boundaries(
    delta: float,
    g: float,
    eta_grid: np.ndarray | None = None,
    kappa: float = 1.0,
) -> tuple[float, float] | None:
    """Drive strengths where the root count switches 1->3 and 3->1.

    `eta_grid` is a coarse scan in absolute drive units; the two transition
    edges found on it are then bisected to 1e-6 relative in eta.  Returns
    None when no bistable window is bracketed on the grid.
    """
    _check_negative_detuning(delta)
    if eta_grid is None:
        eta_grid = np.linspace(0.02, 1.0, 197) * g
    eta_grid = np.sort(np.asarray(eta_grid, dtype=float))

    counts = np.array(
        [len(solve_branches(delta, e, g, kappa).solutions) for e in eta_grid]
    )
    inside = np.nonzero(counts == 3)[0]
    if inside.size == 0:
        return None

    def bisect_edge(e_mono: float, e_bi: float) -> float:
        # keeps e_bi on the 3-root side, e_mono on the 1-root side
        while abs(e_bi - e_mono) > 1e-6 * abs(e_bi):
            mid = 0.5 * (e_mono + e_bi)
            if len(solve_branches(delta, mid, g, kappa).solutions) == 3:
                e_bi = mid
            else:
                e_mono = mid
        return 0.5 * (e_mono + e_bi)

    lo_idx, hi_idx = inside[0], inside[-1]
    if lo_idx == 0 or hi_idx == eta_grid.size - 1:
        raise ValueError(
            "eta_grid does not bracket the bistable window; extend the grid"
        )
    eta_lower = bisect_edge(eta_grid[lo_idx - 1], eta_grid[lo_idx])
    eta_upper = bisect_edge(eta_grid[hi_idx + 1], eta_grid[hi_idx])
    return eta_lower, eta_upper


def phase_diagram(
    deltas: np.ndarray,
    g: float,
    eta_grid: np.ndarray | None = None,
    kappa: float = 1.0,
) -> PhaseBoundary:
    """Boundaries over a detuning grid; points with no window become NaN."""
    deltas = np.asarray(deltas, dtype=float)
    lower = np.full(deltas.shape, np.nan)
    upper = np.full(deltas.shape, np.nan)
    for i, d in enumerate(deltas):
        edges = bistability_boundaries(d, g, eta_grid, kappa)
        if edges is not None:
            lower[i] = edges[0] / g
            upper[i] = edges[1] / g
    return PhaseBoundary(delta=deltas, eta_lower=lower, eta_upper=upper, g=g)


def save_phase_diagram(boundary: PhaseBoundary, path) -> None:
    """CSV with columns delta_over_kappa, eta_lower_over_g, eta_upper_over_g, g_over_kappa."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("delta_over_kappa,eta_lower_over_g,eta_upper_over_g,g_over_kappa\n")
        for d, lo, hi in zip(boundary.delta, boundary.eta_lower, boundary.eta_upper):
            fh.write(f"{float(d)!r},{float(lo)!r},{float(hi)!r},{float(boundary.g)!r}\n")


def lower_boundary_estimate(delta: float, kappa: float = 1.0) -> float:
    """Minimum drive for bistability, in units of g: kappa/(2 |delta|)."""
    _check_negative_detuning(delta)
    return kappa / (2.0 * abs(delta))


def resonance_photon_number(eta: float, kappa: float = 1.0) -> float:
    """Photon number (eta/kappa)^2 of the self-pulled resonant bright state.

    Holds where the resonance condition delta = -g/(2 sqrt(N)) is met.
    """
    if eta < 0:
        raise ValueError("eta must be >= 0")
    return (eta / kappa) ** 2


def bright_photon_estimate(g: float, delta: float) -> float:
    """Bright-branch photon number estimate g^2/(2 delta^2)."""
    if delta == 0:
        raise ValueError("delta must be nonzero")
    return g * g / (2.0 * delta * delta)


def expected_bright_phase(n: float, params: ModelParams) -> float:
    """Field phase of the bright branch: arg[(kappa - i(delta + g/(2 sqrt(N))))^-1].

    The resonance pull g/(2 sqrt(N)) opposes the detuning, so its sign flips
    with delta; flipping the detuning therefore mirrors (conjugates) the phase.
    """
    if n <= 0:
        raise ValueError("N must be > 0")
    pull = math.copysign(params.g / (2.0 * math.sqrt(n)), -params.delta)
    denom = params.kappa - 1j * (params.delta + pull)
    return float(np.angle(1.0 / denom))


def blink_off_rate_law(n: float, kappa: float = 1.0) -> float:
    """Predicted scale of the bright-to-dim switching rate: kappa/N.

    Only the scale: the dimensionless prefactor is left to the scaling fits.
    A per-jump ladder-switch probability ~1/(16 N^2) times the photon escape
    rate ~2 kappa N lands on the same kappa/N scale (prefactor 1/8).
    """
    if n <= 0:
        raise ValueError("N must be > 0")
    return kappa / n
