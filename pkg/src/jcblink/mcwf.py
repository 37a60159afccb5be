"""Monte Carlo wave-function trajectories of the driven Jaynes-Cummings model.

The unraveling is the standard photon-counting one: integrate the
non-normalized state under the no-click drift H_eff = H - i kappa a'a
- i gamma s's until its squared norm crosses a uniform random level r,
locate the crossing with a safeguarded Newton search on log(norm^2/r)
(the exact decay-rate identity gives the derivative for free), apply a
jump operator chosen with probability proportional to
{2 kappa <a'a>, 2 gamma <s's>}, renormalize, redraw r, repeat.
Observables are sampled on a uniform grid from the renormalized state.

Drift propagation
-----------------
H_eff is time independent, so the default propagator diagonalizes it once
(psi(t) = V exp(-i lambda t) V^-1 psi(0)) and evaluates the state at
arbitrary times exactly; the eigenbasis is verified by reconstruction and
the squared norm is then monotone between jumps, which makes the crossing
search watertight.  Weakly driven stiff models can have eigenbases too
ill-conditioned to pass that check at any usable cutoff; method="auto"
(the default) then switches to a dyadic ladder of matrix exponentials,
which is contraction-stable and propagator-exact to ~1e-11 regardless of
conditioning.  A conventional adaptive embedded Runge-Kutta propagator
(Dormand-Prince 5(4), relative tolerance 1e-8) is available as
method="rk45" and is cross-validated against both in the tests.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import RK45
from scipy.linalg import expm

from .model import ModelParams, basis_state, build_effective_hamiltonian

log = logging.getLogger(__name__)

CAVITY = 0
ATOM = 1

# photon-number floor below which Q and the field phase are undefined
Q_FLOOR = 1e-6

GUARD_TOP_LEVELS = 3
GUARD_THRESHOLD = 1e-6


class CutoffBreachError(RuntimeError):
    """Raised when population piles up on the top Fock levels mid-run."""


@dataclass(frozen=True)
class TrajectoryConfig:
    seed: int
    t_final: float
    dt_sample: float = 0.1
    dt_max: float = 0.1
    norm_tolerance: float = 1e-6
    burn_in: float = 200.0
    method: str = "auto"  # "auto", "eig", "expm", or "rk45"

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 < self.dt_sample <= self.t_final:
            raise ValueError("need 0 < dt_sample <= t_final")
        if self.dt_max > self.dt_sample:
            raise ValueError("dt_max must not exceed dt_sample")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be > 0")
        if self.norm_tolerance <= 0:
            raise ValueError("norm_tolerance must be > 0")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.method not in ("auto", "eig", "expm", "rk45"):
            raise ValueError("method must be 'auto', 'eig', 'expm', or 'rk45'")


@dataclass(frozen=True)
class JumpEvent:
    time: float
    channel: int  # CAVITY or ATOM


@dataclass
class TrajectoryRecord:
    """Sampled observables plus the full jump log of one trajectory.

    `atom_population` (⟨σ†σ⟩ per sample) is an in-memory extra filled by
    run_trajectory; the record files keep their fixed five-column layout,
    so it comes back as None from load_record.
    """

    sample_times: np.ndarray
    photon_number: np.ndarray
    field_amplitude: np.ndarray
    mandel_q: np.ndarray
    jump_times: np.ndarray
    jump_channels: np.ndarray
    params: ModelParams | None
    config: TrajectoryConfig
    atom_population: np.ndarray | None = None

    @property
    def jumps(self) -> list[JumpEvent]:
        return [JumpEvent(float(t), int(c)) for t, c in zip(self.jump_times, self.jump_channels)]


# ---------------------------------------------------------------------------
# drift propagators

class _SpectralPropagator:
    """Exact evolution via the eigendecomposition of H_eff.

    The acceptance gate is the relative eigenbasis reconstruction residual.
    For the operating points of this model (dispersive JC up to g ~ 50 kappa,
    eigenvector condition numbers up to ~1e10) the measured per-evaluation
    propagation error stays below ~1e-7, well inside the statistical noise of
    any trajectory observable; strongly displaced linear-cavity matrices blow
    past the gate and fall back to the Runge-Kutta propagator.
    """

    GATE = 1e-5

    def __init__(self, h_eff: np.ndarray):
        lam, vecs = np.linalg.eig(h_eff)
        vinv = np.linalg.inv(vecs)
        scale = np.max(np.abs(h_eff))
        err = np.max(np.abs((vecs * lam) @ vinv - h_eff))
        if scale > 0 and err > self.GATE * scale:
            raise ArithmeticError(
                f"eigenbasis reconstruction error {err:.2e} vs scale {scale:.2e}"
            )
        self.lam = lam
        self.vecs = vecs
        self.vinv = vinv
        self._phi = None  # anchor state in the eigenbasis
        self._t0 = 0.0

    def anchor(self, psi: np.ndarray, t: float) -> None:
        self._phi = self.vinv @ psi
        self._t0 = t

    def rebase(self, psi: np.ndarray, t: float) -> None:
        """Optional between-jump re-anchoring; exact evolution needs none."""

    def at(self, t: float) -> np.ndarray:
        """Non-normalized state at time t >= anchor time."""
        return self.vecs @ (np.exp(-1j * self.lam * (t - self._t0)) * self._phi)


class _ExpmLadderPropagator:
    """Drift evolution by a dyadic ladder of matrix exponentials.

    U_j advances time by dt_max/2^(LEVELS-j): the finest matrix comes from a
    Pade evaluation and the rest from repeated squaring. The drift generator
    has negative semidefinite anti-Hermitian part, so every U_j is a
    contraction and the squaring chain cannot amplify error; measured
    accuracy is ~1e-11 relative, independent of the eigenvector conditioning
    that defeats the spectral route for weakly driven stiff models. All
    ladder matrices commute, so the state at any offset is assembled from the
    binary expansion of the offset in units of the finest step, advancing a
    cached checkpoint when the requested times move forward monotonically.
    The driver rebases the anchor at every completed stride, so offsets never
    exceed one coarse step and the ladder stays LEVELS+1 matrices deep.
    """

    LEVELS = 23  # finest step = dt_max / 2^23, below any bisection tolerance

    def __init__(self, h_eff: np.ndarray, dt_max: float):
        self.dt_min = dt_max / 2 ** self.LEVELS
        u = expm(-1j * self.dt_min * h_eff)
        ladder = [u]
        for _ in range(self.LEVELS):
            u = u @ u
            ladder.append(u)
        self.ladder = ladder  # ladder[j] advances by 2^j * dt_min
        self._t0 = 0.0
        self._psi0 = None
        self._m_ckpt = 0
        self._psi_ckpt = None

    def anchor(self, psi: np.ndarray, t: float) -> None:
        self._t0 = t
        self._psi0 = psi.copy()
        self._m_ckpt = 0
        self._psi_ckpt = self._psi0

    rebase = anchor

    def at(self, t: float) -> np.ndarray:
        m = int(round((t - self._t0) / self.dt_min))
        if m <= 0:
            return self._psi0.copy()
        if m >= self._m_ckpt:
            delta, psi = m - self._m_ckpt, self._psi_ckpt
        else:
            delta, psi = m, self._psi0
        j = 0
        while delta:
            if delta & 1:
                psi = self.ladder[j] @ psi
            delta >>= 1
            j += 1
        if m > self._m_ckpt:
            self._m_ckpt, self._psi_ckpt = m, psi
        return psi


class _RungeKuttaPropagator:
    """Adaptive Dormand-Prince 5(4) on dpsi/dt = -i H_eff psi, rtol 1e-8.

    Dense-output segments are cached from the anchor forward so that the
    crossing search can evaluate the state anywhere behind the integrator
    head without re-integrating.
    """

    MAX_SEGMENTS = 512

    def __init__(self, h_eff: np.ndarray, dt_max: float, rtol: float = 1e-8, atol: float = 1e-12):
        self.h = h_eff
        self.dt_max = dt_max
        self.rtol = rtol
        self.atol = atol
        self._solver = None
        self._segments = []  # dense-output pieces, contiguous in t
        self._t0 = 0.0
        self._psi0 = None

    def anchor(self, psi: np.ndarray, t: float) -> None:
        self._t0 = t
        self._psi0 = np.asarray(psi, dtype=complex).copy()
        self._segments = []
        self._solver = RK45(
            lambda _t, y: -1j * (self.h @ y),
            t,
            self._psi0,
            t_bound=np.inf,
            max_step=self.dt_max,
            rtol=self.rtol,
            atol=self.atol,
        )

    def rebase(self, psi: np.ndarray, t: float) -> None:
        """No-op: the dense-output cache already spans between jumps."""

    def at(self, t: float) -> np.ndarray:
        if t <= self._t0:
            return self._psi0.copy()
        while self._solver.t < t:
            self._solver.step()
            self._segments.append(self._solver.dense_output())
            if len(self._segments) > self.MAX_SEGMENTS:
                del self._segments[0]
        for seg in reversed(self._segments):
            if seg.t_min <= t:
                return seg(t)
        raise RuntimeError("requested time fell behind the cached dense output")


# ---------------------------------------------------------------------------
# observables on product-space states

def _n_of_index(dim: int) -> np.ndarray:
    return np.arange(dim) // 2


def instantaneous_mandel_q(state: np.ndarray) -> float:
    """Q = (var(a'a) - <a'a>)/<a'a>; NaN below the Q_FLOOR photon floor."""
    pops = np.abs(state) ** 2
    norm = pops.sum()
    n_idx = _n_of_index(state.size)
    nbar = float(np.dot(pops, n_idx)) / norm
    if nbar <= Q_FLOOR:
        return float("nan")
    n2 = float(np.dot(pops, n_idx * n_idx)) / norm
    return (n2 - nbar * nbar - nbar) / nbar


def field_phase(record: TrajectoryRecord) -> np.ndarray:
    """arg(<a>) per sample; NaN where |<a>|^2 is below the photon floor."""
    amp = record.field_amplitude
    phase = np.angle(amp)
    return np.where(np.abs(amp) ** 2 < Q_FLOOR, np.nan, phase)


def cutoff_guard(state: np.ndarray, top_levels: int = GUARD_TOP_LEVELS,
                 threshold: float = GUARD_THRESHOLD) -> bool:
    """True while the top `top_levels` Fock levels hold <= threshold population."""
    cutoff = state.size // 2 - 1
    if top_levels >= cutoff + 1:
        raise ValueError("top_levels must be < cutoff")
    pops = np.abs(state) ** 2
    mass = float(pops[2 * (cutoff + 1 - top_levels):].sum() / pops.sum())
    return mass <= threshold


def time_average(record: TrajectoryRecord, observable: str,
                 window: tuple[float, float] | None = None) -> float | complex:
    """NaN-aware mean of a sampled observable over a time window.

    `observable` names a record field ("photon_number", "mandel_q", ...);
    the window defaults to (burn_in, t_final).
    """
    values = getattr(record, observable)
    if window is None:
        window = (record.config.burn_in, record.config.t_final)
    t0, t1 = window
    mask = (record.sample_times >= t0) & (record.sample_times <= t1)
    if not mask.any():
        raise ValueError(f"empty averaging window {window}")
    vals = values[mask]
    if np.iscomplexobj(vals):
        return complex(np.nanmean(vals))
    return float(np.nanmean(vals))


# ---------------------------------------------------------------------------
# the trajectory engine

def run_trajectory(
    params: ModelParams,
    config: TrajectoryConfig,
    initial: np.ndarray | None = None,
) -> TrajectoryRecord:
    """One photon-counting trajectory; see the module docstring for the contract.

    Raises CutoffBreachError when the top Fock levels accumulate more than
    the guard threshold at any sample time.
    """
    cutoff = params.cutoff
    dim = params.dim
    if initial is None:
        initial = basis_state(0, 0, cutoff)
    else:
        initial = np.asarray(initial, dtype=complex)
        if initial.shape != (dim,):
            raise ValueError(f"initial state must have shape ({dim},)")
        if abs(np.linalg.norm(initial) - 1.0) > 1e-9:
            raise ValueError("initial state must be normalized")

    h_eff = build_effective_hamiltonian(params)
    if config.method == "eig":
        prop = _SpectralPropagator(h_eff)  # raises if the eigenbasis is unusable
    elif config.method == "expm":
        prop = _ExpmLadderPropagator(h_eff, config.dt_max)
    elif config.method == "rk45":
        prop = _RungeKuttaPropagator(h_eff, config.dt_max)
    else:  # auto: exact spectral when conditioning allows, else the ladder
        try:
            prop = _SpectralPropagator(h_eff)
        except ArithmeticError as exc:
            log.info("spectral propagator rejected (%s); using expm ladder", exc)
            prop = _ExpmLadderPropagator(h_eff, config.dt_max)

    n_idx = _n_of_index(dim).astype(float)
    sqrt_np1 = np.sqrt(n_idx[: dim - 2] + 1.0)  # <i|a|i+2> amplitudes
    guard_start = 2 * (cutoff + 1 - GUARD_TOP_LEVELS)

    def apply_a(psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[:-2] = sqrt_np1 * psi[2:]
        return out

    def apply_sigma(psi: np.ndarray) -> np.ndarray:
        out = np.zeros_like(psi)
        out[0::2] = psi[1::2]
        return out

    n_samples = int(math.floor(config.t_final / config.dt_sample + 1e-9)) + 1
    sample_times = np.arange(n_samples) * config.dt_sample
    nbar_out = np.empty(n_samples)
    atom_out = np.empty(n_samples)
    amp_out = np.empty(n_samples, dtype=complex)
    q_out = np.empty(n_samples)
    jump_times: list[float] = []
    jump_channels: list[int] = []

    rng = np.random.default_rng(config.seed)

    def draw_level() -> float:
        r = rng.random()
        return r if r > 0.0 else float(np.finfo(float).tiny)

    def record_sample(k: int, psi_unnorm: np.ndarray) -> None:
        psi = psi_unnorm / np.linalg.norm(psi_unnorm)
        pops = np.abs(psi) ** 2
        guard_mass = float(pops[guard_start:].sum())
        if guard_mass > GUARD_THRESHOLD:
            raise CutoffBreachError(
                f"top-{GUARD_TOP_LEVELS} Fock population {guard_mass:.3e} > "
                f"{GUARD_THRESHOLD:.1e} at t={sample_times[k]:.3f} "
                f"(cutoff={cutoff}); raise the cutoff"
            )
        nbar = float(np.dot(pops, n_idx))
        nbar_out[k] = nbar
        atom_out[k] = float(pops[1::2].sum())
        amp_out[k] = np.vdot(psi, apply_a(psi))
        if nbar > Q_FLOOR:
            n2 = float(np.dot(pops, n_idx * n_idx))
            q_out[k] = (n2 - nbar * nbar - nbar) / nbar
        else:
            q_out[k] = np.nan

    psi = initial / np.linalg.norm(initial)
    prop.anchor(psi, 0.0)
    record_sample(0, psi)
    next_k = 1

    t_cursor = 0.0
    psi_cursor = psi
    r_level = draw_level()

    while t_cursor < config.t_final:
        t_target = sample_times[next_k] if next_k < n_samples else config.t_final
        t_next = min(t_cursor + config.dt_max, t_target, config.t_final)
        psi_next = prop.at(t_next)
        norm2 = float(np.vdot(psi_next, psi_next).real)

        if norm2 > r_level:
            t_cursor = t_next
            psi_cursor = psi_next
            prop.rebase(psi_cursor, t_cursor)
            if next_k < n_samples and t_next == sample_times[next_k]:
                record_sample(next_k, psi_cursor)
                next_k += 1
            continue

        # a jump happened in (t_cursor, t_next]: locate the level crossing.
        # norm^2 is monotone under the drift and d(ln norm^2)/dt is minus the
        # instantaneous total jump flux, so a Newton step on ln(norm^2/r)
        # usually lands within tolerance in 1-3 evaluations; a midpoint
        # safeguard keeps the bracket shrinking when the local rate misleads.
        xtol = config.norm_tolerance * (t_next - t_cursor)
        t_lo, psi_lo = t_cursor, psi_cursor
        n2_lo = float(np.vdot(psi_cursor, psi_cursor).real)
        t_hi, psi_hi = t_next, psi_next
        pops_lo = np.abs(psi_lo) ** 2
        for _ in range(200):
            w_tot = 2.0 * params.kappa * float(np.dot(pops_lo, n_idx))
            if params.gamma > 0.0:
                w_tot += 2.0 * params.gamma * float(pops_lo[1::2].sum())
            step = n2_lo * math.log(n2_lo / r_level) / w_tot if w_tot > 0.0 else np.inf
            if step <= xtol or (t_hi - t_lo) <= xtol:
                t_jump, psi_pre = t_lo, psi_lo
                break
            t_new = t_lo + step
            if t_new >= t_hi - 0.25 * xtol:
                if t_new - t_hi <= xtol:
                    # the crossing sits within tolerance of the bracket top
                    t_jump, psi_pre = t_hi, psi_hi
                    pops_lo = np.abs(psi_hi) ** 2
                    break
                t_new = 0.5 * (t_lo + t_hi)
            psi_new = prop.at(t_new)
            n2_new = float(np.vdot(psi_new, psi_new).real)
            if n2_new > r_level:
                t_lo, psi_lo, n2_lo = t_new, psi_new, n2_new
                pops_lo = np.abs(psi_new) ** 2
            else:
                t_hi, psi_hi = t_new, psi_new
        else:  # pragma: no cover
            raise RuntimeError("jump localization failed to converge")
        t_jump = max(t_jump, float(np.nextafter(t_cursor, config.t_final)))

        w_cavity = 2.0 * params.kappa * float(np.dot(pops_lo, n_idx))
        w_atom = 2.0 * params.gamma * float(pops_lo[1::2].sum())
        u = rng.random()
        if u * (w_cavity + w_atom) < w_cavity or w_atom == 0.0:
            channel = CAVITY
            psi_new = apply_a(psi_pre)
        else:
            channel = ATOM
            psi_new = apply_sigma(psi_pre)
        nrm = np.linalg.norm(psi_new)
        if nrm == 0.0:
            raise ArithmeticError(f"jump at t={t_jump:.6f} annihilated the state")
        psi_new = psi_new / nrm

        jump_times.append(t_jump)
        jump_channels.append(channel)
        r_level = draw_level()
        prop.anchor(psi_new, t_jump)
        t_cursor = t_jump
        psi_cursor = psi_new

    return TrajectoryRecord(
        sample_times=sample_times,
        photon_number=nbar_out,
        field_amplitude=amp_out,
        mandel_q=q_out,
        jump_times=np.asarray(jump_times, dtype=float),
        jump_channels=np.asarray(jump_channels, dtype=np.int8),
        params=params,
        config=config,
        atom_population=atom_out,
    )


# ---------------------------------------------------------------------------
# serialization: CSV pair plus JSON header

def save_record(record: TrajectoryRecord, stem) -> None:
    """Write {stem}.csv, {stem}.jumps.csv and {stem}.json.

    Floats are written with repr (shortest round trip), so identical records
    serialize to identical bytes.
    """
    stem = str(stem)
    with open(stem + ".csv", "w", encoding="utf-8") as fh:
        fh.write("t,n_expect,re_a,im_a,q\n")
        for t, n, a, q in zip(
            record.sample_times, record.photon_number, record.field_amplitude, record.mandel_q
        ):
            fh.write(f"{float(t)!r},{float(n)!r},{float(a.real)!r},{float(a.imag)!r},{float(q)!r}\n")
    with open(stem + ".jumps.csv", "w", encoding="utf-8") as fh:
        fh.write("t,channel\n")
        for t, c in zip(record.jump_times, record.jump_channels):
            fh.write(f"{float(t)!r},{int(c)}\n")
    header = {
        "schema": "trajectory-record/1",
        "params": asdict(record.params) if record.params is not None else None,
        "config": asdict(record.config),
    }
    with open(stem + ".json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_record(stem) -> TrajectoryRecord:
    stem = str(stem)
    with open(stem + ".json", encoding="utf-8") as fh:
        header = json.load(fh)
    params = ModelParams(**header["params"]) if header["params"] is not None else None
    config = TrajectoryConfig(**header["config"])

    data = np.loadtxt(stem + ".csv", delimiter=",", skiprows=1, ndmin=2)
    with open(stem + ".jumps.csv", encoding="utf-8") as fh:
        jump_rows = sum(1 for _ in fh) - 1
    if jump_rows > 0:
        jumps = np.loadtxt(stem + ".jumps.csv", delimiter=",", skiprows=1, ndmin=2)
    else:
        jumps = np.empty((0, 2))
    return TrajectoryRecord(
        sample_times=data[:, 0],
        photon_number=data[:, 1],
        field_amplitude=data[:, 2] + 1j * data[:, 3],
        mandel_q=data[:, 4],
        jump_times=jumps[:, 0],
        jump_channels=jumps[:, 1].astype(np.int8),
        params=params,
        config=config,
    )
