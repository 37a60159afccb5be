"""Telegraph-process statistics of blinking photon-number signals.

A trajectory's photon number alternates between a dim phase near zero and a
bright phase near a fixed level.  This module binarizes the sampled signal at
half its temporal mean, extracts dwell times and the four telegraph numbers
(ON level a, blink-on rate mu, blink-off rate lambda, filling factor F),
checks the exact binary identity var{X} = <X>(1-<X>), fits the correlation
time from the autocovariance, and dissects individual switching events down
to their triggering quantum jump.  A synthetic two-state Markov generator
provides exact ground truth for every estimator.

Conventions: mu is the escape rate out of the OFF phase (1 / mean OFF dwell)
and lambda the escape rate out of the ON phase, so F = mu/(mu+lambda) and
tau = 1/(mu+lambda).  Dwell statistics use interior (uncensored) periods
only; periods shorter than 5 sample steps are merged left to right into
their predecessor before any counting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .mcwf import TrajectoryConfig, TrajectoryRecord

# below this mean photon number a record is considered all-dark
DARK_FLOOR = 1e-6

# periods shorter than this many sample steps are grid chatter, not physics
CHATTER_SAMPLES = 5


@dataclass(frozen=True)
class BinarySignal:
    """Binarized photon signal on the stationary part of the sample grid."""

    sample_times: np.ndarray
    values: np.ndarray  # int8, strictly {0, 1}
    threshold: float
    degenerate: bool = False  # all-dark source, no telegraph present

    @property
    def dt(self) -> float:
        return float(self.sample_times[1] - self.sample_times[0])


@dataclass(frozen=True)
class TelegraphStats:
    """The Table-style summary of one telegraph signal.

    Rates and their errors are NaN when fewer than two complete periods of
    either phase survive censoring; the counts are always reported.
    """

    on_level: float
    on_level_se: float
    mu: float  # blink-on rate = 1 / mean OFF dwell
    mu_se: float
    lam: float  # blink-off rate = 1 / mean ON dwell
    lam_se: float
    filling: float  # ON fraction of samples
    filling_se: float
    tau: float  # correlation time 1/(mu+lam)
    tau_se: float
    n_on_periods: int
    n_off_periods: int


@dataclass(frozen=True)
class SwitchEvent:
    """One blink transition with its trigger jump and local microstructure."""

    direction: str  # "on" or "off": the phase being switched into
    t_last_stable: float  # last sample still in the old phase
    t_trigger: float  # first quantum jump after the last stable sample
    window: tuple[float, float]
    jump_times: np.ndarray  # all jumps inside the window
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    trace_times: np.ndarray
    trace_photon: np.ndarray


# ---------------------------------------------------------------------------
# binarization

def _run_lengths(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run-length encoding: (run values, run lengths)."""
    if values.size == 0:
        return np.empty(0, dtype=values.dtype), np.empty(0, dtype=int)
    change = np.nonzero(np.diff(values))[0]
    starts = np.concatenate(([0], change + 1))
    lengths = np.diff(np.concatenate((starts, [values.size])))
    return values[starts], lengths


def _merge_short_runs(values: np.ndarray, min_samples: int) -> np.ndarray:
    """Absorb runs shorter than min_samples into their left neighbor.

    A single left-to-right pass over the run-length encoding: a short run is
    appended to the run before it (which can only grow, never shrink), and
    adjacent runs of equal value coalesce as they meet.  The leading run has
    no left neighbor and is kept; it is censored downstream anyway.
    """
    rvals, rlens = _run_lengths(values)
    out_vals: list[int] = []
    out_lens: list[int] = []
    for v, length in zip(rvals, rlens):
        if out_vals and (v == out_vals[-1] or length < min_samples):
            out_lens[-1] += length  # coalesce, or flip into the predecessor
        else:
            out_vals.append(int(v))
            out_lens.append(int(length))
    return np.repeat(np.asarray(out_vals, dtype=values.dtype), out_lens)


def binarize(record: TrajectoryRecord, min_duration: float | None = None) -> BinarySignal:
    """Threshold the photon signal at half its temporal mean.

    Only samples at t >= burn_in enter, and the threshold comes from the same
    window.  Periods shorter than min_duration (default 5 sample steps) are
    merged into their neighbors to suppress grid-noise chatter.  An all-dark
    record yields an all-zero signal with the degenerate flag set.
    """
    dt = record.config.dt_sample
    if min_duration is None:
        min_duration = CHATTER_SAMPLES * dt
    mask = record.sample_times >= record.config.burn_in
    times = record.sample_times[mask]
    if times.size < 2:
        raise ValueError("record does not span past burn_in")
    photon = record.photon_number[mask]
    mean = float(photon.mean())
    threshold = 0.5 * mean
    if mean <= DARK_FLOOR:
        return BinarySignal(times, np.zeros(times.size, dtype=np.int8), threshold, True)
    values = (photon > threshold).astype(np.int8)
    min_samples = int(math.ceil(min_duration / dt - 1e-9))
    if min_samples > 1:
        values = _merge_short_runs(values, min_samples)
    return BinarySignal(times, values, threshold, False)


def verify_binary_identity(signal: BinarySignal) -> float:
    """|var{X} - <X>(1-<X>)|: an arithmetic identity for strictly binary data.

    Any deviation beyond accumulation noise (~1e-12) means the signal is not
    binary or the moment accumulation is broken.
    """
    x = signal.values.astype(float)
    mean = float(x.mean())
    var = float(x.var())
    return abs(var - mean * (1.0 - mean))


# ---------------------------------------------------------------------------
# dwell statistics

def dwell_times(signal: BinarySignal) -> tuple[np.ndarray, np.ndarray]:
    """(ON durations, OFF durations) of interior periods, in 1/kappa.

    The first and last runs touch the observation window and are censored
    (their true length is unknown), so they are dropped.
    """
    rvals, rlens = _run_lengths(signal.values)
    if rvals.size <= 2:
        return np.empty(0), np.empty(0)
    dt = signal.dt
    interior_vals = rvals[1:-1]
    interior_dur = rlens[1:-1] * dt
    return interior_dur[interior_vals == 1], interior_dur[interior_vals == 0]


def _aligned(record: TrajectoryRecord, signal: BinarySignal, field: str) -> np.ndarray:
    """Slice a record array onto the (suffix) grid of the binary signal."""
    i0 = int(np.searchsorted(record.sample_times, signal.sample_times[0] - 1e-12))
    seg = getattr(record, field)[i0 : i0 + signal.values.size]
    if seg.size != signal.values.size:
        raise ValueError("signal grid is not a suffix of the record grid")
    return seg


def on_level(record: TrajectoryRecord, signal: BinarySignal) -> float:
    """Mean photon number over ON samples."""
    photon = _aligned(record, signal, "photon_number")
    on = signal.values == 1
    if not on.any():
        raise ValueError("no ON samples")
    return float(photon[on].mean())


def telegraph_stats(record: TrajectoryRecord, signal: BinarySignal | None = None) -> TelegraphStats:
    """Assemble the full telegraph summary of one record.

    Rate standard errors follow from exponential dwell statistics
    (SE(1/mean) ~ rate/sqrt(k)); the filling error combines both period
    counts, SE(F) = F(1-F) sqrt(1/k_on + 1/k_off); tau = 1/(mu+lam) exactly,
    with its error propagated from the two rates.  The ON-level error comes
    from the scatter of per-period means, since samples within one period
    are strongly correlated.
    """
    if signal is None:
        signal = binarize(record)
    on_dur, off_dur = dwell_times(signal)
    k_on, k_off = int(on_dur.size), int(off_dur.size)
    filling = float(signal.values.mean())

    photon = _aligned(record, signal, "photon_number")
    rvals, rlens = _run_lengths(signal.values)
    bounds = np.concatenate(([0], np.cumsum(rlens)))
    on_period_means = [
        float(photon[bounds[i] : bounds[i + 1]].mean())
        for i in range(1, rvals.size - 1)
        if rvals[i] == 1
    ]
    if (signal.values == 1).any():
        a = float(photon[signal.values == 1].mean())
        a_se = (
            float(np.std(on_period_means, ddof=1) / math.sqrt(len(on_period_means)))
            if len(on_period_means) >= 2
            else float("nan")
        )
    else:
        a, a_se = float("nan"), float("nan")

    if k_on >= 2 and k_off >= 2:
        lam = 1.0 / float(on_dur.mean())
        mu = 1.0 / float(off_dur.mean())
        lam_se = lam / math.sqrt(k_on)
        mu_se = mu / math.sqrt(k_off)
        tau = 1.0 / (mu + lam)
        tau_se = tau * tau * math.hypot(mu_se, lam_se)
        filling_se = filling * (1.0 - filling) * math.sqrt(1.0 / k_on + 1.0 / k_off)
    else:
        lam = mu = lam_se = mu_se = tau = tau_se = filling_se = float("nan")

    return TelegraphStats(
        on_level=a,
        on_level_se=a_se,
        mu=mu,
        mu_se=mu_se,
        lam=lam,
        lam_se=lam_se,
        filling=filling,
        filling_se=filling_se,
        tau=tau,
        tau_se=tau_se,
        n_on_periods=k_on,
        n_off_periods=k_off,
    )


# ---------------------------------------------------------------------------
# correlation time

def autocorrelation_timescale(signal: BinarySignal, max_lag: float) -> float:
    """Correlation time from a weighted log-linear fit of the autocovariance.

    C(dt) is the unbiased lagged autocovariance (FFT accumulation, per-lag
    1/(N-k) normalization).  The fit runs over lags where C > 0.05 C(0),
    truncated at the first non-positive value, weighted by the inverse
    variance of log C (w_k ~ (N-k) C_k^2).
    """
    x = signal.values.astype(float)
    n = x.size
    kmax = int(max_lag / signal.dt)
    if kmax < 2 or kmax >= n:
        raise ValueError("max_lag must span at least 2 and fewer than N samples")
    xc = x - x.mean()
    nfft = 1 << int(n * 2 - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: kmax + 1]
    acov /= n - np.arange(kmax + 1)
    c0 = acov[0]
    if c0 <= 0:
        raise ValueError("degenerate signal: zero variance")
    floor = 0.05 * c0
    k_end = kmax + 1
    for k in range(1, kmax + 1):
        if acov[k] <= floor:
            k_end = k
            break
    if k_end < 3:
        raise ValueError("autocovariance decays below the fit floor within 2 lags")
    lags = np.arange(k_end) * signal.dt
    c = acov[:k_end]
    w = (n - np.arange(k_end)) * c * c
    logc = np.log(c)
    wsum = w.sum()
    tbar = (w * lags).sum() / wsum
    ybar = (w * logc).sum() / wsum
    slope = ((w * (lags - tbar) * (logc - ybar)).sum()) / ((w * (lags - tbar) ** 2).sum())
    if slope >= 0:
        raise ValueError("autocovariance does not decay")
    return -1.0 / slope


# ---------------------------------------------------------------------------
# phase-resolved nonclassicality

def phase_mandel_q(record: TrajectoryRecord, signal: BinarySignal, phase: int) -> float:
    """Mean of the instantaneous Mandel Q over samples of one phase.

    This is the average of Q values, which is not the Q of the time-averaged
    state: the classical inter-phase variance is deliberately excluded.
    """
    if phase not in (0, 1):
        raise ValueError("phase must be 0 (OFF) or 1 (ON)")
    rvals, _ = _run_lengths(signal.values)
    if not (rvals[1:-1] == phase).any():
        raise ValueError(f"no complete phase-{phase} period in the signal")
    q = _aligned(record, signal, "mandel_q")[signal.values == phase]
    defined = np.isfinite(q)
    if defined.mean() < 0.5:
        raise ValueError("Q undefined on more than half of the requested samples")
    return float(q[defined].mean())


def dim_period_mandel_q(record: TrajectoryRecord, signal: BinarySignal | None = None) -> float:
    """Mandel Q of the dim phase: mean instantaneous Q over OFF samples."""
    if signal is None:
        signal = binarize(record)
    return phase_mandel_q(record, signal, 0)


# ---------------------------------------------------------------------------
# dwell-time distribution

def dwell_distribution_test(durations: np.ndarray) -> tuple[float, float]:
    """Kolmogorov-Smirnov test of the durations against an exponential law.

    The exponential scale is the sample mean, so the returned p-value carries
    the usual estimated-parameter caveat (it is anti-conservative; use it as
    a report, not a sharp hypothesis test).
    """
    durations = np.asarray(durations, dtype=float)
    if durations.size < 50:
        raise ValueError("need at least 50 durations for a meaningful test")
    result = sps.kstest(durations, "expon", args=(0.0, float(durations.mean())))
    return float(result.statistic), float(result.pvalue)


# ---------------------------------------------------------------------------
# switching-event microstructure

def switch_event_extraction(
    record: TrajectoryRecord,
    signal: BinarySignal | None = None,
    half_width: float = 2.0,
    bin_width: float = 0.01,
) -> list[SwitchEvent]:
    """One window per blink transition, centered on its triggering jump.

    The trigger is the first quantum jump after the last sample still in the
    old phase.  Each window carries the jump-time histogram (default bin
    0.01/kappa; use 0.001 for ringdown substructure) and the photon trace.
    A transition with no subsequent recorded jump is skipped.
    """
    if signal is None:
        signal = binarize(record)
    events: list[SwitchEvent] = []
    values = signal.values
    times = signal.sample_times
    flips = np.nonzero(np.diff(values))[0]
    for i in flips:
        t_stable = float(times[i])
        direction = "on" if values[i + 1] == 1 else "off"
        j = int(np.searchsorted(record.jump_times, t_stable, side="right"))
        if j >= record.jump_times.size:
            continue
        t_trigger = float(record.jump_times[j])
        w0 = t_trigger - half_width
        w1 = t_trigger + half_width
        in_w = (record.jump_times >= w0) & (record.jump_times <= w1)
        jumps = record.jump_times[in_w]
        edges = w0 + bin_width * np.arange(int(math.ceil((w1 - w0) / bin_width)) + 1)
        counts, edges = np.histogram(jumps, bins=edges)
        tr = (record.sample_times >= w0) & (record.sample_times <= w1)
        events.append(
            SwitchEvent(
                direction=direction,
                t_last_stable=t_stable,
                t_trigger=t_trigger,
                window=(w0, w1),
                jump_times=jumps,
                hist_counts=counts,
                hist_edges=edges,
                trace_times=record.sample_times[tr],
                trace_photon=record.photon_number[tr],
            )
        )
    return events


# ---------------------------------------------------------------------------
# synthetic ground truth

def synthesize_telegraph(
    mu: float,
    lam: float,
    on_level: float,
    t_final: float,
    dt_sample: float,
    seed: int,
) -> TrajectoryRecord:
    """Exact two-state Markov telegraph sampled on a uniform grid.

    Holding times are exponential (rate mu out of OFF, lam out of ON) and the
    initial phase is drawn from the stationary law P(ON) = mu/(mu+lam), so
    every estimator in this module can be checked against known truth.  The
    transition instants are stored in the jump-time slot.
    """
    if mu <= 0 or lam <= 0:
        raise ValueError("mu and lam must be > 0")
    rng = np.random.default_rng(seed)
    state = 1 if rng.random() < mu / (mu + lam) else 0
    transitions: list[float] = []
    t = 0.0
    s = state
    while True:
        t += rng.exponential(1.0 / (lam if s == 1 else mu))
        if t >= t_final:
            break
        transitions.append(t)
        s = 1 - s
    trans = np.asarray(transitions)
    n_samples = int(math.floor(t_final / dt_sample + 1e-9)) + 1
    grid = np.arange(n_samples) * dt_sample
    parity = np.searchsorted(trans, grid, side="right") & 1
    values = np.where(parity == 1, 1 - state, state).astype(np.int8)
    photon = values * float(on_level)
    config = TrajectoryConfig(seed=seed, t_final=t_final, dt_sample=dt_sample,
                              dt_max=min(0.1, dt_sample), burn_in=0.0)
    return TrajectoryRecord(
        sample_times=grid,
        photon_number=photon.astype(float),
        field_amplitude=np.zeros(n_samples, dtype=complex),
        mandel_q=np.full(n_samples, np.nan),
        jump_times=trans,
        jump_channels=np.zeros(trans.size, dtype=np.int8),
        params=None,
        config=config,
    )


# ---------------------------------------------------------------------------
# writers

def save_stats(stats: TelegraphStats, path) -> None:
    """Write one TelegraphStats as a stable JSON document."""
    payload = {"schema": "telegraph-stats/1"}
    for key, value in vars(stats).items():
        payload[key] = value if isinstance(value, int) else float(value)
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def save_dwell_times(on_durations: np.ndarray, off_durations: np.ndarray, path) -> None:
    """Long-format CSV of interior dwell times: phase,duration."""
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("phase,duration\n")
        for d in on_durations:
            fh.write(f"on,{float(d)!r}\n")
        for d in off_durations:
            fh.write(f"off,{float(d)!r}\n")


def save_switch_events(events: list[SwitchEvent], stem) -> None:
    """Write {stem}.trace.csv (photon traces) and {stem}.jumps.csv (windowed jumps)."""
    stem = str(stem)
    with open(stem + ".trace.csv", "w", encoding="utf-8") as fh:
        fh.write("event,direction,t_trigger,t,n\n")
        for k, ev in enumerate(events):
            for t, n in zip(ev.trace_times, ev.trace_photon):
                fh.write(f"{k},{ev.direction},{float(ev.t_trigger)!r},{float(t)!r},{float(n)!r}\n")
    with open(stem + ".jumps.csv", "w", encoding="utf-8") as fh:
        fh.write("event,t\n")
        for k, ev in enumerate(events):
            for t in ev.jump_times:
                fh.write(f"{k},{float(t)!r}\n")
