"""Channel-plus-receiver Monte Carlo: loss, decoding errors, noise, dead time.

A photon that survives the channel and receiver optics is abstracted to a
single decodable polarization event at its symbol's decode instant (the
center of the symbol slot); the system timing jitter is Gaussian around
that instant. Dark counts and in-band noise photons arrive as homogeneous
Poisson processes split uniformly over the four detectors. Dead time is
enforced last, per detector, with a non-paralyzable model (a paralyzable
variant is available for sensitivity studies).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import timetags
from .source import SourceConfig

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not args else args[0]

N_CHANNELS = 4


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector parameters (identical per detector).

    dark_count_rate_hz is per detector. dead_time_ps uses the
    non-paralyzable model unless paralyzable=True.
    """

    efficiency: float = 0.10
    dark_count_rate_hz: float = 100.0
    dead_time_ps: float = 50e3
    timing_jitter_sigma_ps: float = 100.0
    paralyzable: bool = False
    responsivity_rolloff: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be within [0, 1]")
        if self.dark_count_rate_hz < 0 or self.dead_time_ps < 0:
            raise ValueError("dark rate and dead time must be >= 0")
        if self.timing_jitter_sigma_ps < 0:
            raise ValueError("timing jitter must be >= 0")


# Shortwave silicon detectors: efficient gating-friendly devices with a
# short recovery and a low dark floor.
SI_SPAD = DetectorSpec(efficiency=0.10, dark_count_rate_hz=100.0,
                       dead_time_ps=50e3, timing_jitter_sigma_ps=100.0)

# Telecom-band InGaAs devices: microsecond-scale dead time and a higher
# dark floor. The 20% efficiency is an assumption; absolute telecom-band
# rates are re-anchored against the reference operating point during
# calibration, so only relative behaviour depends on it.
INGAAS_SPAD = DetectorSpec(efficiency=0.20, dark_count_rate_hz=570.0,
                           dead_time_ps=25e6, timing_jitter_sigma_ps=100.0)


@dataclass(frozen=True)
class ReceiverSpec:
    """Receiver optics and decoder imperfections.

    polarimeter_loss_db is the free-space polarimeter path including its
    integrated co-existence filters; bypass_polarimeter replaces it with a
    small fiber-splice residual. excess_loss_db is the calibrated system
    margin of the polarimeter path (fitted, not measured element by
    element). few_mode_penalty_qber is the additive error-rate penalty of
    multi-mode propagation and must be set only when the transmission
    fiber is few-mode at the quantum wavelength. few_mode_ringing models
    the slow coupling oscillation of a few-mode channel as
    (amplitude, period_s).
    """

    polarimeter_loss_db: float = 14.0
    bypass_polarimeter: bool = False
    bypass_loss_db: float = 1.0
    excess_loss_db: float = 0.0
    intrinsic_error_rate: float = 0.0
    few_mode_penalty_qber: float = 0.0
    few_mode_ringing: Optional[tuple] = None  # (amplitude, period_s)
    basis_choice: str = "passive"

    def __post_init__(self):
        if not 0.0 <= self.intrinsic_error_rate <= 0.5:
            raise ValueError("intrinsic error rate must be within [0, 0.5]")
        if self.total_error_rate >= 0.5:
            raise ValueError("intrinsic error + few-mode penalty must stay below 0.5")
        if self.few_mode_ringing is not None:
            amp, period = self.few_mode_ringing
            if not 0.0 <= amp < 1.0:
                raise ValueError("ringing amplitude must be within [0, 1)")
            if period <= 0:
                raise ValueError("ringing period must be positive")
        if self.basis_choice != "passive":
            raise ValueError("only the passive 50/50 basis choice is modeled")

    @property
    def path_loss_db(self) -> float:
        base = self.bypass_loss_db if self.bypass_polarimeter else self.polarimeter_loss_db
        return base + self.excess_loss_db

    @property
    def total_error_rate(self) -> float:
        return self.intrinsic_error_rate + self.few_mode_penalty_qber


def few_mode_modulation(t_s, ringing) -> np.ndarray | float:
    """Multiplicative coupling efficiency 1 - a*(1+sin(2 pi t/T))/2 in (0, 1]."""
    if ringing is None:
        return np.ones_like(np.asarray(t_s, dtype=float)) if not np.isscalar(t_s) else 1.0
    amplitude, period_s = ringing
    if not 0.0 <= amplitude < 1.0:
        raise ValueError("ringing amplitude must be within [0, 1)")
    t = np.asarray(t_s, dtype=float)
    out = 1.0 - amplitude * (1.0 + np.sin(2.0 * math.pi * t / period_s)) / 2.0
    return float(out) if np.isscalar(t_s) else out


@_njit(cache=True)
def _dead_time_mask_nonparalyzable(times: np.ndarray, dead_time: float) -> np.ndarray:
    keep = np.empty(len(times), dtype=np.bool_)
    last = -np.inf
    for i in range(len(times)):
        if times[i] - last >= dead_time:
            keep[i] = True
            last = times[i]
        else:
            keep[i] = False
    return keep


@_njit(cache=True)
def _dead_time_mask_paralyzable(times: np.ndarray, dead_time: float) -> np.ndarray:
    # every arrival extends the blocked window, registered or not
    keep = np.empty(len(times), dtype=np.bool_)
    blocked_until = -np.inf
    for i in range(len(times)):
        keep[i] = times[i] >= blocked_until
        blocked_until = times[i] + dead_time
    return keep


def apply_dead_time(times_ps: np.ndarray, dead_time_ps: float,
                    *, paralyzable: bool = False) -> np.ndarray:
    """Filter a sorted event stream through detector dead time.

    Non-paralyzable: an event is kept iff it arrives at least dead_time
    after the last kept event; the first event is always kept. Input must
    be sorted by time.
    """
    times_ps = np.asarray(times_ps, dtype=np.float64)
    if len(times_ps) == 0:
        return times_ps.copy()
    if np.any(np.diff(times_ps) < 0):
        raise ValueError("dead-time filter requires a time-sorted input stream")
    if dead_time_ps <= 0:
        return times_ps.copy()
    if paralyzable:
        mask = _dead_time_mask_paralyzable(times_ps, dead_time_ps)
    else:
        mask = _dead_time_mask_nonparalyzable(times_ps, dead_time_ps)
    return times_ps[mask]


def dead_time_mask(times_ps: np.ndarray, dead_time_ps: float,
                   *, paralyzable: bool = False) -> np.ndarray:
    """Boolean keep-mask variant of apply_dead_time (same contract)."""
    times_ps = np.asarray(times_ps, dtype=np.float64)
    if len(times_ps) == 0:
        return np.ones(0, dtype=bool)
    if np.any(np.diff(times_ps) < 0):
        raise ValueError("dead-time filter requires a time-sorted input stream")
    if dead_time_ps <= 0:
        return np.ones(len(times_ps), dtype=bool)
    if paralyzable:
        return _dead_time_mask_paralyzable(times_ps, dead_time_ps)
    return _dead_time_mask_nonparalyzable(times_ps, dead_time_ps)


def _route_photons(rng: np.random.Generator, states: np.ndarray,
                   error_rate: float) -> np.ndarray:
    """Map encoded states to detector channels through the passive decoder.

    Bob's basis is a 50/50 coin per photon. A basis-matched photon lands
    on the encoded state's detector with probability 1 - error_rate and
    on the orthogonal detector of the same basis otherwise; a mismatched
    photon lands uniformly on either detector of Bob's basis.
    """
    n = len(states)
    bob_basis = rng.integers(0, 2, size=n, dtype=np.uint8)
    matched = bob_basis == (states >> 1)
    flip = rng.random(n) < error_rate
    channels = np.where(matched,
                        states ^ flip.astype(np.uint8),
                        (bob_basis << 1) | rng.integers(0, 2, size=n, dtype=np.uint8))
    return channels.astype(np.uint8)


def detect_photons(times_ps: np.ndarray, states: np.ndarray,
                   survival_probability: float,
                   rx: ReceiverSpec, det: DetectorSpec,
                   rng: np.random.Generator,
                   *, apply_ringing: bool = False):
    """Thin, route and timestamp candidate photons.

    survival_probability already contains every deterministic loss factor
    the caller accounted for; the few-mode ringing (if enabled) modulates
    it in time. Returns (tag_times_ps, channels) with Gaussian jitter
    applied and the arrival re-quantized to the symbol decode instant by
    the caller beforehand.
    """
    n = len(times_ps)
    if n == 0 or survival_probability <= 0:
        return np.empty(0), np.empty(0, dtype=np.uint8)
    p = survival_probability
    if apply_ringing and rx.few_mode_ringing is not None:
        p = p * few_mode_modulation(times_ps * 1e-12, rx.few_mode_ringing)
    keep = rng.random(n) < p
    times = times_ps[keep]
    channels = _route_photons(rng, states[keep], rx.total_error_rate)
    jitter = rng.standard_normal(len(times)) * det.timing_jitter_sigma_ps
    return times + jitter, channels


def _noise_arrivals(rng: np.random.Generator, rate_hz: float,
                    t0_ps: float, duration_s: float):
    n = rng.poisson(rate_hz * duration_s)
    return np.sort(rng.uniform(t0_ps, t0_ps + duration_s * 1e12, size=n))


def transmit(events, ob_db: float, rx: ReceiverSpec, det: DetectorSpec,
             noise_photons_per_s: float, duration_s: float, seed,
             source_cfg: SourceConfig | None = None,
             *, t0_ps: float = 0.0, apply_ringing: bool = False):
    """Run emitted photons through channel, receiver and detectors.

    events is (emission_times_ps, states[, symbol_indices]) as produced by
    emit_photons. Each photon survives with probability
    10^(-(ob + path loss)/10) * efficiency; survivors are decoded with the
    receiver's total error rate and re-timed to their symbol decode
    instant plus Gaussian jitter. Dark counts (per detector) and in-band
    noise photons (noise_photons_per_s at the detector plane, times the
    efficiency, split uniformly over the four detectors) are added, then
    the per-detector dead time is enforced.

    Returns a list of four structured timetag arrays, one per channel.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    cfg = source_cfg if source_cfg is not None else SourceConfig()
    rng = np.random.default_rng(seed)
    emission_times, states = events[0], events[1]
    emission_times = np.asarray(emission_times, dtype=np.float64)

    # decoder abstraction: the decodable event of a symbol sits at the
    # center of its symbol slot, regardless of where in the pulse the
    # photon was emitted
    period = cfg.symbol_period_ps
    decode_times = (np.floor(emission_times / period) + 0.5) * period

    survival = 10.0 ** (-(ob_db + rx.path_loss_db) / 10.0) * det.efficiency
    sig_times, sig_channels = detect_photons(
        decode_times, np.asarray(states, dtype=np.uint8), survival, rx, det,
        rng, apply_ringing=apply_ringing)

    return assemble_streams(sig_times, sig_channels, rx, det,
                            noise_photons_per_s, duration_s, rng, t0_ps=t0_ps)


def assemble_streams(sig_times: np.ndarray, sig_channels: np.ndarray,
                     rx: ReceiverSpec, det: DetectorSpec,
                     noise_photons_per_s: float, duration_s: float,
                     rng: np.random.Generator, *, t0_ps: float = 0.0):
    """Merge signal with dark/noise arrivals and apply per-channel dead time."""
    optical_rate_hz = noise_photons_per_s * det.efficiency
    streams = []
    for ch in range(N_CHANNELS):
        dark = _noise_arrivals(rng, det.dark_count_rate_hz, t0_ps, duration_s)
        opt = _noise_arrivals(rng, optical_rate_hz / N_CHANNELS, t0_ps, duration_s)
        sig = sig_times[sig_channels == ch]
        times = np.concatenate([sig, dark, opt])
        flags = np.concatenate([
            np.full(len(sig), timetags.FLAG_TRUTH_SIGNAL, dtype=np.uint8),
            np.zeros(len(dark) + len(opt), dtype=np.uint8)])
        order = np.argsort(times, kind="stable")
        times, flags = times[order], flags[order]
        keep = dead_time_mask(times, det.dead_time_ps, paralyzable=det.paralyzable)
        times, flags = times[keep], flags[keep]
        streams.append(timetags.make_records(
            times, np.full(len(times), ch, dtype=np.uint8), flags))
    return streams


def merge_streams(streams) -> np.ndarray:
    """Merge per-channel streams into one globally time-ordered record array."""
    merged = np.concatenate(streams)
    order = np.argsort(merged["time_ps"], kind="stable")
    return merged[order]
