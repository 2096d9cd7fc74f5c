"""Transmitter-side model: symbol clock, polarization alphabet, photon emission.

The encoder produces two consecutively encoded polarization states per
pulse pair, i.e. the symbol rate is half the pulse repetition rate. Each
symbol carries one of four states in two conjugate bases; the payload
choice is uniform i.i.d. and reproducible from a 64-bit seed.

Symbols are addressable by their absolute index through a counter-based
hash, so a terabit-scale run never materializes the full state sequence:
any slice of the pattern can be regenerated in O(1) per symbol.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

# SplitMix64 constants; the generator is evaluated in counter mode so that
# the state of symbol i is a pure function of (key, i).
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)

# Key of the public frame-header pattern, fixed at build time so every
# configuration shares the same header.
_HEADER_KEY = np.uint64(0x6A09E667F3BCC909)


class Basis(enum.IntEnum):
    AD = 0
    RL = 1


class PolarizationState(enum.IntEnum):
    """Four-state alphabet; A/D live on the +-S1' axis of the encoder's
    rotated Poincare frame, R/L on the +-S3 axis."""

    A = 0
    D = 1
    R = 2
    L = 3

    @property
    def basis(self) -> Basis:
        return Basis(self.value >> 1)

    @property
    def bit(self) -> int:
        return self.value & 1

    @property
    def stokes_vector(self) -> tuple:
        return _STOKES[self.value]


_STOKES = (
    (1.0, 0.0, 0.0),    # A
    (-1.0, 0.0, 0.0),   # D
    (0.0, 0.0, 1.0),    # R
    (0.0, 0.0, -1.0),   # L
)


@dataclass(frozen=True)
class SourceConfig:
    """Clock, frame structure and launch statistics of the transmitter."""

    pulse_rep_rate_hz: float = 890e6
    symbol_rate_hz: float = 445e6
    pulse_width_ps: float = 800.0
    mean_photon_number: float = 0.1
    sagnac_delay_ps: float = 1e12 / 890e6
    frame_length_symbols: int = 65536
    header_length_symbols: int = 1024
    prng_seed: int = 1

    def __post_init__(self):
        if abs(self.symbol_rate_hz - self.pulse_rep_rate_hz / 2.0) > 1e-6 * self.symbol_rate_hz:
            raise ValueError("symbol rate must be half the pulse repetition rate "
                             "(two pulses per symbol)")
        if not (0 < self.header_length_symbols < self.frame_length_symbols):
            raise ValueError("need 0 < header length < frame length")
        if self.pulse_width_ps >= 1e12 / self.pulse_rep_rate_hz:
            raise ValueError("pulse width must fit within one pulse period")
        if self.mean_photon_number < 0:
            raise ValueError("mean photon number must be >= 0")

    @property
    def symbol_period_ps(self) -> float:
        return 1e12 / self.symbol_rate_hz

    @property
    def frame_period_ps(self) -> float:
        return self.frame_length_symbols * self.symbol_period_ps


@dataclass(frozen=True)
class SymbolFrame:
    """One frame of encoded symbols: fixed public header, random payload."""

    frame_index: int
    states: np.ndarray            # uint8, one PolarizationState value per symbol
    header_length: int

    @property
    def header(self) -> np.ndarray:
        return self.states[: self.header_length]

    @property
    def payload(self) -> np.ndarray:
        return self.states[self.header_length:]

    def __len__(self):
        return len(self.states)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _SM_M1
    z ^= z >> np.uint64(27)
    z *= _SM_M2
    z ^= z >> np.uint64(31)
    return z


def _states_from_key(key: np.uint64, indices: np.ndarray) -> np.ndarray:
    counters = indices.astype(np.uint64) * _SM_GAMMA + key
    return (_splitmix64(counters) >> np.uint64(62)).astype(np.uint8)


def header_pattern(length: int) -> np.ndarray:
    """The fixed public header pattern shared by all frames."""
    return _states_from_key(_HEADER_KEY, np.arange(length, dtype=np.uint64))


class SymbolStream:
    """Random access to the transmitted symbol pattern of one run.

    The payload key is derived from the configured seed; header positions
    (the first header_length symbols of every frame) carry the fixed
    public pattern instead.
    """

    def __init__(self, cfg: SourceConfig):
        self.cfg = cfg
        seq = np.random.SeedSequence([int(cfg.prng_seed) & (2**64 - 1), 0x51])
        self.payload_key = np.uint64(seq.generate_state(1, dtype=np.uint64)[0])
        self._header = header_pattern(cfg.header_length_symbols)

    def states_at(self, indices) -> np.ndarray:
        """Polarization state (uint8) at absolute symbol indices."""
        idx = np.asarray(indices, dtype=np.uint64)
        states = _states_from_key(self.payload_key, idx)
        in_frame = (idx % np.uint64(self.cfg.frame_length_symbols)).astype(np.int64)
        is_header = in_frame < self.cfg.header_length_symbols
        if np.any(is_header):
            states = states.copy()
            states[is_header] = self._header[in_frame[is_header]]
        return states

    def bases_at(self, indices) -> np.ndarray:
        return self.states_at(indices) >> 1

    def is_header_symbol(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64)
        return (idx % np.uint64(self.cfg.frame_length_symbols)).astype(np.int64) \
            < self.cfg.header_length_symbols

    @property
    def header(self) -> np.ndarray:
        return self._header

    def frame(self, frame_index: int) -> SymbolFrame:
        start = frame_index * self.cfg.frame_length_symbols
        idx = np.arange(start, start + self.cfg.frame_length_symbols, dtype=np.uint64)
        return SymbolFrame(frame_index, self.states_at(idx),
                           self.cfg.header_length_symbols)


def generate_frames(cfg: SourceConfig, n_frames: int):
    """Yield n_frames consecutive SymbolFrames, deterministic in cfg.prng_seed."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    stream = SymbolStream(cfg)
    for i in range(n_frames):
        yield stream.frame(i)


def optical_budget_to_attenuation(ob_db: float) -> float:
    """Map an optical budget to quantum-channel attenuation in dB.

    The optical budget is defined as channel attenuation in excess of the
    point where the mean photon number is set, so the mapping is the
    identity; it exists to pin the convention in one place. In a sweep the
    transmission-fiber loss is part of the budget, not added on top.
    """
    if ob_db < 0:
        raise ValueError("optical budget must be >= 0 dB")
    return float(ob_db)


def emit_photons(frame: SymbolFrame, cfg: SourceConfig,
                 launch_attenuation_db: float = 0.0,
                 rng: np.random.Generator | None = None):
    """Draw the photons emitted for one frame.

    Each symbol emits k ~ Poisson(mu * 10^(-att/10)) photons at the symbol's
    nominal time plus a uniform jitter within the pulse width; multi-photon
    symbols emit multiple identical-state events. Returns (times_ps, states,
    symbol_indices) with times sorted ascending (absolute, frame 0 starts
    at t = 0).
    """
    if launch_attenuation_db < 0:
        raise ValueError("launch attenuation must be >= 0 dB")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(
            [int(cfg.prng_seed) & (2**64 - 1), 0xE1, frame.frame_index]))
    mu_eff = cfg.mean_photon_number * 10.0 ** (-launch_attenuation_db / 10.0)
    n_sym = len(frame)
    base = frame.frame_index * cfg.frame_length_symbols
    times, states, indices = sample_emissions(
        rng, mu_eff, base, n_sym, cfg.symbol_period_ps, cfg.pulse_width_ps)
    states = frame.states[(indices - base).astype(np.int64)]
    return times, states, indices


def sample_emissions(rng: np.random.Generator, mu_eff: float,
                     first_symbol: int, n_symbols: int,
                     symbol_period_ps: float, pulse_width_ps: float):
    """Vectorized emission sampler over a contiguous symbol range.

    Per-symbol counts are i.i.d. Poisson(mu_eff); conditioned on the total,
    those counts are multinomial-uniform, so drawing the total and then
    uniform symbol positions reproduces the exact joint distribution.
    Returns (times_ps float64 sorted, placeholder states, symbol_indices).
    """
    total = rng.poisson(mu_eff * n_symbols)
    if total == 0:
        empty = np.empty(0)
        return empty, np.empty(0, dtype=np.uint8), np.empty(0, dtype=np.uint64)
    offsets = rng.integers(0, n_symbols, size=total, dtype=np.uint64)
    offsets.sort()
    indices = offsets + np.uint64(first_symbol)
    times = (indices.astype(np.float64) * symbol_period_ps
             + rng.uniform(0.0, pulse_width_ps, size=total))
    order = np.argsort(times, kind="stable")
    return times[order], np.empty(total, dtype=np.uint8), indices[order]
