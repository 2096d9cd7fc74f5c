"""Spectral-domain link model: channel plan, filter cascade, fiber and noise.

Everything here works in wavelength (nm) and optical power (dBm or mW).
The two noise mechanisms that matter for the quantum channel are

  * spontaneous-emission tails of the classical transmitters, which leak
    into the quantum passband unless cleaned at the transmitter, and
  * spontaneous Raman scattering generated along the fiber by the
    classical channels, which cannot be filtered once it lands in-band.

Both are reduced to an in-band photon rate referenced to the detector
input plane, i.e. after every passive element of the receiver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

PLANCK_J_S = 6.62607015e-34
C_M_S = 299792458.0
C_NM_GHZ = C_M_S * 1e9 / 1e9  # nm * GHz = 2.998e8 (c in nm/ns)

# Modeled wavelength range; the grid covers the shortwave window, the
# O-band datacom channels and the C-band quantum channel.
GRID_MIN_NM = 600.0
GRID_MAX_NM = 1700.0
GRID_STEP_NM = 1.0

# LAN-WDM 4-lane grid used by the 100 Gb/s datacom pipe (4 x 25 Gb/s).
LAN_WDM_NM = (1295.56, 1300.05, 1304.58, 1309.14)

# Transmitter spontaneous-emission tail model: per-channel PSD in dB
# relative to the carrier, falling linearly with detuning down to a
# broadband floor. Two parameters are enough to place the residual tails
# above or below the detector dark floor, which is all the link budget
# is sensitive to.
ASE_TAIL_OFFSET_DB = -30.0        # dBc/nm right next to the carrier
ASE_TAIL_SLOPE_DB_PER_NM = 0.25   # decay vs detuning
ASE_TAIL_FLOOR_DB = -91.7         # broadband dBc/nm floor

# Normalized Raman cross-section profile rho(delta_nu). Positive detuning
# is the Stokes side (scattered light red of the pump). The profile spans
# +-50 THz with a smooth roll-off and is identically zero beyond that,
# so a quantum channel detuned by >100 THz sees exactly zero Raman noise.
RAMAN_SUPPORT_THZ = 50.0
_RAMAN_STOKES_KNOTS = (
    (0.0, 0.12), (2.0, 0.35), (5.0, 0.55), (10.0, 0.85), (13.2, 1.0),
    (15.0, 0.92), (18.0, 0.62), (24.0, 0.40), (30.0, 0.28), (36.0, 0.22),
    (42.0, 0.12), (47.0, 0.04), (50.0, 0.0),
)
_RAMAN_ANTISTOKES_SCALE = 0.25  # thermal suppression of the blue side


class CalibrationError(RuntimeError):
    """Raised when a calibration root-find cannot bracket its target."""


def db_to_lin(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def lin_to_db(lin, floor_db: float = -200.0):
    lin = np.asarray(lin, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(lin)
    return np.maximum(out, floor_db)


def photon_energy_j(wavelength_nm: float) -> float:
    return PLANCK_J_S * C_M_S / (wavelength_nm * 1e-9)


def thz_detuning(wavelength_a_nm: float, wavelength_b_nm: float) -> float:
    """Frequency detuning nu(a) - nu(b) in THz."""
    return (C_M_S / (wavelength_a_nm * 1e-9) - C_M_S / (wavelength_b_nm * 1e-9)) / 1e12


def ghz_to_nm(bandwidth_ghz: float, wavelength_nm: float) -> float:
    """Convert an optical bandwidth in GHz to nm at a given wavelength."""
    return bandwidth_ghz * 1e9 * (wavelength_nm * 1e-9) ** 2 / C_M_S * 1e9


def nm_to_ghz(bandwidth_nm: float, wavelength_nm: float) -> float:
    return bandwidth_nm * 1e-9 * C_M_S / (wavelength_nm * 1e-9) ** 2 / 1e9


@dataclass(frozen=True)
class ChannelPlan:
    """Wavelength plan of the co-existence link.

    quantum_filter_bandwidth_nm is the FWHM of the narrowest filter that
    defines the quantum passband (7 nm for the shortwave layout, the
    100 GHz grid filter for the C-band layout).
    """

    quantum_wavelength_nm: float
    classical_wavelengths_nm: tuple = LAN_WDM_NM
    classical_launch_dbm_per_channel: float = 3.0
    quantum_filter_bandwidth_nm: float = 7.0

    def __post_init__(self):
        wl = tuple(float(w) for w in self.classical_wavelengths_nm)
        object.__setattr__(self, "classical_wavelengths_nm", wl)
        if self.quantum_wavelength_nm <= 0:
            raise ValueError("quantum wavelength must be positive")
        if any(w <= 0 for w in wl):
            raise ValueError("classical wavelengths must be positive")
        if list(wl) != sorted(wl):
            raise ValueError("classical wavelengths must be sorted ascending")
        if any(abs(w - self.quantum_wavelength_nm) < 1e-9 for w in wl):
            raise ValueError("quantum channel must be detuned from every classical channel")
        if self.quantum_filter_bandwidth_nm <= 0:
            raise ValueError("quantum filter bandwidth must be positive")

    @property
    def quantum_passband_nm(self) -> tuple:
        half = 0.5 * self.quantum_filter_bandwidth_nm
        return (self.quantum_wavelength_nm - half, self.quantum_wavelength_nm + half)

    @property
    def quantum_bandwidth_ghz(self) -> float:
        return nm_to_ghz(self.quantum_filter_bandwidth_nm, self.quantum_wavelength_nm)

    def photon_energy_j(self) -> float:
        return photon_energy_j(self.quantum_wavelength_nm)


@dataclass(frozen=True)
class FilterElement:
    """Passive spectral element with a piecewise transmission function.

    kind is one of:
      * "bandpass" -- passband_loss_db inside [center - width/2, center + width/2],
        stopband_db outside,
      * "notch"    -- stopband_db inside the band, passband_loss_db outside,
      * "flat"     -- passband_loss_db everywhere (broadband insertion loss).
    """

    name: str
    kind: str = "bandpass"
    center_nm: float = 0.0
    width_nm: float = 0.0
    passband_loss_db: float = 0.0
    stopband_db: float = -40.0

    def __post_init__(self):
        if self.kind not in ("bandpass", "notch", "flat"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.passband_loss_db > 0 or self.stopband_db > 0:
            raise ValueError("passive element: transmission must be <= 0 dB everywhere")
        if self.kind != "flat" and self.width_nm <= 0:
            raise ValueError("band filters need a positive width")

    def transmission_db(self, wavelength_nm):
        """Transmission in dB (<= 0) at one or many wavelengths."""
        wl = np.asarray(wavelength_nm, dtype=float)
        if self.kind == "flat":
            out = np.full_like(wl, self.passband_loss_db)
        else:
            inside = np.abs(wl - self.center_nm) <= 0.5 * self.width_nm
            if self.kind == "bandpass":
                out = np.where(inside, self.passband_loss_db, self.stopband_db)
            else:
                out = np.where(inside, self.stopband_db, self.passband_loss_db)
        return float(out) if np.isscalar(wavelength_nm) else out

    @staticmethod
    def bandpass(name, center_nm, width_nm, passband_loss_db=0.0, stopband_db=-40.0):
        return FilterElement(name, "bandpass", center_nm, width_nm,
                             passband_loss_db, stopband_db)

    @staticmethod
    def notch(name, center_nm, width_nm, depth_db, passband_loss_db=0.0):
        return FilterElement(name, "notch", center_nm, width_nm,
                             passband_loss_db, depth_db)

    @staticmethod
    def flat(name, loss_db):
        return FilterElement(name, "flat", passband_loss_db=loss_db)


@dataclass(frozen=True)
class FiberSpec:
    """Transmission fiber: attenuation vs wavelength plus Raman behaviour.

    attenuation_db_per_km maps reference wavelengths to attenuation; values
    in between are linearly interpolated. raman_coefficient is the scalar
    fixed by calibrate_raman: fraction of pump power scattered into the
    quantum channel per km of effective length and per GHz of passband at
    the peak of the normalized Raman profile.
    """

    length_km: float = 1.0
    attenuation_db_per_km: tuple = ((852.0, 1.8), (1310.0, 0.35), (1550.0, 0.2))
    mode_field_diameter_um: float = 9.2
    cutoff_wavelength_nm: float = 1260.0
    raman_coefficient: float = 0.0

    def __post_init__(self):
        att = tuple(sorted((float(w), float(a)) for w, a in
                           (self.attenuation_db_per_km if not isinstance(self.attenuation_db_per_km, dict)
                            else self.attenuation_db_per_km.items())))
        object.__setattr__(self, "attenuation_db_per_km", att)
        if self.length_km < 0:
            raise ValueError("fiber length must be >= 0")
        if any(a < 0 for _, a in att):
            raise ValueError("attenuation entries must be >= 0")
        if self.raman_coefficient < 0:
            raise ValueError("raman_coefficient must be >= 0")

    def attenuation_at(self, wavelength_nm):
        """Attenuation coefficient in dB/km, interpolated vs wavelength."""
        wl = np.array([w for w, _ in self.attenuation_db_per_km])
        al = np.array([a for _, a in self.attenuation_db_per_km])
        return np.interp(wavelength_nm, wl, al)

    def loss_db(self, wavelength_nm):
        return self.attenuation_at(wavelength_nm) * self.length_km

    def is_few_mode(self, wavelength_nm: float) -> bool:
        """A carrier below the cut-off wavelength excites multiple spatial modes."""
        return wavelength_nm < self.cutoff_wavelength_nm

    def effective_length_km(self, pump_wavelength_nm: float) -> float:
        """Effective interaction length for forward scattering from a pump.

        L_eff = (1 - 10^(-alpha L / 10)) / (alpha ln(10) / 10); tends to L
        as alpha -> 0, and is strictly below L for any alpha > 0.
        """
        alpha = float(self.attenuation_at(pump_wavelength_nm))
        if alpha <= 0:
            return self.length_km
        k = alpha * math.log(10.0) / 10.0
        return (1.0 - 10.0 ** (-alpha * self.length_km / 10.0)) / k


@dataclass(frozen=True)
class NoiseBudget:
    """In-band noise photon rates at the detector input plane."""

    ase_inband_photons_per_s: float = 0.0
    raman_inband_photons_per_s: float = 0.0
    spectrum_samples: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.ase_inband_photons_per_s)
                and math.isfinite(self.raman_inband_photons_per_s)):
            raise ValueError("noise rates must be finite")
        if self.ase_inband_photons_per_s < 0 or self.raman_inband_photons_per_s < 0:
            raise ValueError("noise rates must be >= 0")

    @property
    def total_photons_per_s(self) -> float:
        return self.ase_inband_photons_per_s + self.raman_inband_photons_per_s


def cascade_transmission(filters: Sequence[FilterElement], wavelength_nm) -> float:
    """Total transmission of a filter cascade in dB (sum of elements).

    An empty cascade is the identity (0 dB). Wavelengths outside the
    modeled [600, 1700] nm grid raise a ValueError.
    """
    wl = np.asarray(wavelength_nm, dtype=float)
    if np.any(wl < GRID_MIN_NM) or np.any(wl > GRID_MAX_NM):
        raise ValueError(f"wavelength outside modeled grid "
                         f"[{GRID_MIN_NM:.0f}, {GRID_MAX_NM:.0f}] nm")
    total = np.zeros_like(wl)
    for element in filters:
        total = total + element.transmission_db(wl)
    return float(total) if np.isscalar(wavelength_nm) else total


def _ase_tail_psd_dbm_per_nm(plan: ChannelPlan, wavelength_nm,
                             offset_db: float, slope_db_per_nm: float,
                             floor_db: float):
    """Summed transmitter-tail PSD of all classical channels (dBm/nm).

    Per channel the tail is launch + max(offset - slope*|detuning|, floor);
    channel contributions add linearly in mW.
    """
    wl = np.asarray(wavelength_nm, dtype=float)
    total_mw = np.zeros_like(wl)
    for ch in plan.classical_wavelengths_nm:
        rel = np.maximum(offset_db - slope_db_per_nm * np.abs(wl - ch), floor_db)
        total_mw += db_to_lin(plan.classical_launch_dbm_per_channel + rel)
    return lin_to_db(total_mw)


def ase_noise_rate(plan: ChannelPlan,
                   tx_cleaning: Sequence[FilterElement],
                   rx_filters: Sequence[FilterElement],
                   *,
                   tail_offset_db: float = ASE_TAIL_OFFSET_DB,
                   tail_slope_db_per_nm: float = ASE_TAIL_SLOPE_DB_PER_NM,
                   tail_floor_db: float = ASE_TAIL_FLOOR_DB) -> float:
    """Transmitter-tail photons/s inside the quantum passband at the detectors.

    Integrates the per-channel tail PSD over the quantum filter passband,
    applies the transmitter cleaning cascade and the receiver cascade, and
    converts optical power to a photon rate at the quantum photon energy.
    The result scales exactly linearly with launch power in mW and with
    the number of identical channels.
    """
    if not plan.classical_wavelengths_nm:
        return 0.0
    lo, hi = plan.quantum_passband_nm
    grid = np.linspace(lo, hi, 201)
    psd_dbm = _ase_tail_psd_dbm_per_nm(plan, grid, tail_offset_db,
                                       tail_slope_db_per_nm, tail_floor_db)
    psd_dbm = psd_dbm + cascade_transmission(tx_cleaning, grid)
    psd_dbm = psd_dbm + cascade_transmission(rx_filters, grid)
    power_mw = np.trapz(db_to_lin(psd_dbm), grid)
    return float(power_mw * 1e-3 / plan.photon_energy_j())


def raman_profile(delta_nu_thz):
    """Normalized Raman cross-section rho(delta_nu), peak 1 on the Stokes side.

    Identically zero for |delta_nu| beyond the 50 THz support (and a
    fortiori beyond 100 THz), which is what makes a >100 THz detuned
    quantum channel immune to Raman noise.
    """
    dv = np.asarray(delta_nu_thz, dtype=float)
    knots = np.array([k for k, _ in _RAMAN_STOKES_KNOTS])
    vals = np.array([v for _, v in _RAMAN_STOKES_KNOTS])
    stokes = np.interp(np.abs(dv), knots, vals, left=0.0, right=0.0)
    out = np.where(dv >= 0, stokes, stokes * _RAMAN_ANTISTOKES_SCALE)
    out = np.where(np.abs(dv) > RAMAN_SUPPORT_THZ, 0.0, out)
    return float(out) if np.isscalar(delta_nu_thz) else out


def raman_noise_rate(plan: ChannelPlan, fiber: FiberSpec,
                     rx_filters: Sequence[FilterElement]) -> float:
    """Spontaneous-Raman photons/s in the quantum passband at the detectors.

    Each classical pump contributes launch_power * coefficient * rho(detuning)
    * L_eff * passband width; the receiver cascade at the quantum wavelength
    is then applied. Co-propagating single-pass scattering only.
    """
    if fiber.length_km <= 0 or fiber.raman_coefficient <= 0:
        return 0.0
    if not plan.classical_wavelengths_nm:
        return 0.0
    bw_ghz = plan.quantum_bandwidth_ghz
    rx_db = cascade_transmission(rx_filters, plan.quantum_wavelength_nm)
    total_mw = 0.0
    for pump in plan.classical_wavelengths_nm:
        detuning = thz_detuning(pump, plan.quantum_wavelength_nm)  # >0: Stokes side
        rho = raman_profile(detuning)
        if rho == 0.0:
            continue
        p_mw = db_to_lin(plan.classical_launch_dbm_per_channel)
        leff = fiber.effective_length_km(pump)
        total_mw += p_mw * fiber.raman_coefficient * rho * leff * bw_ghz
    total_mw *= db_to_lin(rx_db)
    return float(total_mw * 1e-3 / plan.photon_energy_j())


def calibrate_raman(qber_of_coefficient: Callable[[float], float],
                    target_qber: float,
                    *,
                    rel_tol: float = 1e-6,
                    upper_bound: float = 1e3) -> float:
    """Solve for the Raman coefficient that reproduces a target QBER.

    qber_of_coefficient must be monotone non-decreasing (more scattering,
    more errors). Returns 0.0 when the target is already met without any
    Raman noise. Deterministic bisection to a relative tolerance.
    """
    q0 = qber_of_coefficient(0.0)
    if q0 >= target_qber - 1e-12:
        return 0.0
    lo, hi = 0.0, 1e-9
    while qber_of_coefficient(hi) < target_qber:
        hi *= 10.0
        if hi > upper_bound:
            raise CalibrationError(
                f"no Raman coefficient in [0, {upper_bound:g}] reaches "
                f"QBER {target_qber:.4f} (QBER without noise: {q0:.4f})")
    while (hi - lo) > rel_tol * max(hi, 1e-30):
        mid = 0.5 * (lo + hi)
        if qber_of_coefficient(mid) < target_qber:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Composite spectra at the four labeled tap points of the link:
#   alpha -- after the classical LAN-WDM multiplexer at the transmitter
#   beta  -- after the transmitter co-existence / cleaning stack
#   gamma -- after the transmission fiber (attenuation + Raman floor)
#   delta -- after the receiver filter cascade
# The export contains the classical carriers and both noise mechanisms;
# the single-photon quantum carrier is far below every plotted floor and
# is not included.
# ---------------------------------------------------------------------------

SPECTRUM_TAPS = ("alpha", "beta", "gamma", "delta")


def export_spectrum(tap: str, plan: ChannelPlan, fiber: FiberSpec,
                    tx_cleaning: Sequence[FilterElement],
                    rx_filters: Sequence[FilterElement],
                    *,
                    tail_offset_db: float = ASE_TAIL_OFFSET_DB,
                    tail_slope_db_per_nm: float = ASE_TAIL_SLOPE_DB_PER_NM,
                    tail_floor_db: float = ASE_TAIL_FLOOR_DB):
    """Sample the composite PSD at a tap point on the fixed 1 nm grid.

    Returns (wavelength_nm, psd_dbm_per_nm) arrays. Carriers are binned at
    the nearest grid point (dBm per 1 nm bin).
    """
    if tap not in SPECTRUM_TAPS:
        raise ValueError(f"unknown tap {tap!r}; expected one of {SPECTRUM_TAPS}")
    grid = np.arange(GRID_MIN_NM, GRID_MAX_NM + 0.5 * GRID_STEP_NM, GRID_STEP_NM)

    # transmitter side: carriers + spontaneous-emission tails
    psd_mw = db_to_lin(_ase_tail_psd_dbm_per_nm(
        plan, grid, tail_offset_db, tail_slope_db_per_nm, tail_floor_db))
    carrier_mw = np.zeros_like(grid)
    for ch in plan.classical_wavelengths_nm:
        idx = int(np.argmin(np.abs(grid - ch)))
        carrier_mw[idx] += db_to_lin(plan.classical_launch_dbm_per_channel) / GRID_STEP_NM
    psd_mw = psd_mw + carrier_mw

    if tap != "alpha":
        psd_mw = psd_mw * db_to_lin(cascade_transmission(tx_cleaning, grid))
    if tap in ("gamma", "delta"):
        psd_mw = psd_mw * db_to_lin(-fiber.loss_db(grid))
        psd_mw = psd_mw + _raman_psd_mw_per_nm(plan, fiber, grid)
    if tap == "delta":
        psd_mw = psd_mw * db_to_lin(cascade_transmission(rx_filters, grid))
    return grid, lin_to_db(psd_mw)


def _raman_psd_mw_per_nm(plan: ChannelPlan, fiber: FiberSpec, grid_nm):
    """Raman PSD generated along the fiber, in mW/nm on the grid."""
    psd = np.zeros_like(grid_nm)
    if fiber.length_km <= 0 or fiber.raman_coefficient <= 0:
        return psd
    ghz_per_nm = C_NM_GHZ / grid_nm ** 2  # |d nu / d lambda|
    for pump in plan.classical_wavelengths_nm:
        detuning = np.array([thz_detuning(pump, w) for w in grid_nm])
        rho = raman_profile(detuning)
        p_mw = db_to_lin(plan.classical_launch_dbm_per_channel)
        leff = fiber.effective_length_km(pump)
        psd = psd + p_mw * fiber.raman_coefficient * rho * leff * ghz_per_nm
    return psd


def make_noise_budget(plan: ChannelPlan, fiber: FiberSpec,
                      tx_cleaning: Sequence[FilterElement],
                      rx_filters: Sequence[FilterElement],
                      *,
                      include_spectra: bool = False,
                      coexistence: bool = True,
                      **tail_kwargs) -> NoiseBudget:
    """Evaluate both noise mechanisms for one link configuration."""
    if not coexistence:
        return NoiseBudget(0.0, 0.0)
    ase = ase_noise_rate(plan, tx_cleaning, rx_filters, **tail_kwargs)
    raman = raman_noise_rate(plan, fiber, rx_filters)
    samples = ()
    if include_spectra:
        samples = tuple(
            (tap, export_spectrum(tap, plan, fiber, tx_cleaning, rx_filters,
                                  **tail_kwargs))
            for tap in SPECTRUM_TAPS)
    return NoiseBudget(ase, raman, samples)


def write_spectrum_csv(path, grid_nm, psd_dbm_per_nm):
    """CSV export: header wavelength_nm,psd_dbm_per_nm; one row per grid point."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("wavelength_nm,psd_dbm_per_nm\n")
        for wl, psd in zip(grid_nm, psd_dbm_per_nm):
            fh.write(f"{wl:.1f},{psd:.4f}\n")
