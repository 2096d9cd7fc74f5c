"""Classical 25 Gb/s PAM4 channel model: received power and BER vs ROP.

A single-parameter thermal-noise model: four equally spaced eye levels
and one Gaussian noise sigma, calibrated so the curve passes exactly
through the receiver's measured sensitivity point. That is the honest
model order for a receiver characterized by one sensitivity figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.special import erfc, erfcinv

from .optics import FiberSpec, FilterElement, cascade_transmission

KR4_FEC_THRESHOLD = 2.2e-4
SENSITIVITY_ANCHOR_DBM = -11.1


def q_function(x: float) -> float:
    return 0.5 * erfc(x / math.sqrt(2.0))


def q_inverse(p: float) -> float:
    return math.sqrt(2.0) * erfcinv(2.0 * p)


def dbm_to_w(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class PamReceiverModel:
    """Gaussian-equivalent PAM4 receiver.

    BER = (3/4) Q(P / (6 sigma)) for received power P: three detection
    thresholds between four equally spaced levels, each Gaussian-limited
    with the same sigma.
    """

    noise_sigma_w: float
    fec_threshold_ber: float = KR4_FEC_THRESHOLD
    calibration_anchor: tuple = (SENSITIVITY_ANCHOR_DBM, KR4_FEC_THRESHOLD)

    def __post_init__(self):
        if self.noise_sigma_w <= 0:
            raise ValueError("receiver noise sigma must be positive")


def calibrate_receiver(rop_dbm: float = SENSITIVITY_ANCHOR_DBM,
                       ber: float = KR4_FEC_THRESHOLD) -> PamReceiverModel:
    """Fix the noise sigma so the BER curve passes through (rop, ber)."""
    if not 0.0 < ber < 0.75:
        raise ValueError("anchor BER must be within (0, 0.75)")
    x = q_inverse(ber * 4.0 / 3.0)
    sigma = dbm_to_w(rop_dbm) / (6.0 * x)
    return PamReceiverModel(sigma, calibration_anchor=(rop_dbm, ber))


def ber_vs_rop(rop_dbm: float, model: PamReceiverModel) -> float:
    """PAM4 bit error rate at a received optical power (dBm).

    Strictly decreasing in ROP; tends to 0 as ROP grows.
    """
    return 0.75 * q_function(dbm_to_w(rop_dbm) / (6.0 * model.noise_sigma_w))


def fec_pass(rop_dbm: float, model: PamReceiverModel) -> bool:
    return ber_vs_rop(rop_dbm, model) <= model.fec_threshold_ber


def link_rop(launch_dbm: float, fiber: FiberSpec,
             filters: Sequence[FilterElement], wavelength_nm: float) -> float:
    """Received optical power of a classical channel: pure dB accounting."""
    return (launch_dbm - fiber.loss_db(wavelength_nm)
            + cascade_transmission(filters, wavelength_nm))


def sensitivity_margin_db(rop_dbm: float, model: PamReceiverModel) -> float:
    """Margin of the operating ROP above the calibrated sensitivity point."""
    return rop_dbm - model.calibration_anchor[0]


BER_CSV_HEADER = "rop_dbm,ber,fec_pass"


def ber_sweep_rows(model: PamReceiverModel, rop_grid_dbm) -> list:
    rows = []
    for rop in rop_grid_dbm:
        ber = ber_vs_rop(float(rop), model)
        rows.append(f"{float(rop):.10g},{ber:.10g},"
                    f"{int(ber <= model.fec_threshold_ber)}")
    return rows
