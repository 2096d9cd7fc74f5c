"""Closed-form rate equations: detection rate, raw-key rate and QBER vs budget.

This is the counterpart of the Monte Carlo pipeline, used three ways: as
the independent cross-check for simulated runs, as the engine behind
parameter calibration, and for fast optical-budget sweeps.

Model, per optical budget ob (dB):

    R_sig = f_sym * mu * 10^(-(ob + path_loss)/10) * eta          (clicks/s)
    R_bg  = 4 * DCR + noise_photons * eta                         (clicks/s)
    f_dt  = 1 / (1 + R_perdet * tau)      per-detector, non-paralyzable
    S     = R_sig * f_dt * g_sig          g_sig: jitter mass inside the gate
    N     = R_bg  * f_dt * gate_fraction  time-uniform background
    sifted = 0.5 * min(S + N, ceiling)    passive 50/50 basis match
    QBER  = (e_total * S + 0.5 * N) / (S + N)

The dead-time factor is computed from the raw per-detector click rate:
software gating happens after the detector, so it cannot un-block a dead
detector, and signal and background share the same thinning factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .detection import DetectorSpec, ReceiverSpec, N_CHANNELS
from .optics import NoiseBudget
from .postproc import ProcessorConfig, SiftResult, secret_fraction
from .source import SourceConfig


@dataclass(frozen=True)
class RatePrediction:
    signal_rate_cps: float   # gated signal clicks/s, all detectors
    noise_rate_cps: float    # gated dark + optical noise clicks/s
    sifted_rate_bps: float   # total sifted rate (both bases), after ceiling
    qber: float
    ob_db: float

    @property
    def per_basis_rate_bps(self) -> float:
        return 0.5 * self.sifted_rate_bps

    @property
    def secret_fraction(self) -> float:
        return secret_fraction(self.qber)


def gate_acceptance(jitter_sigma_ps: float, gate_width_ps: float) -> float:
    """Probability that a Gaussian-jittered arrival falls inside the gate."""
    if gate_width_ps <= 0:
        return 0.0
    if jitter_sigma_ps <= 0:
        return 1.0
    return float(erf(gate_width_ps / (2.0 * math.sqrt(2.0) * jitter_sigma_ps)))


def predict(ob_db: float, source: SourceConfig, rx: ReceiverSpec,
            det: DetectorSpec, noise: NoiseBudget,
            proc: ProcessorConfig) -> RatePrediction:
    """Expected rates and QBER for one operating point."""
    if ob_db < 0:
        raise ValueError("optical budget must be >= 0 dB")
    period_ps = source.symbol_period_ps
    g_sig = gate_acceptance(det.timing_jitter_sigma_ps,
                            proc.gate_fraction * period_ps)

    r_sig = (source.symbol_rate_hz * source.mean_photon_number
             * 10.0 ** (-(ob_db + rx.path_loss_db) / 10.0) * det.efficiency)
    r_bg = (N_CHANNELS * det.dark_count_rate_hz
            + noise.total_photons_per_s * det.efficiency)

    per_det_in = (r_sig + r_bg) / N_CHANNELS
    tau_s = det.dead_time_ps * 1e-12
    f_dt = 1.0 / (1.0 + per_det_in * tau_s)

    s = r_sig * f_dt * g_sig
    n = r_bg * f_dt * proc.gate_fraction
    tag_rate = s + n

    if proc.max_throughput_cps is not None and tag_rate > proc.max_throughput_cps:
        sifted = 0.5 * proc.max_throughput_cps
    else:
        sifted = 0.5 * tag_rate

    if tag_rate > 0:
        qber = (rx.total_error_rate * s + 0.5 * n) / tag_rate
    else:
        qber = 0.5
    qber = min(max(qber, 0.0), 0.5)
    return RatePrediction(s, n, sifted, qber, ob_db)


@dataclass(frozen=True)
class ThresholdResult:
    ob_db: float
    status: str  # crossed | above_at_zero | never

    NEVER_MARKER = math.inf


def threshold_ob(source: SourceConfig, rx: ReceiverSpec, det: DetectorSpec,
                 noise: NoiseBudget, proc: ProcessorConfig,
                 *, ob_max_db: float = 40.0, tol_db: float = 0.01) -> ThresholdResult:
    """Optical budget at which the QBER crosses the usable-key threshold.

    Deterministic bisection of QBER(ob) = threshold. Returns an infinite
    marker if the threshold is never crossed within ob_max_db, and 0 with
    a flag if the QBER already exceeds it back-to-back.
    """
    q = proc.qber_threshold

    def qber_at(ob):
        return predict(ob, source, rx, det, noise, proc).qber

    if qber_at(0.0) >= q:
        return ThresholdResult(0.0, "above_at_zero")
    if qber_at(ob_max_db) < q:
        return ThresholdResult(ThresholdResult.NEVER_MARKER, "never")
    lo, hi = 0.0, ob_max_db
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if qber_at(mid) < q:
            lo = mid
        else:
            hi = mid
    return ThresholdResult(0.5 * (lo + hi), "crossed")


@dataclass(frozen=True)
class AgreementReport:
    z_rate: float
    z_qber: float

    @property
    def passed(self) -> bool:
        return abs(self.z_rate) <= 3.0 and abs(self.z_qber) <= 3.0


def mc_agreement(prediction: RatePrediction, sim: SiftResult) -> AgreementReport:
    """Statistical comparison of a Monte Carlo run against the prediction.

    The sifted count is compared under a Poisson model, the error fraction
    under a binomial model; both comparisons pass at |z| <= 3. The Poisson
    variance slightly overestimates the true dead-time-thinned variance,
    which keeps the test conservative.
    """
    if sim.duration_s <= 0:
        raise ValueError("simulated result carries no duration")
    expected_bits = prediction.sifted_rate_bps * sim.duration_s
    if expected_bits <= 0:
        raise ValueError("prediction yields no sifted bits; configs mismatched?")
    observed = sim.total_sifted_bits
    z_rate = (observed - expected_bits) / math.sqrt(expected_bits)
    q = prediction.qber
    if observed == 0:
        z_qber = 0.0
    elif 0.0 < q < 0.5:
        z_qber = (sim.qber - q) / math.sqrt(q * (1.0 - q) / observed)
    elif sim.qber == q:
        z_qber = 0.0
    else:
        z_qber = math.copysign(math.inf, sim.qber - q)
    return AgreementReport(z_rate, z_qber)


SWEEP_CSV_HEADER = "ob_db,signal_cps,noise_cps,sifted_kbps,qber,secret_fraction"


def sweep_csv_row(p: RatePrediction) -> str:
    return (f"{p.ob_db:.10g},{p.signal_rate_cps:.10g},{p.noise_rate_cps:.10g},"
            f"{p.sifted_rate_bps / 1e3:.10g},{p.qber:.10g},"
            f"{p.secret_fraction:.10g}")
