"""Eavesdroppers: intercept-resend and two-point tapping.

The tapping attacker measures the outbound pulse at T1 (it carries Bob's
random phase) and the returning pulse at T2 (random phase plus Alice's key
phase); subtracting the two removes the random phase at the price of two
noisy measurements, four once the differential reference is involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import PulseFrames, TapConfig
from .detection import Detector, Measurement, measure, measure_arrays
from .modulation import Scheme, int_to_bits
from .phasespace import GlauberState, canonicalize, draw_phase_noise


@dataclass
class InterceptResendAttacker:
    """Cuts the fiber, measures every pulse and sends a fresh one on.

    The fresh pulse is prepared at the measured phase, which is referenced to
    the attacker's own (unsynchronised) oscillator, with an independent
    preparation error of ``regeneration_sigma`` (defaults to the measurement
    sigma at the intercepted intensity).
    """

    detector: Detector
    regeneration_amplitude_ratio: float = 1.0
    regeneration_sigma: float | None = None
    position_fraction: float = 0.5
    leg: str = "return"
    processing_delay: float = 0.0


def intercept_resend(attacker: InterceptResendAttacker, frames: PulseFrames, rng: np.random.Generator,
                     lo_offset=None):
    """-> (resent frames, attacker measurement)."""
    state = frames.state
    meas = measure(state, attacker.detector, rng, pulse_index=frames.index, lo_offset=lo_offset)
    if attacker.regeneration_sigma is None:
        nbar = np.maximum(np.asarray(state.mean_photon_number), 1e-300)
        sigma = np.where(np.asarray(state.mean_photon_number) > 0,
                         attacker.detector.noise.total_sigma(nbar), np.inf)
    else:
        sigma = np.full(len(frames), attacker.regeneration_sigma)
    prep_err = draw_phase_noise(np.broadcast_to(sigma, (len(frames),)), rng)
    fresh = GlauberState(
        np.asarray(state.amplitude) * attacker.regeneration_amplitude_ratio,
        meas.measured_phase + prep_err,
    )
    return frames.with_state(fresh, attacker.processing_delay), meas


@dataclass
class TappingAttacker:
    tap1: TapConfig
    tap2: TapConfig
    detector1: Detector
    detector2: Detector
    shared_lo: bool = True
    inter_tap: str = "calibrated"
    mode: str = "dpsk"


def _tap_measure(detector: Detector, diverted: GlauberState, rng, pulse_index, lo_offset):
    measured, counts = measure_arrays(
        diverted.phase, diverted.mean_photon_number,
        detector.oscillator.offset_phase if lo_offset is None else lo_offset,
        detector.noise, rng,
    )
    return Measurement(np.atleast_1d(np.asarray(pulse_index, dtype=np.int64)), measured, counts,
                       np.broadcast_to(np.asarray(diverted.phase, dtype=float), measured.shape).copy())


def tap_phase_t1(attacker: TappingAttacker, diverted: GlauberState, rng, pulse_index=0, lo_offset=None):
    """Reading at T1 on the outbound leg: random phase + path + attacker LO + error."""
    return _tap_measure(attacker.detector1, diverted, rng, pulse_index, lo_offset)


def tap_phase_t2(attacker: TappingAttacker, diverted: GlauberState, rng, pulse_index=0, lo_offset=None):
    """Reading at T2 on the return leg: as T1 plus the key phase."""
    return _tap_measure(attacker.detector2, diverted, rng, pulse_index, lo_offset)


def attacker_combine(m1: Measurement, m2: Measurement):
    """T2 minus T1: the random phase cancels, inter-tap terms remain."""
    if not np.array_equal(np.asarray(m1.pulse_index), np.asarray(m2.pulse_index)):
        raise ValueError("T1 and T2 measurements belong to different pulses")
    return canonicalize(np.asarray(m2.measured_phase) - np.asarray(m1.measured_phase))


def attacker_dpsk(key_combined, ref_combined):
    return canonicalize(np.asarray(key_combined) - np.asarray(ref_combined))


@dataclass
class AttackReport:
    kind: str
    attacker_bits: np.ndarray
    attacker_ber_vs_alice: float
    bob_ber: float
    alarms_triggered: dict
    phase_error_std: float
    symbol_error_rate: float
    combined_error_std: float = float("nan")
    nominal_sigma: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def worst_case_two_point(self) -> float:
        """Interval-arithmetic budget for T2 - T1: 2 delta-phi."""
        return 2 * self.nominal_sigma

    @property
    def worst_case_dpsk(self) -> float:
        """Interval-arithmetic budget with the reference pulse: 4 delta-phi."""
        return 4 * self.nominal_sigma

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "attacker_ber_vs_alice": self.attacker_ber_vs_alice,
            "attacker_symbol_error_rate": self.symbol_error_rate,
            "bob_ber": self.bob_ber,
            "attacker_phase_error_std_deg": float(np.degrees(self.phase_error_std)),
            "attacker_combined_error_std_deg": float(np.degrees(self.combined_error_std)),
            "nominal_sigma_deg": float(np.degrees(self.nominal_sigma)),
            "worst_case_two_point_deg": float(np.degrees(self.worst_case_two_point)),
            "worst_case_dpsk_deg": float(np.degrees(self.worst_case_dpsk)),
            "alarms_triggered": dict(self.alarms_triggered),
        }
        out.update(self.extra)
        return out


def attacker_decode_and_report(alice_values, attacker_delta_phase, true_delta_phase, scheme: Scheme, *,
                               kind="tapping", bob_ber=float("nan"), alarms=None, attacker_scale=None,
                               combined_error=None, nominal_sigma=float("nan"), extra=None) -> AttackReport:
    """Nearest-point decode of the attacker's differential phases and score
    them against Alice's words (same pulse set as Bob's BER)."""
    alice_values = np.asarray(alice_values, dtype=np.int64)
    att_phase = np.asarray(attacker_delta_phase, dtype=float)
    if alice_values.size == 0:
        att_values = alice_values
    else:
        if len(scheme.rings) > 1 and attacker_scale is None:
            attacker_scale = np.full(att_phase.shape, scheme.rings[-1])
        att_values = scheme.decode_values(att_phase, attacker_scale)
    width = scheme.bits_per_symbol
    att_bits = int_to_bits(att_values, width).ravel()
    alice_bits = int_to_bits(alice_values, width).ravel()
    ber = float(np.mean(att_bits != alice_bits)) if alice_bits.size else float("nan")
    ser = float(np.mean(att_values != alice_values)) if alice_values.size else float("nan")
    err = canonicalize(att_phase - np.asarray(true_delta_phase))
    std = float(np.sqrt(np.mean(np.square(err)))) if err.size else float("nan")
    comb = float("nan")
    if combined_error is not None and np.size(combined_error):
        comb = float(np.sqrt(np.mean(np.square(np.asarray(combined_error)))))
    return AttackReport(kind, att_bits, ber, bob_ber, dict(alarms or {}), std, ser, comb,
                        nominal_sigma, dict(extra or {}))
