import numpy as np
import pytest

from qpke.adversary import (
    AttackReport,
    InterceptResendAttacker,
    TappingAttacker,
    attacker_combine,
    attacker_decode_and_report,
    attacker_dpsk,
    intercept_resend,
    tap_phase_t1,
    tap_phase_t2,
)
from qpke.channel import KEY, OscillatorState, PulseFrames, TapConfig, tap
from qpke.detection import Detector, Measurement
from qpke.modulation import Scheme
from qpke.phasespace import GlauberState, NoiseModel, canonicalize

DEG = np.pi / 180


def _tapper(sigma_deg=0.0, quantum=False, lo1=0.0, lo2=None):
    noise = NoiseModel(equipment_sigma=sigma_deg * DEG, include_quantum=quantum)
    d1 = Detector(OscillatorState(lo1, 0.0), noise)
    d2 = Detector(OscillatorState(lo1 if lo2 is None else lo2, 0.0), noise)
    return TappingAttacker(TapConfig(0.9, 0.1), TapConfig(0.9, 0.1), d1, d2, shared_lo=lo2 is None)


def test_tap_t1_zero_noise_recovers_phase(rng):
    att = _tapper(0.0, lo1=0.25)
    _, div = tap(GlauberState.from_mean_photon_number(np.full(4, 100.0), [0.1, 1, 2, 3]), att.tap1)
    m = tap_phase_t1(att, div, rng, np.arange(4))
    assert np.allclose(m.measured_phase, canonicalize(np.array([0.1, 1, 2, 3]) + 0.25))


def test_tapped_intensity_sigmas():
    noise = NoiseModel.from_degrees(5.0)
    # diverted nbar 10 and 0.25 from a 100-photon pulse
    assert noise.total_sigma(100 * 0.1) / DEG == pytest.approx(10.2186, abs=1e-4)
    assert NoiseModel(equipment_sigma=0.0).total_sigma(100 * 0.0025) / DEG == pytest.approx(68.0)


def test_combine_clean_limit(rng):
    att = _tapper(0.0)
    random_phase, key_phase = 1.3, -0.4
    m1 = tap_phase_t1(att, GlauberState(1.0, random_phase), rng, 7)
    m2 = tap_phase_t2(att, GlauberState(1.0, random_phase + key_phase), rng, 7)
    assert attacker_combine(m1, m2)[0] == pytest.approx(key_phase)


def test_combine_independent_lo_shifts(rng):
    att = _tapper(0.0, lo1=0.1, lo2=0.6)
    m1 = tap_phase_t1(att, GlauberState(1.0, 1.0), rng, 0)
    m2 = tap_phase_t2(att, GlauberState(1.0, 1.2), rng, 0)
    assert attacker_combine(m1, m2)[0] == pytest.approx(0.2 + 0.5)


def test_combine_mismatch():
    a = Measurement(np.array([1]), np.array([0.0]), np.array([1]))
    b = Measurement(np.array([2]), np.array([0.0]), np.array([1]))
    with pytest.raises(ValueError):
        attacker_combine(a, b)


def test_dpsk_clean():
    assert attacker_dpsk(1.0, 0.25) == pytest.approx(0.75)
    assert attacker_dpsk(-3.0, 3.0) == pytest.approx(canonicalize(-6.0))


def test_composition_spreads(rng):
    n = 100_000
    att = _tapper(5.0)
    idx = np.arange(2 * n)
    random_phase = rng.uniform(-np.pi, np.pi, 2 * n)
    key_phase = rng.uniform(-np.pi, np.pi, 2 * n)
    comb = attacker_combine(tap_phase_t1(att, GlauberState(np.ones(2 * n), random_phase), rng, idx),
                            tap_phase_t2(att, GlauberState(np.ones(2 * n), random_phase + key_phase), rng, idx))
    e2 = canonicalize(comb - key_phase)
    e4 = canonicalize(attacker_dpsk(comb[1::2], comb[::2]) - (key_phase[1::2] - key_phase[::2]))
    assert e2.std() == pytest.approx(np.sqrt(2) * 5 * DEG, rel=0.01)
    assert e4.std() == pytest.approx(10 * DEG, rel=0.01)
    # four measurements against Bob's two
    assert e4.std() / e2.std() == pytest.approx(np.sqrt(2), rel=0.02)


def test_report_scores_against_alice():
    s = Scheme.psk(16)
    alice = np.array([0, 1, 3, 2])
    delta, _ = s.encode_values(alice)
    rep = attacker_decode_and_report(alice, delta, delta, s, nominal_sigma=5 * DEG)
    assert rep.attacker_ber_vs_alice == 0.0 and rep.symbol_error_rate == 0.0
    assert rep.worst_case_two_point == pytest.approx(10 * DEG)
    assert rep.worst_case_dpsk == pytest.approx(20 * DEG)
    assert rep.summary()["worst_case_dpsk_deg"] == pytest.approx(20.0)
    rep = attacker_decode_and_report(alice, delta + np.pi, delta, s)
    assert rep.symbol_error_rate == 1.0


def test_4psk_known_reference_low_error(rng):
    # half-width 45 deg against a 10 deg DPSK spread: 2 Q(4.5) ~ 7e-6
    s = Scheme.psk(4)
    v = rng.integers(0, 4, 100_000)
    delta, _ = s.encode_values(v)
    rep = attacker_decode_and_report(v, delta + 10 * DEG * rng.standard_normal(v.size), delta, s)
    assert rep.symbol_error_rate < 1e-3
    assert isinstance(rep, AttackReport)


def test_intercept_resend_perfect_copy(rng):
    det = Detector(OscillatorState(0.0, 0.0), NoiseModel(equipment_sigma=0.0, include_quantum=False))
    att = InterceptResendAttacker(det, 1.0, 0.0)
    frames = PulseFrames(GlauberState(np.full(3, 10.0), [0.1, 0.2, 0.3]), [0, 1, 2], KEY)
    out, meas = intercept_resend(att, frames, rng)
    assert np.allclose(out.state.phase, frames.state.phase)
    assert np.allclose(out.state.amplitude, frames.state.amplitude)
    assert np.allclose(meas.measured_phase, [0.1, 0.2, 0.3])


def test_intercept_resend_amplitude_and_delay(rng):
    det = Detector(OscillatorState(0.0, 0.0), NoiseModel.from_degrees(5.0))
    att = InterceptResendAttacker(det, 0.5, None, processing_delay=1e-6)
    frames = PulseFrames(GlauberState(np.full(2, 10.0), 0.0), [0, 1], KEY)
    out, _ = intercept_resend(att, frames, rng)
    assert np.allclose(out.state.amplitude, 5.0)
    assert np.allclose(out.delay, 1e-6)
