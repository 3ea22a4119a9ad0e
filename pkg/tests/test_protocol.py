import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from qpke.channel import KEY, REFERENCE, OscillatorState, PathState, traverse
from qpke.config import ExperimentConfig, with_override
from qpke.detection import Detector, Measurement
from qpke.harness import presets
from qpke.modulation import ReferenceList, Scheme
from qpke.phasespace import NoiseModel, canonicalize
from qpke.protocol import (
    AliceState,
    BobState,
    DelayMonitor,
    IntensityMonitor,
    RandomizerLog,
    ReferenceSchedule,
    alice_modulate,
    bob_emit,
    bob_receive,
    compute_ber,
    extract_key,
    extract_word,
    monitor_delay,
    run_session,
)

DEG = np.pi / 180


def _bob(alphabet=1024, sigma_deg=0.0, scheme=None, ref_list=None):
    noise = NoiseModel(equipment_sigma=sigma_deg * DEG, include_quantum=False)
    return BobState(Detector(OscillatorState(0.0, 0.0), noise), scheme or Scheme.psk(16),
                    ref_list or ReferenceList.fixed(0.0), alphabet_size=alphabet)


def _alice(scheme=None, ref_list=None, seed=0):
    return AliceState(np.random.default_rng(seed), scheme or Scheme.psk(16), ref_list or ReferenceList.fixed(0.0))


class TestEmit:
    def test_alphabet_one(self, rng):
        f = bob_emit(_bob(alphabet=1), np.arange(100), 3.0, rng)
        assert np.all(f.state.phase == 0.0)
        assert np.all(f.state.amplitude == 3.0)

    def test_roles_alternate(self, rng):
        f = bob_emit(_bob(), np.arange(6), 1.0, rng)
        assert f.role.tolist() == [REFERENCE, KEY] * 3

    def test_alphabet_uniform(self, rng):
        bob = _bob(alphabet=1024)
        f = bob_emit(bob, np.arange(10**6), 1.0, rng)
        j = np.round(np.mod(f.state.phase, 2 * np.pi) / (2 * np.pi / 1024)).astype(int) % 1024
        assert chisquare(np.bincount(j, minlength=1024)).pvalue > 0.01

    def test_continuous(self, rng):
        f = bob_emit(_bob(alphabet=None), np.arange(1000), 1.0, rng)
        assert np.unique(f.state.phase).size == 1000

    def test_duplicate_index(self, rng):
        bob = _bob()
        bob_emit(bob, [0, 1], 1.0, rng)
        with pytest.raises(ValueError):
            bob_emit(bob, [1], 1.0, rng)


class TestModulate:
    def test_additive(self, rng):
        bob, alice = _bob(), _alice()
        f = bob_emit(bob, np.arange(10), 1.0, rng)
        before = f.state.phase.copy()
        out = alice_modulate(alice, f)
        delta, _ = alice.scheme.encode_values(alice.sent_values[-1])
        assert np.allclose(canonicalize(out.state.phase[1::2] - before[1::2] - delta), 0, atol=1e-12)
        assert np.allclose(canonicalize(out.state.phase[0::2] - before[0::2]), 0, atol=1e-12)

    def test_reference_slot_adds_list_phase(self, rng):
        refs = ReferenceList.random(8, 11)
        bob, alice = _bob(ref_list=refs), _alice(ref_list=refs)
        f = bob_emit(bob, np.arange(10), 1.0, rng)
        out = alice_modulate(alice, f, words=np.zeros(5, dtype=int))
        want, _ = refs.select(np.arange(10))
        assert np.allclose(canonicalize(out.state.phase - f.state.phase - want), 0, atol=1e-12)

    def test_word_count_checked(self, rng):
        f = bob_emit(_bob(), np.arange(4), 1.0, rng)
        with pytest.raises(ValueError):
            alice_modulate(_alice(), f, words=[1])


def _roundtrip(bob, alice, idx, rng, path_phase=0.0, lo=0.0, words=None):
    f = bob_emit(bob, idx, 1.0, rng)
    path = PathState(path_phase, 0.0)
    st_, _ = traverse(f.state, path, 0.0, 1.0, phase_weight=0.5)
    f = alice_modulate(alice, f.with_state(st_), words)
    st_, _ = traverse(f.state, path, 0.0, 1.0, phase_weight=0.5)
    return bob_receive(bob, f.with_state(st_), rng, lo_offset=lo)


class TestReceive:
    def test_zero_noise_reads_key_phase(self, rng):
        bob, alice = _bob(), _alice()
        m = _roundtrip(bob, alice, np.arange(2), rng, words=[5])
        key_phase, _ = alice.scheme.encode_values(5)
        assert m.measured_phase[1] == pytest.approx(key_phase, abs=1e-12)
        assert m.measured_phase[0] == pytest.approx(0.0, abs=1e-12)

    def test_nuisance_adds(self, rng):
        bob, alice = _bob(), _alice()
        m = _roundtrip(bob, alice, np.arange(2), rng, path_phase=0.3, lo=0.2, words=[5])
        key_phase, _ = alice.scheme.encode_values(5)
        assert m.measured_phase[1] == pytest.approx(canonicalize(key_phase + 0.5), abs=1e-12)

    def test_derandomisation_is_noiseless(self):
        results = []
        for _ in range(2):
            bob, alice = _bob(sigma_deg=5.0), _alice()
            results.append(_roundtrip(bob, alice, np.arange(50), np.random.default_rng(9)))
        assert np.array_equal(results[0].measured_phase, results[1].measured_phase)

    def test_unmatched_pulse_flagged(self, rng):
        bob = _bob()
        f = bob_emit(_bob(), np.arange(2), 1.0, rng)  # a different Bob emitted these
        meas, flagged = bob.receive(f, rng)
        assert flagged.all() and np.isnan(meas.measured_phase).all()
        assert bob.alarms.counts["unmatched"] == 2


class TestExtract:
    def _meas(self, idx, deg):
        return Measurement(np.array([idx]), np.array([deg * DEG]), np.array([1]))

    def test_difference(self):
        bob = _bob()
        # 70 deg decodes to the 67.5 deg point (index 3, Gray label 2)
        assert extract_key(bob, self._meas(1, 100), self._meas(0, 30)).tolist() == [2]
        # wraparound: -170 - 170 = 20 deg -> the 22.5 deg point (label 1)
        assert extract_word(bob, self._meas(1, -170), self._meas(0, 170)).to_int() == 1

    def test_known_list_offset_removed(self):
        refs = ReferenceList.random(8, 3, period=0)
        bob = _bob(ref_list=refs)
        off = bob.reference_offset(1, 0)
        key = Measurement(np.array([1]), np.array([canonicalize(0.0 + off)]), np.array([1]))
        assert extract_key(bob, key, self._meas(0, 0)).tolist() == [0]

    @given(st.integers(0, 15), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
    def test_dpsk_recovers_word(self, v, common, ref):
        bob = _bob()
        delta, _ = bob.scheme.encode_values(v)
        key = Measurement(np.array([1]), np.array([canonicalize(delta + ref + common)]), np.array([1]))
        r = Measurement(np.array([0]), np.array([canonicalize(ref + common)]), np.array([1]))
        assert extract_key(bob, key, r).tolist() == [v]


class TestMonitors:
    def test_intensity_false_alarms(self, rng):
        mon = IntensityMonitor(100.0, 1000, 3.0)
        mon.update(np.arange(2 * 10**6), rng.poisson(100.0, 2 * 10**6))
        fp = 0.0026998  # two-sided 3-sigma tail
        assert abs(mon.alarm_rate - fp) < 3 * np.sqrt(fp / mon.windows) + 0.001

    def test_intensity_detects_tap(self, rng):
        mon = IntensityMonitor(100.0, 10_000, 3.0)
        mon.update(np.arange(10**6), rng.poisson(80.0, 10**6))
        assert mon.alarm_rate == 1.0

    def test_partial_windows_carry_over(self, rng):
        mon = IntensityMonitor(100.0, 1000)
        for start in range(0, 5000, 700):
            mon.update(np.arange(start, start + 700), np.full(700, 100))
        assert mon.windows == 5 and mon.alarms == 0

    def test_delay(self):
        mon = DelayMonitor(1e-4, 100e-9)
        assert not mon.check(1e-4)
        assert mon.check(1e-4 + 1e-6)
        assert not monitor_delay(_bob(), 5.0)
        assert mon.check(np.full(5, 1e-4 + 1e-6)).all()
        assert not mon.check(1e-4 + 50e-9 * np.sin(np.arange(100))).any()


def test_ber():
    a = np.zeros(1000, dtype=np.uint8)
    assert compute_ber(a, a) == 0.0
    assert compute_ber(a, 1 - a) == 1.0
    b = a.copy()
    b[17] = 1
    assert compute_ber(a, b) == 0.001
    assert np.isnan(compute_ber([], []))
    with pytest.raises(ValueError):
        compute_ber([0, 1], [0])


def test_randomizer_log():
    log = RandomizerLog()
    log.add([0, 1, 2], [0.1, 0.2, 0.3])
    ph, found = log.pop([2, 5])
    assert ph[0] == 0.3 and found.tolist() == [True, False]
    ph, found = log.pop([2])
    assert not found[0]
    with pytest.raises(ValueError):
        log.add([1], [0.0])
    with pytest.raises(ValueError):
        log.add([7, 7], [0.0, 0.0])


def test_schedule():
    s = ReferenceSchedule(3)
    assert s.throughput_fraction == 0.75
    assert s.role(np.arange(8)).tolist() == [0, 1, 1, 1, 0, 1, 1, 1]
    assert s.reference_index(np.arange(8)).tolist() == [0, 0, 0, 0, 4, 4, 4, 4]
    with pytest.raises(ValueError):
        ReferenceSchedule(0)


class TestSession:
    def test_zero_noise_small(self):
        cfg = with_override(presets.exact_cancellation(), "pulses", 1000)
        res = run_session(cfg)
        assert res.ber == 0.0 and np.array_equal(res.alice_bits, res.bob_bits)
        assert res.throughput_fraction == 0.5

    def test_deterministic(self):
        cfg = ExperimentConfig(master_seed=5, pulses=3000)
        a, b = run_session(cfg), run_session(cfg)
        assert np.array_equal(a.bob_bits, b.bob_bits) and a.summary() == b.summary()
        c = run_session(with_override(cfg, "session_id", 1))
        assert not np.array_equal(a.bob_bits, c.bob_bits)

    def test_bob_ber_matches_oracle(self):
        cfg = with_override(presets.canonical_tapping(200_000), "attack.kind", "none")
        res = run_session(cfg)
        # Gray-mapped BER at sqrt(2 * 25 + 0.02) deg, frozen from the oracle
        assert abs(res.ber - 0.0279213) < 3 * 0.000249
        assert res.kept_key_pulses == 100_000

    def test_reference_list_does_not_change_bob(self):
        base = presets.canonical_tapping(20_000)
        a = run_session(base)
        b = run_session(with_override(base, "reference.list_size", 8))
        assert a.ber == pytest.approx(b.ber, abs=2e-4)

    def test_calibrated_extraction(self):
        cfg = presets.exact_cancellation()
        cfg = with_override(cfg, "extraction", "calibrated")
        assert run_session(cfg).ber == 0.0

    def test_ledger_contents(self):
        cfg = with_override(presets.minimal(), "pulses", 200)
        res = run_session(cfg, collect_ledger=True)
        led = res.ledger
        assert led["index"].tolist() == list(range(200))
        keys = led["role"] == KEY
        assert np.array_equal(led["alice_value"][keys][led["kept"][keys]],
                              res.constellation["symbol"])
        assert np.all(led["bob_value"][~keys] == -1)

    def test_delay_attack_drops_everything(self):
        cfg = presets.intercept_resend(2000)
        cfg = with_override(cfg, "attack.processing_delay_ns", 1000.0)
        res = run_session(cfg)
        assert res.alarm_counts["delay"] == 2000
        assert res.kept_key_pulses == 0 and np.isnan(res.ber)

    def test_omniscient_interceptor_is_invisible(self):
        cfg = presets.intercept_resend(20_000)
        for path, value in (("attack.detector.equipment_sigma_deg", 0.0), ("attack.detector.lo_offset_deg", 0.0),
                            ("attack.detector.lo_drift_step_deg", 0.0), ("attack.regeneration_sigma_deg", 0.0)):
            cfg = with_override(cfg, path, value)
        clean = run_session(presets.no_attack(cfg))
        res = run_session(cfg)
        assert res.ber == clean.ber
        assert res.alarm_counts["intensity"] == 0

    def test_amplitude_mismatch_alarms(self):
        res = run_session(presets.intercept_resend(20_000, amplitude_ratio=0.5))
        assert res.intensity_alarm_rate == 1.0

    def test_tap_free_alarm_budget(self):
        cfg = presets.canonical_tapping(200_000)
        cfg = with_override(cfg, "attack.tap1_ratio", 0.0)
        cfg = with_override(cfg, "attack.tap2_ratio", 0.0)
        res = run_session(cfg)
        assert res.intensity_alarm_rate <= 0.0027 + 3 * np.sqrt(0.0027 / res.intensity_windows)

    def test_tap_detected(self):
        cfg = with_override(presets.canonical_tapping(200_000), "monitors.intensity_window", 10_000)
        cfg = with_override(cfg, "attack.tap1_ratio", 0.2)
        cfg = with_override(cfg, "attack.tap2_ratio", 0.0)
        assert run_session(cfg).intensity_alarm_rate == 1.0

    def test_summary_spacing_flag(self):
        s = run_session(with_override(presets.minimal(), "scheme.phases", 32)).summary()
        assert s["spacing_below_20_deg"] is True
        assert s["phase_spacing_deg"] == pytest.approx(11.25)
