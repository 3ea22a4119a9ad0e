"""Bob and Alice, the roundtrip session loop, DPSK key extraction, BER and
key-rate accounting, and the intensity/delay monitors.

A session is processed in chunks of whole reference groups; every
operation is vectorised over the pulses of a chunk, so the functions below
take either a single frame or many.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adversary import (
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
from .channel import (
    KEY,
    REFERENCE,
    OscillatorState,
    PathState,
    PulseFrames,
    TapConfig,
    drift_walk,
    tap,
    traverse,
)
from .config import ExperimentConfig
from .detection import Detector, Measurement, estimate_constant_offset, measure
from .modulation import ReferenceList, Scheme, SymbolWord, int_to_bits
from .phasespace import TWO_PI, GlauberState, PhaseShiftGate, apply_phase_shift, canonicalize

log = logging.getLogger(__name__)

CHUNK_PULSES = 1 << 16
MAX_ALARM_RECORDS = 10_000


@dataclass(frozen=True)
class ReferenceSchedule:
    """One reference pulse followed by ``keys_per_reference`` key pulses."""

    keys_per_reference: int = 1

    def __post_init__(self):
        if self.keys_per_reference < 1:
            raise ValueError("keys_per_reference must be >= 1")

    @property
    def group(self) -> int:
        return self.keys_per_reference + 1

    @property
    def throughput_fraction(self) -> float:
        return self.keys_per_reference / self.group

    def role(self, pulse_index):
        idx = np.asarray(pulse_index, dtype=np.int64)
        return np.where(idx % self.group == 0, REFERENCE, KEY).astype(np.int8)

    def reference_index(self, pulse_index):
        idx = np.asarray(pulse_index, dtype=np.int64)
        return idx - idx % self.group


@dataclass
class AlarmLog:
    counts: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    max_records: int = MAX_ALARM_RECORDS

    def add(self, kind: str, indices, detail=""):
        indices = np.atleast_1d(indices)
        if indices.size == 0:
            return
        self.counts[kind] = self.counts.get(kind, 0) + int(indices.size)
        room = self.max_records - len(self.records)
        for i in indices[:max(room, 0)]:
            self.records.append((int(i), kind, detail))


class RandomizerLog:
    """Bob's private map pulse index -> random phase; each entry is used once."""

    def __init__(self):
        self._idx = np.empty(0, dtype=np.int64)
        self._phase = np.empty(0)
        self._ever = 0  # highest index ever logged + 1, for duplicate detection

    def __len__(self):
        return self._idx.size

    def add(self, indices, phases):
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if np.unique(indices).size != indices.size:
            raise ValueError("duplicate pulse index in batch")
        if indices.size and (np.isin(indices, self._idx).any() or indices.min() < self._ever):
            raise ValueError("pulse index already emitted")
        order = np.argsort(np.concatenate([self._idx, indices]), kind="stable")
        self._idx = np.concatenate([self._idx, indices])[order]
        self._phase = np.concatenate([self._phase, np.atleast_1d(phases)])[order]
        if indices.size:
            self._ever = max(self._ever, int(indices.max()) + 1)

    def pop(self, indices):
        """-> (phases with NaN where unknown, found mask); consumes found entries."""
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        phases = np.full(indices.shape, np.nan)
        if self._idx.size == 0:
            return phases, np.zeros(indices.shape, bool)
        pos_c = np.minimum(np.searchsorted(self._idx, indices), self._idx.size - 1)
        found = self._idx[pos_c] == indices
        phases[found] = self._phase[pos_c[found]]
        keep = np.ones(self._idx.size, bool)
        keep[pos_c[found]] = False
        self._idx, self._phase = self._idx[keep], self._phase[keep]
        return phases, found


@dataclass
class IntensityMonitor:
    """Two-sided check of the windowed mean photon count against the
    calibrated expectation; the band is ``z`` Poisson standard errors."""

    expected: float
    window: int = 1000
    z: float = 3.0
    windows: int = 0
    alarms: int = 0
    _counts: list = field(default_factory=list, repr=False)
    _last_index: int = -1

    @property
    def band(self) -> float:
        return self.z * np.sqrt(self.expected / self.window)

    def update(self, indices, counts) -> list:
        out = []
        counts = np.atleast_1d(np.asarray(counts, dtype=float))
        indices = np.atleast_1d(indices)
        buf = np.concatenate([np.asarray(self._counts, dtype=float), counts])
        idx_buf = np.concatenate([np.full(len(self._counts), self._last_index), indices])
        n_full = buf.size // self.window
        if n_full:
            means = buf[: n_full * self.window].reshape(n_full, self.window).mean(axis=1)
            ends = idx_buf[self.window - 1: n_full * self.window: self.window]
            bad = np.abs(means - self.expected) > self.band
            self.windows += n_full
            self.alarms += int(bad.sum())
            for m, e in zip(means[bad], ends[bad]):
                out.append((int(e), "intensity", f"window mean {m:.3f} vs expected {self.expected:.3f}"))
        self._counts = list(buf[n_full * self.window:])
        if indices.size:
            self._last_index = int(indices[-1])
        return out

    @property
    def alarm_rate(self) -> float:
        return self.alarms / self.windows if self.windows else float("nan")


@dataclass(frozen=True)
class DelayMonitor:
    baseline: float
    tolerance: float = 100e-9

    def check(self, observed_rtt):
        return np.abs(np.asarray(observed_rtt) - self.baseline) > self.tolerance


@dataclass
class BobState:
    detector: Detector
    scheme: Scheme
    reference_list: ReferenceList
    schedule: ReferenceSchedule = field(default_factory=ReferenceSchedule)
    alphabet_size: int | None = 1024
    expected_unit_nbar: float = 1.0
    intensity_monitor: IntensityMonitor | None = None
    delay_monitor: DelayMonitor | None = None
    randomizer_log: RandomizerLog = field(default_factory=RandomizerLog, repr=False)
    alarms: AlarmLog = field(default_factory=AlarmLog)
    extracted_bits: list = field(default_factory=list, repr=False)

    def draw_randomizer(self, n: int, rng: np.random.Generator):
        if self.alphabet_size is None:
            return rng.uniform(-np.pi, np.pi, n)
        j = rng.integers(0, self.alphabet_size, n)
        return canonicalize(TWO_PI * j / self.alphabet_size)

    def receive(self, frames: PulseFrames, rng: np.random.Generator, lo_offset=None):
        """-> (Measurement, flagged mask) where flagged pulses failed a per-pulse check."""
        random_phase, found = self.randomizer_log.pop(frames.index)
        self.alarms.add("unmatched", frames.index[~found], "unmatched pulse")
        # derandomisation is a noiseless unitary; unmatched pulses pass untouched
        derand = apply_phase_shift(frames.state, PhaseShiftGate(-np.where(found, random_phase, 0.0)))
        meas = measure(derand, self.detector, rng, pulse_index=frames.index, lo_offset=lo_offset)
        meas.measured_phase = np.where(found, meas.measured_phase, np.nan)
        flagged = ~found
        if self.delay_monitor is not None:
            late = self.delay_monitor.check(frames.delay) & found
            self.alarms.add("delay", frames.index[late], "roundtrip delay outside tolerance")
            flagged |= late
        if self.intensity_monitor is not None:
            watched = found & ((frames.role == REFERENCE) | (len(self.scheme.rings) == 1))
            for rec in monitor_intensity(self, meas, watched):
                self.alarms.add(rec[1], rec[0], rec[2])
        return meas, flagged

    def reference_offset(self, key_index, ref_index):
        """Known phase between the list entries used by a key and its reference."""
        key_entry, _ = self.reference_list.select(key_index)
        ref_entry, _ = self.reference_list.select(ref_index)
        return canonicalize(np.asarray(key_entry) - np.asarray(ref_entry))


@dataclass
class AliceState:
    key_source: np.random.Generator
    scheme: Scheme
    reference_list: ReferenceList
    schedule: ReferenceSchedule = field(default_factory=ReferenceSchedule)
    sent_bits: list = field(default_factory=list, repr=False)
    sent_values: list = field(default_factory=list, repr=False)


def bob_emit(bob: BobState, pulse_index, base_amplitude: float, rng: np.random.Generator) -> PulseFrames:
    """Step 1: a fresh pulse randomised by U(random_phase); random_phase is logged privately."""
    idx = np.atleast_1d(np.asarray(pulse_index, dtype=np.int64))
    random_phase = bob.draw_randomizer(idx.size, rng)
    bob.randomizer_log.add(idx, random_phase)
    state = apply_phase_shift(GlauberState(np.full(idx.size, float(base_amplitude)), 0.0),
                              PhaseShiftGate(random_phase))
    return PulseFrames(state, idx, bob.schedule.role(idx))


def alice_modulate(alice: AliceState, frames: PulseFrames, words=None) -> PulseFrames:
    """Step 2: reference slots get ref_phase; key slots get a fresh word encoded as
    key_phase = delta + ref_phase plus its ring scale. ``words`` overrides the key
    source with explicit integer word values, one per key slot."""
    role = frames.role
    ref_phase, _ = alice.reference_list.select(frames.index)
    ref_phase = np.atleast_1d(ref_phase)
    is_key = role == KEY
    n_key = int(is_key.sum())
    if words is None:
        values = alice.key_source.integers(0, alice.scheme.size, n_key)
    else:
        values = np.atleast_1d(np.asarray(words, dtype=np.int64))
        if values.size != n_key:
            raise ValueError(f"{values.size} words supplied for {n_key} key slots")
    delta, scale = alice.scheme.encode_values(values)
    added = ref_phase.copy()
    ring = np.ones(len(frames))
    added[is_key] = canonicalize(delta + ref_phase[is_key])
    ring[is_key] = scale
    alice.sent_values.append(values)
    alice.sent_bits.append(int_to_bits(values, alice.scheme.bits_per_symbol).ravel())
    state = GlauberState(np.asarray(frames.state.amplitude) * ring, np.asarray(frames.state.phase) + added)
    return frames.with_state(state)


def bob_receive(bob: BobState, frames: PulseFrames, rng: np.random.Generator, lo_offset=None) -> Measurement:
    """Step 3: derandomise with U^dagger(random_phase), then measure."""
    return bob.receive(frames, rng, lo_offset)[0]


def extract_key(bob: BobState, key_meas: Measurement, ref_meas: Measurement, scheme: Scheme | None = None):
    """DPSK decision: integer word values for each key/reference pair.

    The known offset between the list entries used for the key and its
    reference is removed before the nearest-point decision.
    """
    scheme = scheme or bob.scheme
    delta = canonicalize(np.asarray(key_meas.measured_phase) - np.asarray(ref_meas.measured_phase)
                         - bob.reference_offset(key_meas.pulse_index, ref_meas.pulse_index))
    scale = np.sqrt(np.asarray(key_meas.measured_photon_count) / bob.expected_unit_nbar)
    return scheme.decode_values(delta, scale)


def extract_word(bob: BobState, key_meas: Measurement, ref_meas: Measurement, scheme: Scheme | None = None):
    scheme = scheme or bob.scheme
    return SymbolWord.from_int(int(np.atleast_1d(extract_key(bob, key_meas, ref_meas, scheme))[0]),
                               scheme.bits_per_symbol)


def monitor_intensity(bob: BobState, meas: Measurement, watched=None) -> list:
    if bob.intensity_monitor is None:
        return []
    watched = np.ones(len(meas), bool) if watched is None else watched
    return bob.intensity_monitor.update(np.asarray(meas.pulse_index)[watched],
                                        np.asarray(meas.measured_photon_count)[watched])


def monitor_delay(bob: BobState, observed_rtt):
    """Alarm mask (scalar bool for a scalar input)."""
    if bob.delay_monitor is None:
        return np.zeros(np.shape(observed_rtt), bool)
    return bob.delay_monitor.check(observed_rtt)


def compute_ber(alice_bits, bob_bits) -> float:
    a = np.asarray(alice_bits, dtype=np.uint8).ravel()
    b = np.asarray(bob_bits, dtype=np.uint8).ravel()
    if a.size != b.size:
        raise ValueError(f"bit strings differ in length ({a.size} vs {b.size})")
    if a.size == 0:
        return float("nan")
    return float(np.count_nonzero(a != b) / a.size)


@dataclass
class SessionResult:
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    ber: float
    key_pulses: int
    reference_pulses: int
    total_pulses: int
    throughput_fraction: float
    alarms: list
    alarm_counts: dict
    symbol_error_rate: float = float("nan")
    bob_phase_error_std: float = float("nan")
    kept_key_pulses: int = 0
    intensity_windows: int = 0
    intensity_alarm_rate: float = float("nan")
    attack: AttackReport | None = None
    ledger: dict | None = None
    constellation: dict | None = None
    config: ExperimentConfig | None = None

    def summary(self) -> dict:
        out = {
            "ber": self.ber,
            "symbol_error_rate": self.symbol_error_rate,
            "bob_phase_error_std_deg": float(np.degrees(self.bob_phase_error_std)),
            "total_pulses": self.total_pulses,
            "key_pulses": self.key_pulses,
            "reference_pulses": self.reference_pulses,
            "kept_key_pulses": self.kept_key_pulses,
            "throughput_fraction": self.throughput_fraction,
            "alarm_counts": dict(sorted(self.alarm_counts.items())),
            "intensity_windows": self.intensity_windows,
            "intensity_alarm_rate": self.intensity_alarm_rate,
        }
        if self.config is not None:
            scheme = self.config.scheme.build()
            out["phase_spacing_deg"] = float(np.degrees(scheme.min_phase_spacing))
            out["spacing_below_20_deg"] = bool(scheme.meets_spacing_guideline())
        if self.attack is not None:
            out["attack"] = self.attack.summary()
        return out


def _streams(cfg: ExperimentConfig):
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(cfg.session_id,))
    # appending a name leaves the earlier streams unchanged
    names = ("randomizer", "key", "channel", "bob", "attacker", "delay", "setup", "attacker_lo")
    return dict(zip(names, (np.random.default_rng(c) for c in ss.spawn(len(names)))))


def _offset(deg, rng):
    return float(rng.uniform(-np.pi, np.pi)) if deg is None else float(np.radians(deg))


def _cat(parts, dtype=float):
    return np.concatenate(parts) if parts else np.empty(0, dtype=dtype)


def run_session(cfg: ExperimentConfig, *, collect_ledger: bool = False) -> SessionResult:
    """Run ``cfg.pulses`` slots: emit, traverse, (attack), modulate, traverse,
    derandomise, measure, extract; the channel drifts one step per slot."""
    cfg.validate()
    rngs = _streams(cfg)
    scheme = cfg.scheme.build()
    schedule = ReferenceSchedule(cfg.reference.keys_per_reference)
    g = schedule.group
    setup = rngs["setup"]
    schedule_seed = cfg.reference.schedule_seed
    if schedule_seed is None:
        schedule_seed = int(setup.integers(0, 2**63))
    ref_list = ReferenceList.random(cfg.reference.list_size, schedule_seed, cfg.reference.period_pulses)

    ch = cfg.channel
    path = PathState(np.radians(ch.initial_path_phase_deg), np.radians(ch.path_drift_step_deg),
                     ch.length_km, ch.attenuation_db_per_km, ch.excess_delay_ns * 1e-9, ch.delay_jitter_ns * 1e-9)
    path.check_drift(scheme.min_phase_spacing)
    weight = 1.0 if ch.double_pass_phase else 0.5
    bob_lo = OscillatorState(np.radians(cfg.bob.lo_offset_deg or 0.0), np.radians(cfg.bob.lo_drift_step_deg))
    noise = cfg.bob.noise_model()
    base_nbar = cfg.base_mean_photon_number
    expected_unit = base_nbar * path.power_ratio(1.0) ** 2
    baseline_rtt = 2 * ch.length_km / 2.0e5 + path.excess_delay
    bob = BobState(
        Detector(bob_lo, noise), scheme, ref_list, schedule, cfg.randomizer_alphabet_size, expected_unit,
        IntensityMonitor(expected_unit, cfg.monitors.intensity_window, cfg.monitors.intensity_z),
        DelayMonitor(baseline_rtt, cfg.monitors.delay_tolerance_ns * 1e-9),
    )
    alice = AliceState(rngs["key"], scheme, ref_list, schedule)

    atk = cfg.attack
    att_noise = atk.detector.noise_model()
    att_lo_drift = np.radians(atk.detector.lo_drift_step_deg)
    att_los: list[OscillatorState] = []
    tapper = interceptor = None
    if atk.kind == "tapping":
        att_los.append(OscillatorState(_offset(atk.detector.lo_offset_deg, setup), att_lo_drift))
        if not atk.shared_lo:
            att_los.append(OscillatorState(float(setup.uniform(-np.pi, np.pi)), att_lo_drift))
        tapper = TappingAttacker(
            TapConfig(atk.tap1_position, atk.tap1_ratio), TapConfig(atk.tap2_position, atk.tap2_ratio),
            Detector(att_los[0], att_noise), Detector(att_los[-1], att_noise),
            atk.shared_lo, atk.inter_tap, atk.mode,
        )
    elif atk.kind == "intercept_resend":
        att_los.append(OscillatorState(_offset(atk.detector.lo_offset_deg, setup), att_lo_drift))
        regen = None if atk.regeneration_sigma_deg is None else np.radians(atk.regeneration_sigma_deg)
        interceptor = InterceptResendAttacker(
            Detector(att_los[0], att_noise), atk.regeneration_amplitude_ratio, regen,
            atk.position, atk.leg, atk.processing_delay_ns * 1e-9,
        )

    att_anchor = PathState(0.0, 0.0)
    chunk = g * max(1, CHUNK_PULSES // g)
    base_amp = float(np.sqrt(base_nbar))
    acc = {k: [] for k in ("alice", "bob", "delta_err", "att_delta", "att_true",
                           "att_comb_err", "att_scale", "att_alice")}
    ledger = {k: [] for k in ("index", "role", "bob_phase", "bob_value", "alice_value", "kept",
                              "random_phase", "key_phase", "path_phase", "lo_phase")} if collect_ledger else None
    const = {k: [] for k in ("index", "symbol", "phase", "ring")} if collect_ledger else None
    key_count = ref_count = 0
    calib_offset = att_calib = att_inter0 = None
    n_total = cfg.pulses

    for start in range(0, n_total, chunk):
        idx = np.arange(start, min(start + chunk, n_total), dtype=np.int64)
        n = idx.size
        drift = drift_walk(path, [bob_lo], n, rngs["channel"])
        path_phase, lo_b = drift[:, 0], drift[:, 1]
        # the attacker's oscillators walk on their own stream so switching an
        # attack on does not change Bob's nuisance phases
        att_lo = drift_walk(att_anchor, att_los, n, rngs["attacker_lo"])[:, 1:] if att_los else None

        frames = bob_emit(bob, idx, base_amp, rngs["randomizer"])
        random_true = np.asarray(frames.state.phase).copy()

        # outbound leg, Bob (0) -> Alice (1)
        m1 = None
        if tapper is not None:
            st, d_a = traverse(frames.state, path, 0.0, tapper.tap1.position_fraction, path_phase=path_phase, phase_weight=weight)
            through, diverted = tap(st, tapper.tap1)
            m1 = tap_phase_t1(tapper, diverted, rngs["attacker"], idx, lo_offset=att_lo[:, 0])
            st, d_b = traverse(through, path, tapper.tap1.position_fraction, 1.0, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d_a + d_b)
        elif interceptor is not None and interceptor.leg == "forward":
            pos = interceptor.position_fraction
            st, d_a = traverse(frames.state, path, 0.0, pos, path_phase=path_phase, phase_weight=weight)
            frames, att_meas = intercept_resend(interceptor, frames.with_state(st, d_a), rngs["attacker"], att_lo[:, 0])
            st, d_b = traverse(frames.state, path, pos, 1.0, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d_b)
        else:
            st, d = traverse(frames.state, path, 0.0, 1.0, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d)

        before_alice = np.asarray(frames.state.phase).copy()
        frames = alice_modulate(alice, frames)
        alice_values = alice.sent_values[-1]
        key_abs = canonicalize(np.asarray(frames.state.phase) - before_alice)

        # return leg, Alice (1) -> Bob (0)
        m2 = None
        if tapper is not None:
            pos = tapper.tap2.position_fraction
            st, d_a = traverse(frames.state, path, pos, 1.0, path_phase=path_phase, phase_weight=weight)
            through, diverted = tap(st, tapper.tap2)
            m2 = tap_phase_t2(tapper, diverted, rngs["attacker"], idx, lo_offset=att_lo[:, -1])
            st, d_b = traverse(through, path, 0.0, pos, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d_a + d_b)
        elif interceptor is not None and interceptor.leg == "return":
            pos = interceptor.position_fraction
            st, d_a = traverse(frames.state, path, pos, 1.0, path_phase=path_phase, phase_weight=weight)
            frames, att_meas = intercept_resend(interceptor, frames.with_state(st, d_a), rngs["attacker"], att_lo[:, 0])
            st, d_b = traverse(frames.state, path, 0.0, pos, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d_b)
        else:
            st, d = traverse(frames.state, path, 0.0, 1.0, path_phase=path_phase, phase_weight=weight)
            frames = frames.with_state(st, d)

        jitter = path.delay_jitter * rngs["delay"].standard_normal(n) if path.delay_jitter > 0 else 0.0
        frames = frames.with_state(frames.state, path.excess_delay + jitter)

        meas, flagged = bob.receive(frames, rngs["bob"], lo_offset=lo_b)

        is_key = frames.role == KEY
        key_pos = np.nonzero(is_key)[0]
        ref_pos = key_pos - (idx[key_pos] % g)
        key_count += key_pos.size
        ref_count += n - key_pos.size

        key_meas = _subset(meas, key_pos)
        ref_meas = _subset(meas, ref_pos)
        known_offset = bob.reference_offset(idx[key_pos], idx[ref_pos])
        true_delta, _ = scheme.encode_values(alice_values)
        scale = np.sqrt(key_meas.measured_photon_count / bob.expected_unit_nbar)
        if cfg.extraction == "dpsk":
            delta_meas = canonicalize(key_meas.measured_phase - ref_meas.measured_phase - known_offset)
        else:
            if calib_offset is None:
                ref_all = np.nonzero(~is_key & ~flagged)[0]
                ref_entry, _ = ref_list.select(idx[ref_all])
                calib_offset = estimate_constant_offset(meas.measured_phase[ref_all] - ref_entry, cfg.calibration_window)
            key_entry, _ = ref_list.select(idx[key_pos])
            delta_meas = canonicalize(key_meas.measured_phase - key_entry - calib_offset)
        bob_values = scheme.decode_values(np.nan_to_num(delta_meas), scale)

        kept = ~(flagged[key_pos] | flagged[ref_pos]) if cfg.monitors.drop_on_alarm else ~(
            np.isnan(key_meas.measured_phase) | np.isnan(ref_meas.measured_phase))
        missing_ref = ~kept & ~flagged[key_pos] & flagged[ref_pos]
        bob.alarms.add("missing_reference", idx[key_pos][missing_ref], "reference pulse discarded")
        acc["alice"].append(alice_values[kept])
        acc["bob"].append(bob_values[kept])
        acc["delta_err"].append(canonicalize(delta_meas[kept] - true_delta[kept]))
        bob.extracted_bits.append(int_to_bits(bob_values[kept], scheme.bits_per_symbol).ravel())

        if tapper is not None:
            comb = attacker_combine(m1, m2)
            # inter-tap path term and LO difference seen between T1 and T2
            inter = canonicalize(weight * (2.0 - tapper.tap1.position_fraction - tapper.tap2.position_fraction) * path_phase
                                 + att_lo[:, -1] - att_lo[:, 0])
            if tapper.mode == "dpsk":
                att_delta = attacker_dpsk(comb[key_pos], comb[ref_pos])
            else:
                if att_inter0 is None:
                    att_inter0 = float(inter[0])
                inter_est = inter if tapper.inter_tap == "calibrated" else att_inter0
                if att_calib is None:
                    refs = np.nonzero(~is_key)[0]
                    att_calib = estimate_constant_offset(comb[refs] - np.asarray(inter_est if np.ndim(inter_est) == 0 else inter_est[refs]),
                                                         cfg.calibration_window)
                est = inter_est if np.ndim(inter_est) == 0 else inter_est[key_pos]
                att_delta = canonicalize(comb[key_pos] - est - att_calib)
            acc["att_delta"].append(att_delta[kept])
            acc["att_true"].append(true_delta[kept])
            acc["att_alice"].append(alice_values[kept])
            acc["att_comb_err"].append(canonicalize(comb[key_pos] - key_abs[key_pos] - inter[key_pos])[kept])
            t2_unit = tapper.tap2.tap_power_ratio * base_nbar * path.power_ratio(1.0) \
                * (1 - tapper.tap1.tap_power_ratio) * path.power_ratio(1.0 - tapper.tap2.position_fraction)
            acc["att_scale"].append(np.sqrt(m2.measured_photon_count[key_pos] / max(t2_unit, 1e-300))[kept])
        elif interceptor is not None:
            att_delta = canonicalize(att_meas.measured_phase[key_pos] - att_meas.measured_phase[ref_pos])
            acc["att_delta"].append(att_delta[kept])
            acc["att_true"].append(true_delta[kept])
            acc["att_alice"].append(alice_values[kept])
            acc["att_scale"].append(np.sqrt(att_meas.measured_photon_count[key_pos] / base_nbar)[kept])

        if collect_ledger:
            bob_full = np.full(n, -1, dtype=np.int64)
            bob_full[key_pos] = bob_values
            alice_full = np.full(n, -1, dtype=np.int64)
            alice_full[key_pos] = alice_values
            kept_full = np.zeros(n, bool)
            kept_full[key_pos] = kept
            for k, v in (("index", idx), ("role", frames.role), ("bob_phase", meas.measured_phase),
                         ("bob_value", bob_full), ("alice_value", alice_full), ("kept", kept_full),
                         ("random_phase", random_true), ("key_phase", key_abs), ("path_phase", path_phase), ("lo_phase", lo_b)):
                ledger[k].append(v)
            const["index"].append(idx[key_pos][kept])
            const["symbol"].append(alice_values[kept])
            const["phase"].append(delta_meas[kept])
            const["ring"].append(scale[kept])

    alice_vals = _cat(acc["alice"], np.int64).astype(np.int64)
    bob_vals = _cat(acc["bob"], np.int64).astype(np.int64)
    width = scheme.bits_per_symbol
    alice_bits = int_to_bits(alice_vals, width).ravel()
    bob_bits = int_to_bits(bob_vals, width).ravel()
    err = _cat(acc["delta_err"])
    ber = compute_ber(alice_bits, bob_bits)
    ser = float(np.mean(alice_vals != bob_vals)) if alice_vals.size else float("nan")
    mon = bob.intensity_monitor
    counts = dict(bob.alarms.counts)
    counts.setdefault("intensity", 0)
    result = SessionResult(
        alice_bits, bob_bits, ber, key_count, ref_count, n_total, key_count / n_total,
        list(bob.alarms.records), counts, ser,
        float(np.sqrt(np.mean(err**2))) if err.size else float("nan"),
        int(alice_vals.size), mon.windows, mon.alarm_rate, config=cfg,
    )
    if tapper is not None or interceptor is not None:
        extra = {}
        if tapper is not None:
            seen = base_nbar * path.power_ratio(tapper.tap1.position_fraction) * tapper.tap1.tap_power_ratio
            extra["tapped_mean_photon_number_t1"] = float(seen)
        else:
            seen = base_nbar * path.power_ratio(1.0 if interceptor.leg == "return" else 0.0) \
                * path.power_ratio(interceptor.position_fraction if interceptor.leg == "forward"
                                   else 1.0 - interceptor.position_fraction)
        nominal = float(att_noise.total_sigma(seen)) if seen > 0 else float("inf")
        result.attack = attacker_decode_and_report(
            _cat(acc["att_alice"], np.int64).astype(np.int64), _cat(acc["att_delta"]), _cat(acc["att_true"]),
            scheme, kind=atk.kind, bob_ber=ber, alarms=counts, attacker_scale=_cat(acc["att_scale"]),
            combined_error=_cat(acc["att_comb_err"]) if tapper is not None else None,
            nominal_sigma=nominal, extra=extra,
        )
    if collect_ledger:
        result.ledger = {k: _cat(v, np.asarray(v[0]).dtype if v else float) for k, v in ledger.items()}
        result.constellation = {k: _cat(v) for k, v in const.items()}
    log.debug("session %s: ber=%.4g alarms=%s", cfg.session_id, ber, counts)
    return result


def _subset(meas: Measurement, pos) -> Measurement:
    return Measurement(meas.pulse_index[pos], meas.measured_phase[pos], meas.measured_photon_count[pos],
                       None if meas.true_phase_debug is None else meas.true_phase_debug[pos])
