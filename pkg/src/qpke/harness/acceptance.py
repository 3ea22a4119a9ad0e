"""The ten acceptance checks, each runnable on its own.

Every check returns a ``CheckResult`` whose ``lines`` show the measured value
next to the reference value and the tolerance used.
"""
from __future__ import annotations

import contextlib
import filecmp
import io
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from ..adversary import TappingAttacker, attacker_combine, attacker_dpsk, tap_phase_t1, tap_phase_t2
from ..channel import OscillatorState, TapConfig
from ..config import dumps, with_override
from ..detection import Detector, measure
from ..modulation import ReferenceList
from ..phasespace import UNCERTAINTY_ANCHORS_DEG, GlauberState, NoiseModel, canonicalize
from ..protocol import ReferenceSchedule, run_session
from . import oracles, presets
from .sweep import aggregate, run_sweep, write_sweep_csv

DEG = np.pi / 180


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    seconds: float = 0.0

    def headline(self) -> str:
        return f"criterion {self.number:>2} [{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.2f} s)"


def _std_check(samples, target, k=3.0):
    x = canonicalize(np.asarray(samples))
    std = float(np.std(x))
    se = oracles.std_standard_error(x)
    return std, se, abs(std - target) <= k * se


def exact_cancellation(seed=presets.SEED) -> CheckResult:
    schemes = [("psk", 4), ("psk", 8), ("psk", 16), ("psk", 32), ("apsk", 8), ("apsk", 16), ("apsk", 32)]
    ok, lines = True, []
    for kind, m in schemes:
        cfg = presets.exact_cancellation(kind, m, seed)
        t = time.perf_counter()
        res = run_session(cfg)
        dt = time.perf_counter() - t
        good = res.ber == 0.0 and dt < 1.0
        ok &= good
        lines.append(f"{m:>2}-{kind.upper():<4} BER={res.ber:.0f} over {res.kept_key_pulses} key pulses, "
                     f"{dt * 1e3:.0f} ms (limit 1000 ms)")
    return CheckResult(1, "exact cancellation, zero noise", ok, lines)


def uncertainty_anchors(seed=presets.SEED, draws=100_000) -> CheckResult:
    rng = np.random.default_rng([seed, 2])
    det = Detector(OscillatorState(0.0, 0.0), NoiseModel(equipment_sigma=0.0))
    ok, lines = True, []
    for nbar, target_deg in UNCERTAINTY_ANCHORS_DEG:
        true = rng.uniform(-np.pi, np.pi, draws)
        meas = measure(GlauberState.from_mean_photon_number(np.full(draws, nbar), true), det, rng)
        std, se, good = _std_check(meas.measured_phase - true, target_deg * DEG)
        ok &= good
        lines.append(f"nbar={nbar:<6} std={std / DEG:7.3f} deg  target={target_deg} deg  "
                     f"|diff|={abs(std / DEG - target_deg):.3f} <= 3SE={3 * se / DEG:.3f}")
    return CheckResult(2, "uncertainty anchors", ok, lines)


def tap_anchor(seed=presets.SEED, pulses=100_000) -> CheckResult:
    rng = np.random.default_rng([seed, 3])
    noise = NoiseModel.from_degrees(5.0)
    att = TappingAttacker(TapConfig(0.9, 0.1), TapConfig(0.9, 0.1),
                          Detector(OscillatorState(0.0), noise), Detector(OscillatorState(0.0), noise))
    true = rng.uniform(-np.pi, np.pi, pulses)
    m = tap_phase_t1(att, GlauberState.from_mean_photon_number(np.full(pulses, 10.0), true), rng,
                     np.arange(pulses))
    std = float(np.std(canonicalize(m.measured_phase - true))) / DEG
    analytic = float(noise.total_sigma(10.0)) / DEG
    ok = abs(std - 10.0) <= 0.15 * 10.0
    lines = [f"MC std={std:.3f} deg, model sqrt(5^2 + q(10)^2)={analytic:.3f} deg, "
             f"budget 10 deg, rel diff={abs(std - 10) / 10:.3%} (limit 15%)"]
    return CheckResult(3, "tap anchor at nbar=10", ok, lines)


def composition(seed=presets.SEED, pairs=100_000, sigma_deg=5.0) -> CheckResult:
    """T2 - T1 and DPSK error spreads on synthetic reference/key pairs."""
    rng = np.random.default_rng([seed, 4])
    noise = NoiseModel.from_degrees(sigma_deg, include_quantum=False)
    att = TappingAttacker(TapConfig(0.9, 0.1), TapConfig(0.9, 0.1),
                          Detector(OscillatorState(0.0), noise), Detector(OscillatorState(0.0), noise))
    n = 2 * pairs
    idx = np.arange(n)
    random_phase = rng.uniform(-np.pi, np.pi, n)
    key_phase = rng.uniform(-np.pi, np.pi, n)
    lo = rng.uniform(-np.pi, np.pi)
    path1, path2 = 0.3, 1.1  # nuisance phases up to T1 and from Alice to T2
    amp = np.full(n, np.sqrt(10.0))
    m1 = tap_phase_t1(att, GlauberState(amp, random_phase + path1), rng, idx, lo_offset=lo)
    m2 = tap_phase_t2(att, GlauberState(amp, random_phase + path1 + path2 + key_phase), rng, idx, lo_offset=lo)
    comb = attacker_combine(m1, m2)
    comb_err = canonicalize(comb - key_phase - path2)
    key, ref = idx[1::2], idx[0::2]
    dpsk_err = canonicalize(attacker_dpsk(comb[key], comb[ref]) - (key_phase[key] - key_phase[ref]))
    sigma = sigma_deg * DEG
    s2, se2, ok2 = _std_check(comb_err[key], np.sqrt(2) * sigma)
    s4, se4, ok4 = _std_check(dpsk_err, 2 * sigma)
    lines = [
        f"two-point std={s2 / DEG:.3f} deg vs sqrt2*sigma={np.sqrt(2) * sigma_deg:.3f} (3SE={3 * se2 / DEG:.3f}); "
        f"worst-case two-point budget={2 * sigma_deg:.1f} deg",
        f"DPSK std={s4 / DEG:.3f} deg vs 2*sigma={2 * sigma_deg:.3f} (3SE={3 * se4 / DEG:.3f}); "
        f"worst-case DPSK budget={4 * sigma_deg:.1f} deg",
    ]
    return CheckResult(4, "two-point and DPSK composition", ok2 and ok4, lines)


def _drift_var(cfg):
    """Per-DPSK-pair variance from one random-walk step of path and LO."""
    return (cfg.channel.path_drift_step_deg * DEG) ** 2 + (cfg.bob.lo_drift_step_deg * DEG) ** 2


def attacker_disadvantage(seed=presets.SEED, pulses=2_000_000) -> CheckResult:
    cfg = presets.canonical_tapping(pulses, seed=seed)
    t = time.perf_counter()
    res = run_session(cfg)
    dt = time.perf_counter() - t
    sigma = 5 * DEG
    half = np.pi / 16
    bob_p = oracles.psk_ser(16, np.sqrt(2 * sigma**2 + _drift_var(cfg)))
    # shared LO: only 0.1 of the path step survives T2 - T1
    inter = (0.5 * (2 - 0.9 - 0.9) * cfg.channel.path_drift_step_deg * DEG) ** 2
    att_p = oracles.psk_ser(16, np.sqrt(4 * sigma**2 + inter))
    n = res.kept_key_pulses
    bob_ser, att_ser = res.symbol_error_rate, res.attack.symbol_error_rate
    bob_band, att_band = oracles.binomial_band(bob_p, n), oracles.binomial_band(att_p, n)
    ok = abs(bob_ser - bob_p) <= bob_band and abs(att_ser - att_p) <= att_band and dt < 60
    lines = [
        f"tail oracle: Bob {oracles.gaussian_symbol_error(half, np.sqrt(2) * sigma):.6f}, "
        f"attacker {oracles.gaussian_symbol_error(half, 2 * sigma):.6f} (without drift)",
        f"Bob SER={bob_ser:.6f} vs {bob_p:.6f} +/- {bob_band:.6f}",
        f"attacker SER={att_ser:.6f} vs {att_p:.6f} +/- {att_band:.6f}",
        f"{n} symbols in {dt:.1f} s (limit 60 s)",
    ]
    return CheckResult(5, "attacker disadvantage, canonical tapping", ok, lines)


def throughput(seed=presets.SEED) -> CheckResult:
    ok, lines = True, []
    for k in (1, 2, 3, 4, 7):
        cfg = with_override(presets.minimal(seed), "reference.period_pulses", 840)
        cfg = with_override(cfg, "reference.keys_per_reference", k)
        cfg = with_override(cfg, "pulses", 840 * 5)
        res = run_session(cfg)
        want = k / (k + 1)
        good = res.throughput_fraction == want and ReferenceSchedule(k).throughput_fraction == want
        ok &= good
        lines.append(f"k={k}: throughput {res.throughput_fraction!r} expected {want!r}")
    return CheckResult(6, "throughput fraction", ok, lines)


def intercept_resend_detection(seed=presets.SEED, pulses=400_000) -> CheckResult:
    cfg = presets.intercept_resend(pulses, seed=seed)
    base = run_session(presets.no_attack(cfg))
    att = run_session(cfg)
    sigma = 5 * DEG
    walk = _drift_var(cfg)
    att_lo = (cfg.attack.detector.lo_drift_step_deg * DEG) ** 2
    # the attacker's measurement and preparation errors add in quadrature on
    # every pulse, so the DPSK pair picks up 2 * (sqrt2 sigma)^2
    base_sigma = np.sqrt(2 * sigma**2 + walk)
    att_sigma = np.sqrt(2 * sigma**2 + 2 * (np.sqrt(2) * sigma) ** 2 + walk + att_lo)
    p0, p1 = oracles.psk_ber(16, base_sigma), oracles.psk_ber(16, att_sigma)
    se0 = oracles.psk_ber_std_error(16, base_sigma, base.kept_key_pulses)
    se1 = oracles.psk_ber_std_error(16, att_sigma, att.kept_key_pulses)
    rise, want = att.ber - base.ber, p1 - p0
    ok_ber = (abs(base.ber - p0) <= 3 * se0 and abs(att.ber - p1) <= 3 * se1
              and abs(rise - want) <= 3 * np.hypot(se0, se1))
    lines = [
        f"baseline BER={base.ber:.5f} vs oracle {p0:.5f} (3SE={3 * se0:.5f})",
        f"attacked BER={att.ber:.5f} vs oracle {p1:.5f} (3SE={3 * se1:.5f})",
        f"rise={rise:.5f} vs predicted {want:.5f}",
    ]
    # amplitude mismatch seen by the windowed intensity monitor
    window = 1000
    nbar = cfg.base_mean_photon_number
    wsigma = np.sqrt(nbar / window)
    fp = oracles.gaussian_symbol_error(3.0, 1.0)  # two-sided 3-sigma false-alarm rate
    ok_alarm = True
    for k_sigma in (0.0, 3.0, 4.0, 6.0):
        ratio = np.sqrt(1 + k_sigma * wsigma / nbar)
        r = run_session(presets.intercept_resend(100_000, ratio, window, seed))
        upper = fp + 3 * np.sqrt(fp / r.intensity_windows)
        if k_sigma == 0:
            good = r.intensity_alarm_rate <= upper
        else:
            good = r.intensity_alarm_rate > upper
        ok_alarm &= good
        lines.append(f"mismatch {k_sigma:.0f} window-sigma (amplitude x{ratio:.5f}): "
                     f"alarm rate {r.intensity_alarm_rate:.3f} over {r.intensity_windows} windows "
                     f"(false-alarm bound {upper:.3f})")
    return CheckResult(7, "intercept-resend detection", ok_ber and ok_alarm, lines)


def tap_tradeoff(seed=presets.SEED, replications=20) -> CheckResult:
    base, spec = presets.tap_tradeoff(seed, replications)
    rows = run_sweep(spec, base)
    ratios, std = aggregate(rows, "attacker_phase_error_std_deg")
    _, alarm = aggregate(rows, "intensity_alarm_rate")
    rho_std = spearmanr(ratios, std)[0]
    rho_alarm = spearmanr(ratios, alarm)[0]
    ok = rho_std == -1.0 and rho_alarm == 1.0 and len(ratios) >= 6 and spec.replications >= 20
    lines = [f"tap ratios {list(ratios)} x {spec.replications} replications",
             "attacker DPSK std (deg): " + " ".join(f"{x:.2f}" for x in std) + f"  rho={rho_std:+.3f}",
             "intensity alarm prob:    " + " ".join(f"{x:.4f}" for x in alarm) + f"  rho={rho_alarm:+.3f}"]
    return CheckResult(8, "tapping visibility tradeoff", ok, lines)


def dynamic_reference(seed=presets.SEED, pulses=200_000) -> CheckResult:
    cfg = presets.dynamic_reference(pulses, seed)
    fixed_cfg = with_override(cfg, "reference.list_size", 1)
    dyn, fixed = run_session(cfg), run_session(fixed_cfg)
    sigma = 5 * DEG
    inter = (0.5 * 0.2 * cfg.channel.path_drift_step_deg * DEG) ** 2
    att_sigma = np.sqrt(4 * sigma**2 + inter)
    r = cfg.reference
    ref_list = ReferenceList.random(r.list_size, r.schedule_seed, r.period_pulses)
    epochs = range(int(np.ceil(pulses / r.period_pulses)))
    oracle = float(np.mean([oracles.mixture_ber(16, att_sigma, ref_list.phases_for_epoch(e)) for e in epochs]))
    chance = 0.5
    att_ber = dyn.attack.attacker_ber_vs_alice
    bob_sigma = np.sqrt(2 * sigma**2 + _drift_var(cfg))
    se = oracles.psk_ber_std_error(16, bob_sigma, dyn.kept_key_pulses)
    ok_att = abs(att_ber - oracle) <= 0.02
    ok_bob = abs(dyn.ber - fixed.ber) <= 3 * np.sqrt(2) * se
    lines = [
        f"attacker BER={att_ber:.4f} vs mixture oracle {oracle:.4f} (limit 0.02 abs; chance {chance})",
        f"attacker BER with a fixed reference={fixed.attack.attacker_ber_vs_alice:.4f}",
        f"Bob BER dynamic={dyn.ber:.5f} fixed={fixed.ber:.5f} (band {3 * np.sqrt(2) * se:.5f})",
    ]
    return CheckResult(9, "dynamic reference defense", ok_att and ok_bob, lines)


def determinism(seed=presets.SEED) -> CheckResult:
    from .cli import main

    cfg = with_override(presets.canonical_tapping(20_000, seed=seed), "output.ledger_debug", True)
    base, spec = presets.tap_tradeoff(seed, replications=2, pulses=2000)
    lines, ok = [], True
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "cfg.yaml").write_text(dumps(cfg))
        with contextlib.redirect_stdout(io.StringIO()):
            codes = [main(["run", str(tmp / "cfg.yaml"), "--output-dir", str(tmp / d)]) for d in ("a", "b")]
        ok &= codes == [0, 0]
        for name in ("ledger.csv", "constellation.csv", "summary.json"):
            same = filecmp.cmp(tmp / "a" / name, tmp / "b" / name, shallow=False)
            ok &= same
            lines.append(f"{name}: {'identical' if same else 'DIFFERENT'} across two runs")
        serial = write_sweep_csv(tmp / "serial.csv", run_sweep(spec, base))
        par = write_sweep_csv(tmp / "parallel.csv", run_sweep(spec, base, parallel=True, workers=2))
        same = filecmp.cmp(serial, par, shallow=False)
        ok &= same
        lines.append(f"sweep CSV: {'identical' if same else 'DIFFERENT'} serial vs parallel")
    return CheckResult(10, "determinism", ok, lines)


CHECKS = {
    1: exact_cancellation,
    2: uncertainty_anchors,
    3: tap_anchor,
    4: composition,
    5: attacker_disadvantage,
    6: throughput,
    7: intercept_resend_detection,
    8: tap_tradeoff,
    9: dynamic_reference,
    10: determinism,
}


def run(number: int, **kwargs) -> CheckResult:
    t = time.perf_counter()
    result = CHECKS[number](**kwargs)
    result.seconds = time.perf_counter() - t
    return result
