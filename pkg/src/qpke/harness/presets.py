"""Named experiment presets, one per acceptance check plus a few demos.

Each preset is a plain ``ExperimentConfig`` (or, for the tap sweep, a base
config plus a ``SweepSpec``) so it can be dumped to YAML and rerun by hand.
"""
from __future__ import annotations

from ..config import (
    AttackConfig,
    ChannelConfig,
    DetectorConfig,
    ExperimentConfig,
    MonitorConfig,
    ReferenceConfig,
    SchemeConfig,
    with_override,
)
from .sweep import SweepSpec

SEED = 20240917

# the 5 deg equipment sigma is the whole per-measurement uncertainty here
FIVE_DEG = dict(equipment_sigma_deg=5.0, include_quantum=False)


def minimal(seed: int = SEED) -> ExperimentConfig:
    return ExperimentConfig(master_seed=seed)


def exact_cancellation(kind="psk", phases=16, seed: int = SEED) -> ExperimentConfig:
    """Noiseless detectors, frozen channel, arbitrary constant nuisance phases."""
    return ExperimentConfig(
        master_seed=seed,
        pulses=10_000,
        scheme=SchemeConfig(kind=kind, phases=phases),
        channel=ChannelConfig(length_km=0.0, path_drift_step_deg=0.0, initial_path_phase_deg=73.0),
        bob=DetectorConfig(equipment_sigma_deg=0.0, include_quantum=False, lo_offset_deg=-41.0,
                           lo_drift_step_deg=0.0),
    )


def canonical_tapping(pulses: int = 2_000_000, list_size: int = 1, seed: int = SEED) -> ExperimentConfig:
    """nbar = 100, both taps 0.1, 16-PSK, 5 deg per measurement."""
    return ExperimentConfig(
        master_seed=seed,
        pulses=pulses,
        base_mean_photon_number=100.0,
        scheme=SchemeConfig("psk", 16),
        reference=ReferenceConfig(list_size=list_size, schedule_seed=7_654_321),
        channel=ChannelConfig(length_km=0.0),
        bob=DetectorConfig(**FIVE_DEG),
        attack=AttackConfig(kind="tapping", tap1_ratio=0.1, tap2_ratio=0.1,
                            detector=DetectorConfig(lo_offset_deg=None, **FIVE_DEG)),
    )


def dynamic_reference(pulses: int = 200_000, seed: int = SEED) -> ExperimentConfig:
    return canonical_tapping(pulses, list_size=8, seed=seed)


def intercept_resend(pulses: int = 400_000, amplitude_ratio: float = 1.0, window: int = 1000,
                     seed: int = SEED) -> ExperimentConfig:
    """Return-leg intercept-resend with 5 deg measurement and 5 deg preparation error."""
    return ExperimentConfig(
        master_seed=seed,
        pulses=pulses,
        scheme=SchemeConfig("psk", 16),
        channel=ChannelConfig(length_km=0.0),
        bob=DetectorConfig(**FIVE_DEG),
        monitors=MonitorConfig(intensity_window=window),
        attack=AttackConfig(kind="intercept_resend", regeneration_amplitude_ratio=amplitude_ratio,
                            detector=DetectorConfig(lo_offset_deg=None, **FIVE_DEG)),
    )


def no_attack(cfg: ExperimentConfig) -> ExperimentConfig:
    return with_override(cfg, "attack.kind", "none")


TAP_RATIOS = (0.002, 0.004, 0.006, 0.008, 0.010, 0.012)


def tap_tradeoff(seed: int = SEED, replications: int = 20, pulses: int = 20_000):
    """Tap-ratio sweep -> (base config, SweepSpec).

    A bright pulse (nbar = 1000) and a short intensity window keep both the
    alarm probability and the attacker's error away from saturation over the
    whole grid; the attacker's detector includes the quantum term.
    """
    base = ExperimentConfig(
        master_seed=seed,
        pulses=pulses,
        base_mean_photon_number=1000.0,
        scheme=SchemeConfig("psk", 16),
        channel=ChannelConfig(length_km=0.0),
        bob=DetectorConfig(equipment_sigma_deg=5.0),
        monitors=MonitorConfig(intensity_window=20),
        attack=AttackConfig(kind="tapping", detector=DetectorConfig(equipment_sigma_deg=5.0, lo_offset_deg=None)),
    )
    spec = SweepSpec(("attack.tap1_ratio", "attack.tap2_ratio"), TAP_RATIOS, replications)
    return base, spec


def phase_count(seed: int = SEED, replications: int = 3, pulses: int = 40_000):
    """num_phases sweep at fixed attacker noise (the guideline analysis)."""
    base = canonical_tapping(pulses, seed=seed)
    return base, SweepSpec(("scheme.phases",), (4, 8, 16, 32), replications)


PRESETS = {
    "minimal": minimal,
    "exact_cancellation": exact_cancellation,
    "canonical_tapping": canonical_tapping,
    "dynamic_reference": dynamic_reference,
    "intercept_resend": intercept_resend,
}

SWEEP_PRESETS = {
    "tap_tradeoff": tap_tradeoff,
    "phase_count": phase_count,
}


def get(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
