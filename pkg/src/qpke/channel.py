"""Fiber path, local oscillators and tap points.

Positions along the fiber are fractions of its length measured from Bob
(0) to Alice (1), on both legs of the roundtrip.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .phasespace import GlauberState, attenuate, canonicalize

FIBER_SPEED_KM_PER_S = 2.0e5

REFERENCE = 0
KEY = 1


@dataclass
class PathState:
    """Fiber span with a slowly drifting path phase ``current_path_phase``."""

    current_path_phase: float = 0.0
    drift_step_sigma: float = float(np.radians(0.1))
    length_km: float = 0.0
    attenuation_db_per_km: float = 0.2
    excess_delay: float = 0.0
    delay_jitter: float = 0.0

    def __post_init__(self):
        if self.length_km < 0 or self.attenuation_db_per_km < 0:
            raise ValueError("length and attenuation must be nonnegative")
        if self.drift_step_sigma < 0 or self.delay_jitter < 0:
            raise ValueError("sigmas must be nonnegative")
        self.current_path_phase = canonicalize(self.current_path_phase)

    @property
    def base_delay(self) -> float:
        return self.length_km / FIBER_SPEED_KM_PER_S + self.excess_delay

    def power_ratio(self, fraction: float) -> float:
        loss_db = self.attenuation_db_per_km * self.length_km * fraction
        return 10.0 ** (-loss_db / 10.0)

    def check_drift(self, symbol_spacing: float, ratio: float = 0.1) -> bool:
        """Warn when the per-slot drift is not small next to the symbol spacing."""
        ok = self.drift_step_sigma < ratio * symbol_spacing
        if not ok:
            warnings.warn(
                f"path drift step {np.degrees(self.drift_step_sigma):.3g} deg is not small "
                f"against symbol spacing {np.degrees(symbol_spacing):.3g} deg",
                stacklevel=2,
            )
        return ok


@dataclass
class OscillatorState:
    offset_phase: float = 0.0
    drift_step_sigma: float = float(np.radians(0.1))

    def __post_init__(self):
        if self.drift_step_sigma < 0:
            raise ValueError("drift_step_sigma must be nonnegative")
        self.offset_phase = canonicalize(self.offset_phase)


@dataclass(frozen=True)
class TapConfig:
    position_fraction: float
    tap_power_ratio: float

    def __post_init__(self):
        if not 0.0 < self.position_fraction < 1.0:
            raise ValueError("tap position must lie strictly inside the fiber")
        if not 0.0 <= self.tap_power_ratio < 1.0:
            raise ValueError("tap power ratio must lie in [0, 1)")


@dataclass
class PulseFrames:
    """Pulses in flight: one entry per time slot (arrays, or a single frame)."""

    state: GlauberState
    index: np.ndarray
    role: np.ndarray
    delay: np.ndarray = field(default=None)

    def __post_init__(self):
        self.index = np.atleast_1d(np.asarray(self.index, dtype=np.int64))
        self.role = np.broadcast_to(np.asarray(self.role, dtype=np.int8), self.index.shape).copy()
        if self.delay is None:
            self.delay = np.zeros(self.index.shape)
        self.delay = np.broadcast_to(np.asarray(self.delay, dtype=float), self.index.shape).copy()
        amp = np.broadcast_to(np.asarray(self.state.amplitude, dtype=float), self.index.shape)
        ph = np.broadcast_to(np.asarray(self.state.phase, dtype=float), self.index.shape)
        self.state = GlauberState(amp.copy(), ph.copy())

    def __len__(self):
        return self.index.size

    def with_state(self, state: GlauberState, extra_delay=0.0) -> "PulseFrames":
        return PulseFrames(state, self.index, self.role, self.delay + extra_delay)


def traverse(state: GlauberState, path: PathState, from_fraction: float, to_fraction: float,
             *, path_phase=None, phase_weight: float = 1.0):
    """Propagate across the segment [from_fraction, to_fraction].

    Adds ``phase_weight * segment_length * path_phase`` (``path_phase``
    defaults to the path's current phase, or pass per-slot values), applies
    the segment loss and returns ``(state, delay_seconds)``.
    """
    if not 0.0 <= from_fraction < to_fraction <= 1.0:
        raise ValueError(f"invalid segment [{from_fraction}, {to_fraction}]")
    frac = to_fraction - from_fraction
    path_phase = path.current_path_phase if path_phase is None else path_phase
    shifted = GlauberState(state.amplitude, np.asarray(state.phase) + phase_weight * frac * np.asarray(path_phase))
    out = attenuate(shifted, path.power_ratio(frac))
    return out, frac * path.length_km / FIBER_SPEED_KM_PER_S


def advance_slot(path: PathState, *oscillators: OscillatorState, rng: np.random.Generator):
    """One Gaussian random-walk step for the path phase and each oscillator."""
    items = (path, *oscillators)
    steps = rng.standard_normal(len(items))
    path.current_path_phase = canonicalize(path.current_path_phase + path.drift_step_sigma * steps[0])
    for osc, z in zip(oscillators, steps[1:]):
        osc.offset_phase = canonicalize(osc.offset_phase + osc.drift_step_sigma * z)


def drift_walk(path: PathState, oscillators, n_slots: int, rng: np.random.Generator):
    """Phase values for the next ``n_slots`` slots, then advance the states.

    Row ``i`` holds the phases in effect during slot ``i`` (the current value
    for ``i = 0``). Draws the same normals, in the same order, as calling
    ``advance_slot`` once per slot.
    """
    items = [path, *oscillators]
    sigmas = np.array([path.drift_step_sigma] + [o.drift_step_sigma for o in oscillators])
    start = np.array([path.current_path_phase] + [o.offset_phase for o in oscillators])
    steps = rng.standard_normal((n_slots, len(items))) * sigmas
    walk = start + np.vstack([np.zeros((1, len(items))), np.cumsum(steps, axis=0)])
    values = canonicalize(walk[:-1])
    path.current_path_phase = canonicalize(walk[-1, 0])
    for osc, v in zip(oscillators, walk[-1, 1:]):
        osc.offset_phase = canonicalize(v)
    return values


def tap(state: GlauberState, cfg: TapConfig):
    """Split a pulse -> (through, diverted); power is conserved."""
    through = attenuate(state, 1.0 - cfg.tap_power_ratio)
    diverted = attenuate(state, cfg.tap_power_ratio)
    return through, diverted
