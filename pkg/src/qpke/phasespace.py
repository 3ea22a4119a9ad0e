"""Glauber states as points in phase space, the phase-shift gate, and the
number-phase uncertainty model used at detection time.

All phases are radians in the canonical range (-pi, pi]. Every type here
accepts either scalars or equally-shaped numpy arrays, so a batch of pulses
is just a ``GlauberState`` whose fields are arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

TWO_PI = 2.0 * np.pi

# Open circles of the measured number-phase curve: (mean photon number, degrees)
UNCERTAINTY_ANCHORS_DEG = ((0.25, 68.0), (1.0, 43.0), (4.5, 13.0), (100.0, 3.0))

# std of a uniform phase on the circle
UNIFORM_PHASE_STD = np.pi / np.sqrt(3.0)


def canonicalize(phase):
    """Map phase(s) into (-pi, pi]."""
    phase = np.asarray(phase, dtype=float)
    wrapped = np.mod(phase + np.pi, TWO_PI) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    # values already in range pass through bit-exact
    wrapped = np.where((phase > -np.pi) & (phase <= np.pi), phase, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def circular_distance(a, b):
    return np.abs(canonicalize(np.asarray(a) - np.asarray(b)))


def circular_mean(phases, axis=None):
    phases = np.asarray(phases, dtype=float)
    return canonicalize(np.angle(np.mean(np.exp(1j * phases), axis=axis)))


def _as_field(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class GlauberState:
    """Coherent state with eigenvalue ``amplitude * exp(1j * phase)``.

    The state itself is noiseless; uncertainty enters only when it is measured.
    """

    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        amplitude = _as_field(self.amplitude)
        if np.any(np.asarray(amplitude) < 0) or np.any(np.isnan(amplitude)):
            raise ValueError("amplitude must be nonnegative")
        object.__setattr__(self, "amplitude", amplitude)
        object.__setattr__(self, "phase", canonicalize(self.phase))

    @classmethod
    def from_mean_photon_number(cls, nbar, phase=0.0) -> "GlauberState":
        nbar = np.asarray(nbar, dtype=float)
        if np.any(nbar < 0):
            raise ValueError("mean photon number must be nonnegative")
        return cls(np.sqrt(nbar), phase)

    @property
    def mean_photon_number(self):
        return _as_field(np.square(self.amplitude))

    @property
    def complex_amplitude(self):
        return self.amplitude * np.exp(1j * np.asarray(self.phase))

    def __len__(self):
        return np.size(self.amplitude)


@dataclass(frozen=True)
class PhaseShiftGate:
    """U(phi) = exp(i phi); acts on a state by rotating its phase."""

    shift: float

    def inverse(self) -> "PhaseShiftGate":
        return PhaseShiftGate(-np.asarray(self.shift) if np.ndim(self.shift) else -self.shift)

    def __call__(self, state: GlauberState) -> GlauberState:
        return apply_phase_shift(state, self)


def apply_phase_shift(state: GlauberState, gate: PhaseShiftGate) -> GlauberState:
    return GlauberState(state.amplitude, np.asarray(state.phase) + gate.shift)


def inverse(gate: PhaseShiftGate) -> PhaseShiftGate:
    return gate.inverse()


def attenuate(state: GlauberState, power_ratio) -> GlauberState:
    """Scale the mean photon number by ``power_ratio`` (phase untouched)."""
    ratio = np.asarray(power_ratio, dtype=float)
    if np.any(ratio < 0) or np.any(ratio > 1) or np.any(np.isnan(ratio)):
        raise ValueError(f"power ratio must lie in [0, 1], got {power_ratio!r}")
    return GlauberState(state.amplitude * np.sqrt(ratio), state.phase)


def sample_photon_count(state: GlauberState, rng: np.random.Generator):
    """Poisson photon count with mean |alpha|^2."""
    counts = rng.poisson(np.square(state.amplitude))
    return int(counts) if np.ndim(counts) == 0 else counts


def uncertainty_floor(nbar):
    """Minimum phase spread 1/(2 sqrt(nbar)) from dn * dphi >= 1/2 with dn = sqrt(nbar)."""
    return 0.5 / np.sqrt(nbar)


@dataclass(frozen=True)
class NoiseModel:
    """Equipment phase noise plus the photon-number dependent quantum term.

    ``quantum_anchors`` holds ``(nbar, sigma_rad)`` pairs. Between anchors the
    curve is a power law (straight line on log-log axes). Past the last anchor
    it continues as ``sigma_last * sqrt(nbar_last / nbar)``, the 1/(2 sqrt(nbar))
    shape pinned to the last anchor so the curve stays continuous. Below the
    first anchor the first segment is extrapolated and then clamped from below
    by ``uncertainty_floor``.

    ``include_quantum=False`` makes ``equipment_sigma`` the overall
    per-measurement uncertainty.
    """

    equipment_sigma: float = float(np.radians(5.0))
    quantum_anchors: tuple = tuple((n, float(np.radians(d))) for n, d in UNCERTAINTY_ANCHORS_DEG)
    asymptotic_rule: bool = True
    include_quantum: bool = True
    _log_n: np.ndarray = field(init=False, repr=False, compare=False)
    _log_s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.equipment_sigma < 0:
            raise ValueError("equipment_sigma must be >= 0")
        anchors = tuple((float(n), float(s)) for n, s in self.quantum_anchors)
        if len(anchors) < 2:
            raise ValueError("need at least two quantum anchors")
        n = np.array([a[0] for a in anchors])
        s = np.array([a[1] for a in anchors])
        if np.any(n <= 0) or np.any(s <= 0):
            raise ValueError("anchors must be positive")
        if np.any(np.diff(n) <= 0):
            raise ValueError("anchor photon numbers must be strictly increasing")
        if np.any(np.diff(s) >= 0):
            raise ValueError("anchor sigmas must be strictly decreasing")
        object.__setattr__(self, "quantum_anchors", anchors)
        object.__setattr__(self, "_log_n", np.log(n))
        object.__setattr__(self, "_log_s", np.log(s))

    @classmethod
    def from_degrees(cls, equipment_sigma_deg=5.0, anchors_deg=UNCERTAINTY_ANCHORS_DEG, **kwargs):
        return cls(
            equipment_sigma=float(np.radians(equipment_sigma_deg)),
            quantum_anchors=tuple((n, float(np.radians(d))) for n, d in anchors_deg),
            **kwargs,
        )

    def quantum_sigma(self, nbar):
        nbar = np.asarray(nbar, dtype=float)
        if np.any(nbar <= 0) or np.any(np.isnan(nbar)):
            raise ValueError("quantum_sigma needs nbar > 0: the vacuum has no defined phase")
        if not self.include_quantum:
            return _as_field(np.zeros_like(nbar))
        log_n = np.log(nbar)
        ln, ls = self._log_n, self._log_s
        # np.interp clamps outside the anchors; the tails are handled below
        sigma = np.exp(np.interp(log_n, ln, ls))
        lo = log_n < ln[0]
        if np.any(lo):
            slope = (ls[1] - ls[0]) / (ln[1] - ln[0])
            ext = np.exp(ls[0] + slope * (log_n - ln[0]))
            sigma = np.where(lo, np.maximum(ext, uncertainty_floor(nbar)), sigma)
        hi = log_n > ln[-1]
        if np.any(hi):
            if self.asymptotic_rule:
                slope = -0.5
            else:
                slope = (ls[-1] - ls[-2]) / (ln[-1] - ln[-2])
            sigma = np.where(hi, np.exp(ls[-1] + slope * (log_n - ln[-1])), sigma)
        return _as_field(sigma)

    def total_sigma(self, nbar):
        """Quadrature sum of equipment and quantum terms."""
        q = self.quantum_sigma(nbar)
        return _as_field(np.sqrt(self.equipment_sigma**2 + np.square(q)))


def quantum_sigma(model: NoiseModel, nbar):
    return model.quantum_sigma(nbar)


def wrapped_normal_std(scale):
    """std of N(0, scale^2) wrapped onto (-pi, pi]."""
    scale = np.asarray(scale, dtype=float)
    k = np.arange(1, 60)[:, None] if scale.ndim else np.arange(1, 60)
    s = scale[None, ...] if scale.ndim else scale
    var = np.pi**2 / 3 + 4 * np.sum((-1.0) ** k * np.exp(-0.5 * (k * s) ** 2) / k**2, axis=0)
    return _as_field(np.sqrt(np.maximum(var, 0.0)))


# below this scale the wrap changes the std by far less than 1e-9 rad
_WRAP_NEGLIGIBLE = 0.5


@lru_cache(maxsize=4096)
def _scale_for_wrapped_std(target: float) -> float:
    if target < _WRAP_NEGLIGIBLE:
        return target
    if target >= UNIFORM_PHASE_STD:
        return np.inf
    return brentq(lambda s: wrapped_normal_std(s) - target, target, 50.0, xtol=1e-14)


def gaussian_scale_for(sigma):
    """Gaussian scale whose wrapped std equals ``sigma``.

    Spreads at or above the uniform-phase std map to ``inf`` (uniform phase).
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        return _scale_for_wrapped_std(float(sigma))
    uniq, inv = np.unique(sigma, return_inverse=True)
    return np.array([_scale_for_wrapped_std(float(u)) for u in uniq])[inv].reshape(sigma.shape)


def draw_phase_noise(sigma, rng: np.random.Generator, size=None):
    """Zero-mean phase errors whose circular std is ``sigma`` (radians).

    Infinite scale means a uniform phase. One standard normal and one uniform
    are drawn per element so the stream layout does not depend on sigma.
    """
    scale = gaussian_scale_for(sigma)
    shape = np.shape(scale) if size is None else size
    z = rng.standard_normal(shape)
    u = rng.uniform(-np.pi, np.pi, shape)
    err = np.where(np.isinf(scale), u, np.where(np.isinf(scale), 0.0, scale) * z)
    return canonicalize(err)
