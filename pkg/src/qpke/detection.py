"""Coherent Glauber-state detector: turns a state and a local oscillator into a
noisy phase reading and a photon count."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import OscillatorState
from .phasespace import GlauberState, NoiseModel, canonicalize, circular_mean, draw_phase_noise


@dataclass
class Detector:
    oscillator: OscillatorState
    noise: NoiseModel
    lo_power_boost: float = 1.0  # sqrt(I) signal gain, informational only

    def __post_init__(self):
        if self.noise.equipment_sigma < 0:
            raise ValueError("equipment sigma must be nonnegative")


@dataclass
class Measurement:
    pulse_index: np.ndarray
    measured_phase: np.ndarray
    measured_photon_count: np.ndarray
    true_phase_debug: np.ndarray | None = None

    def __len__(self):
        return np.size(self.measured_phase)


def total_sigma(det: Detector | NoiseModel, nbar):
    noise = det.noise if isinstance(det, Detector) else det
    return noise.total_sigma(nbar)


def measure_arrays(phase, nbar, lo_offset, noise: NoiseModel, rng: np.random.Generator):
    """Array core of ``measure``.

    Draw order: Poisson counts, then the phase errors. Vacuum inputs (nbar == 0)
    read a uniform phase.
    """
    phase, nbar = np.broadcast_arrays(np.asarray(phase, dtype=float), np.asarray(nbar, dtype=float))
    counts = rng.poisson(nbar)
    vacuum = nbar <= 0
    sigma = noise.total_sigma(np.where(vacuum, 1.0, nbar))
    sigma = np.where(vacuum, np.inf, sigma)
    err = draw_phase_noise(np.broadcast_to(sigma, phase.shape), rng)
    measured = canonicalize(phase + np.asarray(lo_offset) + err)
    return np.atleast_1d(measured), np.atleast_1d(counts)


def measure(state: GlauberState, det: Detector, rng: np.random.Generator,
            pulse_index=0, lo_offset=None) -> Measurement:
    """Read the phase of ``state`` relative to the detector's oscillator.

    ``lo_offset`` overrides the oscillator's current offset, e.g. with
    per-slot values during a session.
    """
    lo = det.oscillator.offset_phase if lo_offset is None else lo_offset
    measured, counts = measure_arrays(state.phase, state.mean_photon_number, lo, det.noise, rng)
    return Measurement(
        np.atleast_1d(np.asarray(pulse_index, dtype=np.int64)),
        measured,
        counts,
        np.broadcast_to(np.asarray(state.phase, dtype=float), measured.shape).copy(),
    )


def estimate_constant_offset(residuals, window: int = 128) -> float:
    """Constant phase offset from the circular mean of the first ``window``
    reference residuals (measured minus expected)."""
    residuals = np.asarray(residuals, dtype=float)[:window]
    if residuals.size == 0:
        return 0.0
    return float(circular_mean(residuals))


@dataclass(frozen=True)
class ClusterStats:
    symbol: int
    count: int
    centroid_phase: float
    phase_std: float
    centroid_ring: float
    ring_std: float


def constellation_dump(symbol_true, measured_phase, measured_ring=None) -> list[ClusterStats]:
    """Per-symbol cluster centroids (circular mean) and dispersions."""
    symbol_true = np.asarray(symbol_true, dtype=np.int64)
    measured_phase = np.asarray(measured_phase, dtype=float)
    ring = np.ones_like(measured_phase) if measured_ring is None else np.asarray(measured_ring, dtype=float)
    table = []
    for sym in np.unique(symbol_true):
        sel = symbol_true == sym
        ph = measured_phase[sel]
        centroid = float(circular_mean(ph))
        resid = canonicalize(ph - centroid)
        table.append(ClusterStats(
            int(sym), int(sel.sum()), centroid, float(np.sqrt(np.mean(np.square(resid)))),
            float(np.mean(ring[sel])), float(np.std(ring[sel])),
        ))
    return table


def write_constellation_csv(path, pulse_index, symbol_true, measured_phase, measured_ring):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pulse_index", "symbol_true", "phase_measured_deg", "ring_measured"])
        for i, s, p, r in zip(pulse_index, symbol_true, np.degrees(measured_phase), measured_ring):
            writer.writerow([int(i), int(s), f"{p:.6f}", f"{r:.6f}"])
