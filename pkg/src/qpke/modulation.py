"""Constellations (M-PSK, M-APSK), Gray labelling, differential phase targets
and the shared dynamic reference-phase list."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phasespace import TWO_PI, canonicalize

PSK = "psk"
APSK = "apsk"

# conventional ring layouts; no geometry for APSK is given by the protocol
DEFAULT_APSK = {
    8: ((4, 4), (1.0, 2.0)),
    16: ((4, 12), (1.0, 2.57)),
    32: ((4, 12, 16), (1.0, 2.64, 4.64)),
}


def gray_code(n):
    n = np.asarray(n, dtype=np.int64)
    return n ^ (n >> 1)


def gray_to_binary(g):
    g = np.asarray(g, dtype=np.int64)
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def int_to_bits(values, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_int(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    return (bits << np.arange(width - 1, -1, -1)).sum(axis=-1)


@dataclass(frozen=True)
class SymbolWord:
    bits: tuple

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_int(cls, value: int, width: int) -> "SymbolWord":
        if not 0 <= value < 2**width:
            raise ValueError(f"{value} does not fit in {width} bits")
        return cls(tuple(int_to_bits(value, width)))

    @classmethod
    def from_str(cls, text: str) -> "SymbolWord":
        return cls(tuple(int(c) for c in text))

    @property
    def width(self) -> int:
        return len(self.bits)

    def to_int(self) -> int:
        return int(bits_to_int(self.bits))

    def __str__(self):
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class Scheme:
    """A PSK or APSK constellation.

    Points are enumerated ring by ring (inner first), phase index ascending,
    and point ``j`` carries the label ``gray_code(j)``. For PSK this is the
    usual cyclic Gray code; on APSK rings neighbours inside a ring differ in
    one bit except across the ring's wrap point when its size is not a power
    of two.
    """

    kind: str
    phases_per_ring: tuple
    rings: tuple = (1.0,)

    def __post_init__(self):
        kind = self.kind.lower()
        ppr = tuple(int(p) for p in self.phases_per_ring)
        rings = tuple(float(r) for r in self.rings)
        if kind not in (PSK, APSK):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if len(ppr) != len(rings) or not ppr:
            raise ValueError("phases_per_ring and rings must have equal nonzero length")
        if kind == PSK and len(rings) != 1:
            raise ValueError("PSK has exactly one ring")
        if any(p < 2 for p in ppr):
            raise ValueError("each ring needs at least 2 phases")
        if any(r <= 0 for r in rings) or any(b <= a for a, b in zip(rings, rings[1:])):
            raise ValueError("ring scales must be positive and strictly increasing")
        total = sum(ppr)
        if total & (total - 1):
            raise ValueError(f"constellation size {total} is not a power of two")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "phases_per_ring", ppr)
        object.__setattr__(self, "rings", rings)

    @classmethod
    def psk(cls, num_phases: int) -> "Scheme":
        return cls(PSK, (num_phases,), (1.0,))

    @classmethod
    def apsk(cls, size: int = 16, phases_per_ring=None, rings=None) -> "Scheme":
        if phases_per_ring is None or rings is None:
            if size not in DEFAULT_APSK:
                raise ValueError(f"no default APSK layout for {size} points")
            phases_per_ring, rings = DEFAULT_APSK[size]
        return cls(APSK, tuple(phases_per_ring), tuple(rings))

    @property
    def size(self) -> int:
        return sum(self.phases_per_ring)

    @property
    def num_phases(self) -> int:
        """Phases on the outermost ring (the only ring for PSK)."""
        return self.phases_per_ring[-1]

    @property
    def bits_per_symbol(self) -> int:
        return self.size.bit_length() - 1

    @property
    def min_phase_spacing(self) -> float:
        return TWO_PI / max(self.phases_per_ring)

    def meets_spacing_guideline(self, limit_deg: float = 20.0) -> bool:
        return np.degrees(self.min_phase_spacing) < limit_deg

    @property
    def _ring_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.phases_per_ring)])

    def points(self):
        """(ring index, phase index, phase, ring scale) for every point index."""
        ring_idx = np.repeat(np.arange(len(self.rings)), self.phases_per_ring)
        phase_idx = np.arange(self.size) - self._ring_offsets[ring_idx]
        m = np.asarray(self.phases_per_ring)[ring_idx]
        return ring_idx, phase_idx, canonicalize(phase_idx * TWO_PI / m), np.asarray(self.rings)[ring_idx]

    def labels(self) -> np.ndarray:
        return gray_code(np.arange(self.size))

    def encode_values(self, values):
        """Vectorised encode of integer word values -> (delta_phase, ring_scale)."""
        values = np.asarray(values, dtype=np.int64)
        if np.any(values < 0) or np.any(values >= self.size):
            raise ValueError("word value out of range for scheme")
        point = gray_to_binary(values)
        _, _, phase, scale = self.points()
        return phase[point], scale[point]

    def decode_values(self, measured_delta_phase, measured_scale=None):
        """Vectorised nearest-point decision -> integer word values."""
        phase = np.asarray(measured_delta_phase, dtype=float)
        if len(self.rings) == 1:
            ring = np.zeros(phase.shape, dtype=np.int64)
        elif measured_scale is None:
            raise ValueError("APSK decoding needs a measured ring scale")
        else:
            bounds = 0.5 * (np.asarray(self.rings[:-1]) + np.asarray(self.rings[1:]))
            ring = np.searchsorted(bounds, np.asarray(measured_scale, dtype=float), side="right")
            ring = np.broadcast_to(ring, phase.shape)
        m = np.asarray(self.phases_per_ring)[ring]
        spacing = TWO_PI / m
        x = np.mod(phase, TWO_PI) / spacing
        k0 = np.floor(x).astype(np.int64) % m
        k1 = (k0 + 1) % m
        d0 = _distance_to_point(phase, k0, spacing)
        d1 = _distance_to_point(phase, k1, spacing)
        offs = self._ring_offsets[ring]
        lab0 = gray_code(offs + k0)
        lab1 = gray_code(offs + k1)
        pick1 = (d1 < d0) | ((d1 == d0) & (lab1 < lab0))
        return np.where(pick1, lab1, lab0)


def _distance_to_point(phase, k, spacing):
    return np.abs(canonicalize(phase - k * spacing))


def encode(word: SymbolWord, scheme: Scheme):
    """Word -> (delta_phase, ring_scale)."""
    if word.width != scheme.bits_per_symbol:
        raise ValueError(
            f"word width {word.width} does not match {scheme.bits_per_symbol}-bit scheme"
        )
    phase, scale = scheme.encode_values(word.to_int())
    return float(phase), float(scale)


def decode(measured_delta_phase: float, measured_scale, scheme: Scheme) -> SymbolWord:
    value = scheme.decode_values(measured_delta_phase, measured_scale)
    return SymbolWord.from_int(int(value), scheme.bits_per_symbol)


def dpsk_target(delta_key, reference_phase):
    """Absolute key phase key_phase = delta + ref_phase."""
    return canonicalize(np.asarray(delta_key) + np.asarray(reference_phase))


# splitmix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x):
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def prf(seed: int, *words):
    """Keyed 64-bit hash of (seed, words...), vectorised over the last word."""
    h = _splitmix64(np.uint64(seed % 2**64))
    for w in words:
        with np.errstate(over="ignore"):
            h = _splitmix64(h ^ np.asarray(w, dtype=np.int64).astype(np.uint64))
    return h


@dataclass(frozen=True)
class ReferenceList:
    """Reference phases shared by Alice and Bob.

    ``phases`` is the list for the first epoch. With ``period > 0`` every
    ``period`` pulses the whole list is replaced by fresh phases derived from
    ``(schedule_seed, epoch)``, so both sides see the same list without talking.
    """

    phases: tuple
    schedule_seed: int = 0
    period: int = 10_000

    def __post_init__(self):
        phases = tuple(float(canonicalize(p)) for p in self.phases)
        if not phases:
            raise ValueError("reference list is empty")
        if self.period < 0:
            raise ValueError("period must be >= 0")
        object.__setattr__(self, "phases", phases)

    @classmethod
    def fixed(cls, phase: float = 0.0) -> "ReferenceList":
        return cls((phase,), 0, 0)

    @classmethod
    def random(cls, size: int, schedule_seed: int, period: int = 10_000) -> "ReferenceList":
        return cls(tuple(_epoch_phases(schedule_seed, 0, size)), schedule_seed, period)

    def __len__(self):
        return len(self.phases)

    def phases_for_epoch(self, epoch: int) -> np.ndarray:
        if epoch == 0 or self.period == 0:
            return np.asarray(self.phases)
        return _epoch_phases(self.schedule_seed, epoch, len(self.phases))

    def refreshed(self, epoch: int) -> "ReferenceList":
        return ReferenceList(tuple(self.phases_for_epoch(epoch)), self.schedule_seed, self.period)

    def select(self, pulse_index):
        """Vectorised selection -> (reference_phase, slot)."""
        idx = np.asarray(pulse_index, dtype=np.int64)
        size = len(self.phases)
        slot = (prf(self.schedule_seed, 1, idx) % np.uint64(size)).astype(np.int64)
        if self.period == 0:
            phase = np.asarray(self.phases)[slot]
        else:
            epoch = idx // self.period
            phase = np.empty(idx.shape)
            for e in np.unique(epoch):
                mask = epoch == e
                phase[mask] = self.phases_for_epoch(int(e))[slot[mask]]
        if idx.ndim == 0:
            return float(phase), int(slot)
        return phase, slot


def _epoch_phases(seed: int, epoch: int, size: int) -> np.ndarray:
    raw = prf(seed, 2, epoch, np.arange(size))
    u = (raw >> np.uint64(11)).astype(np.float64) / 2.0**53
    return canonicalize(np.pi - TWO_PI * u)


def select_reference(ref_list: ReferenceList, pulse_index):
    return ref_list.select(pulse_index)
