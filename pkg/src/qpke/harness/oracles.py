"""Closed-form reference values used to check the Monte-Carlo simulator.

Nothing here touches the simulation path: Gray labels, decision cells and
error probabilities are recomputed from first principles with scipy.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.stats import norm


def gaussian_symbol_error(half_width, sigma):
    """P(|N(0, sigma^2)| > half_width)."""
    return float(2 * norm.sf(half_width / sigma))


def _gray(i):
    return i ^ (i >> 1)


def _popcount(x):
    return bin(int(x)).count("1")


def psk_shift_probabilities(m: int, sigma: float, offset: float = 0.0, wraps: int = 6) -> np.ndarray:
    """P(decision lands ``j`` points away) for M-PSK with Gaussian phase error
    N(offset, sigma^2) added to the transmitted phase."""
    spacing = 2 * np.pi / m
    j = np.arange(m)[:, None]
    k = np.arange(-wraps, wraps + 1)[None, :]
    a = j * spacing - spacing / 2 + 2 * np.pi * k - offset
    b = a + spacing
    if sigma == 0:
        probs = ((a <= 0) & (0 < b)).sum(axis=1).astype(float)
    else:
        probs = (norm.cdf(b / sigma) - norm.cdf(a / sigma)).sum(axis=1)
    return probs / probs.sum()


@lru_cache(maxsize=None)
def _distance_rows(m: int) -> np.ndarray:
    """[j, i] = Hamming distance between Gray labels of points i and i + j."""
    return np.array([[_popcount(_gray(i) ^ _gray((i + j) % m)) for i in range(m)] for j in range(m)], dtype=float)


def psk_bit_distance_table(m: int) -> np.ndarray:
    """Mean Hamming distance between Gray labels of point i and i + j, over i."""
    return _distance_rows(m).mean(axis=1)


def psk_ber(m: int, sigma: float, offset: float = 0.0) -> float:
    bits = int(np.log2(m))
    p = psk_shift_probabilities(m, sigma, offset)
    return float(p @ psk_bit_distance_table(m) / bits)


def psk_ser(m: int, sigma: float, offset: float = 0.0) -> float:
    return float(1 - psk_shift_probabilities(m, sigma, offset)[0])


def psk_ber_std_error(m: int, sigma: float, symbols: int, offset: float = 0.0) -> float:
    """Standard error of a BER estimate over ``symbols`` independent symbols
    (bits inside one symbol are correlated)."""
    bits = int(np.log2(m))
    p = psk_shift_probabilities(m, sigma, offset)
    h = _distance_rows(m)
    first = float(p @ h.mean(axis=1))
    second = float(p @ np.mean(h**2, axis=1))
    var = second - first**2
    return float(np.sqrt(var / symbols) / bits)


def mixture_ber(m: int, sigma: float, reference_phases) -> float:
    """Attacker BER when the reference used by the key and the one carried by
    the reference pulse are drawn independently and uniformly from the list,
    and the attacker assumes they coincide."""
    ref = np.asarray(reference_phases, dtype=float)
    total = 0.0
    for a in ref:
        for b in ref:
            total += psk_ber(m, sigma, offset=b - a)
    return total / ref.size**2


def binomial_band(p: float, n: int, k: float = 3.0) -> float:
    return float(k * np.sqrt(p * (1 - p) / n))


def std_standard_error(samples) -> float:
    """Standard error of the sample std from the sample's own fourth moment."""
    x = np.asarray(samples, dtype=float)
    x = x - x.mean()
    n = x.size
    m2 = np.mean(x**2)
    m4 = np.mean(x**4)
    return float(np.sqrt(max(m4 - m2**2, 0.0) / (4 * m2 * n)))
