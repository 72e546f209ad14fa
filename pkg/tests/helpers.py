"""Independent oracles used by the tests.

These deliberately avoid the production code paths: per-bin powers come from
direct complex projections (or cumulative sums) instead of the package's
batched rFFT pipeline, and the FRR/FAR references are closed forms instead of
numerical quadrature.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np


def direct_bin_power(x: np.ndarray, k: int, length: int) -> float:
    """|DFT(x)[k]|^2 by direct projection (no FFT)."""
    t = np.arange(length)
    z = np.exp(-2j * np.pi * k * t / length)
    return float(np.abs(np.dot(np.asarray(x, dtype=np.float64)[:length], z)) ** 2)


def folded_bins(freq: float, sample_rate: float, length: int, theta: int) -> np.ndarray:
    """Bin window around a candidate, clamped then mirror-folded (independent
    reimplementation of the detection convention)."""
    i = int(math.floor(freq / sample_rate * length))
    k = np.arange(i - theta, i + theta + 1)
    k = np.clip(k, 0, length - 1)
    return np.where(k > length // 2, length - k, k)


def direct_candidate_power(
    x: np.ndarray, freq: float, sample_rate: float, length: int, theta: int
) -> float:
    """Per-candidate power via direct projections."""
    total = 0.0
    for k in folded_bins(freq, sample_rate, length, theta):
        total += direct_bin_power(x, int(k), length)
    return total


def sliding_candidate_powers(
    x: np.ndarray, grid, sample_rate: float, length: int, theta: int
) -> np.ndarray:
    """Per-candidate power at every window start, via cumulative sums of
    complex demodulates (O(N) per bin, no FFT). Shape (n_windows, N_cand)."""
    xf = np.asarray(x, dtype=np.float64)
    n_win = xf.shape[0] - length + 1
    t = np.arange(xf.shape[0])
    out = np.zeros((n_win, len(grid.candidates)))
    for c, freq in enumerate(grid.candidates):
        bins = folded_bins(freq, sample_rate, length, theta)
        acc = np.zeros(n_win)
        for k in np.unique(bins):
            mult = int(np.count_nonzero(bins == k))
            z = xf * np.exp(-2j * np.pi * int(k) * t / length)
            csum = np.concatenate(([0.0 + 0.0j], np.cumsum(z)))
            seg = csum[length:] - csum[:-length]
            acc += mult * (seg.real**2 + seg.imag**2)
        out[:, c] = acc
    return out


def exhaustive_detect(x, sig, grid, params, sample_rate: float):
    """Step-1 exhaustive scan with the same gating semantics as the detector;
    returns (location or None, peak score or None)."""
    length = sig.spec.length
    powers = sliding_candidate_powers(x, grid, sample_rate, length, params.theta)
    index = {f: i for i, f in enumerate(grid.candidates)}
    mask = np.zeros(len(grid.candidates), dtype=bool)
    r_vec = np.zeros(len(grid.candidates))
    for f in sig.frequencies:
        mask[index[f]] = True
        r_vec[index[f]] = sig.nominal_power[f]
    beta = params.beta_ratio * sig.total_power / len(sig.frequencies)
    p_in = powers[:, mask]
    p_out = powers[:, ~mask]
    ok = (p_in > params.alpha * r_vec[mask]).all(axis=1) & (p_out < beta).all(axis=1)
    scores = np.where(ok, p_in.sum(axis=1) - p_out.sum(axis=1), -np.inf)
    best = int(np.argmax(scores))
    peak = float(scores[best])
    if peak == -np.inf:
        return None, None
    if peak < params.epsilon * sig.total_power:
        return None, peak
    return best, peak


def proper_subsets(items: tuple) -> list[frozenset]:
    """All non-empty proper subsets, enumerated by brute force."""
    out = []
    for n in range(1, len(items)):
        out.extend(frozenset(c) for c in combinations(items, n))
    return out


_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(u: float) -> float:
    return math.exp(-0.5 * u * u) / _SQRT2PI


def _std_normal_cdf(u: float) -> float:
    return 0.5 * (1.0 + math.erf(u / math.sqrt(2.0)))


def closed_form_frr(tau: float, sigma: float) -> float:
    """FRR = (1/tau) * Int_0^tau Pr[N(d, sigma) > tau] dd in closed form."""
    big_t = tau / sigma
    integral = big_t * _std_normal_cdf(-big_t) + _phi(0.0) - _phi(big_t)
    return sigma * integral / tau


def closed_form_far(tau: float, sigma: float, detect_range: float, pairing_range: float) -> float:
    """FAR = Int_tau^min(ds,bt) Pr[N(d, sigma) <= tau] dd / (bt - tau)."""
    big_u = (min(detect_range, pairing_range) - tau) / sigma
    integral = big_u * _std_normal_cdf(-big_u) + _phi(0.0) - _phi(big_u)
    return sigma * integral / (pairing_range - tau)
