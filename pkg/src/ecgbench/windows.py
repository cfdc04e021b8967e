"""Sliding-window sampling and test-time aggregation.

Training uses one random fixed-length crop per record; at test time the
record is tiled into half-overlapping windows (plus a final catch-up window
so no tail samples are lost) and the per-window scores are combined with the
elementwise maximum (classification) or mean (regression).
"""

from __future__ import annotations

import numpy as np


def _pad_to(signal: np.ndarray, window_len: int) -> np.ndarray:
    """Zero-pad a short signal symmetrically, original centered."""
    n_leads, t = signal.shape
    left = (window_len - t) // 2
    right = window_len - t - left
    return np.pad(signal, ((0, 0), (left, right)))


def random_crop(signal: np.ndarray, window_len: int, seed: int = 0) -> np.ndarray:
    """Uniform random fixed-length crop; short signals are zero-padded."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2 or signal.shape[1] == 0:
        raise ValueError("signal must be a nonempty leads x samples array")
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    t = signal.shape[1]
    if t < window_len:
        return _pad_to(signal, window_len)
    rng = np.random.Generator(np.random.PCG64(seed))
    start = int(rng.integers(0, t - window_len + 1))
    return signal[:, start : start + window_len].copy()


def tile_windows(signal: np.ndarray, window_len: int) -> list[np.ndarray]:
    """Half-overlapping windows covering every sample.

    Starts at 0, L/2, 2(L/2), ... while a full window fits, plus a final
    window ending exactly at T when the tail would otherwise be uncovered.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2 or signal.shape[1] == 0:
        raise ValueError("signal must be a nonempty leads x samples array")
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    t = signal.shape[1]
    if t <= window_len:
        return [_pad_to(signal, window_len)]
    step = max(1, window_len // 2)
    starts = list(range(0, t - window_len + 1, step))
    if starts[-1] + window_len < t:
        starts.append(t - window_len)
    return [signal[:, s : s + window_len].copy() for s in starts]


def aggregate(window_scores: np.ndarray, mode: str = "max") -> np.ndarray:
    """Combine per-window scores (W x C) into one record-level row."""
    window_scores = np.asarray(window_scores, dtype=np.float64)
    if window_scores.ndim != 2 or window_scores.shape[0] == 0:
        raise ValueError("window scores must be a nonempty W x C matrix")
    if mode == "max":
        return window_scores.max(axis=0)
    if mode == "mean":
        return window_scores.mean(axis=0)
    raise ValueError(f"unknown aggregation mode {mode!r}; expected 'max' or 'mean'")
