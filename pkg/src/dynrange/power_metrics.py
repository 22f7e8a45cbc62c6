"""Descriptive power metrics: RMS power, dBFS, sequential DR, periodogram."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from .errors import ArgumentError

__all__ = [
    "rms_power",
    "dbfs",
    "DrsConfig",
    "block_rms",
    "sequential_dr",
    "Spectrum",
    "periodogram",
]

# blocks handled per strided batch in block_rms; bounds peak memory
_BLOCK_BATCH = 4096


def rms_power(samples) -> float:
    """``sqrt(mean(x^2))`` over the whole sequence."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ArgumentError("RMS power of an empty sequence")
    return float(np.sqrt(np.mean(x * x)))


def dbfs(p: float, p0: float = 1.0) -> float:
    """Level ``20 log10(p / p0)`` in dB full scale; ``-inf`` for ``p = 0``."""
    if p < 0:
        raise ArgumentError(f"power must be non-negative, got {p}")
    if not p0 > 0:
        raise ArgumentError(f"reference power must be positive, got {p0}")
    if p == 0:
        return -math.inf
    return 20.0 * math.log10(p / p0)


@dataclass(frozen=True)
class DrsConfig:
    """Block layout for the sequential DR: block length and overlap, in samples."""

    window_len: int
    overlap: int = 0

    def __post_init__(self):
        if self.window_len < 1:
            raise ArgumentError(f"window length must be positive, got {self.window_len}")
        if not 0 <= self.overlap < self.window_len:
            raise ArgumentError(
                f"overlap must satisfy 0 <= overlap < window_len, got {self.overlap}"
            )

    @property
    def hop(self) -> int:
        return self.window_len - self.overlap

    @classmethod
    def from_ms(cls, sample_rate: int, window_ms: float = 50.0, overlap_frac: float = 0.5):
        window = max(1, int(round(window_ms * sample_rate / 1000.0)))
        return cls(window, int(round(overlap_frac * window)))


def block_rms(samples, cfg: DrsConfig) -> np.ndarray:
    """RMS power of every full block; a trailing partial block is dropped."""
    x = np.asarray(samples, dtype=float)
    if cfg.window_len > x.size:
        raise ArgumentError(
            f"window of {cfg.window_len} samples is longer than the signal ({x.size})"
        )
    n_blocks = (x.size - cfg.window_len) // cfg.hop + 1
    views = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop][:n_blocks]
    out = np.empty(n_blocks)
    for i in range(0, n_blocks, _BLOCK_BATCH):
        v = views[i : i + _BLOCK_BATCH]
        out[i : i + _BLOCK_BATCH] = np.sqrt(np.mean(v * v, axis=1))
    return out


def sequential_dr(signal, cfg: DrsConfig) -> float:
    """Sequential DR, ``-20 log10(mean block RMS / peak sample)``.

    ``DRs = 10`` reads as: on average the RMS power sits 10 dB below the
    largest sample.  Invariant to a global gain.
    """
    x = np.asarray(getattr(signal, "samples", signal), dtype=float)
    if x.size == 0:
        raise ArgumentError("sequential DR of an empty signal")
    x_peak = float(np.max(np.abs(x)))
    if x_peak == 0:
        raise ArgumentError("sequential DR undefined for an all-zero signal")
    mean_rms = float(np.mean(block_rms(x, cfg)))
    return -20.0 * math.log10(mean_rms / x_peak)


@dataclass
class Spectrum:
    freqs: np.ndarray
    power_dbfs: np.ndarray

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(["freq", "power_dbfs"])
            for f, p in zip(self.freqs, self.power_dbfs):
                w.writerow([f"{f:.6g}", "-inf" if np.isneginf(p) else f"{p:.6f}"])
        finally:
            if own:
                fh.close()

    def to_dict(self) -> dict:
        return {
            "freqs": [float(f) for f in self.freqs],
            "power_dbfs": [None if np.isneginf(p) else float(p) for p in self.power_dbfs],
        }


def periodogram(
    samples,
    sample_rate: float = 1.0,
    segment_len: int = 1024,
    overlap: int | None = None,
) -> Spectrum:
    """Averaged Hann-windowed periodogram, one-sided, in dBFS.

    Segments of ``segment_len`` samples (default overlap half a segment)
    are zero-padded to the next power of two.  The PSD is density-scaled
    with window power compensation; zero bins map to ``-inf``.
    """
    x = np.asarray(samples, dtype=float)
    if segment_len < 2:
        raise ArgumentError(f"segment length must be at least 2, got {segment_len}")
    if segment_len > x.size:
        raise ArgumentError(f"segment of {segment_len} samples is longer than the data ({x.size})")
    if overlap is None:
        overlap = segment_len // 2
    if not 0 <= overlap < segment_len:
        raise ArgumentError(f"overlap must satisfy 0 <= overlap < segment_len, got {overlap}")
    nfft = 1 << (segment_len - 1).bit_length()
    freqs, psd = welch(
        x,
        fs=sample_rate,
        window="hann",
        nperseg=segment_len,
        noverlap=overlap,
        nfft=nfft,
        detrend=False,
        scaling="density",
        return_onesided=True,
    )
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(psd)
    return Spectrum(freqs=freqs, power_dbfs=level)
