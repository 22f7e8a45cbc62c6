"""Feed-forward hard-knee RMS compressor and the compression sweep experiment.

Gain computer, in dB, for a smoothed envelope level ``L``::

    gain = 0                          L <= threshold
    gain = (L - threshold)(1/r - 1)   L >  threshold

i.e. the part of the level above threshold is divided by the ratio ``r``.
The envelope is a running RMS over ``env_window_ms`` whose dB level is
smoothed by a one-pole filter with separate attack and release times.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numba
import numpy as np
from scipy.signal import fftconvolve

from .audio_io import Signal, peak
from .errors import ArgumentError
from .smoother import BandwidthGrid
from .subsampler import SubsampleConfig, mesdr, subsample_distribution

__all__ = [
    "CompressorConfig",
    "compress",
    "envelope_db",
    "compression_sweep",
    "SWEEP_COLUMNS",
    "DEFAULT_RATIOS",
    "DEFAULT_THRESHOLDS",
    "sweep_to_csv",
]

DEFAULT_THRESHOLDS = (-12.0, -24.0)
DEFAULT_RATIOS = (1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
SWEEP_COLUMNS = ("threshold_db", "ratio", "mesdr", "ci90_lo", "ci90_hi", "ci95_lo", "ci95_hi")
_FLOOR_DB = -200.0


@dataclass(frozen=True)
class CompressorConfig:
    threshold_db: float
    ratio: float
    env_window_ms: float = 10.0
    attack_ms: float = 5.0
    release_ms: float = 100.0
    makeup_db: float = 0.0

    def __post_init__(self):
        if self.threshold_db > 0:
            raise ArgumentError(f"threshold must be <= 0 dBFS, got {self.threshold_db}")
        if not self.ratio >= 1:
            raise ArgumentError(f"compression ratio must be >= 1, got {self.ratio}")
        if not self.env_window_ms > 0:
            raise ArgumentError(f"envelope window must be positive, got {self.env_window_ms}")
        if self.attack_ms < 0 or self.release_ms < 0:
            raise ArgumentError("attack and release times must be non-negative")


@numba.njit(cache=True)
def _attack_release(level, a_att, a_rel):
    out = np.empty_like(level)
    state = level[0]
    for i in range(level.size):
        x = level[i]
        a = a_att if x > state else a_rel
        state = a * state + (1.0 - a) * x
        out[i] = state
    return out


def _pole(ms: float, sample_rate: int) -> float:
    if ms == 0:
        return 0.0
    return math.exp(-1000.0 / (ms * sample_rate))


def envelope_db(samples, sample_rate: int, cfg: CompressorConfig) -> np.ndarray:
    """Smoothed envelope level in dBFS, one value per sample."""
    x = np.asarray(samples, dtype=float)
    width = max(1, int(round(cfg.env_window_ms * sample_rate / 1000.0)))
    # causal running mean of x^2 over the last `width` samples
    ms = fftconvolve(x * x, np.full(width, 1.0 / width))[: x.size]
    ms = np.maximum(ms, 0.0)
    with np.errstate(divide="ignore"):
        level = np.maximum(10.0 * np.log10(ms), _FLOOR_DB)
    return _attack_release(
        level, _pole(cfg.attack_ms, sample_rate), _pole(cfg.release_ms, sample_rate)
    )


def compress(signal: Signal, cfg: CompressorConfig) -> Signal:
    """Apply the compressor; output is clipped to ``[-1, 1]``.

    The number of clipped samples is stored in ``metadata["clip_count"]``.
    """
    x = signal.samples
    if x.size == 0:
        raise ArgumentError("cannot compress an empty signal")
    level = envelope_db(x, signal.sample_rate, cfg)
    over = np.maximum(level - cfg.threshold_db, 0.0)
    gain_db = over * (1.0 / cfg.ratio - 1.0) + cfg.makeup_db
    y = x * 10.0 ** (gain_db / 20.0)
    clipped = np.abs(y) > 1.0
    y = np.clip(y, -1.0, 1.0)
    meta = dict(signal.metadata, compressor=asdict(cfg), clip_count=int(clipped.sum()))
    label = f"{signal.source} | compressed T={cfg.threshold_db:g} dB r={cfg.ratio:g}"
    return Signal(y, signal.sample_rate, label, meta)


def _row(threshold, ratio, report) -> dict:
    ci90 = report.ci90 or (math.nan, math.nan)
    ci95 = report.ci95 or (math.nan, math.nan)
    return {
        "threshold_db": threshold,
        "ratio": ratio,
        "mesdr": report.mesdr,
        "ci90_lo": ci90[0],
        "ci90_hi": ci90[1],
        "ci95_lo": ci95[0],
        "ci95_hi": ci95[1],
    }


def compression_sweep(
    signal: Signal,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    cfg: SubsampleConfig | None = None,
    grid: BandwidthGrid | None = None,
    shared_seed: bool = True,
    compressor_defaults: dict | None = None,
    threads: int | None = None,
) -> list[dict]:
    """MeSDR of the original and of every (threshold, ratio) compressed copy.

    The first row is the uncompressed original (``threshold_db = None``,
    ``ratio = 1``).  With ``shared_seed`` every cell reuses ``cfg.seed`` so
    all cells see the same blocks; otherwise cell ``i`` uses ``seed + i``.
    """
    cfg = cfg or SubsampleConfig()
    extra = compressor_defaults or {}

    def analyse(sig, i):
        cell_cfg = cfg if shared_seed else SubsampleConfig(**{**asdict(cfg), "seed": cfg.seed + i})
        sample = subsample_distribution(sig, cell_cfg, grid, threads=threads)
        return mesdr(sample, peak(sig))

    rows = [_row(None, 1.0, analyse(signal, 0))]
    cell = 1
    for t in thresholds:
        for r in ratios:
            out = compress(signal, CompressorConfig(threshold_db=t, ratio=r, **extra))
            rows.append(_row(float(t), float(r), analyse(out, cell)))
            cell += 1
    return rows


def sweep_to_csv(rows: list[dict], header: dict | None = None) -> str:
    """CSV text of sweep rows; ``header`` items become leading ``#`` lines."""
    buf = io.StringIO()
    for key, value in (header or {}).items():
        buf.write(f"# {key}={value}\n")
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: "" if row[k] is None else row[k] for k in SWEEP_COLUMNS})
    return buf.getvalue()
