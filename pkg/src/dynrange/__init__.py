"""Stochastic dynamic range estimation for PCM audio.

A signal is split into a kernel-smoothed trend and a residual stochastic
wave; the residual variance is measured on randomly drawn short blocks and
summarised by its median on a dB scale (MeSDR).
"""
from .audio_io import Signal, load_pcm, load_raw, load_wav, peak, trim_silence, write_wav16
from .compressor import CompressorConfig, compress, compression_sweep
from .errors import ArgumentError, DecodeError, DynRangeError, EstimationError, SilentSignalError
from .power_metrics import DrsConfig, dbfs, periodogram, rms_power, sequential_dr
from .smoother import BandwidthGrid, cv_score, priestley_chao_fit, select_bandwidth
from .subsampler import (
    DrReport,
    SubsampleConfig,
    block_variance,
    mann_whitney,
    median_ci,
    mesdr,
    subsample_distribution,
)

__version__ = "0.1.0"
