"""PCM decoding, 16-bit WAV output and small signal utilities."""
from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DecodeError, SilentSignalError

__all__ = [
    "Signal",
    "load_pcm",
    "load_wav",
    "load_raw",
    "write_wav16",
    "loudest_channel",
    "trim_silence",
    "peak",
    "FRAME_MS",
]

FRAME_MS = 10.0
_SUPPORTED_BITS = (16, 24, 32)
_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class Signal:
    """Mono sample sequence.

    Amplitudes are dimensionless with nominal range ``[-1, 1]``.
    ``metadata`` carries processing notes such as a compressor clip count.
    """

    samples: np.ndarray
    sample_rate: int
    source: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ArgumentError("Signal samples must be one-dimensional")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ArgumentError(f"sample rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ArgumentError("Signal contains NaN or infinite samples")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class _WavFormat:
    channels: int
    sample_rate: int
    bits: int
    block_align: int


def _decode_ints(raw: bytes, bits: int) -> np.ndarray:
    if bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.int32)
    if bits == 32:
        return np.frombuffer(raw, dtype="<i4").astype(np.int64)
    # 24-bit: assemble little-endian triplets, then sign-extend
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    return np.where(v >= 1 << 23, v - (1 << 24), v)


def _scale(ints: np.ndarray, bits: int) -> np.ndarray:
    return ints.astype(float) / float(1 << (bits - 1))


def _parse_fmt(body: bytes) -> _WavFormat:
    if len(body) < 16:
        raise DecodeError(f"fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
        tag = struct.unpack("<H", body[24:26])[0]
    if tag != _WAVE_FORMAT_PCM:
        raise DecodeError(f"fmt chunk: unsupported format tag 0x{tag:04x} (integer PCM only)")
    if bits not in _SUPPORTED_BITS:
        raise DecodeError(f"fmt chunk: unsupported sample width {bits} bits")
    if channels < 1 or rate < 1:
        raise DecodeError(f"fmt chunk: invalid channels={channels} or rate={rate}")
    if block_align != channels * bits // 8:
        raise DecodeError(f"fmt chunk: block align {block_align} inconsistent with {channels}x{bits} bits")
    return _WavFormat(channels, rate, bits, block_align)


def _read_wav_frames(path) -> tuple[_WavFormat, bytes]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise DecodeError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos : pos + 8])
        body_start = pos + 8
        if cid == b"fmt ":
            fmt = _parse_fmt(data[body_start : body_start + size])
        elif cid == b"data":
            if fmt is None:
                raise DecodeError("data chunk precedes fmt chunk")
            available = len(data) - body_start
            if size > available:
                raise DecodeError(
                    f"data chunk truncated at byte offset {len(data)}: "
                    f"header declares {size} bytes, {available} present"
                )
            if size % fmt.block_align:
                end = body_start + size - size % fmt.block_align
                raise DecodeError(f"data chunk ends mid-frame at byte offset {end}")
            return fmt, data[body_start : body_start + size]
        pos = body_start + size + (size & 1)
    raise DecodeError(f"{path}: no data chunk found" if fmt else f"{path}: no fmt chunk found")


def _select(frames: np.ndarray, channels: int, channel: int) -> np.ndarray:
    if not 0 <= channel < channels:
        raise ArgumentError(f"channel {channel} out of range for {channels}-channel audio")
    return frames.reshape(-1, channels)[:, channel]


def load_wav(path, channel: int = 0) -> Signal:
    """Read one channel of an integer-PCM RIFF/WAVE file.

    Samples are scaled by ``1 / 2**(bits-1)``, so the negative rail maps to
    exactly ``-1.0``.
    """
    fmt, raw = _read_wav_frames(path)
    if not 0 <= channel < fmt.channels:
        raise ArgumentError(f"channel {channel} out of range for {fmt.channels}-channel audio")
    ints = _decode_ints(raw, fmt.bits)
    x = _scale(_select(ints, fmt.channels, channel), fmt.bits)
    if x.size == 0:
        raise DecodeError(f"{path}: data chunk is empty")
    return Signal(x, fmt.sample_rate, source=f"{Path(path).name}[ch{channel}]")


def load_raw(path, sample_rate: int, bits: int = 16, channels: int = 1, channel: int = 0) -> Signal:
    """Read headerless little-endian integer PCM with explicit layout."""
    if bits not in _SUPPORTED_BITS:
        raise ArgumentError(f"unsupported raw sample width {bits}")
    if channels < 1 or sample_rate < 1:
        raise ArgumentError("raw input needs positive channel count and sample rate")
    if not 0 <= channel < channels:
        raise ArgumentError(f"channel {channel} out of range for {channels}-channel audio")
    raw = Path(path).read_bytes()
    frame = channels * bits // 8
    if len(raw) % frame:
        raise DecodeError(f"raw data ends mid-frame at byte offset {len(raw) - len(raw) % frame}")
    if not raw:
        raise DecodeError(f"{path}: empty raw file")
    ints = _decode_ints(raw, bits)
    x = _scale(_select(ints, channels, channel), bits)
    return Signal(x, sample_rate, source=f"{Path(path).name}[raw ch{channel}]")


def load_pcm(
    path,
    channel: int = 0,
    *,
    raw_rate: int | None = None,
    raw_bits: int = 16,
    raw_channels: int = 1,
) -> Signal:
    """Load a WAV file, or raw PCM when ``raw_rate`` is given."""
    if raw_rate is not None:
        return load_raw(path, raw_rate, raw_bits, raw_channels, channel)
    return load_wav(path, channel)


def loudest_channel(path) -> int:
    """Index of the WAV channel with the largest absolute sample."""
    fmt, raw = _read_wav_frames(path)
    ints = _decode_ints(raw, fmt.bits).reshape(-1, fmt.channels)
    return int(np.argmax(np.abs(ints).max(axis=0)))


def write_wav16(path, signal: Signal) -> int:
    """Write a mono 16-bit WAV; returns the number of samples clipped.

    Amplitudes are rounded to the nearest step of 1/32768 and clipped to
    the 16-bit range.
    """
    q = np.round(signal.samples * 32768.0)
    clipped = int(np.count_nonzero((q > 32767) | (q < -32768)))
    ints = np.clip(q, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(ints.tobytes())
    return clipped


def peak(signal) -> float:
    """Largest absolute sample."""
    x = np.asarray(getattr(signal, "samples", signal), dtype=float)
    if x.size == 0:
        raise ArgumentError("peak of an empty signal")
    return float(np.max(np.abs(x)))


def trim_silence(signal: Signal, threshold_db: float = -60.0) -> Signal:
    """Cut leading and trailing 10 ms frames whose RMS is at or below threshold.

    Frames are aligned to the start of the signal; the last frame may be
    short.  Everything between the first and last loud frame is kept as is.
    """
    if threshold_db > 0:
        raise ArgumentError(f"trim threshold must be <= 0 dBFS, got {threshold_db}")
    x = signal.samples
    frame = max(1, int(round(FRAME_MS * signal.sample_rate / 1000.0)))
    n_frames = math.ceil(x.size / frame)
    padded = np.zeros(n_frames * frame)
    padded[: x.size] = x
    sq = (padded * padded).reshape(n_frames, frame).sum(axis=1)
    lengths = np.full(n_frames, frame)
    lengths[-1] = x.size - frame * (n_frames - 1)
    ms = sq / lengths
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(ms)
    loud = np.flatnonzero(level > threshold_db)
    if loud.size == 0:
        raise SilentSignalError(f"signal is silent at {threshold_db} dBFS: nothing left after trimming")
    start = loud[0] * frame
    stop = min((loud[-1] + 1) * frame, x.size)
    meta = dict(signal.metadata, trimmed=[int(start), int(stop)], trim_threshold_db=threshold_db)
    return Signal(x[start:stop].copy(), signal.sample_rate, signal.source, meta)
