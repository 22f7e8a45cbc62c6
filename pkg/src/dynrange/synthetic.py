"""Synthetic test material: tones, AR noise and drum-like burst trains."""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .audio_io import Signal

__all__ = ["sine", "square", "ar1_noise", "burst_train", "dynamic_test", "gated_sine"]


def sine(freq: float, duration: float, sample_rate: int = 44100, amplitude: float = 1.0) -> Signal:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return Signal(amplitude * np.sin(2 * np.pi * freq * t), sample_rate, f"sine {freq:g} Hz")


def square(freq: float, duration: float, sample_rate: int = 44100, amplitude: float = 1.0) -> Signal:
    """Square wave taking only the values ``+amplitude`` and ``-amplitude``."""
    n = int(round(duration * sample_rate))
    phase = (np.arange(n) * freq / sample_rate) % 1.0
    return Signal(np.where(phase < 0.5, amplitude, -amplitude), sample_rate, f"square {freq:g} Hz")


def ar1_noise(n: int, phi: float, sigma: float, rng: np.random.Generator, burn: int = 500) -> np.ndarray:
    """AR(1) series ``e_t = phi e_{t-1} + u_t`` with ``u_t ~ Normal(0, sigma^2)``."""
    u = rng.normal(0.0, sigma, n + burn)
    return lfilter([1.0], [1.0, -phi], u)[burn:]


def _hit(n: int, sample_rate: int, rise_ms: float, decay_ms: float, rng) -> np.ndarray:
    """One burst with unit peak: a linear rise then exponential decay.

    The carrier is a few low partials (the smooth part) plus white noise
    about 16 dB below them (the transient part).
    """
    t = np.arange(n) / sample_rate
    rise = rise_ms / 1000.0
    env = np.where(t < rise, t / rise, np.exp(-(t - rise) / (decay_ms / 1000.0)))
    phases = rng.uniform(0, 2 * np.pi, 3)
    tone = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip((1.0, 0.5, 0.3), (70.0, 180.0, 410.0), phases))
    tone /= np.sqrt(np.mean(tone**2))
    h = env * (tone + 0.15 * rng.normal(0.0, 1.0, n))
    return h / np.max(np.abs(h))


def burst_train(
    levels_db,
    interval: float,
    sample_rate: int = 44100,
    rise_ms: float = 50.0,
    decay_ms: float = 400.0,
    floor_db: float = -60.0,
    seed: int = 0,
    source: str = "burst train",
) -> Signal:
    """Hits at the given peak levels (dBFS), one every ``interval`` seconds.

    A white noise floor at ``floor_db`` RMS keeps every block non-silent.
    The result is rescaled so its largest sample is exactly 1.
    """
    rng = np.random.default_rng(seed)
    step = int(round(interval * sample_rate))
    levels_db = np.asarray(levels_db, dtype=float)
    x = rng.normal(0.0, 10 ** (floor_db / 20.0), step * levels_db.size)
    for i, lev in enumerate(levels_db):
        x[i * step : (i + 1) * step] += 10 ** (lev / 20.0) * _hit(step, sample_rate, rise_ms, decay_ms, rng)
    x /= np.max(np.abs(x))
    return Signal(x, sample_rate, source)


def dynamic_test(duration: float = 60.0, sample_rate: int = 44100, seed: int = 0) -> Signal:
    """Bursts every 0.5 s whose peak level ramps from -30 to 0 dBFS.

    A stand-in for a near-field "dynamic test" drum track: the playing level
    rises steadily across the whole take.
    """
    n_hits = int(round(duration / 0.5))
    levels = np.linspace(-30.0, 0.0, n_hits)
    return burst_train(levels, 0.5, sample_rate, seed=seed, source="dynamic test (ramped bursts)")


def gated_sine(
    duration: float = 30.0,
    sample_rate: int = 44100,
    freq: float = 100.0,
    period: float = 1.5,
    loud: float = 0.6,
    quiet_db: float = -30.0,
    edge_ms: float = 200.0,
    noise: float = 0.05,
    seed: int = 0,
) -> Signal:
    """Sine plus white noise, gated between full scale and ``quiet_db``.

    Each ``period`` holds a constant-power full-scale stretch of ``loud``
    seconds (raised-cosine edges of ``edge_ms``) and a quiet remainder.
    The loud stretches sit in the compressor's steady state, so the output
    peak follows the static gain law while the quiet median block does not
    move.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.sqrt(2.0) * np.sin(2 * np.pi * freq * t) + noise * rng.normal(0.0, 1.0, n)
    phase = t % period
    edge = edge_ms / 1000.0
    ramp = np.clip(np.minimum(phase / edge, (loud - phase) / edge), 0.0, 1.0)
    ramp = 0.5 - 0.5 * np.cos(np.pi * ramp)
    q = 10 ** (quiet_db / 20.0)
    x *= q + (1.0 - q) * ramp
    x /= np.max(np.abs(x))
    return Signal(x, sample_rate, "gated full-scale sine")
