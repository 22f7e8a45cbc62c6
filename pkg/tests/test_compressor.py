import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynrange.audio_io import Signal
from dynrange.compressor import (
    SWEEP_COLUMNS,
    CompressorConfig,
    compress,
    compression_sweep,
    envelope_db,
    sweep_to_csv,
)
from dynrange.errors import ArgumentError
from dynrange.power_metrics import dbfs, rms_power
from dynrange.subsampler import SubsampleConfig
from dynrange.synthetic import burst_train

pytestmark = pytest.mark.analytic

SR = 44100


def tone(level_db, seconds=1.0, freq=441.0):
    """Sine whose RMS sits at ``level_db`` dBFS."""
    t = np.arange(int(seconds * SR)) / SR
    return Signal(math.sqrt(2) * 10 ** (level_db / 20) * np.sin(2 * np.pi * freq * t), SR)


def test_ratio_one_is_identity(rng):
    sig = Signal(rng.uniform(-1, 1, 5000), SR)
    out = compress(sig, CompressorConfig(threshold_db=-30, ratio=1))
    np.testing.assert_array_equal(out.samples, sig.samples)
    assert out.metadata["clip_count"] == 0


def test_steady_state_gain_law():
    out = compress(tone(-6.0), CompressorConfig(threshold_db=-12, ratio=2))
    settled = out.samples[SR // 2 :]  # well past attack
    assert dbfs(rms_power(settled)) == pytest.approx(-9.0, abs=0.2)


def test_below_threshold_untouched():
    sig = tone(-20.0)
    for ratio in (1.5, 3, 10):
        out = compress(sig, CompressorConfig(threshold_db=-12, ratio=ratio))
        np.testing.assert_array_equal(out.samples, sig.samples)


def test_makeup_gain_and_clip_count():
    sig = tone(-20.0, 0.1)
    out = compress(sig, CompressorConfig(threshold_db=-12, ratio=2, makeup_db=6))
    np.testing.assert_allclose(out.samples, sig.samples * 10 ** (6 / 20))
    loud = compress(tone(-3.0, 0.1), CompressorConfig(threshold_db=0, ratio=1, makeup_db=12))
    assert loud.metadata["clip_count"] > 0
    assert np.max(np.abs(loud.samples)) == 1.0


def test_gain_continuous_at_threshold():
    near = [compress(tone(-12 + d), CompressorConfig(threshold_db=-12, ratio=4)) for d in (-1e-6, 1e-6)]
    levels = [dbfs(rms_power(s.samples[SR // 2 :])) for s in near]
    assert levels[1] - levels[0] == pytest.approx(0.0, abs=1e-5)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    threshold=st.floats(-40, 0),
    r1=st.floats(1, 8),
    r2=st.floats(1, 8),
)
def test_output_magnitude_non_increasing_in_ratio(seed, threshold, r1, r2):
    x = np.random.default_rng(seed).normal(0, 0.3, 4000).clip(-1, 1)
    sig = Signal(x, SR)
    lo, hi = sorted((r1, r2))
    a = compress(sig, CompressorConfig(threshold, lo)).samples
    b = compress(sig, CompressorConfig(threshold, hi)).samples
    assert np.all(np.abs(b) <= np.abs(a) + 1e-15)


def test_envelope_tracks_rms_level():
    env = envelope_db(tone(-10.0).samples, SR, CompressorConfig(-20, 2))
    assert env[SR // 2 :] == pytest.approx(-10.0, abs=0.1)


def test_attack_release_time_constants():
    x = np.concatenate([np.full(SR, 10 ** (-40 / 20)), np.full(SR, 10 ** (-10 / 20)), np.full(SR, 10 ** (-40 / 20))])
    # a one-sample RMS window leaves only the one-pole smoothing
    cfg = CompressorConfig(-20, 2, env_window_ms=1000 / SR, attack_ms=5, release_ms=100)
    env = envelope_db(x, SR, cfg)
    # after one time constant a one-pole has covered 1 - 1/e of the step
    assert env[SR - 1 + int(0.005 * SR)] == pytest.approx(-40 + 30 * (1 - math.exp(-1)), abs=0.2)
    assert env[2 * SR - 1 + int(0.1 * SR)] == pytest.approx(-10 - 30 * (1 - math.exp(-1)), abs=0.2)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"threshold_db": 1, "ratio": 2},
        {"threshold_db": -12, "ratio": 0.5},
        {"threshold_db": -12, "ratio": 2, "env_window_ms": 0},
        {"threshold_db": -12, "ratio": 2, "attack_ms": -1},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ArgumentError):
        CompressorConfig(**kwargs)


def test_empty_signal_rejected():
    with pytest.raises(ArgumentError):
        compress(Signal(np.zeros(0), SR), CompressorConfig(-12, 2))


@pytest.fixture(scope="module")
def noisy_signal():
    return burst_train(np.linspace(-20, 0, 16), 0.25, SR, seed=2, source="test")


def test_identity_sweep_shared_seed(noisy_signal):
    rows = compression_sweep(noisy_signal, [-12.0], [1.0], SubsampleConfig(K=60, seed=4), shared_seed=True)
    assert rows[0]["threshold_db"] is None
    assert rows[1]["mesdr"] == rows[0]["mesdr"]
    assert rows[1]["ci90_lo"] == rows[0]["ci90_lo"]


def test_sweep_unshared_seeds_differ(noisy_signal):
    # cell i draws with seed + i, so an identity cell sees different blocks
    rows = compression_sweep(noisy_signal, [-12.0], [1.0], SubsampleConfig(K=60, seed=4), shared_seed=False)
    assert rows[1]["ci90_lo"] != rows[0]["ci90_lo"] or rows[1]["mesdr"] != rows[0]["mesdr"]


def test_sweep_table_layout(noisy_signal):
    rows = compression_sweep(noisy_signal, [-12.0, -24.0], [2.0, 4.0], SubsampleConfig(K=40, seed=1))
    assert [(r["threshold_db"], r["ratio"]) for r in rows] == [
        (None, 1.0), (-12.0, 2.0), (-12.0, 4.0), (-24.0, 2.0), (-24.0, 4.0)
    ]
    text = sweep_to_csv(rows, {"seed": 1})
    lines = text.splitlines()
    assert lines[0] == "# seed=1"
    assert lines[1] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 2 + len(rows)
    assert lines[2].startswith(",1.0,")


@pytest.mark.slow
def test_compression_does_not_raise_mesdr(noisy_signal):
    rows = compression_sweep(noisy_signal, [-24.0], [4.0], SubsampleConfig(K=200, seed=3))
    assert rows[1]["mesdr"] <= rows[0]["mesdr"] + 0.3
