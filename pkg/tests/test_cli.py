import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dynrange.audio_io import Signal, load_wav, write_wav16
from dynrange.cli import main
from dynrange.power_metrics import dbfs, rms_power
from dynrange.synthetic import dynamic_test, sine, square

SR = 44100


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("audio")
    rng = np.random.default_rng(0)
    t = np.arange(10 * SR) / SR
    paths = {
        "noisy": d / "noisy.wav",
        "silent": d / "silent.wav",
        "square": d / "square.wav",
        "sine": d / "sine.wav",
        "tone6": d / "tone6.wav",
        "dynamic": d / "dynamic.wav",
    }
    write_wav16(paths["noisy"], Signal(0.5 * np.sin(2 * np.pi * 440 * t) + 0.05 * rng.normal(size=t.size), SR))
    write_wav16(paths["silent"], Signal(np.zeros(SR), SR))
    write_wav16(paths["square"], square(441, 2.0, amplitude=32767 / 32768))
    write_wav16(paths["sine"], sine(1000, 2.0, amplitude=32767 / 32768))
    write_wav16(paths["tone6"], sine(441, 2.0, amplitude=math.sqrt(2) * 10 ** (-6 / 20)))
    write_wav16(paths["dynamic"], dynamic_test(duration=20.0, seed=3))
    return paths


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_is_byte_identical(files, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["analyze", files["noisy"], "--seed", 7, "--out", a], capsys)[0] == 0
    assert run(["analyze", files["noisy"], "--seed", 7, "--out", b], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_analyze_echoes_effective_config(files, capsys):
    code, out, err = run(["analyze", files["noisy"], "--k", 100, "--timing"], capsys)
    assert code == 0
    doc = json.loads(out)
    cfg = doc["run_config"]
    assert cfg["b"] == 2205 and cfg["b_source"] == "50ms default"
    assert cfg["k"] == 100 and cfg["seed"] == 0 and cfg["c1"] == 0.3
    assert doc["report"]["config"]["b"] == 2205
    assert doc["report"]["n_degenerate"] == 0
    assert doc["elapsed_s"] > 0
    assert "analysed 100 blocks" in err


def test_analyze_output_independent_of_threads(files, capsys):
    one = run(["analyze", files["noisy"], "--k", 200, "--threads", 1], capsys)[1]
    many = run(["analyze", files["noisy"], "--k", 200, "--threads", 4], capsys)[1]
    strip = lambda s: {k: v for k, v in json.loads(s).items() if k != "run_config"}
    assert strip(one) == strip(many)


def test_analyze_csv_rows(files, capsys):
    code, out, _ = run(["analyze", files["noisy"], "--k", 50, "--format", "csv"], capsys)
    lines = out.splitlines()
    assert lines[0] == "start,variance,dr,dr_corrected,h_hat,degenerate"
    assert len(lines) == 51


def test_analyze_silent_file_exit_3(files, capsys):
    with pytest.warns(RuntimeWarning):
        code, _, err = run(["analyze", files["silent"]], capsys)
    assert code == 3
    assert "degenerate" in err


def test_analyze_trim_of_silent_file_exit_3(files, capsys):
    code, _, err = run(["analyze", files["silent"], "--trim-db", -60], capsys)
    assert code == 3 and "silent" in err


def test_decode_error_exit_2(tmp_path, capsys):
    p = tmp_path / "junk.wav"
    p.write_bytes(b"garbage bytes")
    code, _, err = run(["analyze", p], capsys)
    assert code == 2 and "RIFF" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze"],
        ["analyze", "x.wav", "--k", "many"],
        ["frobnicate", "x.wav"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


def test_argument_error_exit_1(files, capsys):
    assert run(["analyze", files["noisy"], "--b", 10], capsys)[0] == 1
    assert run(["compare", files["noisy"], files["noisy"], "--alpha", 2], capsys)[0] == 1


def test_missing_file_exit_1(tmp_path, capsys):
    code, _, err = run(["drs", tmp_path / "nope.wav"], capsys)
    assert code == 1 and "nope.wav" in err


def test_drs_examples(files, capsys):
    code, out, _ = run(["drs", files["square"]], capsys)
    assert code == 0
    assert json.loads(out)["drs_db"] == pytest.approx(0.0, abs=1e-9)
    code, out, _ = run(["drs", files["sine"]], capsys)
    assert json.loads(out)["drs_db"] == pytest.approx(3.0103, abs=0.01)
    assert run(["drs", files["sine"], "--window-ms", 5000], capsys)[0] == 1


def test_compress_ratio_one_within_a_step(files, tmp_path, capsys):
    out = tmp_path / "same.wav"
    assert run(["compress", files["noisy"], out, "--threshold", -12, "--ratio", 1], capsys)[0] == 0
    diff = load_wav(out).samples - load_wav(files["noisy"]).samples
    assert np.max(np.abs(diff)) <= 1 / 32768


def test_compress_gain_law_and_sidecar(files, tmp_path, capsys):
    out = tmp_path / "c.wav"
    assert run(["compress", files["tone6"], out, "--threshold", -12, "--ratio", 2], capsys)[0] == 0
    y = load_wav(out).samples
    assert dbfs(rms_power(y[SR // 2 :])) == pytest.approx(-9.0, abs=0.2)
    side = json.loads((tmp_path / "c.wav.json").read_text())
    assert side["clip_count"] == 0
    assert side["compressor"]["ratio"] == 2.0 and side["compressor"]["attack_ms"] == 5.0


def test_compress_rejects_ratio_below_one(files, tmp_path, capsys):
    code, _, err = run(["compress", files["tone6"], tmp_path / "x.wav", "--threshold", -12, "--ratio", 0.5], capsys)
    assert code == 1 and "ratio" in err


def test_compare_with_itself(files, capsys):
    code, out, _ = run(["compare", files["noisy"], files["noisy"], "--shared-seed", "--k", 200], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["mann_whitney"]["two_sided"] >= 0.99
    assert doc["verdict"] == "no shift"


def test_compare_original_vs_heavily_compressed(files, tmp_path, capsys):
    squashed = tmp_path / "squashed.wav"
    run(["compress", files["dynamic"], squashed, "--threshold", -24, "--ratio", 5], capsys)
    code, out, _ = run(["compare", files["dynamic"], squashed], capsys)
    doc = json.loads(out)
    assert doc["mann_whitney"]["first_greater"] <= 0.01
    assert doc["verdict"] == "first more dynamic"
    code, out, _ = run(["compare", squashed, files["dynamic"]], capsys)
    assert json.loads(out)["verdict"] == "second more dynamic"


def test_sweep_csv(files, capsys):
    code, out, _ = run(
        ["sweep", files["dynamic"], "--thresholds", "-12", "--ratios", "1,4", "--k", 60, "--shared-seed"], capsys
    )
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0] == "threshold_db,ratio,mesdr,ci90_lo,ci90_hi,ci95_lo,ci95_hi"
    assert len(lines) == 4
    rows = [l.split(",") for l in lines[1:]]
    assert rows[0][2] == rows[1][2]  # identity cell with a shared seed
    assert "# b=2205" in out and "# shared_seed=True" in out


def test_sweep_json(files, capsys):
    code, out, _ = run(["sweep", files["dynamic"], "--ratios", "2", "--k", 40, "--format", "json"], capsys)
    doc = json.loads(out)
    assert len(doc["rows"]) == 3 and doc["run_config"]["shared_seed"] is False


def test_spectrum(files, capsys):
    code, out, _ = run(["spectrum", files["sine"], "--segment", 2048], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "freq,power_dbfs" and len(lines) == 1026
    levels = np.array([float(l.split(",")[1]) for l in lines[1:]])
    freqs = np.array([float(l.split(",")[0]) for l in lines[1:]])
    assert abs(freqs[np.argmax(levels)] - 1000) < 44100 / 2048


def test_raw_input(tmp_path, capsys):
    p = tmp_path / "x.raw"
    x = (0.5 * np.sin(2 * np.pi * 50 * np.arange(16000) / 8000) * 32767).astype("<i2")
    p.write_bytes(x.tobytes())
    code, out, _ = run(["drs", p, "--raw-rate", 8000], capsys)
    assert code == 0 and json.loads(out)["input"]["sample_rate"] == 8000


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "dynrange.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("analyze", "drs", "compress", "compare", "sweep", "spectrum"):
        assert cmd in res.stdout
