"""Command-line interface: ``dynrange <command> [options] input...``.

Exit codes: 0 success, 1 bad arguments, 2 undecodable audio, 3 estimation
failure (e.g. every block silent).  Messages go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import load_pcm, peak, trim_silence, write_wav16
from .compressor import (
    DEFAULT_RATIOS,
    DEFAULT_THRESHOLDS,
    CompressorConfig,
    compress,
    compression_sweep,
    sweep_to_csv,
)
from .errors import ArgumentError, DecodeError, DynRangeError, EstimationError
from .power_metrics import DrsConfig, block_rms, periodogram, sequential_dr
from .smoother import BandwidthGrid
from .subsampler import SubsampleConfig, mann_whitney, mesdr, subsample_distribution

DEFAULT_B_MS = 50.0
DEFAULT_K = 500
EXIT_CODES = {ArgumentError: 1, DecodeError: 2, EstimationError: 3}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; that code is reserved for decode errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--channel", type=int, default=0, help="channel index to analyse (default: 0)")
    g.add_argument("--trim-db", type=float, default=None,
                   help="trim leading/trailing 10 ms frames at or below this dBFS level (default: no trim)")
    g.add_argument("--raw-rate", type=int, default=None,
                   help="treat input as headerless PCM at this sample rate")
    g.add_argument("--raw-bits", type=int, default=16, choices=(16, 24, 32),
                   help="raw PCM sample width (default: 16)")
    g.add_argument("--raw-channels", type=int, default=1, help="raw PCM channel count (default: 1)")
    o = p.add_argument_group("output")
    o.add_argument("--format", choices=("json", "csv"), default=None,
                   help="output format (default: json; csv for sweep and spectrum)")
    o.add_argument("--out", default=None, help="write the result here instead of stdout")


def _estimation(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimation")
    g.add_argument("--seed", type=int, default=0, help="RNG seed for block draws (default: 0)")
    g.add_argument("--b", type=int, default=None,
                   help=f"block length in samples (default: {DEFAULT_B_MS:g} ms at the input rate, 2205 at 44.1 kHz)")
    g.add_argument("--k", type=int, default=DEFAULT_K, help=f"number of random blocks (default: {DEFAULT_K})")
    g.add_argument("--c1", type=float, default=0.3, help="bandwidth grid lower constant (default: 0.3)")
    g.add_argument("--c2", type=float, default=3.0, help="bandwidth grid upper constant (default: 3.0)")
    g.add_argument("--grid-points", type=int, default=25, help="bandwidth grid size (default: 25)")
    g.add_argument("--with-replacement", action="store_true", help="draw block starts with replacement")
    g.add_argument("--threads", type=int, default=None,
                   help="worker cap (default: $DYNRANGE_THREADS or the CPU count); results do not depend on it")


def _compressor_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("compressor")
    g.add_argument("--env-ms", type=float, default=10.0, help="RMS envelope window (default: 10 ms)")
    g.add_argument("--attack-ms", type=float, default=5.0, help="attack time (default: 5 ms)")
    g.add_argument("--release-ms", type=float, default=100.0, help="release time (default: 100 ms)")
    g.add_argument("--makeup-db", type=float, default=0.0, help="makeup gain (default: 0 dB)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynrange", description="Stochastic dynamic range of PCM audio.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="MeSDR with confidence bands for one input")
    p.add_argument("input")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the report")
    _common(p)
    _estimation(p)

    p = sub.add_parser("compare", help="Mann-Whitney comparison of two inputs")
    p.add_argument("first")
    p.add_argument("second")
    p.add_argument("--shared-seed", action="store_true",
                   help="draw blocks with the same seed for both inputs (default: seed and seed+1)")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level for the verdict (default: 0.05)")
    _common(p)
    _estimation(p)

    p = sub.add_parser("drs", help="sequential DR from windowed RMS")
    p.add_argument("input")
    p.add_argument("--window-ms", type=float, default=50.0, help="window length (default: 50 ms)")
    p.add_argument("--overlap", type=float, default=0.5, help="window overlap fraction (default: 0.5)")
    _common(p)

    p = sub.add_parser("compress", help="apply the compressor and write a 16-bit WAV")
    p.add_argument("input")
    p.add_argument("output", help="output WAV path; a .json sidecar is written next to it")
    p.add_argument("--threshold", type=float, required=True, help="threshold in dBFS")
    p.add_argument("--ratio", type=float, required=True, help="compression ratio (>= 1)")
    _common(p)
    _compressor_args(p)

    p = sub.add_parser("sweep", help="MeSDR over a grid of thresholds and ratios")
    p.add_argument("input")
    p.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS),
                   help="comma-separated dBFS thresholds (default: -12,-24)")
    p.add_argument("--ratios", type=_floats, default=list(DEFAULT_RATIOS),
                   help="comma-separated ratios (default: 1.5,2,...,5)")
    p.add_argument("--shared-seed", action="store_true",
                   help="reuse the seed in every cell (default: cell i uses seed+i)")
    _common(p)
    _estimation(p)
    _compressor_args(p)

    p = sub.add_parser("spectrum", help="averaged Hann periodogram in dBFS")
    p.add_argument("input")
    p.add_argument("--segment", type=int, default=1024, help="segment length in samples (default: 1024)")
    p.add_argument("--overlap", type=int, default=None, help="segment overlap in samples (default: half)")
    _common(p)
    return parser


# -- helpers ---------------------------------------------------------------

def _load(args, path):
    sig = load_pcm(path, args.channel, raw_rate=args.raw_rate, raw_bits=args.raw_bits,
                   raw_channels=args.raw_channels)
    if args.trim_db is not None:
        sig = trim_silence(sig, args.trim_db)
    return sig


def _input_info(sig) -> dict:
    info = {"source": sig.source, "sample_rate": sig.sample_rate, "n_samples": len(sig)}
    if "trimmed" in sig.metadata:
        info["trimmed"] = sig.metadata["trimmed"]
        info["trim_rule"] = f"10 ms frames at or below {sig.metadata['trim_threshold_db']:g} dBFS"
    return info


def _subsample_config(args, sample_rate: int, seed: int | None = None):
    if args.b is None:
        b = int(round(DEFAULT_B_MS * sample_rate / 1000.0))
        b_note = f"{DEFAULT_B_MS:g}ms default"
    else:
        b, b_note = args.b, "user"
    cfg = SubsampleConfig(b=b, K=args.k, seed=args.seed if seed is None else seed,
                          replacement=args.with_replacement)
    grid = BandwidthGrid(c1=args.c1, c2=args.c2, points=args.grid_points)
    return cfg, grid, b_note


def _run_config(args, cfg: SubsampleConfig | None = None, b_note: str | None = None) -> dict:
    """Effective parameters after defaults, echoed into every artifact."""
    skip = {"first", "second", "input", "output", "out"}
    out = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if cfg is not None:
        out["b"] = cfg.b
        out["b_source"] = b_note
    return out


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _analyse(args, sig, seed=None):
    cfg, grid, b_note = _subsample_config(args, sig.sample_rate, seed)
    sample = subsample_distribution(sig, cfg, grid, threads=args.threads)
    return sample, mesdr(sample, peak(sig)), b_note, cfg


# -- commands --------------------------------------------------------------

def cmd_analyze(args) -> None:
    t0 = time.perf_counter()
    sig = _load(args, args.input)
    sample, report, b_note, cfg = _analyse(args, sig)
    elapsed = time.perf_counter() - t0
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start", "variance", "dr", "dr_corrected", "h_hat", "degenerate"])
        for s, v, d, h, g in zip(sample.starts, sample.variances, sample.dr_values,
                                 sample.per_block_h, sample.degenerate):
            w.writerow([int(s), repr(float(v)), repr(float(d)),
                        repr(float(d + report.headroom_correction)), repr(float(h)), int(g)])
        text = buf.getvalue()
    else:
        out = {"input": _input_info(sig), "report": report.to_dict(),
               "run_config": _run_config(args, cfg, b_note)}
        if args.timing:
            out["elapsed_s"] = round(elapsed, 3)
        text = _json(out)
    _emit(args, text)
    print(f"analysed {sample.config.K} blocks of {sample.config.b} samples in {elapsed:.2f} s",
          file=sys.stderr)


def _verdict(p_greater: float, p_less: float, alpha: float) -> str:
    if p_greater <= alpha and p_greater <= p_less:
        return "first more dynamic"
    if p_less <= alpha:
        return "second more dynamic"
    return "no shift"


def cmd_compare(args) -> None:
    if not 0 < args.alpha < 1:
        raise ArgumentError(f"alpha must lie in (0, 1), got {args.alpha}")
    sig_a = _load(args, args.first)
    sig_b = _load(args, args.second)
    seed_b = args.seed if args.shared_seed else args.seed + 1
    sample_a, rep_a, b_note, cfg = _analyse(args, sig_a)
    sample_b, rep_b, _, _ = _analyse(args, sig_b, seed_b)
    # compare headroom-corrected levels so both sit on the same full-scale reference
    dr_a = sample_a.finite_dr() + rep_a.headroom_correction
    dr_b = sample_b.finite_dr() + rep_b.headroom_correction
    p_two = mann_whitney(dr_a, dr_b, "two-sided")
    p_greater = mann_whitney(dr_a, dr_b, "greater")
    p_less = mann_whitney(dr_a, dr_b, "less")
    out = {
        "first": {"input": _input_info(sig_a), "report": rep_a.to_dict()},
        "second": {"input": _input_info(sig_b), "report": rep_b.to_dict()},
        "mann_whitney": {"two_sided": p_two, "first_greater": p_greater, "first_less": p_less},
        "alpha": args.alpha,
        "verdict": _verdict(p_greater, p_less, args.alpha),
        "run_config": _run_config(args, cfg, b_note),
    }
    _emit(args, _json(out))


def cmd_drs(args) -> None:
    sig = _load(args, args.input)
    if not 0 <= args.overlap < 1:
        raise ArgumentError(f"overlap fraction must lie in [0, 1), got {args.overlap}")
    cfg = DrsConfig.from_ms(sig.sample_rate, args.window_ms, args.overlap)
    value = sequential_dr(sig, cfg)
    n_blocks = block_rms(sig.samples, cfg).size
    if args.format == "csv":
        text = f"drs_db,blocks,window_len,hop\n{value!r},{n_blocks},{cfg.window_len},{cfg.hop}\n"
    else:
        text = _json({"input": _input_info(sig), "drs_db": value, "blocks": n_blocks,
                      "window_len": cfg.window_len, "hop": cfg.hop, "run_config": _run_config(args)})
    _emit(args, text)


def _compressor_config(args, threshold, ratio) -> CompressorConfig:
    return CompressorConfig(threshold_db=threshold, ratio=ratio, env_window_ms=args.env_ms,
                            attack_ms=args.attack_ms, release_ms=args.release_ms,
                            makeup_db=args.makeup_db)


def cmd_compress(args) -> None:
    sig = _load(args, args.input)
    cfg = _compressor_config(args, args.threshold, args.ratio)
    out = compress(sig, cfg)
    quantised = write_wav16(args.output, out)
    sidecar = {
        "input": _input_info(sig),
        "output": str(args.output),
        "compressor": asdict(cfg),
        "clip_count": out.metadata["clip_count"],
        "quantisation_clips": quantised,
        "run_config": _run_config(args),
    }
    text = _json(sidecar)
    Path(str(args.output) + ".json").write_text(text)
    if args.out:
        Path(args.out).write_text(text)


def cmd_sweep(args) -> None:
    sig = _load(args, args.input)
    cfg, grid, b_note = _subsample_config(args, sig.sample_rate)
    extra = {"env_window_ms": args.env_ms, "attack_ms": args.attack_ms,
             "release_ms": args.release_ms, "makeup_db": args.makeup_db}
    rows = compression_sweep(sig, args.thresholds, args.ratios, cfg, grid,
                             shared_seed=args.shared_seed, compressor_defaults=extra,
                             threads=args.threads)
    run = _run_config(args, cfg, b_note)
    if args.format == "json":
        text = _json({"input": _input_info(sig), "rows": rows, "run_config": run})
    else:
        text = sweep_to_csv(rows, {"source": sig.source, **run})
    _emit(args, text)


def cmd_spectrum(args) -> None:
    sig = _load(args, args.input)
    spec = periodogram(sig.samples, sig.sample_rate, args.segment, args.overlap)
    if args.format == "json":
        text = _json({"input": _input_info(sig), **spec.to_dict(), "run_config": _run_config(args)})
    else:
        buf = io.StringIO()
        spec.to_csv(buf)
        text = buf.getvalue()
    _emit(args, text)


COMMANDS = {
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "drs": cmd_drs,
    "compress": cmd_compress,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except DynRangeError as exc:
        code = next((c for cls, c in EXIT_CODES.items() if isinstance(exc, cls)), 1)
        print(f"dynrange {args.command}: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"dynrange {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
