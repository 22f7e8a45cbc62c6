"""Random-block subsampling of residual variances and the MeSDR statistic.

A run draws ``K`` block starts up front, smooths each length-``b`` block
with its own CV-selected bandwidth, and keeps the variance of the block
residuals.  Per-block loudness is ``dr = -10 log10(variance)``; the median
of those values, shifted by the headroom term ``20 log10(peak)``, is the
Median Stochastic Dynamic Range (MeSDR).
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ArgumentError, EstimationError
from .smoother import (
    BandwidthGrid,
    Kernel,
    _boundary_corrected,
    _grid_search_rows,
    epanechnikov,
    residual_dof,
)

__all__ = [
    "SubsampleConfig",
    "BlockVariance",
    "BlockVarianceSample",
    "DrReport",
    "draw_blocks",
    "block_variance",
    "subsample_distribution",
    "empirical_quantile",
    "median_ci",
    "mesdr",
    "mann_whitney",
    "DEFAULT_QUANTILES",
]

MIN_BLOCK = 50
# Blocks are processed in fixed-size chunks so results never depend on the
# number of worker threads.
CHUNK = 64
THREADS_ENV = "DYNRANGE_THREADS"
DEFAULT_QUANTILES = (0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95)


@dataclass(frozen=True)
class SubsampleConfig:
    """Parameters of the random subsampling scheme.

    ``b`` defaults to 2205 samples (50 ms at 44.1 kHz) and ``K`` to 500.
    ``dof_correction`` selects the residual-variance divisor: the smoother's
    residual degrees of freedom (default) or the plain ``b - 1``.
    """

    b: int = 2205
    K: int = 500
    seed: int = 0
    replacement: bool = False
    dof_correction: bool = True

    def __post_init__(self):
        if self.b < MIN_BLOCK:
            raise ArgumentError(f"block length b={self.b} is below the minimum {MIN_BLOCK}")
        if self.K < 1:
            raise ArgumentError(f"K must be positive, got {self.K}")
        if self.seed < 0:
            raise ArgumentError(f"seed must be non-negative, got {self.seed}")

    def check(self, n: int) -> None:
        """Validate against a signal of ``n`` samples (``b <= n`` suffices to draw)."""
        if self.b > n:
            raise ArgumentError(f"block length b={self.b} exceeds the signal length n={n}")
        if not self.replacement and self.K > n - self.b + 1:
            raise ArgumentError(
                f"cannot draw K={self.K} distinct blocks from {n - self.b + 1} start positions"
            )


class BlockVariance(NamedTuple):
    variance: float
    h_hat: float
    degenerate: bool


@dataclass
class BlockVarianceSample:
    """Per-block results in draw order.

    ``starts`` are zero-based sample offsets.  Degenerate (constant) blocks
    have variance 0 and ``dr = +inf``; blocks where no bandwidth was valid
    carry ``nan``.
    """

    starts: np.ndarray
    variances: np.ndarray
    dr_values: np.ndarray
    per_block_h: np.ndarray
    degenerate: np.ndarray
    config: SubsampleConfig

    @property
    def n_degenerate(self) -> int:
        return int(self.degenerate.sum())

    @property
    def n_failed(self) -> int:
        return int(np.isnan(self.variances).sum())

    def finite_dr(self) -> np.ndarray:
        return self.dr_values[np.isfinite(self.dr_values)]

    def to_dict(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {
            "config": asdict(self.config),
            "starts": [int(s) for s in self.starts],
            "variances": clean(self.variances),
            "dr_values": clean(self.dr_values),
            "per_block_h": clean(self.per_block_h),
            "degenerate": [bool(d) for d in self.degenerate],
        }


@dataclass
class DrReport:
    mesdr: float
    headroom_correction: float
    quantiles: dict
    ci90: tuple | None
    ci95: tuple | None
    n_blocks: int
    n_degenerate: int
    n_failed: int = 0
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mesdr": self.mesdr,
            "headroom_correction": self.headroom_correction,
            "quantiles": {f"{g:g}": v for g, v in self.quantiles.items()},
            "ci90": list(self.ci90) if self.ci90 else None,
            "ci95": list(self.ci95) if self.ci95 else None,
            "n_blocks": self.n_blocks,
            "n_degenerate": self.n_degenerate,
            "n_failed": self.n_failed,
            "warnings": list(self.warnings),
            "config": self.config,
        }


def draw_blocks(n: int, cfg: SubsampleConfig) -> np.ndarray:
    """Draw ``K`` zero-based block starts uniformly from ``0..n-b``."""
    cfg.check(n)
    rng = np.random.default_rng(cfg.seed)
    n_starts = n - cfg.b + 1
    if cfg.replacement:
        return rng.integers(0, n_starts, size=cfg.K)
    return rng.choice(n_starts, size=cfg.K, replace=False)


def _block_variances(Y, grid: BandwidthGrid, dof_correction: bool, kernel: Kernel):
    """Variance, bandwidth and degeneracy flag for each row of ``Y``."""
    k, b = Y.shape
    variances = np.full(k, np.nan)
    h_hat = np.full(k, np.nan)
    degenerate = np.ptp(Y, axis=1) == 0
    variances[degenerate] = 0.0
    live = np.flatnonzero(~degenerate)
    if live.size == 0:
        return variances, h_hat, degenerate

    hs = grid.values(b)
    _, best = _grid_search_rows(Y[live], hs, kernel)
    for g in np.unique(best[best >= 0]):
        rows = live[best == g]
        h = float(hs[g])
        resid = Y[rows] - _boundary_corrected(Y[rows], h, kernel)
        resid -= resid.mean(axis=1, keepdims=True)
        rss = np.einsum("ij,ij->i", resid, resid)
        divisor = residual_dof(b, h, kernel) if dof_correction else b - 1
        variances[rows] = rss / divisor
        h_hat[rows] = h
    return variances, h_hat, degenerate


def block_variance(
    block,
    grid: BandwidthGrid | None = None,
    dof_correction: bool = True,
    kernel: Kernel = epanechnikov,
) -> BlockVariance:
    """Residual variance of one block after smoothing at its CV bandwidth.

    Constant blocks are legitimate (digital silence): they return
    variance 0 with ``degenerate=True`` instead of raising.
    """
    y = np.asarray(block, dtype=float)
    if y.ndim != 1 or y.size < MIN_BLOCK:
        raise ArgumentError(f"block must be 1-D with at least {MIN_BLOCK} samples")
    var, h, deg = _block_variances(y[None, :], grid or BandwidthGrid(), dof_correction, kernel)
    if np.isnan(var[0]):
        raise EstimationError("no valid bandwidth on the grid for this block")
    return BlockVariance(float(var[0]), float(h[0]), bool(deg[0]))


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))
    return max(1, threads)


def subsample_distribution(
    signal,
    cfg: SubsampleConfig | None = None,
    grid: BandwidthGrid | None = None,
    threads: int | None = None,
    kernel: Kernel = epanechnikov,
) -> BlockVarianceSample:
    """Empirical distribution of block residual variances over random blocks.

    Parameters
    ----------
    signal : Signal or array_like
        Mono samples.
    cfg : SubsampleConfig
        Block length, number of blocks, seed, sampling scheme.
    grid : BandwidthGrid
        Bandwidth grid constants; values are rescaled with ``m = b``.
    threads : int, optional
        Worker cap; defaults to ``$DYNRANGE_THREADS`` or the CPU count.
        The output does not depend on it.
    """
    cfg = cfg or SubsampleConfig()
    grid = grid or BandwidthGrid()
    x = np.asarray(getattr(signal, "samples", signal), dtype=float)
    if not cfg.b < x.size:
        raise ArgumentError(f"block length b={cfg.b} must be shorter than the signal (n={x.size})")
    starts = draw_blocks(x.size, cfg)
    offsets = np.arange(cfg.b)

    def work(chunk):
        return _block_variances(x[chunk[:, None] + offsets], grid, cfg.dof_correction, kernel)

    chunks = [starts[i : i + CHUNK] for i in range(0, starts.size, CHUNK)]
    n_workers = min(_resolve_threads(threads), len(chunks))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]

    variances = np.concatenate([p[0] for p in parts])
    h_hat = np.concatenate([p[1] for p in parts])
    degenerate = np.concatenate([p[2] for p in parts])
    with np.errstate(divide="ignore"):
        dr = -10.0 * np.log10(variances)
    if degenerate.mean() > 0.5:
        warnings.warn(
            f"{degenerate.sum()} of {degenerate.size} blocks are silent", RuntimeWarning, stacklevel=2
        )
    return BlockVarianceSample(
        starts=starts,
        variances=variances,
        dr_values=dr,
        per_block_h=h_hat,
        degenerate=degenerate,
        config=cfg,
    )


def empirical_quantile(values, gamma: float) -> float:
    """``inf {x : F_K(x) >= gamma}`` for the empirical CDF ``F_K``.

    That is the order statistic ``x_(k)`` with ``k`` the smallest integer
    such that ``k/K >= gamma``.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ArgumentError("empirical quantile of an empty sample")
    if not 0 < gamma <= 1:
        raise ArgumentError(f"quantile level must lie in (0, 1], got {gamma}")
    # tolerance keeps gamma*K = 2.0000000000000004 from rounding up a rank
    k = math.ceil(gamma * v.size - 1e-9)
    return float(v[max(k, 1) - 1])


def median_ci(dr_values, level: float = 0.90) -> tuple[float, float]:
    """Distribution-free confidence interval for the median.

    With ``z`` the standard normal ``(1 + level)/2`` quantile, returns the
    order statistics of rank ``floor(K/2 - z sqrt(K)/2)`` and
    ``ceil(K/2 + z sqrt(K)/2) + 1`` (1-based, clipped to ``[1, K]``).
    """
    v = np.sort(np.asarray(dr_values, dtype=float).ravel())
    K = v.size
    if K < 30:
        raise ArgumentError(f"median CI needs at least 30 values, got {K}")
    if not 0 < level < 1:
        raise ArgumentError(f"confidence level must lie in (0, 1), got {level}")
    lo_rank, hi_rank = median_ci_ranks(K, level)
    return float(v[lo_rank - 1]), float(v[hi_rank - 1])


def median_ci_ranks(K: int, level: float) -> tuple[int, int]:
    z = NormalDist().inv_cdf((1 + level) / 2)
    half = z * math.sqrt(K) / 2
    lo = math.floor(K / 2 - half)
    hi = math.ceil(K / 2 + half) + 1
    return min(max(lo, 1), K), min(max(hi, 1), K)


def mesdr(
    sample: BlockVarianceSample,
    peak: float = 1.0,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
) -> DrReport:
    """Median Stochastic Dynamic Range with quantiles and median CIs.

    Every reported level includes the headroom term ``20 log10(peak)``,
    which is zero for a wave whose largest sample sits at full scale.
    Silent blocks are excluded and counted.
    """
    dr = sample.finite_dr()
    if dr.size == 0:
        raise EstimationError(
            f"all {sample.dr_values.size} blocks are degenerate (silent); no MeSDR"
        )
    if not peak > 0:
        raise ArgumentError(f"peak must be positive, got {peak}")
    headroom = 20.0 * math.log10(peak)
    notes = []
    if sample.n_degenerate > 0.5 * sample.dr_values.size:
        notes.append(f"{sample.n_degenerate} of {sample.dr_values.size} blocks are silent")
    if sample.n_failed:
        notes.append(f"{sample.n_failed} blocks had no valid bandwidth")
    ci90 = ci95 = None
    if dr.size >= 30:
        ci90 = tuple(c + headroom for c in median_ci(dr, 0.90))
        ci95 = tuple(c + headroom for c in median_ci(dr, 0.95))
    else:
        notes.append(f"only {dr.size} finite blocks: confidence intervals omitted")
    return DrReport(
        mesdr=empirical_quantile(dr, 0.5) + headroom,
        headroom_correction=headroom,
        quantiles={g: empirical_quantile(dr, g) + headroom for g in sorted(quantiles)},
        ci90=ci90,
        ci95=ci95,
        n_blocks=int(sample.dr_values.size),
        n_degenerate=sample.n_degenerate,
        n_failed=sample.n_failed,
        warnings=notes,
        config=asdict(sample.config),
    )


# -- Mann-Whitney rank-sum test --------------------------------------------

_ALTERNATIVES = {
    "two-sided": "two-sided",
    "greater": "greater",
    "a-greater": "greater",
    "less": "less",
    "a-less": "less",
}
EXACT_MAX = 20


def _u_null_counts(n1: int, n2: int) -> np.ndarray:
    """Number of rank arrangements giving each U in ``0..n1*n2`` (no ties)."""
    # counts[j][u] for samples of size (i, j); iterate over i
    counts = [np.zeros(n1 * n2 + 1) for _ in range(n2 + 1)]
    for j in range(n2 + 1):
        counts[j][0] = 1.0
    for i in range(1, n1 + 1):
        new = [np.zeros(n1 * n2 + 1) for _ in range(n2 + 1)]
        new[0][0] = 1.0
        for j in range(1, n2 + 1):
            # largest observation belongs to sample a (adds j to U) or to b
            new[j][j:] += counts[j][: n1 * n2 + 1 - j]
            new[j] += new[j - 1]
        counts = new
    return counts[n2]


def _rank_sum(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="mergesort")
    ranks = np.empty(pooled.size)
    sorted_vals = pooled[order]
    # midranks for ties
    _, first, counts = np.unique(sorted_vals, return_index=True, return_counts=True)
    mid = first + (counts + 1) / 2.0
    ranks[order] = np.repeat(mid, counts)
    return float(ranks[: a.size].sum()), counts


def mann_whitney(a, b, alternative: str = "two-sided") -> float:
    """p-value of the Mann-Whitney rank-sum test of ``a`` against ``b``.

    ``alternative`` is ``"two-sided"``, ``"greater"`` (``a`` shifted right of
    ``b``) or ``"less"``.  Exact null distribution when both samples have at
    most 20 values and there are no ties; otherwise the normal approximation
    with tie-corrected variance and continuity correction.
    """
    try:
        alt = _ALTERNATIVES[alternative]
    except KeyError:
        raise ArgumentError(f"unknown alternative {alternative!r}") from None
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ArgumentError("both samples must be non-empty")
    n1, n2 = a.size, b.size
    rank_sum, tie_counts = _rank_sum(a, b)
    u = rank_sum - n1 * (n1 + 1) / 2.0
    ties = bool(np.any(tie_counts > 1))

    if max(n1, n2) <= EXACT_MAX and not ties:
        counts = _u_null_counts(n1, n2)
        total = counts.sum()
        ui = int(round(u))
        p_less = counts[: ui + 1].sum() / total
        p_greater = counts[ui:].sum() / total
    else:
        n = n1 + n2
        mu = n1 * n2 / 2.0
        tie_term = np.sum(tie_counts**3 - tie_counts) / (n * (n - 1))
        sd = math.sqrt(n1 * n2 / 12.0 * ((n + 1) - tie_term))
        if sd == 0:
            return 1.0
        p_greater = 0.5 * math.erfc((u - mu - 0.5) / sd / math.sqrt(2))
        p_less = 0.5 * math.erfc(-(u - mu + 0.5) / sd / math.sqrt(2))

    if alt == "greater":
        return float(min(1.0, p_greater))
    if alt == "less":
        return float(min(1.0, p_less))
    return float(min(1.0, 2.0 * min(p_less, p_greater)))
