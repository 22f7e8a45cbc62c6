"""Priestley-Chao kernel regression with a correlation-corrected CV bandwidth.

The design points are equispaced, ``t_i = i/m`` for ``i = 1..m``, so the
estimator is a discrete convolution of the data with the sampled kernel

    w_k = K(k / (m h)) / (m h),    |k| < m h

and every routine below works on that weight vector.  Routines with a
leading underscore operate on 2-D arrays (one series per row) and are what
the subsampler uses; the public functions are thin 1-D wrappers.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .errors import ArgumentError, EstimationError

__all__ = [
    "epanechnikov",
    "BandwidthGrid",
    "AutocorrSet",
    "SmoothFit",
    "kernel_weights",
    "interior_mask",
    "priestley_chao_fit",
    "priestley_chao_at",
    "boundary_corrected_fit",
    "residual_dof",
    "residual_autocorr",
    "cv_score",
    "select_bandwidth",
]

Kernel = Callable[[np.ndarray], np.ndarray]

# Above this many taps the FFT path is cheaper than direct summation.
_DIRECT_MAX_TAPS = 48


def epanechnikov(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``[-1, 1]``, zero outside.

    Accepts scalars or arrays; returns the same shape.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BandwidthGrid:
    """Log-spaced bandwidth grid on ``[c1 m^(-1/5), c2 m^(-1/5)]``.

    The upper end is capped at ``h_max`` so that every grid value leaves a
    non-empty estimation interior ``(h, 1 - h)``.
    """

    c1: float = 0.3
    c2: float = 3.0
    points: int = 25
    h_max: float = 0.45

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > self.c1):
            raise ArgumentError(f"need 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")
        if self.points < 2:
            raise ArgumentError(f"grid needs at least 2 points, got {self.points}")
        if not 0 < self.h_max < 0.5:
            raise ArgumentError(f"h_max must lie in (0, 0.5), got {self.h_max}")

    def values(self, m: int) -> np.ndarray:
        """Grid values for a series of length ``m``."""
        scale = m ** -0.2
        lo = self.c1 * scale
        hi = min(self.c2 * scale, self.h_max)
        # the smallest bandwidth must still put a couple of points under the kernel
        lo = max(lo, 2.0 / m)
        if not lo < hi:
            raise ArgumentError(
                f"empty bandwidth range for m={m}: [{lo:.4g}, {hi:.4g}]"
            )
        return np.geomspace(lo, hi, self.points)


@dataclass
class AutocorrSet:
    gamma: np.ndarray
    rho: np.ndarray


@dataclass
class SmoothFit:
    """Result of :func:`select_bandwidth`.

    ``interior`` is a boolean mask over the ``m`` design points; ``fitted``
    and ``residuals`` are restricted to it.
    """

    fitted: np.ndarray
    interior: np.ndarray
    residuals: np.ndarray
    h_hat: float
    cv_curve: np.ndarray
    m_lags: int
    autocorr: AutocorrSet

    def to_dict(self) -> dict:
        return {
            "h_hat": self.h_hat,
            "m_lags": self.m_lags,
            "interior_count": int(self.interior.sum()),
            "residual_mean_square": float(np.mean(self.residuals**2)),
            "cv_curve": [[float(h), float(cv)] for h, cv in self.cv_curve],
        }


def _check_bandwidth(m: int, h: float) -> None:
    if not 0 < h < 0.5:
        raise ArgumentError(f"bandwidth must lie in (0, 0.5), got {h}")
    if m * h < 2:
        raise ArgumentError(f"m*h = {m * h:.3g} < 2: too few points under the kernel")


def kernel_weights(m: int, h: float, kernel: Kernel = epanechnikov) -> np.ndarray:
    """Sampled kernel ``K(k/(mh))/(mh)`` for ``k = -L..L``, ``L = floor(mh)``."""
    mh = m * h
    half = int(math.floor(mh))
    k = np.arange(-half, half + 1, dtype=float)
    return np.asarray(kernel(k / mh), dtype=float) / mh


def interior_mask(m: int, h: float) -> np.ndarray:
    """Design points with ``h < i/m < 1 - h`` (``i = 1..m``)."""
    t = np.arange(1, m + 1) / m
    return (t > h) & (t < 1.0 - h)


def _convolve_rows(Y: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Centered convolution of each row of ``Y`` with an odd-length filter.

    Output has the same shape as ``Y``; samples beyond the row ends count as
    zero, which is what truncated kernel sums at the boundary need.
    """
    half = taps.size // 2
    if taps.size <= _DIRECT_MAX_TAPS:
        padded = np.pad(Y, [(0, 0)] * (Y.ndim - 1) + [(half, half)])
        windows = np.lib.stride_tricks.sliding_window_view(padded, taps.size, axis=-1)
        return windows @ taps[::-1]
    return fftconvolve(Y, taps.reshape((1,) * (Y.ndim - 1) + (-1,)), mode="same", axes=-1)


def _pc_full(Y: np.ndarray, h: float, kernel: Kernel) -> np.ndarray:
    """Priestley-Chao sums at every design point (boundary values truncated)."""
    m = Y.shape[-1]
    return _convolve_rows(Y, kernel_weights(m, h, kernel))


def priestley_chao_fit(y, h: float, kernel: Kernel = epanechnikov) -> np.ndarray:
    """Priestley-Chao estimate at the interior design points.

    Parameters
    ----------
    y : array_like, shape (m,)
        Observations at ``t_i = i/m``.
    h : float
        Bandwidth in ``(0, 0.5)`` with ``m h >= 2``.

    Returns
    -------
    ndarray
        ``s_hat(i/m)`` for the points selected by ``interior_mask(m, h)``.
    """
    y = np.asarray(y, dtype=float)
    m = y.size
    _check_bandwidth(m, h)
    return _pc_full(y, h, kernel)[interior_mask(m, h)]


def priestley_chao_at(y, h: float, t, kernel: Kernel = epanechnikov) -> np.ndarray:
    """Priestley-Chao estimate at arbitrary points ``t`` in ``[0, 1]``.

    Sums only the design points inside the kernel support.  Unlike the
    design-point fit there is no ``m h >= 2`` requirement, so tiny toy
    cases can be checked by hand.
    """
    y = np.asarray(y, dtype=float)
    if not 0 < h < 0.5:
        raise ArgumentError(f"bandwidth must lie in (0, 0.5), got {h}")
    m = y.size
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape)
    for n, tn in enumerate(t.flat):
        lo = max(1, math.ceil((tn - h) * m))
        hi = min(m, math.floor((tn + h) * m))
        i = np.arange(lo, hi + 1)
        out.flat[n] = np.dot(kernel((tn - i / m) / h), y[i - 1]) / (m * h) if i.size else 0.0
    return out


def _boundary_corrected(Y: np.ndarray, h: float, kernel: Kernel) -> np.ndarray:
    m = Y.shape[-1]
    w = kernel_weights(m, h, kernel)
    half = w.size // 2
    k = np.arange(-half, half + 1, dtype=float)
    # conv(y, g)[j] = sum_i y_i g[j - i]; local-linear moments need (i - j) = -k
    t0 = _convolve_rows(Y, w)
    t1 = _convolve_rows(Y, -k * w)
    ones = np.ones(m)
    s0 = _convolve_rows(ones, w)
    s1 = _convolve_rows(ones, -k * w)
    s2 = _convolve_rows(ones, k * k * w)
    edge = ~interior_mask(m, h)
    out = t0.copy()
    det = s0[edge] * s2[edge] - s1[edge] ** 2
    out[..., edge] = (s2[edge] * t0[..., edge] - s1[edge] * t1[..., edge]) / det
    return out


def boundary_corrected_fit(y, h: float, kernel: Kernel = epanechnikov) -> np.ndarray:
    """Fit at all ``m`` design points.

    Interior points get the Priestley-Chao value; the ``(0, h]`` and
    ``[1 - h, 1)`` edges, where the kernel window is truncated, get a
    local-linear fit with the same kernel and bandwidth, whose bias stays
    O(h^2) up to the block edge.
    """
    y = np.asarray(y, dtype=float)
    _check_bandwidth(y.size, h)
    return _boundary_corrected(y, h, kernel)


@functools.lru_cache(maxsize=64)
def residual_dof(m: int, h: float, kernel: Kernel = epanechnikov) -> float:
    """Expected centered residual sum of squares per unit noise variance.

    For the linear smoother ``S`` of :func:`boundary_corrected_fit` this is
    ``tr((I - S)' C (I - S))`` with ``C`` the centering matrix; dividing the
    centered RSS by it gives a variance estimate that is unbiased under
    white noise.  Equals ``m - 1`` when ``S = 0``.
    """
    _check_bandwidth(m, h)
    w = kernel_weights(m, h, kernel)
    half = w.size // 2
    k = np.arange(-half, half + 1)
    inner = interior_mask(m, h)
    idx = np.arange(m)

    # interior rows carry the plain weight vector
    n_in = int(inner.sum())
    frob = n_in * (1.0 - 2.0 * w[half] + np.dot(w, w))
    colsum = _convolve_rows(inner.astype(float), w)

    # edge rows: local-linear weights on the truncated window
    rows = idx[~inner]
    cols = rows[:, None] + k[None, :]
    valid = (cols >= 0) & (cols < m)
    kw = np.where(valid, w[None, :], 0.0)
    s0 = kw.sum(axis=1)
    s1 = kw @ k
    s2 = kw @ (k * k).astype(float)
    B = kw * (s2[:, None] - s1[:, None] * k[None, :]) / (s0 * s2 - s1 * s1)[:, None]
    frob += np.sum(1.0 - 2.0 * B[:, half]) + np.sum(B * B)
    colsum += np.bincount(cols[valid], weights=B[valid], minlength=m)
    return float(frob - np.sum((1.0 - colsum) ** 2) / m)


def _autocov_rows(E: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocovariances (fixed 1/m divisor), lags 0..max_lag, per row."""
    n = E.shape[-1]
    gam = np.empty(E.shape[:-1] + (max_lag + 1,))
    for j in range(max_lag + 1):
        gam[..., j] = np.einsum("...i,...i->...", E[..., : n - j], E[..., j:]) / n
    return gam


def residual_autocorr(residuals, M: int) -> AutocorrSet:
    """Autocovariances and autocorrelations of residuals up to lag ``M``.

    Uses ``gamma(j) = (1/m) sum_{t=1}^{m-j} e_t e_{t+j}`` (no centering, as
    the residuals have zero mean by model).
    """
    e = np.asarray(residuals, dtype=float)
    if M < 0 or M >= e.size / 2:
        raise ArgumentError(f"lag count M={M} must satisfy 0 <= M < {e.size / 2}")
    gam = _autocov_rows(e, M)
    if not gam[0] > 0:
        raise EstimationError("degenerate residuals: zero variance")
    return AutocorrSet(gamma=gam, rho=gam / gam[0])


def lag_count(m: int, h: float) -> int:
    """Autocorrelation cutoff ``M = floor(sqrt(m h))``."""
    return int(math.floor(math.sqrt(m * h)))


def _cv_rows(Y: np.ndarray, h: float, kernel: Kernel, corrected: bool = True):
    """CV(h) for every row of ``Y``.

    Returns ``(cv, fitted, residuals, rho)``.  Rows whose correction bracket
    is not positive get ``+inf``; rows with all-zero residuals get ``nan``.
    ``corrected=False`` keeps only the lag-0 term (independent-error CV).
    """
    m = Y.shape[-1]
    inner = interior_mask(m, h)
    fitted = _pc_full(Y, h, kernel)[..., inner]
    resid = Y[..., inner] - fitted
    n_int = resid.shape[-1]
    M = lag_count(m, h) if corrected else 0
    lags_ok = (M >= 1 or not corrected) and M < n_int / 2
    M = min(M, n_int - 1)
    gam = _autocov_rows(resid, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = gam / gam[..., :1]
    lags = np.arange(-M, M + 1)
    wts = np.asarray(kernel(lags / (m * h)), dtype=float) / (m * h)
    bracket = 1.0 - rho[..., np.abs(lags)] @ wts
    mse = np.mean(resid * resid, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(bracket > 0, mse / bracket**2, np.inf)
    if not lags_ok:
        cv = np.full_like(mse, np.inf)
    cv = np.where(gam[..., 0] > 0, cv, np.nan)
    return cv, fitted, resid, rho


def cv_score(y, h: float, kernel: Kernel = epanechnikov, corrected: bool = True) -> float:
    """Cross-validation criterion with the serial-correlation correction.

        CV(h) = [1 - (1/mh) sum_{|j|<=M} K(j/mh) rho(j)]^-2 * mean(e_i^2)

    with ``M = floor(sqrt(m h))`` and residuals ``e_i`` taken over the
    interior ``(h, 1-h)``.  Returns ``inf`` if the bracket is not positive.
    With ``corrected=False`` the sum is truncated at ``M = 0``.
    """
    y = np.asarray(y, dtype=float)
    m = y.size
    _check_bandwidth(m, h)
    M = lag_count(m, h)
    n_int = int(interior_mask(m, h).sum())
    if corrected and not 1 <= M < n_int / 2:
        raise ArgumentError(f"lag count M={M} invalid for {n_int} interior residuals")
    cv, *_ = _cv_rows(y, h, kernel, corrected)
    if np.isnan(cv):
        raise EstimationError("degenerate residuals: zero variance")
    return float(cv)


def _grid_search_rows(
    Y: np.ndarray, hs: np.ndarray, kernel: Kernel, corrected: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """CV matrix (rows x grid) and the argmin index per row.

    ``argmin`` is ``-1`` for rows where no grid point gave a finite CV.
    Strict comparison keeps the first (smallest) h on ties.
    """
    cvs = np.empty(Y.shape[:-1] + (hs.size,))
    for g, h in enumerate(hs):
        cvs[..., g] = _cv_rows(Y, h, kernel, corrected)[0]
    finite = np.isfinite(cvs)
    masked = np.where(finite, cvs, np.inf)
    best = np.argmin(masked, axis=-1)
    best = np.where(finite.any(axis=-1), best, -1)
    return cvs, best


def select_bandwidth(
    y, grid: BandwidthGrid | None = None, kernel: Kernel = epanechnikov, corrected: bool = True
) -> SmoothFit:
    """Pick ``h`` minimizing CV over ``grid`` and return the fit.

    Every grid value is scored; the first (smallest) ``h`` wins exact ties.
    """
    grid = grid or BandwidthGrid()
    y = np.asarray(y, dtype=float)
    m = y.size
    hs = grid.values(m)
    cvs, best = _grid_search_rows(y, hs, kernel, corrected)
    if best < 0:
        failures = {}
        for h, cv in zip(hs, cvs):
            failures[float(h)] = (
                "zero residual variance" if np.isnan(cv) else "correction bracket <= 0 or too few lags"
            )
        raise EstimationError(f"no valid bandwidth on the grid: {failures}")
    h_hat = float(hs[best])
    cv, fitted, resid, rho = _cv_rows(y, h_hat, kernel, corrected)
    M = lag_count(m, h_hat) if corrected else 0
    gam = _autocov_rows(resid, M)
    return SmoothFit(
        fitted=fitted,
        interior=interior_mask(m, h_hat),
        residuals=resid,
        h_hat=h_hat,
        cv_curve=np.column_stack([hs, cvs]),
        m_lags=M,
        autocorr=AutocorrSet(gamma=gam, rho=rho),
    )
