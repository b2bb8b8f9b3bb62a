"""Shared helpers: deterministic parallel mapping, intervals, line fits."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

Z_95 = 1.959963984540054


def parallel_map(fn, items, threads: int = 1):
    """Map preserving order; results are independent of the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def wilson_interval(successes: int, trials: int, z: float = Z_95):
    """95% Wilson score interval: returns (frequency, low, high)."""
    if trials <= 0:
        raise ValueError("wilson_interval needs trials >= 1")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    radius = (z / denom) * np.sqrt(phat * (1 - phat) / trials
                                   + z * z / (4 * trials * trials))
    return phat, max(0.0, center - radius), min(1.0, center + radius)


def fit_line(xs, ys):
    """Least-squares slope/intercept with the residual RMS."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise ValueError("need at least two points to fit a line")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2)))


def mean_and_stderr(values):
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / np.sqrt(arr.size))
