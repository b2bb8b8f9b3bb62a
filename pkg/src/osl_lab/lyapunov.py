"""Finite-scale Lyapunov spectrum estimation and growth diagnostics.

The i-th exponent at scale n is estimated through exterior-power norms,
``L_i = (log ||wedge_i A^(n)|| - log ||wedge_{i-1} A^(n)||) / n``, averaged
over sampled phases.  This composes with the renormalized log accumulators,
so no scale ever overflows.  A per-step average below -700 nats is reported
as -inf and poisons every exponent below it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cocycle, dynamics
from ._util import fit_line, mean_and_stderr, parallel_map

NEG_INF_CUTOFF = -700.0
DEFAULT_GAP_FLOOR = 0.05
GAP_SE_MULTIPLE = 5.0


@dataclass(frozen=True)
class SpectrumEstimate:
    """Sampled finite-scale spectrum, nonincreasing, in nats per step."""

    scale: int
    values: tuple
    std_errors: tuple
    sample_count: int

    @property
    def dim(self):
        return len(self.values)

    def gaps(self):
        """Consecutive differences L_i - L_{i+1} (zero where both are -inf)."""
        v = np.asarray(self.values)
        out = []
        for a, b in zip(v[:-1], v[1:]):
            if a == -np.inf and b == -np.inf:
                out.append(0.0)
            else:
                out.append(float(a - b))
        return tuple(out)


@dataclass(frozen=True)
class GapPattern:
    """Detected signature of spectral gaps and whether it is exact."""

    signature: tuple
    gap: float
    exact: bool
    threshold: tuple


@dataclass(frozen=True)
class FeketeReport:
    inf_ratio: float
    last_ratio: float
    limit_gap: float
    violations: tuple
    pairs_checked: int


@dataclass(frozen=True)
class LpBoundReport:
    p: object
    scales: tuple
    values: tuple
    uniform: bool
    trend_slope: float


def estimate_L1(A, S, n, samples, seed, threads: int = 1):
    """Mean of ``(1/n) log ||A^(n)(x)||`` over sampled phases.

    Returns ``(value, std_error)``; a zero product in any sample flags the
    whole estimate as ``(-inf, nan)``.
    """
    phases = dynamics.sample_phases(S, samples, seed)
    vals = parallel_map(lambda x: cocycle.iterate(A, S, x, n).log_norm / n,
                        phases, threads)
    arr = np.asarray(vals, dtype=float)
    if np.any(arr == -np.inf):
        return -np.inf, np.nan
    return mean_and_stderr(arr)


def _sample_exponents(A, S, x, n):
    w = cocycle.iterate_exterior_lognorms(A, S, x, n)
    levels = np.concatenate(([0.0], w))
    out = np.diff(levels) / n
    for i in range(out.size):
        if not np.isfinite(out[i]) or out[i] < NEG_INF_CUTOFF:
            out[i:] = -np.inf
            break
    return out


def estimate_spectrum(A, S, n, samples, seed, threads: int = 1) -> SpectrumEstimate:
    """All m finite-scale exponents from the exterior-power norm ladder."""
    phases = dynamics.sample_phases(S, samples, seed)
    rows = parallel_map(lambda x: _sample_exponents(A, S, x, n), phases, threads)
    data = np.vstack(rows)
    values, errors = [], []
    for i in range(A.dim):
        col = data[:, i]
        if np.any(col == -np.inf):
            values.append(-np.inf)
            errors.append(np.nan)
        else:
            mean, se = mean_and_stderr(col)
            values.append(mean)
            errors.append(se)
    values = np.minimum.accumulate(np.asarray(values))  # enforce ordering
    return SpectrumEstimate(scale=int(n), values=tuple(float(v) for v in values),
                            std_errors=tuple(float(e) for e in errors),
                            sample_count=int(samples))


def detect_gap_pattern(estimate: SpectrumEstimate, threshold=None,
                       equality_tolerance=None) -> GapPattern:
    """Signature of indices whose spectral gap clears the detection threshold.

    The default threshold guards against Monte Carlo noise:
    ``max(0.05, 5 * combined std_error)`` per adjacent pair.  The pattern
    is exact when every undetected gap is an equality up to the (stricter)
    equality tolerance, default half the detection threshold; gaps caught
    between the two tolerances mark an inexact pattern.  Adding a constant
    to every exponent changes nothing.
    """
    gaps = estimate.gaps()
    ses = estimate.std_errors
    thresholds = []
    for j in range(len(gaps)):
        if threshold is not None:
            thresholds.append(float(threshold))
            continue
        pair = np.array([ses[j], ses[j + 1]], dtype=float)
        combined = float(np.sqrt(np.nansum(pair ** 2)))
        thresholds.append(max(DEFAULT_GAP_FLOOR, GAP_SE_MULTIPLE * combined))
    tau = tuple(j + 1 for j, g in enumerate(gaps) if g > thresholds[j])
    eq_tol = [0.5 * t if equality_tolerance is None else float(equality_tolerance)
              for t in thresholds]
    exact = all(g <= eq_tol[j] for j, g in enumerate(gaps)
                if (j + 1) not in tau)
    gap = min((gaps[t - 1] for t in tau), default=0.0)
    return GapPattern(signature=tau, gap=float(gap), exact=bool(exact),
                      threshold=tuple(thresholds))


def fekete_diagnostic(sequence) -> FeketeReport:
    """Check subadditivity ``a_{n+m} <= a_n + a_m`` on all available pairs.

    Violations are listed with their magnitude; for sampled data they
    indicate estimator noise, not a failure of subadditivity.
    """
    table = {int(n): float(a) for n, a in sequence}
    ns = sorted(table)
    if not ns or ns[0] < 1:
        raise ValueError("fekete_diagnostic needs positive scales")
    violations = []
    checked = 0
    for i, n in enumerate(ns):
        for m in ns[i:]:
            if n + m not in table:
                continue
            checked += 1
            excess = table[n + m] - table[n] - table[m]
            if excess > 0.0:
                violations.append((n, m, float(excess)))
    ratios = {n: table[n] / n for n in ns}
    inf_ratio = min(ratios.values())
    last_ratio = ratios[ns[-1]]
    return FeketeReport(inf_ratio=float(inf_ratio), last_ratio=float(last_ratio),
                        limit_gap=float(last_ratio - inf_ratio),
                        violations=tuple(violations), pairs_checked=checked)


def lp_bound_estimate(A, S, n_list, samples, seed, p=2,
                      threads: int = 1) -> LpBoundReport:
    """Empirical L^p size of ``(1/n) log ||A^(n)||`` across scales.

    ``p`` may be 1, 2, or the string "inf" (max over samples).  The
    uniformity flag trips when the values trend upward across scales by
    more than 2 standard errors of the fitted slope.
    """
    if p not in (1, 2, "inf"):
        raise ValueError("p must be 1, 2 or 'inf'")
    n_list = sorted(int(n) for n in n_list)
    seeds = dynamics.spawn_seeds(seed, len(n_list))
    values = []
    for n, s in zip(n_list, seeds):
        phases = dynamics.sample_phases(S, samples, s)
        ys = np.abs(parallel_map(
            lambda x: cocycle.iterate(A, S, x, n).log_norm / n, phases, threads))
        ys = np.asarray(ys, dtype=float)
        if p == "inf":
            values.append(float(ys.max()))
        else:
            values.append(float(np.mean(ys ** p) ** (1.0 / p)))
    if len(n_list) >= 3:
        slope, _, rms = fit_line(np.log(n_list), values)
        se = rms / max(1e-12, float(np.std(np.log(n_list))) * np.sqrt(len(n_list)))
        uniform = not (slope > 0 and slope > 2.0 * se)
    else:
        slope, uniform = 0.0, True
    return LpBoundReport(p=p, scales=tuple(n_list),
                         values=tuple(values), uniform=bool(uniform),
                         trend_slope=float(slope))


def cauchy_gap(A, S, n, samples, seed, threads: int = 1) -> float:
    """Empirical proxy for finite-scale bias: ``|L1^(2n) - L1^(n)|``.

    Both estimates share the sample seed, so the gap reflects scale
    dependence rather than sampling noise.
    """
    a, _ = estimate_L1(A, S, n, samples, seed, threads)
    b, _ = estimate_L1(A, S, 2 * n, samples, seed, threads)
    return abs(b - a)
