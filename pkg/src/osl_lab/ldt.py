"""Empirical large-deviation measurements and perturbation-continuity runs.

Deviation-set measures are estimated as frequencies over sampled phases
with 95% Wilson intervals; exceptional-set bookkeeping tests, per phase,
the deviation, gap, and bridge-rift conditions that license the
direction-stability estimate at a given scale, plus their union over
shifted phases.  Continuity experiments compare finite-scale Oseledets
data of a perturbed cocycle against the base cocycle at matched phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cocycle, dynamics, oseledets
from ._util import fit_line, parallel_map, wilson_interval
from .grassmann import (NonTransversal, decomposition_distance, flag_distance,
                        project_decomposition, subspace_distance)

EPS_FRACTION = 100.0   # default deviation size: kappa / 100
GAP_RATE = 0.5         # gap threshold exponent: n * kappa / 2
RIFT_RATE = 0.2        # bridge rift threshold exponent: n * kappa / 5
SPEED_RATE = 0.3       # convergence bound exponent: 3 n kappa / 10
NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class DeviationEstimate:
    """Empirical measure of one deviation event with its Wilson interval."""

    scale: int
    epsilon: float
    frequency: float
    low: float
    high: float
    center: float
    samples: int


@dataclass(frozen=True)
class DeviationProfile:
    """Deviation measures over a scales x epsilons grid (shared samples)."""

    scales: tuple
    epsilons: tuple
    measures: tuple       # rows by scale, columns by epsilon
    radii: tuple
    centers: tuple


@dataclass(frozen=True)
class ExceptionalSetReport:
    scale: int
    kappa: float
    eps_n: float
    shifts: int
    frequencies: dict
    intervals: dict
    samples: int


@dataclass(frozen=True)
class SpeedReport:
    scale: int
    reference_scale: int
    bound: float
    noise_floor: float
    violation_fraction: float
    undefined_fraction: float
    distances: tuple


@dataclass(frozen=True)
class ContinuityRecord:
    """Distances between perturbed and base Oseledets data at one size h."""

    h: float
    mean_dist: float
    q90_dist: float
    distances: tuple
    undefined: int
    samples: int


@dataclass(frozen=True)
class ModulusFit:
    alpha: float
    intercept: float
    residual_rms: float
    defined: bool
    reason: str = ""


def fiber_deviation_measure(A, S, n, epsilon, samples, seed, center=None,
                            threads: int = 1) -> DeviationEstimate:
    """Measure of ``{ |(1/n) log ||A^(n)|| - L1^(n)| > epsilon }``.

    The centering value is estimated on an independent sample when not
    supplied, keeping the frequency an honest out-of-sample measurement.
    """
    seed_center, seed_meas = dynamics.spawn_seeds(seed, 2)
    if center is None:
        phases = dynamics.sample_phases(S, samples, seed_center)
        vals = parallel_map(lambda x: cocycle.iterate(A, S, x, n).log_norm / n,
                            phases, threads)
        center = float(np.mean(vals))
    phases = dynamics.sample_phases(S, samples, seed_meas)
    ys = np.asarray(parallel_map(
        lambda x: cocycle.iterate(A, S, x, n).log_norm / n, phases, threads))
    hits = int(np.sum(np.abs(ys - center) > epsilon))
    freq, low, high = wilson_interval(hits, samples)
    return DeviationEstimate(scale=int(n), epsilon=float(epsilon),
                             frequency=freq, low=low, high=high,
                             center=float(center), samples=int(samples))


def base_deviation_measure(S, observable, n, epsilon, samples, seed,
                           mean=None) -> DeviationEstimate:
    """Measure of ``{ |(1/n) S_n xi - <xi>| > epsilon }`` for an observable."""
    seed_mean, seed_meas = dynamics.spawn_seeds(seed, 2)
    if mean is None:
        phases = dynamics.sample_phases(S, 4 * samples, seed_mean)
        draws = [float(np.mean(np.asarray(
            observable(S.orbit_values(x, 1)), dtype=float))) for x in phases]
        mean = float(np.mean(draws))
    phases = dynamics.sample_phases(S, samples, seed_meas)
    ys = np.array([dynamics.birkhoff_average(S, observable, x, n)
                   for x in phases])
    hits = int(np.sum(np.abs(ys - mean) > epsilon))
    freq, low, high = wilson_interval(hits, samples)
    return DeviationEstimate(scale=int(n), epsilon=float(epsilon),
                             frequency=freq, low=low, high=high,
                             center=float(mean), samples=int(samples))


def deviation_profile(A, S, scales, epsilons, samples, seed,
                      threads: int = 1) -> DeviationProfile:
    """Fiber deviation measures over a grid; per scale the samples are shared
    across epsilons, so monotonicity in epsilon is exact."""
    scales = sorted(int(n) for n in scales)
    epsilons = sorted(float(e) for e in epsilons)
    seeds = dynamics.spawn_seeds(seed, 2 * len(scales))
    measures, radii, centers = [], [], []
    for i, n in enumerate(scales):
        phases_c = dynamics.sample_phases(S, samples, seeds[2 * i])
        center = float(np.mean(parallel_map(
            lambda x: cocycle.iterate(A, S, x, n).log_norm / n,
            phases_c, threads)))
        phases = dynamics.sample_phases(S, samples, seeds[2 * i + 1])
        ys = np.asarray(parallel_map(
            lambda x: cocycle.iterate(A, S, x, n).log_norm / n,
            phases, threads))
        row_m, row_r = [], []
        for eps in epsilons:
            hits = int(np.sum(np.abs(ys - center) > eps))
            freq, low, high = wilson_interval(hits, samples)
            row_m.append(freq)
            row_r.append((high - low) / 2.0)
        measures.append(tuple(row_m))
        radii.append(tuple(row_r))
        centers.append(center)
    return DeviationProfile(scales=tuple(scales), epsilons=tuple(epsilons),
                            measures=tuple(measures), radii=tuple(radii),
                            centers=tuple(centers))


def _membership(B, S, x, n, taus, center, eps_n, kappa):
    """(ldt, gap, angle) exceptional-set membership of one phase at scale n."""
    gap_thr = GAP_RATE * kappa * n
    rift_thr = -RIFT_RATE * kappa * n
    base_logs = cocycle.iterate_lognorms(B, S, x, 3 * n)
    ldt = bool(abs(base_logs[n - 1] / n - center) > eps_n)
    gap_fail = False
    angle_fail = False
    for k in taus:
        C = cocycle.exterior_cocycle(B, k)
        if k == 1:
            logs_x = base_logs
        else:
            logs_x = cocycle.iterate_lognorms(C, S, x, 3 * n)
        # gap ratio via gr = ||P||^2 / ||wedge_2 P||, immune to the rounding
        # floor of a direct SVD of the long product
        if C.dim >= 2:
            logs2 = cocycle.iterate_lognorms(
                cocycle.exterior_cocycle(C, 2), S, x, n)
            log_gr = 2.0 * logs_x[n - 1] - logs2[n - 1]
        else:
            log_gr = np.inf
        if not log_gr >= gap_thr:
            gap_fail = True
        logs_shift = cocycle.iterate_lognorms(C, S, S.step(x, n), 2 * n)
        for m in range(n, 2 * n + 1):
            log_rift = logs_x[n + m - 1] - logs_x[n - 1] - logs_shift[m - 1]
            if not log_rift >= rift_thr:
                angle_fail = True
                break
        if gap_fail and angle_fail:
            break
    return ldt, gap_fail, angle_fail


def exceptional_set_frequency(B, S, n, tau, kappa, samples, seed,
                              shifts: int = 8, eps_n=None,
                              threads: int = 1) -> ExceptionalSetReport:
    """Empirical frequencies of the exceptional sets at scale n.

    Sets measured per sampled phase: deviation of the top log norm beyond
    ``eps_n`` (default ``kappa/100``); gap ratio of the n-step iterate
    below ``e^{n kappa/2}``; a bridge-rift failure below ``e^{-n kappa/5}``
    somewhere over the window of second blocks of length n..2n; their
    union; and the union of the latter over ``shifts`` phases advanced by
    multiples of n.  For a multi-gap signature the conditions are imposed
    on every exterior power picked out by tau.
    """
    taus = tuple(int(t) for t in tau) if not isinstance(tau, int) else (tau,)
    taus = taus or (1,)
    if eps_n is None:
        eps_n = kappa / EPS_FRACTION
    seed_center, seed_meas = dynamics.spawn_seeds(seed, 2)
    phases_c = dynamics.sample_phases(S, samples, seed_center)
    center = float(np.mean(parallel_map(
        lambda x: cocycle.iterate(B, S, x, n).log_norm / n, phases_c, threads)))
    phases = dynamics.sample_phases(S, samples, seed_meas)

    def one_phase(x):
        ldt = gap = angle = False
        ap = False
        for i in range(shifts):
            y = S.step(x, i * n) if i else x
            l_i, g_i, a_i = _membership(B, S, y, n, taus, center, eps_n, kappa)
            if i == 0:
                ldt, gap, angle = l_i, g_i, a_i
            if g_i or a_i:
                ap = True
        return ldt, gap, angle, (gap or angle), ap

    rows = parallel_map(one_phase, phases, threads)
    names = ("ldt", "gap", "angle", "gap_angle", "shifted_union")
    freqs, intervals = {}, {}
    for j, name in enumerate(names):
        hits = sum(1 for r in rows if r[j])
        freq, low, high = wilson_interval(hits, samples)
        freqs[name] = freq
        intervals[name] = (low, high)
    return ExceptionalSetReport(scale=int(n), kappa=float(kappa),
                                eps_n=float(eps_n), shifts=int(shifts),
                                frequencies=freqs, intervals=intervals,
                                samples=int(samples))


def speed_of_convergence_check(B, S, n, samples, seed, kappa,
                               n_max=None, noise_floor: float = NOISE_FLOOR,
                               threads: int = 1) -> SpeedReport:
    """Fraction of phases where the direction misses its convergence bound.

    The limit direction is replaced by the direction at ``n_max`` (default
    n^2); the bound is ``e^{-3 n kappa / 10}``.  Distances at or below the
    numerical noise floor are never counted as violations: below the
    resolution of the arithmetic they carry no evidence either way.
    """
    if n_max is None:
        n_max = n * n
    bound = float(np.exp(-SPEED_RATE * kappa * n))
    phases = dynamics.sample_phases(S, samples, seed)

    def one_phase(x):
        cps = cocycle.iterate_checkpoints(B, S, x, [n, n_max])
        sd_n, sd_ref = cps[n].svd(), cps[n_max].svd()
        ok_n = oseledets._log_gap_ratio(sd_n, 1) > np.log1p(1e-9)
        ok_ref = oseledets._log_gap_ratio(sd_ref, 1) > np.log1p(1e-9)
        if not (ok_n and ok_ref):
            return None
        return oseledets.line_distance(sd_n.right[:, 0], sd_ref.right[:, 0])

    dists = parallel_map(one_phase, phases, threads)
    defined = [d for d in dists if d is not None]
    undefined = len(dists) - len(defined)
    violations = sum(1 for d in defined if d > max(bound, noise_floor))
    frac = violations / len(defined) if defined else np.nan
    return SpeedReport(scale=int(n), reference_scale=int(n_max), bound=bound,
                       noise_floor=float(noise_floor),
                       violation_fraction=float(frac),
                       undefined_fraction=float(undefined / len(dists)),
                       distances=tuple(defined))


def _target_object(A, S, x, n, target, tau, theta_min):
    if target == "direction":
        pd = oseledets.finite_direction(A, S, x, n, 1)
        return pd.value if pd.defined else None
    if target == "filtration":
        return oseledets.oseledets_filtration(A, S, x, n, tau)
    if target == "decomposition":
        try:
            out = oseledets.oseledets_decomposition(A, S, x, n, tau, theta_min)
        except NonTransversal:
            return None
        return None if out is None else out[0]
    raise ValueError("target must be direction, filtration, or decomposition")


def _target_distance(obj_a, obj_b, target):
    if target == "direction":
        return subspace_distance(obj_a, obj_b)
    if target == "filtration":
        return flag_distance(obj_a, obj_b)
    return decomposition_distance(obj_a, obj_b)


def continuity_experiment(A, family, h_list, S, n, samples, seed,
                          target: str = "decomposition", tau=(1,),
                          theta_min: float = 1e-8, restrict_from=None,
                          threads: int = 1):
    """Pointwise Oseledets-data distances between A and its perturbations.

    ``family(h)`` must build the perturbed cocycle; its recorded size is
    the max over the sampled phases of ``||B_h(x) - A(x)||`` (the sup-norm
    surrogate, never smaller than any parameter-space reading of h).
    Phases are shared across the whole h grid so records are paired.  With
    ``restrict_from`` set to a finer signature, decomposition targets are
    computed at that signature and projected down to ``tau``.
    """
    h_list = [float(h) for h in h_list]
    taus = tuple(int(t) for t in tau)
    compute_tau = tuple(int(t) for t in restrict_from) if restrict_from else taus
    phases = dynamics.sample_phases(S, samples, seed)

    def objects_for(C):
        def one(x):
            obj = _target_object(C, S, x, n, target, compute_tau, theta_min)
            if (obj is not None and target == "decomposition"
                    and compute_tau != taus):
                obj = project_decomposition(obj, taus)
            return obj
        return parallel_map(one, phases, threads)

    base_objects = objects_for(A)
    records = []
    for h in h_list:
        B = family(h)
        dist_h = cocycle.linf_distance(A, B, phases)
        pert_objects = objects_for(B)
        dists = []
        undefined = 0
        for oa, ob in zip(base_objects, pert_objects):
            if oa is None or ob is None:
                undefined += 1
                continue
            dists.append(_target_distance(oa, ob, target))
        dists = np.asarray(dists, dtype=float)
        mean = float(dists.mean()) if dists.size else np.nan
        q90 = float(np.quantile(dists, 0.9)) if dists.size else np.nan
        records.append(ContinuityRecord(h=float(dist_h), mean_dist=mean,
                                        q90_dist=q90, distances=tuple(dists),
                                        undefined=undefined,
                                        samples=int(samples)))
    return records


def modulus_fit(records) -> ModulusFit:
    """Log-log slope of mean distance against perturbation size.

    Needs at least three records with distinct h and nonzero mean
    distances; an all-zero experiment leaves the exponent undefined.
    """
    pts = [(r.h, r.mean_dist) for r in records
           if r.h > 0 and np.isfinite(r.mean_dist) and r.mean_dist > 0]
    hs = sorted({h for h, _ in pts})
    if len(hs) < 3:
        reason = ("all distances zero or undefined" if not pts
                  else "fewer than three distinct h with nonzero distance")
        return ModulusFit(alpha=np.nan, intercept=np.nan, residual_rms=np.nan,
                          defined=False, reason=reason)
    slope, intercept, rms = fit_line(np.log([h for h, _ in pts]),
                                     np.log([d for _, d in pts]))
    return ModulusFit(alpha=float(slope), intercept=float(intercept),
                      residual_rms=float(rms), defined=True)
