"""Finite-scale Oseledets data: directions, avalanche times, filtrations.

The most expanding direction of the n-th iterate is a partial function
(defined only when the relevant singular gap ratios exceed 1); the
filtration is assembled from orthogonal complements of those directions,
the decomposition from the transversal intersection of the adjoint flag
with the complemented forward flag.  Avalanche schedules certify, along a
single orbit, the gap and rift hypotheses that make successive directions
provably close.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import floor, log2

import numpy as np

from . import cocycle
from ._util import fit_line
from .grassmann import (Flag, Subspace, complement_flag, intersect,
                        subspace_distance, transversality)
from .linalg import (GAP_TOLERANCE, ScaledMatrix, SingularData,
                     plane_from_top_wedge, svd)

DISTANCE_FLOOR = 1e-15


class InfeasibleRange(ValueError):
    """The requested scale range admits no doubling sequence."""


class NoSchedule(RuntimeError):
    """No admissible avalanche-time adjustment exists for this phase."""

    def __init__(self, level, condition, detail=""):
        self.level = level
        self.condition = condition
        super().__init__(f"no avalanche schedule: {condition} fails at level "
                         f"{level} {detail}")


class HypothesisFailure(ValueError):
    """A chain violates the gap/angle hypotheses of the direction estimate."""

    def __init__(self, index, condition):
        self.index = index
        self.condition = condition
        super().__init__(f"hypothesis {condition!r} fails at chain index {index}")


def line_distance(u, v) -> float:
    """Projective distance between unit vectors: sine of the angle.

    Computed as the norm of the rejection of u from v, which keeps full
    absolute accuracy near zero (sqrt(1 - cos^2) would floor at ~1e-8).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = u - float(np.dot(u, v)) * v
    return float(min(1.0, np.linalg.norm(w)))


@dataclass(frozen=True)
class PartialDirection:
    """Most expanding subspace/flag of an iterate, when the gap allows it."""

    defined: bool
    value: object
    scale: int
    gap_ratio: float
    signature: tuple


@dataclass(frozen=True)
class AvalancheSchedule:
    """Certified times along one orbit where the two-block estimates hold."""

    times: tuple
    eps: float
    kappa: float
    gap_logs: tuple        # log gr(A^(m_i)(x)) per time
    bridge_gap_logs: tuple  # log gr of each bridge block
    rift_logs: tuple       # log rift of each consecutive pair


@dataclass(frozen=True)
class APReport:
    """Both direction-stability distances of a chain, against kappa/eps."""

    length: int
    front_distance: float
    back_distance: float
    bound: float
    measured_constant: float
    min_gap_ratio: float
    min_rift: float


@dataclass(frozen=True)
class ResidualReport:
    kind: str
    scale: int
    residuals: tuple
    collapsed: tuple

    @property
    def max_residual(self):
        finite = [r for r in self.residuals if np.isfinite(r)]
        return max(finite) if finite else np.nan


@dataclass(frozen=True)
class GrowthReport:
    scales: tuple
    values: tuple          # (1/n) log ||A^(n) v||
    slope: float           # regression rate of log ||A^(n) v|| per step
    last_value: float
    upper_rate: float      # max of tail consecutive slopes
    lower_rate: float
    annihilated: bool


@dataclass(frozen=True)
class ConvergenceReport:
    scales: tuple
    reference_scale: int
    distances: tuple       # per component: tuple of (n, distance)
    slopes: tuple          # per component; -inf when fully converged
    deep_rates: tuple      # per component: (1/n) log d at the deepest
    #                        measurable scale; the prefactor noise shrinks
    #                        like 1/n, so this is the steadiest rate read


@dataclass(frozen=True)
class AlignmentSeries:
    scales: tuple
    values: tuple          # (1/n) log alpha, None where undefined
    final: float


def _normalize_tau(tau):
    if isinstance(tau, (int, np.integer)):
        return (int(tau),), True
    return tuple(int(t) for t in tau), False


def _log_gap_ratio(sd: SingularData, k: int) -> float:
    s = sd.values
    with np.errstate(divide="ignore"):
        logs = np.log(s)
    hi, lo = logs[k - 1], logs[k]
    if lo == -np.inf:
        return np.inf if hi > -np.inf else np.nan
    return float(hi - lo)


def _wedge_orders(taus, m):
    return sorted({k for t in taus for k in (t - 1, t, t + 1)
                   if 1 <= k <= m})


def _wedge_log_gap(wedges, k, m) -> float:
    """``log gr_k`` through the norm ladder ``2 L_k - L_{k-1} - L_{k+1}``.

    Each exterior power carries its own renormalized accumulator, so this
    stays exact at depths where a single SVD of the assembled product
    would have hit the rounding floor long ago.
    """
    lk = wedges[k].log_norm
    if lk == -np.inf:
        return np.nan
    lkm = wedges[k - 1].log_norm if k > 1 else 0.0
    lkp = wedges[k + 1].log_norm if k + 1 <= m else -np.inf
    if lkp == -np.inf:
        return np.inf
    return 2.0 * lk - lkm - lkp


def _component_from_wedge(wedge: ScaledMatrix, k, m, adjoint=False) -> Subspace:
    sd = wedge.svd()
    omega = sd.left[:, 0] if adjoint else sd.right[:, 0]
    return plane_from_top_wedge(omega, m, k)


def _direction_from_wedges(wedges, taus, single, n, m,
                           adjoint=False) -> PartialDirection:
    ratios = []
    for k in taus:
        lg = _wedge_log_gap(wedges, k, m)
        ratios.append(np.nan if np.isnan(lg) else np.exp(min(700.0, lg)))
    achieved = float(min(ratios)) if ratios else np.inf
    if any(np.isnan(r) for r in ratios):
        achieved = np.nan
    if not achieved > 1.0 + GAP_TOLERANCE:
        return PartialDirection(False, None, n, achieved, taus)
    comps = tuple(_component_from_wedge(wedges[k], k, m, adjoint)
                  for k in taus)
    if single:
        value = comps[0]
    elif taus:
        value = Flag(taus, comps, ambient=m)
    else:
        value = Flag.trivial(m)
    return PartialDirection(True, value, n, achieved, taus)


def finite_direction(A, S, x, n, tau) -> PartialDirection:
    """Most expanding direction data of the n-step iterate at x.

    ``tau`` may be a single dimension k (returns a Subspace) or a
    signature (returns a Flag).  An insufficient gap is recorded as
    ``defined=False``, never raised.  Every component is recovered from
    the top direction of its exterior-power product, so arbitrarily deep
    scales stay numerically meaningful.
    """
    taus, single = _normalize_tau(tau)
    if not taus:
        return PartialDirection(True, Flag.trivial(A.dim), n, np.inf, taus)
    wedges = cocycle.iterate_wedges(A, S, x, [n],
                                    _wedge_orders(taus, A.dim))[n]
    return _direction_from_wedges(wedges, taus, single, n, A.dim)


def doubling_sequence(n0: int, n: int, eps: float):
    """Integer times from n0 to n with each step within eps of doubling.

    Uses ``m_i = floor(n0 * 2^{(1+theta) i})`` with theta chosen so the
    last time lands exactly on n.  Raises InfeasibleRange when the
    constructed sequence cannot satisfy the doubling tolerance (guaranteed
    feasible for ``n / n0`` beyond a threshold growing like ``2^{1/eps}``).
    """
    n0, n = int(n0), int(n)
    if n0 < 1 or n < 2 * n0:
        raise InfeasibleRange(f"need n >= 2*n0, got n0={n0}, n={n}")
    k = int(floor(log2(n / n0)))
    theta = log2(n / n0) / k - 1.0
    times = [min(n, int(floor(n0 * 2.0 ** ((1.0 + theta) * i))))
             for i in range(k + 1)]
    times[0], times[-1] = n0, n
    for prev, cur in zip(times, times[1:]):
        if not abs(cur - 2 * prev) < eps * cur:
            raise InfeasibleRange(
                f"step {prev}->{cur} misses the {eps}-doubling tolerance; "
                "increase n/n0 or eps")
    return times


def avalanche_times(A, S, x, eps, kappa, n0, n) -> AvalancheSchedule:
    """Search for a doubling sequence of times with certified gaps and rifts.

    Each interior time may move within ``eps * m / 6`` of its nominal
    doubling value (scanned outward); a time is accepted when the iterate
    gap, the bridge-block gap, and the pair rift all clear their
    exponential thresholds.  Raises NoSchedule when some level has no
    admissible time (the phase behaves as an exceptional point).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if kappa <= 0.0:
        raise ValueError("kappa must be a positive gap estimate")
    # nominal times take 2/3 of the doubling budget; the +-eps*m/6
    # adjustments then keep the final schedule inside eps.  Ranges with
    # n/n0 near a power of two are always feasible; other ratios need the
    # slack that only large n/n0 provides.
    nominal = doubling_sequence(n0, n, 2.0 * eps / 3.0)
    candidates = [[nominal[0]]]
    for i, m in enumerate(nominal[1:-1], start=1):
        radius = int(floor(eps * m / 6.0))
        order = [m]
        for r in range(1, radius + 1):
            order.extend((m + r, m - r))
        candidates.append([c for c in order if n0 < c < n])
    candidates.append([nominal[-1]])

    needed = sorted({c for level in candidates for c in level})
    # gap ratios of long products through the norm identity
    # gr = ||P||^2 / ||wedge_2 P||: each accumulator is renormalized
    # separately, so the measurement never hits the rounding floor that a
    # single SVD of the product factor would.
    wedge2 = cocycle.exterior_cocycle(A, 2) if A.dim >= 2 else None
    prefix = cocycle.iterate_checkpoints(A, S, x, needed)
    prefix2 = (cocycle.iterate_checkpoints(wedge2, S, x, needed)
               if wedge2 else None)
    rate = kappa - 2.0 * eps
    bridge_rate = rate * (1.0 - eps) / (1.0 + eps)

    def log_gap(norms, norms2, key):
        if norms2 is None:
            return np.inf
        return 2.0 * norms[key].log_norm - norms2[key].log_norm

    times = [n0]
    gap_logs = []
    bridge_logs = []
    rift_logs = []
    g0 = log_gap(prefix, prefix2, n0)
    if not g0 >= n0 * rate:
        raise NoSchedule(0, "gap", f"(time {n0})")
    gap_logs.append(g0)

    for level in range(1, len(candidates)):
        prev = times[-1]
        offsets = sorted({c - prev for c in candidates[level] if c > prev})
        if not offsets:
            raise NoSchedule(level, "range")
        shifted = S.step(x, prev)
        bridges = cocycle.iterate_checkpoints(A, S, shifted, offsets)
        bridges2 = (cocycle.iterate_checkpoints(wedge2, S, shifted, offsets)
                    if wedge2 else None)
        accepted = None
        for c in candidates[level]:
            if c <= prev:
                continue
            gap_c = log_gap(prefix, prefix2, c)
            bridge_gap = log_gap(bridges, bridges2, c - prev)
            log_rift = (prefix[c].log_norm - prefix[prev].log_norm
                        - bridges[c - prev].log_norm)
            if (gap_c >= c * rate
                    and bridge_gap >= prev * bridge_rate
                    and log_rift >= -5.0 * prev * eps):
                accepted = (c, gap_c, bridge_gap, log_rift)
                break
        if accepted is None:
            raise NoSchedule(level, "gap/rift")
        c, gap_c, bridge_gap, log_rift = accepted
        times.append(c)
        gap_logs.append(gap_c)
        bridge_logs.append(bridge_gap)
        rift_logs.append(log_rift)

    for prev, cur in zip(times, times[1:]):
        if not abs(cur - 2 * prev) < eps * cur:
            raise NoSchedule(times.index(cur), "doubling")
    return AvalancheSchedule(times=tuple(times), eps=eps, kappa=kappa,
                             gap_logs=tuple(gap_logs),
                             bridge_gap_logs=tuple(bridge_logs),
                             rift_logs=tuple(rift_logs))


def ap_check(chain, kappa_ap: float, eps_ap: float,
             admission_c: float = 0.01) -> APReport:
    """Verify the two-sided direction-stability estimate on a matrix chain.

    Hypotheses: every gap ratio exceeds ``1/kappa_ap``, every consecutive
    rift exceeds ``eps_ap``, and ``kappa_ap <= admission_c * eps_ap**2``.
    When they hold, both conclusion distances (product direction vs the
    first block, adjoint product direction vs the last block) are computed
    from the exact renormalized product and reported against the bound
    ``kappa_ap / eps_ap``; the measured constant is never assumed.
    """
    chain = [np.asarray(g, dtype=float) for g in chain]
    if not chain:
        raise ValueError("ap_check needs a nonempty chain")
    if not (0.0 < eps_ap < 1.0 and kappa_ap > 0.0):
        raise ValueError("need 0 < eps_ap < 1 and kappa_ap > 0")
    if kappa_ap > admission_c * eps_ap ** 2 * (1.0 + 1e-12):
        raise HypothesisFailure(None, "kappa exceeds admission_c * eps^2")

    sds = [svd(g) for g in chain]
    min_gap = np.inf
    for i, sd in enumerate(sds):
        gr = np.exp(min(700.0, _log_gap_ratio(sd, 1)))
        min_gap = min(min_gap, gr)
        if not gr > 1.0 / kappa_ap:
            raise HypothesisFailure(i, "gap")
    min_rift = np.inf
    norms = [sd.values[0] for sd in sds]
    for i in range(1, len(chain)):
        r = float(np.linalg.norm(chain[i] @ chain[i - 1], 2)
                  / (norms[i] * norms[i - 1]))
        min_rift = min(min_rift, r)
        if not r > eps_ap:
            raise HypothesisFailure(i, "angle")

    product = ScaledMatrix.from_matrix(chain[0])
    for g in chain[1:]:
        product = ScaledMatrix.from_matrix(g) @ product
    psd = product.svd()
    front = line_distance(psd.right[:, 0], sds[0].right[:, 0])
    back = line_distance(psd.left[:, 0], sds[-1].left[:, 0])
    bound = kappa_ap / eps_ap
    return APReport(length=len(chain), front_distance=front,
                    back_distance=back, bound=float(bound),
                    measured_constant=float(max(front, back) / bound),
                    min_gap_ratio=float(min_gap), min_rift=float(min_rift))


def oseledets_filtration(A, S, x, n, tau):
    """Finite-scale filtration: complements of the most expanding flag.

    Returns a Flag with the complementary signature, components ordered by
    increasing dimension, or None when the gap condition fails ("undefined"
    in the partial-function sense).  The empty signature yields the trivial
    filtration.
    """
    pd = finite_direction(A, S, x, n, tau)
    if not pd.defined:
        return None
    flag = pd.value if isinstance(pd.value, Flag) else Flag(
        pd.signature, (pd.value,), ambient=A.dim)
    return complement_flag(flag)


def oseledets_decomposition(A, S, x, n, tau, theta_min: float = 1e-8):
    """Finite-scale splitting: adjoint flag intersected with the complement.

    Returns ``(Decomposition, theta)`` where theta is the transversality of
    the two flags, None when either flag is undefined at this scale, and
    raises NonTransversal when theta falls at or below ``theta_min``.
    """
    taus, _ = _normalize_tau(tau)
    fwd = finite_direction(A, S, x, n, taus)
    if not fwd.defined:
        return None
    # the adjoint products are the transposed products at T^{-n}x, so the
    # adjoint flag reads the top left wedge directions there
    back_wedges = cocycle.iterate_wedges(A, S, S.step(x, -n), [n],
                                         _wedge_orders(taus, A.dim))[n]
    star = _direction_from_wedges(back_wedges, taus, False, n, A.dim,
                                  adjoint=True)
    if not star.defined:
        return None
    star_flag = star.value
    perp = complement_flag(fwd.value)
    theta = transversality(star_flag, perp)
    dec = intersect(star_flag, perp, theta_min)
    return dec, float(theta)


def invariance_residual(A, S, x, n, tau, kind: str = "decomposition",
                        theta_min: float = 1e-8):
    """Distance between pushed-forward components at x and components at Tx.

    Near-kernel collapse of a component under A(x) is reported in the
    ``collapsed`` flags (residual NaN) rather than raised.  Returns None
    when the object is undefined at either endpoint.
    """
    if kind == "decomposition":
        here = oseledets_decomposition(A, S, x, n, tau, theta_min)
        there = oseledets_decomposition(A, S, S.step(x, 1), n, tau, theta_min)
        if here is None or there is None:
            return None
        comps_x, comps_tx = here[0].components, there[0].components
    elif kind == "filtration":
        fx = oseledets_filtration(A, S, x, n, tau)
        ftx = oseledets_filtration(A, S, S.step(x, 1), n, tau)
        if fx is None or ftx is None:
            return None
        comps_x, comps_tx = fx.components, ftx.components
    else:
        raise ValueError("kind must be 'decomposition' or 'filtration'")

    g = np.asarray(A.generator(x), dtype=float)
    gnorm = float(np.linalg.norm(g, 2))
    residuals, collapsed = [], []
    for cx, ctx in zip(comps_x, comps_tx):
        image = g @ cx.basis
        smin = np.linalg.svd(image, compute_uv=False)[-1]
        if smin <= 1e-12 * max(1.0, gnorm):
            residuals.append(np.nan)
            collapsed.append(True)
            continue
        q, _ = np.linalg.qr(image)
        residuals.append(subspace_distance(Subspace(q), ctx))
        collapsed.append(False)
    return ResidualReport(kind=kind, scale=int(n),
                          residuals=tuple(residuals),
                          collapsed=tuple(collapsed))


def growth_rate_along(A, S, x, v, n_list) -> GrowthReport:
    """Exponential growth of ||A^(n)(x) v|| measured at the given scales.

    The slope is the least-squares rate of the log norm per step; the
    upper/lower rates are the extreme consecutive slopes over the tail
    half of the checkpoints (surrogates for limsup/liminf).  A vector
    annihilated along the orbit reports -inf.
    """
    n_list = sorted(int(n) for n in n_list)
    if n_list[0] < 1:
        raise ValueError("scales must be positive")
    logs = cocycle.vector_growth_lognorms(A, S, x, v, n_list[-1])
    series = np.array([logs[n - 1] for n in n_list])
    if np.any(series == -np.inf):
        return GrowthReport(scales=tuple(n_list),
                            values=tuple(series / np.array(n_list)),
                            slope=-np.inf, last_value=-np.inf,
                            upper_rate=-np.inf, lower_rate=-np.inf,
                            annihilated=True)
    slope, _, _ = fit_line(n_list, series) if len(n_list) > 1 else (np.nan, 0, 0)
    steps = np.diff(n_list)
    consec = np.diff(series) / steps if len(n_list) > 1 else np.array([])
    tail = consec[len(consec) // 2:] if consec.size else np.array([np.nan])
    return GrowthReport(scales=tuple(n_list),
                        values=tuple(float(s) / n for s, n in zip(series, n_list)),
                        slope=float(slope),
                        last_value=float(series[-1] / n_list[-1]),
                        upper_rate=float(np.max(tail)),
                        lower_rate=float(np.min(tail)),
                        annihilated=False)


def convergence_rate(A, S, x, tau, n_list,
                     floor: float = DISTANCE_FLOOR) -> ConvergenceReport | None:
    """Decay rate of distances to the direction at the largest scale.

    For each flag component, fits ``log d(v^(n), v^(n_max))`` against n over
    the scales where the direction is defined and the distance is above
    the numerical floor.  All-converged components report a -inf slope;
    an undefined reference direction makes the whole result None.  The
    reference replaces the (unknowable) limit direction, so the fitted
    slope is an upper-bound proxy for the true rate.
    """
    taus, _ = _normalize_tau(tau)
    n_list = sorted(int(n) for n in n_list)
    n_max = n_list[-1]
    by_scale = cocycle.iterate_wedges(A, S, x, n_list,
                                      _wedge_orders(taus, A.dim))
    all_dists, slopes, deep_rates = [], [], []
    for k in taus:
        if not _wedge_log_gap(by_scale[n_max], k, A.dim) > np.log1p(
                GAP_TOLERANCE):
            return None
        ref = _component_from_wedge(by_scale[n_max][k], k, A.dim)
        pts = []
        for n in n_list[:-1]:
            if not _wedge_log_gap(by_scale[n], k, A.dim) > np.log1p(
                    GAP_TOLERANCE):
                continue
            comp = _component_from_wedge(by_scale[n][k], k, A.dim)
            pts.append((n, subspace_distance(comp, ref)))
        all_dists.append(tuple(pts))
        usable = [(n, d) for n, d in pts if d > floor]
        if len(usable) >= 2:
            slope, _, _ = fit_line([n for n, _ in usable],
                                   np.log([d for _, d in usable]))
            slopes.append(float(slope))
        elif pts:
            slopes.append(-np.inf)  # converged below the floor everywhere
        else:
            slopes.append(np.nan)
        if usable:
            n_star, d_star = usable[-1]
            deep_rates.append(float(np.log(d_star) / n_star))
        elif pts:
            deep_rates.append(-np.inf)
        else:
            deep_rates.append(np.nan)
    return ConvergenceReport(scales=tuple(n_list), reference_scale=n_max,
                             distances=tuple(all_dists), slopes=tuple(slopes),
                             deep_rates=tuple(deep_rates))


def alpha_alignment_series(A, S, x, n_list) -> AlignmentSeries:
    """Per-step log alignment between adjoint and forward directions at T^n x.

    The adjoint direction at T^n x is the top left singular direction of
    the iterate at x; the forward direction is the top right singular
    direction of the iterate starting at T^n x.  Under a spectral gap the
    series tends to zero.
    """
    n_list = sorted(int(n) for n in n_list)
    cps = cocycle.iterate_checkpoints(A, S, x, n_list)
    values = []
    final = np.nan
    for n in n_list:
        sd = cps[n].svd()
        if not _log_gap_ratio(sd, 1) > np.log1p(GAP_TOLERANCE):
            values.append(None)
            continue
        shifted = cocycle.iterate(A, S, S.step(x, n), n)
        sd2 = shifted.value.svd()
        if not _log_gap_ratio(sd2, 1) > np.log1p(GAP_TOLERANCE):
            values.append(None)
            continue
        a = abs(float(np.dot(sd.left[:, 0], sd2.right[:, 0])))
        val = -np.inf if a == 0.0 else float(np.log(a) / n)
        values.append(val)
        final = val
    return AlignmentSeries(scales=tuple(n_list), values=tuple(values),
                           final=float(final))
