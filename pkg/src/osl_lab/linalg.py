"""Matrix primitives built on the singular value decomposition.

Conventions fixed package-wide: the matrix norm is the operator (spectral)
norm; singular values are nonincreasing; right singular vectors get a
canonical sign (largest-magnitude coordinate positive) so projectively
defined quantities are stable across runs; exterior powers use the
lexicographic ordering of k-element index subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .grassmann import Flag, Subspace, check_signature

GAP_TOLERANCE = 1e-9
UNDERFLOW = 1e-300
PINV_RCOND = 1e-13


class DegenerateGap(ValueError):
    """Requested most-expanding subspace has no singular value gap."""

    def __init__(self, k, ratio):
        self.k = k
        self.ratio = ratio
        super().__init__(f"gap ratio {ratio!r} at index {k} leaves the "
                         "most expanding subspace undefined")


class ZeroMatrix(ValueError):
    """Operation undefined on (a pair of) zero matrices."""


def _require_square(g):
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix has non-finite entries")
    return g


@dataclass(frozen=True, eq=False)
class SingularData:
    """Full SVD ``g = left @ diag(values) @ right.T`` with canonical signs."""

    values: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def dim(self):
        return self.values.shape[0]

    def reconstruct(self):
        return self.left @ np.diag(self.values) @ self.right.T


def svd(g) -> SingularData:
    g = _require_square(g)
    u, s, vt = np.linalg.svd(g)
    v = vt.T
    for j in range(v.shape[1]):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]
            u[:, j] = -u[:, j]
    return SingularData(values=s, left=u, right=v)


def operator_norm(g) -> float:
    g = _require_square(g)
    return float(np.linalg.svd(g, compute_uv=False)[0])


def _singular_values(g):
    if isinstance(g, SingularData):
        return g.values
    return np.linalg.svd(_require_square(g), compute_uv=False)


def gap_ratio(g, k: int) -> float:
    """``s_k / s_{k+1}`` (1-based); +inf when only the denominator underflows."""
    s = _singular_values(g)
    m = s.shape[0]
    if not 1 <= k < m:
        raise ValueError(f"gap index k={k} out of range for dim {m}")
    hi, lo = s[k - 1], s[k]
    if lo <= UNDERFLOW:
        return np.inf if hi > UNDERFLOW else np.nan
    return float(hi / lo)


def gap_ratio_signature(g, tau) -> float:
    """``min_j gap_ratio(g, tau_j)``; +inf for the empty signature."""
    s = _singular_values(g)
    tau = check_signature(tau, s.shape[0])
    if not tau:
        return np.inf
    return min(gap_ratio(SingularData(s, None, None), t) for t in tau)


def most_expanding(g, k: int, gap_tolerance: float = GAP_TOLERANCE) -> Subspace:
    """Span of the top-k right singular vectors; defined only under a gap."""
    sd = g if isinstance(g, SingularData) else svd(g)
    ratio = gap_ratio(SingularData(sd.values, None, None), k)
    if not ratio > 1.0 + gap_tolerance:
        raise DegenerateGap(k, ratio)
    return Subspace(sd.right[:, :k].copy())


def most_expanding_flag(g, tau, gap_tolerance: float = GAP_TOLERANCE) -> Flag:
    """Nested most expanding subspaces at each dimension of the signature."""
    sd = g if isinstance(g, SingularData) else svd(g)
    tau = check_signature(tau, sd.dim)
    for t in tau:
        ratio = gap_ratio(SingularData(sd.values, None, None), t)
        if not ratio > 1.0 + gap_tolerance:
            raise DegenerateGap(t, ratio)
    comps = tuple(Subspace(sd.right[:, :t].copy()) for t in tau)
    return Flag(tau, comps, ambient=sd.dim)


@lru_cache(maxsize=None)
def index_subsets(m: int, k: int):
    """Lexicographic k-element subsets of range(m); the exterior-power basis order."""
    return tuple(combinations(range(m), k))


def exterior_power(g, k: int):
    """Compound matrix of k x k minors, on the lexicographic subset basis.

    Accepts stacked input of shape (..., m, m) and returns
    (..., C(m,k), C(m,k)).  ``k = 0`` gives the scalar 1, ``k = m`` the
    determinant.
    """
    g = np.asarray(g, dtype=float)
    m = g.shape[-1]
    if g.shape[-2] != m:
        raise ValueError("exterior_power expects square matrices")
    if not 0 <= k <= m:
        raise ValueError(f"exterior power order k={k} out of range for dim {m}")
    if k == 0:
        return np.ones(g.shape[:-2] + (1, 1))
    if k == 1:
        return g.copy()
    subsets = index_subsets(m, k)
    c = len(subsets)
    out = np.empty(g.shape[:-2] + (c, c))
    rows = [np.array(sub) for sub in subsets]
    for a, ia in enumerate(rows):
        for b, jb in enumerate(rows):
            out[..., a, b] = np.linalg.det(g[..., ia[:, None], jb[None, :]])
    return out


def exterior_dim(m: int, k: int) -> int:
    return comb(m, k)


def plane_from_top_wedge(omega, m: int, k: int) -> Subspace:
    """k-plane in R^m recovered from its (decomposable) top wedge vector.

    Contracts omega against every (k-1)-subset of the coordinate basis; for
    a decomposable unit wedge the resulting vectors span exactly the plane,
    and the span extraction is accurate to roundoff at any scale.  This is
    how deep flag components of long products are reconstructed: the
    assembled product factor loses every singular direction below the
    rounding floor, while each exterior-power product keeps its own top
    direction pristine.
    """
    omega = np.asarray(omega, dtype=float).ravel()
    if k == 1:
        return Subspace(omega[:, None] / np.linalg.norm(omega))
    subsets = index_subsets(m, k)
    pos = {J: a for a, J in enumerate(subsets)}
    cols = np.zeros((m, comb(m, k - 1)))
    for c, K in enumerate(index_subsets(m, k - 1)):
        for i in range(m):
            if i in K:
                continue
            J = tuple(sorted(K + (i,)))
            cols[i, c] = ((-1.0) ** J.index(i)) * omega[pos[J]]
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    return Subspace(u[:, :k])


def pseudo_inverse(g, rcond: float = PINV_RCOND):
    """Moore-Penrose inverse with a relative singular-value cutoff."""
    sd = svd(g)
    s = sd.values
    cutoff = rcond * (s[0] if s[0] > 0 else 1.0)
    inv = np.where(s > cutoff, np.divide(1.0, s, where=s > 0), 0.0)
    return sd.right @ np.diag(inv) @ sd.left.T


def rift(g0, g1) -> float:
    """Expansion rift ``||g1 g0|| / (||g1|| ||g0||)`` in (0, 1]."""
    g0 = _require_square(g0)
    g1 = _require_square(g1)
    n0 = operator_norm(g0)
    n1 = operator_norm(g1)
    if n0 <= 0.0 or n1 <= 0.0:
        raise ZeroMatrix("rift undefined for zero matrices")
    return operator_norm(g1 @ g0) / (n0 * n1)


def relative_distance(g1, g2) -> float:
    """``||g1 - g2||`` over the larger of the two norms."""
    g1 = _require_square(g1)
    g2 = _require_square(g2)
    scale = max(operator_norm(g1), operator_norm(g2))
    if scale <= 0.0:
        raise ZeroMatrix("relative distance undefined for two zero matrices")
    return operator_norm(g1 - g2) / scale


@dataclass(frozen=True, eq=False)
class ScaledMatrix:
    """A matrix split as ``exp(log_scale) * factor`` with ``||factor|| ~ 1``.

    The factor's operator norm is kept inside [1/2, 2] (renormalization
    divides by the exact operator norm, so it is 1 up to roundoff), which
    makes arbitrarily long cocycle products representable.
    """

    factor: np.ndarray
    log_scale: float

    def __post_init__(self):
        object.__setattr__(self, "factor", np.asarray(self.factor, dtype=float))

    @classmethod
    def identity(cls, m):
        return cls(np.eye(m), 0.0)

    @classmethod
    def from_matrix(cls, g):
        g = _require_square(g)
        s = operator_norm(g)
        if s < UNDERFLOW:
            return cls(np.zeros_like(g), -np.inf)
        return cls(g / s, float(np.log(s)))

    @property
    def dim(self):
        return self.factor.shape[0]

    @property
    def log_norm(self) -> float:
        if self.log_scale == -np.inf:
            return -np.inf
        return self.log_scale + float(np.log(operator_norm(self.factor)))

    def matrix(self):
        """The represented matrix; may overflow for large log_scale."""
        return np.exp(self.log_scale) * self.factor

    def svd(self) -> SingularData:
        return svd(self.factor)

    def log_singular_values(self):
        s = _singular_values(self.factor)
        with np.errstate(divide="ignore"):
            return self.log_scale + np.log(s)

    def transpose(self):
        return ScaledMatrix(self.factor.T.copy(), self.log_scale)

    def pseudo_inverse(self, rcond: float = PINV_RCOND):
        """Pseudo-inverse as a ScaledMatrix; rank info via factor SVD."""
        if self.log_scale == -np.inf:
            raise ZeroMatrix("pseudo-inverse of the zero product")
        pinv = pseudo_inverse(self.factor, rcond)
        base = ScaledMatrix.from_matrix(pinv)
        return ScaledMatrix(base.factor, base.log_scale - self.log_scale)

    def __matmul__(self, other):
        if self.log_scale == -np.inf or other.log_scale == -np.inf:
            return ScaledMatrix(np.zeros_like(self.factor), -np.inf)
        prod = ScaledMatrix.from_matrix(self.factor @ other.factor)
        return ScaledMatrix(prod.factor,
                            prod.log_scale + self.log_scale + other.log_scale)
