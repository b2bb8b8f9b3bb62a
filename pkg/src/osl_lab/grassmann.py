"""Grassmannian, flag, and direct-sum geometry on R^m.

Subspaces are stored as column-orthonormal bases.  The metric on the
Grassmannian is the operator norm of the difference of orthogonal
projectors (the sine of the largest principal angle); flags and
decompositions are compared componentwise by the maximum of these
distances.  Flags store cumulative subspaces; increments are derived on
demand by intersection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-10
NESTING_TOL = 1e-9
THETA_MIN = 1e-8


class SignatureError(ValueError):
    """Signature is malformed or does not match its companion object."""


class NotARefinement(ValueError):
    """Projection requested onto a signature that the source does not refine."""


class NonTransversal(RuntimeError):
    """Flag pair too close to degenerate for a meaningful intersection."""

    def __init__(self, pair, theta):
        self.pair = pair
        self.theta = theta
        super().__init__(
            f"flag pair {pair} has transversality {theta:.3e}, below the cutoff"
        )


def check_signature(tau, m):
    """Validate ``1 <= tau_1 < ... < tau_k < m``; the empty signature is legal."""
    tau = tuple(int(t) for t in tau)
    for a, b in zip(tau, tau[1:]):
        if a >= b:
            raise SignatureError(f"signature {tau} is not strictly increasing")
    if tau and (tau[0] < 1 or tau[-1] >= m):
        raise SignatureError(f"signature {tau} out of range for ambient dim {m}")
    return tau


def complement_signature(tau, m):
    return tuple(m - t for t in reversed(tau))


def _as_basis(array):
    basis = np.asarray(array, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    return basis


@dataclass(frozen=True, eq=False)
class Subspace:
    """A point of the Grassmannian ``Gr_k(R^m)``: an m x k orthonormal frame."""

    basis: np.ndarray

    def __post_init__(self):
        basis = _as_basis(self.basis)
        m, k = basis.shape
        if not 1 <= k <= m:
            raise ValueError(f"basis shape {basis.shape} is not a valid frame")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(k), atol=ORTHO_TOL):
            raise ValueError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @classmethod
    def from_columns(cls, columns):
        """Orthonormalize a full-rank spanning set (QR) into a Subspace."""
        cols = _as_basis(columns)
        q, r = np.linalg.qr(cols)
        if np.min(np.abs(np.diag(r))) < 1e-12 * max(1.0, np.abs(r).max()):
            raise ValueError("spanning set is numerically rank deficient")
        return cls(q)

    @classmethod
    def coordinate(cls, m, indices):
        basis = np.zeros((m, len(indices)))
        for col, i in enumerate(indices):
            basis[i, col] = 1.0
        return cls(basis)

    def projector(self):
        return self.basis @ self.basis.T

    def complement(self):
        """Orthogonal complement, dimension m - k."""
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return Subspace(u[:, self.dim:])


def subspace_distance(E: Subspace, F: Subspace) -> float:
    """Operator-norm projector difference; the sine of the largest principal angle."""
    if E.ambient_dim != F.ambient_dim or E.dim != F.dim:
        raise ValueError("subspace_distance requires equal ambient and equal dim")
    return float(np.linalg.norm(E.projector() - F.projector(), 2))


def alignment(E: Subspace, F: Subspace) -> float:
    """Product of the cosines of the principal angles, |det(E^T F)| in [0, 1]."""
    if E.ambient_dim != F.ambient_dim or E.dim != F.dim:
        raise ValueError("alignment requires equal ambient and equal dim")
    return float(abs(np.linalg.det(E.basis.T @ F.basis)))


def min_angle_sine(U: Subspace, W: Subspace) -> float:
    """Sine of the minimal angle between U and W; zero iff the sum is not direct."""
    if U.ambient_dim != W.ambient_dim:
        raise ValueError("ambient dimension mismatch")
    if U.dim + W.dim != U.ambient_dim:
        raise ValueError("min_angle_sine expects complementary dimensions")
    resid = W.basis - U.basis @ (U.basis.T @ W.basis)
    return float(np.linalg.svd(resid, compute_uv=False)[-1])


@dataclass(frozen=True, eq=False)
class Flag:
    """A nested sequence of subspaces with dims given by the signature.

    The empty signature is the trivial flag (only {0} and R^m); it needs an
    explicit ambient dimension.
    """

    signature: tuple
    components: tuple
    ambient: int = field(default=0)

    def __post_init__(self):
        components = tuple(self.components)
        if components:
            m = components[0].ambient_dim
        else:
            m = self.ambient
            if m <= 0:
                raise ValueError("empty flag needs an explicit ambient dimension")
        tau = check_signature(self.signature, m)
        if len(tau) != len(components):
            raise SignatureError("signature length does not match component count")
        for t, comp in zip(tau, components):
            if comp.ambient_dim != m:
                raise ValueError("components live in different ambient spaces")
            if comp.dim != t:
                raise SignatureError(f"component of dim {comp.dim} at slot {t}")
        for small, big in zip(components, components[1:]):
            resid = small.basis - big.basis @ (big.basis.T @ small.basis)
            if np.linalg.norm(resid, 2) > NESTING_TOL:
                raise ValueError("flag components are not nested")
        object.__setattr__(self, "signature", tau)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "ambient", m)

    @property
    def ambient_dim(self):
        return self.ambient

    @classmethod
    def trivial(cls, m):
        return cls((), (), ambient=m)


def flag_distance(F: Flag, G: Flag) -> float:
    """Max over components of the subspace distance (normalized flag metric)."""
    if F.signature != G.signature or F.ambient_dim != G.ambient_dim:
        raise SignatureError("flag_distance requires equal signatures")
    if not F.components:
        return 0.0
    return max(subspace_distance(a, b) for a, b in zip(F.components, G.components))


def complement_flag(F: Flag) -> Flag:
    """Orthogonal complements in reverse order; an involution and an isometry."""
    comps = tuple(c.complement() for c in reversed(F.components))
    return Flag(complement_signature(F.signature, F.ambient_dim), comps,
                ambient=F.ambient_dim)


def refines(tau, tau_prime) -> bool:
    """True iff every entry of ``tau_prime`` appears in ``tau``."""
    return set(tau_prime).issubset(set(tau))


def project_flag(F: Flag, tau_prime) -> Flag:
    """Keep the components whose dimensions appear in the coarser signature."""
    tau_prime = tuple(int(t) for t in tau_prime)
    if not refines(F.signature, tau_prime):
        raise NotARefinement(f"{F.signature} does not refine {tau_prime}")
    keep = [F.components[F.signature.index(t)] for t in tau_prime]
    return Flag(tau_prime, tuple(keep), ambient=F.ambient_dim)


@dataclass(frozen=True, eq=False)
class Decomposition:
    """A direct-sum splitting of R^m with block dims tau_j - tau_{j-1}."""

    signature: tuple
    components: tuple

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ValueError("a decomposition needs at least one component")
        m = components[0].ambient_dim
        tau = check_signature(self.signature, m)
        bounds = (0,) + tau + (m,)
        if len(components) != len(tau) + 1:
            raise SignatureError("decomposition needs k+1 components")
        for j, comp in enumerate(components):
            if comp.ambient_dim != m:
                raise ValueError("components live in different ambient spaces")
            if comp.dim != bounds[j + 1] - bounds[j]:
                raise SignatureError(
                    f"component {j} has dim {comp.dim}, expected "
                    f"{bounds[j + 1] - bounds[j]}"
                )
        stacked = np.hstack([c.basis for c in components])
        smin = np.linalg.svd(stacked, compute_uv=False)[-1]
        if smin <= 1e-14:
            raise ValueError("components do not form a direct sum")
        object.__setattr__(self, "signature", tau)
        object.__setattr__(self, "components", components)

    @property
    def ambient_dim(self):
        return self.components[0].ambient_dim

    def stacked_basis(self):
        return np.hstack([c.basis for c in self.components])


def decomposition_distance(D: Decomposition, E: Decomposition) -> float:
    if D.signature != E.signature or D.ambient_dim != E.ambient_dim:
        raise SignatureError("decomposition_distance requires equal signatures")
    return max(subspace_distance(a, b) for a, b in zip(D.components, E.components))


def project_decomposition(D: Decomposition, tau_prime) -> Decomposition:
    """Merge consecutive components by direct sums down to a coarser signature."""
    tau_prime = tuple(int(t) for t in tau_prime)
    if not refines(D.signature, tau_prime):
        raise NotARefinement(f"{D.signature} does not refine {tau_prime}")
    positions = [0] + [D.signature.index(t) + 1 for t in tau_prime]
    positions.append(len(D.signature) + 1)
    merged = []
    for lo, hi in zip(positions, positions[1:]):
        block = np.hstack([D.components[i].basis for i in range(lo, hi)])
        merged.append(Subspace.from_columns(block))
    return Decomposition(tau_prime, tuple(merged))


def transversality(F: Flag, G: Flag) -> float:
    """Minimal alignment between paired components of complementary flags.

    For F with signature tau and G with signature tau-perp, pairs F_i with
    the orthogonal complement of G_{k-i+1}; positive values license the
    intersection ``intersect(F, G)``.
    """
    m = F.ambient_dim
    if G.signature != complement_signature(F.signature, m) or G.ambient_dim != m:
        raise SignatureError("transversality expects complementary signatures")
    k = len(F.signature)
    if k == 0:
        return 1.0
    alphas = [
        alignment(F.components[i], G.components[k - i - 1].complement())
        for i in range(k)
    ]
    return float(min(alphas))


def _null_intersection(perp_blocks, m):
    """Common orthogonal complement of the given frames (SVD null space)."""
    blocks = [b for b in perp_blocks if b.shape[1] > 0]
    if not blocks:
        return Subspace(np.eye(m))
    stacked = np.hstack(blocks)
    u, _, _ = np.linalg.svd(stacked, full_matrices=True)
    return Subspace(u[:, stacked.shape[1]:])


def intersect(F: Flag, G: Flag, theta_min: float = THETA_MIN) -> Decomposition:
    """Componentwise intersection of complementary flags into a decomposition.

    Component j is ``F_j ∩ G_{k-j+2}`` with the conventions ``F_{k+1} =
    G_{k+1} = R^m``; each is computed as the null space of the stacked
    complementary frames, which is stabler than elimination.  Raises
    ``NonTransversal`` (with the failing pair) when the transversality
    measurement is at or below ``theta_min``.
    """
    m = F.ambient_dim
    if G.signature != complement_signature(F.signature, m) or G.ambient_dim != m:
        raise SignatureError("intersect expects complementary signatures")
    k = len(F.signature)
    if k > 0:
        alphas = [
            alignment(F.components[i], G.components[k - i - 1].complement())
            for i in range(k)
        ]
        worst = int(np.argmin(alphas))
        if alphas[worst] <= theta_min:
            raise NonTransversal(worst + 1, alphas[worst])
    comps = []
    for j in range(1, k + 2):
        perps = []
        if j <= k:
            perps.append(F.components[j - 1].complement().basis)
        idx = k - j + 2
        if idx <= k:
            perps.append(G.components[idx - 1].complement().basis)
        comps.append(_null_intersection(perps, m))
    return Decomposition(F.signature, tuple(comps))
