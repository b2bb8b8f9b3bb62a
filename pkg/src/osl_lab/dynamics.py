"""Invertible ergodic base systems: rotations, Bernoulli and Markov shifts.

Orbits are exactly invertible by construction.  A phase is an immutable
anchor plus a signed orbit index; stepping is integer arithmetic on the
index, so ``step(step(x, n), -n)`` returns the identical phase.  Torus
coordinates are evaluated from the anchor with exact dyadic arithmetic
(``j * alpha mod 1`` is computed on the integer mantissa of ``alpha``), so
orbits of length 10^6 and beyond carry no accumulated drift; this replaces
compensated summation.

Symbolic phases are lazy: the bi-infinite symbol sequence is a seeded
deterministic function of the absolute index (a stateless 64-bit mix for
Bernoulli; cached forward/backward recursions driven by per-index uniforms
for Markov, with the backward step using the time-reversed kernel), giving
O(1) memory per orbit and exact invertibility.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

GOLDEN_MEAN = (np.sqrt(5.0) - 1.0) / 2.0

_SPLIT_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)


def uniform_at(seed, indices):
    """Stateless uniforms in [0, 1) for (seed, index) pairs; vectorized."""
    idx = np.asarray(indices, dtype=np.int64).astype(np.uint64)
    z = np.uint64(seed) + idx * _SPLIT_GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def spawn_seeds(seed, count):
    """Independent 64-bit child seeds, deterministic in (seed, count)."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


@dataclass(frozen=True, eq=False)
class TorusPhase:
    """Point on the d-torus: anchor coordinates plus a signed orbit index."""

    anchor: tuple
    index: int
    coords: tuple

    def value(self):
        return np.asarray(self.coords)


@dataclass(frozen=True, eq=False)
class SymbolicPhase:
    """Handle into a two-sided symbol sequence at a signed index."""

    path: object
    index: int

    @property
    def state(self):
        return int(self.path.state(self.index))

    def value(self):
        return self.state


def _exact_multiple_mod1(alpha: float, index: int) -> float:
    """``index * alpha mod 1`` evaluated exactly on the dyadic mantissa."""
    p, q = float(alpha).as_integer_ratio()
    return ((index * p) % q) / q


def _exact_multiples_mod1(alpha: float, indices) -> np.ndarray:
    p, q = float(alpha).as_integer_ratio()
    if q <= (1 << 53):
        # q is a power of two, so j*p mod q survives the uint64 wraparound
        mask = np.uint64(q - 1)
        r = (np.asarray(indices, dtype=np.int64).astype(np.uint64)
             * np.uint64(p)) & mask
        return r.astype(np.float64) / q
    return np.array([_exact_multiple_mod1(alpha, int(j)) for j in indices])


@dataclass(frozen=True)
class RotationSystem:
    """Ergodic rotation ``x -> x + alpha mod 1`` on the d-torus."""

    alpha: tuple = (GOLDEN_MEAN,)
    direction: int = 1

    kind = "rotation"
    invertible = True

    def __post_init__(self):
        alpha = tuple(float(a) % 1.0 for a in np.atleast_1d(self.alpha))
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self):
        return len(self.alpha)

    def phase(self, coords) -> TorusPhase:
        coords = tuple(float(c) % 1.0 for c in np.atleast_1d(coords))
        if len(coords) != self.dim:
            raise ValueError("coordinate count does not match rotation dim")
        return TorusPhase(anchor=coords, index=0, coords=coords)

    def _coords_at(self, anchor, index):
        return tuple(
            (a + _exact_multiple_mod1(al, index)) % 1.0
            for a, al in zip(anchor, self.alpha)
        )

    def step(self, x: TorusPhase, n: int = 1) -> TorusPhase:
        index = x.index + self.direction * int(n)
        return TorusPhase(anchor=x.anchor, index=index,
                          coords=self._coords_at(x.anchor, index))

    def sample_phases(self, count, seed):
        rng = np.random.default_rng(seed)
        pts = rng.random((int(count), self.dim))
        return [self.phase(tuple(row)) for row in pts]

    def orbit_values(self, x: TorusPhase, n: int) -> np.ndarray:
        """Coordinates along x, Tx, ..., T^{n-1}x; shape (n,) or (n, d)."""
        idx = x.index + self.direction * np.arange(int(n), dtype=np.int64)
        cols = [
            (a + _exact_multiples_mod1(al, idx)) % 1.0
            for a, al in zip(x.anchor, self.alpha)
        ]
        if self.dim == 1:
            return cols[0]
        return np.stack(cols, axis=1)

    def value_of(self, x: TorusPhase):
        return x.value()

    def inverse(self):
        return replace(self, direction=-self.direction)

    def descriptor(self):
        return {"kind": "rotation", "alpha": list(self.alpha)}


class BernoulliPath:
    """Stateless i.i.d. symbol sequence: symbol(i) = F^{-1}(uniform(seed, i))."""

    def __init__(self, seed, cumweights):
        self.seed = int(seed)
        self.cum = np.asarray(cumweights, dtype=float)

    def state(self, index):
        return int(self.states(np.array([index]))[0])

    def states(self, indices):
        u = uniform_at(self.seed, indices)
        return np.searchsorted(self.cum, u, side="right")


class MarkovPath:
    """Two-sided stationary Markov path, grown lazily from index 0.

    Forward steps use the transition kernel, backward steps the
    time-reversed kernel ``P_rev[i, j] = pi_j P[j, i] / pi_i``; each
    absolute index consumes its own stateless uniform, so the sequence is
    a pure function of the seed.
    """

    def __init__(self, seed, cum_rows, cum_rev_rows, cum_pi):
        self.seed = int(seed)
        self.cum_rows = cum_rows
        self.cum_rev_rows = cum_rev_rows
        self._fwd = [int(np.searchsorted(cum_pi, uniform_at(seed, [0])[0],
                                         side="right"))]
        self._bwd = []

    def _extend_to(self, index):
        while index >= len(self._fwd):
            i = len(self._fwd)
            u = uniform_at(self.seed, [i])[0]
            prev = self._fwd[-1]
            self._fwd.append(int(np.searchsorted(self.cum_rows[prev], u,
                                                 side="right")))
        while -index > len(self._bwd):
            i = -(len(self._bwd) + 1)
            u = uniform_at(self.seed, [i])[0]
            nxt = self._bwd[-1] if self._bwd else self._fwd[0]
            self._bwd.append(int(np.searchsorted(self.cum_rev_rows[nxt], u,
                                                 side="right")))

    def state(self, index):
        index = int(index)
        self._extend_to(index)
        return self._fwd[index] if index >= 0 else self._bwd[-index - 1]

    def states(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        self._extend_to(int(indices.min()))
        self._extend_to(int(indices.max()))
        merged = np.array(list(reversed(self._bwd)) + self._fwd, dtype=np.int64)
        return merged[indices + len(self._bwd)]


def _validate_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 2 or np.any(w < 0):
        raise ValueError("weights must be a nonnegative vector of length >= 2")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    return w


@dataclass(frozen=True)
class BernoulliSystem:
    """Two-sided i.i.d. shift over a finite alphabet."""

    weights: tuple = (0.5, 0.5)
    direction: int = 1

    kind = "bernoulli"
    invertible = True

    def __post_init__(self):
        w = _validate_weights(self.weights)
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @property
    def n_symbols(self):
        return len(self.weights)

    def _cum(self):
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        return cum

    def phase(self, seed) -> SymbolicPhase:
        return SymbolicPhase(path=BernoulliPath(seed, self._cum()), index=0)

    def step(self, x: SymbolicPhase, n: int = 1) -> SymbolicPhase:
        return SymbolicPhase(path=x.path, index=x.index + self.direction * int(n))

    def sample_phases(self, count, seed):
        return [self.phase(s) for s in spawn_seeds(seed, int(count))]

    def orbit_values(self, x: SymbolicPhase, n: int) -> np.ndarray:
        idx = x.index + self.direction * np.arange(int(n), dtype=np.int64)
        return x.path.states(idx)

    def value_of(self, x: SymbolicPhase):
        return x.state

    def inverse(self):
        return replace(self, direction=-self.direction)

    def descriptor(self):
        return {"kind": "bernoulli", "weights": list(self.weights)}


def stationary_distribution(transition) -> np.ndarray:
    """Left Perron eigenvector of a row-stochastic matrix, normalized."""
    P = np.asarray(transition, dtype=float)
    vals, vecs = np.linalg.eig(P.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, i])
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise ValueError("stationary vector is not strictly positive")
    return pi


@dataclass(frozen=True)
class MarkovSystem:
    """Two-sided stationary Markov shift on a finite state space."""

    transition: tuple
    direction: int = 1

    kind = "markov"
    invertible = True

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        object.__setattr__(self, "transition",
                           tuple(tuple(float(v) for v in row) for row in P))

    @property
    def n_states(self):
        return len(self.transition)

    @property
    def stationary(self):
        return stationary_distribution(self.transition)

    def _kernels(self):
        P = np.asarray(self.transition)
        pi = self.stationary
        rev = (pi[None, :] * P.T) / pi[:, None]
        cum_rows = [np.cumsum(row) for row in P]
        cum_rev = [np.cumsum(row) for row in rev]
        for c in cum_rows + cum_rev:
            c[-1] = 1.0
        cum_pi = np.cumsum(pi)
        cum_pi[-1] = 1.0
        return cum_rows, cum_rev, cum_pi

    def phase(self, seed) -> SymbolicPhase:
        cum_rows, cum_rev, cum_pi = self._kernels()
        return SymbolicPhase(path=MarkovPath(seed, cum_rows, cum_rev, cum_pi),
                             index=0)

    def step(self, x: SymbolicPhase, n: int = 1) -> SymbolicPhase:
        return SymbolicPhase(path=x.path, index=x.index + self.direction * int(n))

    def sample_phases(self, count, seed):
        return [self.phase(s) for s in spawn_seeds(seed, int(count))]

    def orbit_values(self, x: SymbolicPhase, n: int) -> np.ndarray:
        idx = x.index + self.direction * np.arange(int(n), dtype=np.int64)
        return x.path.states(idx)

    def value_of(self, x: SymbolicPhase):
        return x.state

    def inverse(self):
        return replace(self, direction=-self.direction)

    def descriptor(self):
        return {"kind": "markov", "transition": [list(r) for r in self.transition]}


def build_base(descriptor):
    """Base system from a serializable descriptor (see the CLI config)."""
    kind = descriptor.get("kind")
    if kind == "rotation":
        return RotationSystem(alpha=tuple(descriptor.get("alpha", (GOLDEN_MEAN,))))
    if kind == "bernoulli":
        return BernoulliSystem(weights=tuple(descriptor.get("weights", (0.5, 0.5))))
    if kind == "markov":
        return MarkovSystem(transition=tuple(map(tuple, descriptor["transition"])))
    raise ValueError(f"unknown base system kind: {kind!r}")


def step(system, x, n: int = 1):
    """Apply T^n (n may be negative; backward steps are exact)."""
    return system.step(x, n)


def sample_phases(system, count, seed):
    """i.i.d. draws from the invariant measure, deterministic under the seed."""
    return system.sample_phases(count, seed)


def birkhoff_average(system, observable, x, n: int) -> float:
    """Average of the observable along x, Tx, ..., T^{n-1}x.

    The observable receives the whole orbit-values array (coordinates for
    torus systems, states for symbolic ones) and should evaluate
    elementwise.
    """
    if n < 1:
        raise ValueError("birkhoff_average needs n >= 1")
    values = np.asarray(observable(system.orbit_values(x, n)), dtype=float)
    return float(values.mean())
