"""Linear cocycles over a base system: safe iterates and a generator catalog.

A cocycle is a measurable matrix-valued map on phase space; its n-step
iterate is the ordered product ``A(T^{n-1}x) ... A(Tx) A(x)``, accumulated
here as a :class:`~osl_lab.linalg.ScaledMatrix` (renormalized after every
multiplication, so overflow is impossible by construction).  Catalog
cocycles also carry a vectorized stack builder so long orbits feed the JIT
kernels without per-step Python dispatch.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import comb
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .linalg import ScaledMatrix, exterior_power

CHUNK = 8192


@dataclass(frozen=True, eq=False)
class Cocycle:
    """Phase-to-matrix generator with an essential-sup norm bound."""

    dim: int
    generator: Callable
    sup_norm_bound: float
    label: str = ""
    matrix_stack: Optional[Callable] = None
    base_hint: Optional[dict] = None


@dataclass(frozen=True, eq=False)
class IterateResult:
    """An n-step product, overflow-free; ``value`` holds factor and log scale."""

    value: ScaledMatrix
    length: int
    phase: object
    rank_deficiency: int = 0

    @property
    def log_norm(self) -> float:
        return self.value.log_norm


def _stack_segment(A, S, x, start, count):
    """Matrices along the orbit segment [start, start+count), stacked."""
    if A.matrix_stack is not None:
        values = S.orbit_values(S.step(x, start) if start else x, count)
        stack = A.matrix_stack(values)
    else:
        stack = np.empty((count, A.dim, A.dim))
        for j in range(count):
            stack[j] = A.generator(S.step(x, start + j))
    return np.ascontiguousarray(stack, dtype=float)


def iterate(A: Cocycle, S, x, n: int) -> IterateResult:
    """Renormalized product of the first n generator values along the orbit."""
    if n < 1:
        raise ValueError("iterate needs n >= 1")
    fac = np.eye(A.dim)
    acc = 0.0
    for start in range(0, n, CHUNK):
        count = min(CHUNK, n - start)
        stack = _stack_segment(A, S, x, start, count)
        fac, acc = _kernels.chain_product(stack, fac, acc)
    return IterateResult(value=ScaledMatrix(fac, float(acc)), length=n, phase=x)


def iterate_checkpoints(A: Cocycle, S, x, scales) -> dict:
    """One orbit sweep returning the ScaledMatrix product at each scale."""
    scales = sorted({int(n) for n in scales})
    if not scales or scales[0] < 1:
        raise ValueError("checkpoint scales must be positive")
    out = {}
    fac = np.eye(A.dim)
    acc = 0.0
    pos = 0
    for n in scales:
        for start in range(pos, n, CHUNK):
            count = min(CHUNK, n - start)
            stack = _stack_segment(A, S, x, start, count)
            fac, acc = _kernels.chain_product(stack, fac, acc)
        pos = n
        out[n] = ScaledMatrix(fac.copy(), float(acc))
    return out


def iterate_lognorms(A: Cocycle, S, x, n: int) -> np.ndarray:
    """Per-step series ``log ||A^{(j)}(x)||`` for j = 1..n in one sweep."""
    if n < 1:
        raise ValueError("iterate_lognorms needs n >= 1")
    out = np.empty(n)
    fac = np.eye(A.dim)
    acc = 0.0
    for start in range(0, n, CHUNK):
        count = min(CHUNK, n - start)
        stack = _stack_segment(A, S, x, start, count)
        logs, fac, acc = _kernels.chain_lognorms(stack, fac, acc)
        out[start:start + count] = logs
    return out


def iterate_wedges(A: Cocycle, S, x, scales, orders) -> dict:
    """Exterior-power products of several orders along one orbit sweep.

    Returns ``{n: {k: ScaledMatrix}}`` for every requested scale n and
    wedge order k; each order keeps its own renormalized accumulator, so
    deep singular data stays resolvable at any scale.
    """
    scales = sorted({int(n) for n in scales})
    if not scales or scales[0] < 1:
        raise ValueError("wedge scales must be positive")
    orders = sorted({int(k) for k in orders})
    if orders and not 1 <= orders[0] <= orders[-1] <= A.dim:
        raise ValueError("wedge orders out of range")
    chunk = 2048  # keeps the widest wedge stack below ~10 MB
    states = {k: (np.eye(comb(A.dim, k)), 0.0) for k in orders}
    out = {}
    pos = 0
    for n in scales:
        for start in range(pos, n, chunk):
            count = min(chunk, n - start)
            base = _stack_segment(A, S, x, start, count)
            for k in orders:
                fac, acc = states[k]
                wedge = np.ascontiguousarray(exterior_power(base, k))
                states[k] = _kernels.chain_product(wedge, fac, acc)
        pos = n
        out[n] = {k: ScaledMatrix(states[k][0].copy(), float(states[k][1]))
                  for k in orders}
    return out


def iterate_exterior_lognorms(A: Cocycle, S, x, n: int, orders=None) -> np.ndarray:
    """``log ||wedge_k A^{(n)}(x)||`` for each order k, sharing one orbit sweep."""
    if orders is None:
        orders = range(1, A.dim + 1)
    orders = list(orders)
    wedges = iterate_wedges(A, S, x, [n], orders)[n]
    return np.array([wedges[k].log_norm for k in orders])


def vector_growth_lognorms(A: Cocycle, S, x, v, n: int) -> np.ndarray:
    """Series ``log ||A^{(j)}(x) v||`` for j = 1..n (renormalized sweep)."""
    v = np.asarray(v, dtype=float)
    out = np.empty(n)
    base = float(np.linalg.norm(v))
    if base == 0.0:
        raise ValueError("growth along the zero vector is undefined")
    w = v / base
    acc = float(np.log(base))
    for start in range(0, n, CHUNK):
        count = min(CHUNK, n - start)
        stack = _stack_segment(A, S, x, start, count)
        logs, w, acc = _kernels.vector_chain(stack, w, acc)
        out[start:start + count] = logs
    return out


def adjoint_iterate(A: Cocycle, S, x, n: int) -> IterateResult:
    """n-step product of the adjoint cocycle: transpose of the iterate at T^{-n}x."""
    back = iterate(A, S, S.step(x, -n), n)
    return IterateResult(value=back.value.transpose(), length=n, phase=x)


def backward_iterate(A: Cocycle, S, x, n: int,
                     rcond: float = 1e-13) -> IterateResult:
    """Backward iterate: pseudo-inverse of the n-step product at T^{-n}x.

    Rank collapse (singular values below ``rcond`` relative) is reported in
    ``rank_deficiency`` rather than raised.
    """
    fwd = iterate(A, S, S.step(x, -n), n)
    sd = fwd.value.svd()
    dropped = int(np.sum(sd.values <= rcond * sd.values[0]))
    value = fwd.value.pseudo_inverse(rcond)
    return IterateResult(value=value, length=-n, phase=x,
                         rank_deficiency=dropped)


def exterior_cocycle(A: Cocycle, k: int) -> Cocycle:
    """The k-th exterior power cocycle, dimension C(m, k)."""
    if not 1 <= k <= A.dim:
        raise ValueError(f"exterior order {k} out of range for dim {A.dim}")
    if k == 1:
        return A
    stack = None
    if A.matrix_stack is not None:
        stack = lambda values: exterior_power(A.matrix_stack(values), k)
    return Cocycle(
        dim=comb(A.dim, k),
        generator=lambda ph: exterior_power(A.generator(ph), k),
        sup_norm_bound=max(A.sup_norm_bound, 1.0) ** k,
        label=f"wedge{k}({A.label})",
        matrix_stack=stack,
        base_hint=A.base_hint,
    )


def adjoint_cocycle(A: Cocycle, S):
    """The adjoint pair: generator ``x -> A(T^{-1}x)^T`` over the inverse base."""
    adj = Cocycle(
        dim=A.dim,
        generator=lambda ph: A.generator(S.step(ph, -1)).T,
        sup_norm_bound=A.sup_norm_bound,
        label=f"adjoint({A.label})",
        base_hint=A.base_hint,
    )
    return adj, S.inverse()


def parse_matrix_table(text: str, dim: int):
    """Matrices from a CSV block: one matrix per line, m*m entries row-major."""
    mats = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        entries = [float(v) for v in line.replace(",", " ").split()]
        if len(entries) != dim * dim:
            raise ValueError(
                f"table line {lineno}: expected {dim * dim} entries, "
                f"got {len(entries)}"
            )
        mats.append(np.array(entries, dtype=float).reshape(dim, dim))
    if not mats:
        raise ValueError("matrix table is empty")
    return mats


def _digits(states, base, dim):
    states = np.asarray(states, dtype=np.int64)
    digits = np.empty(states.shape + (dim,), dtype=np.int64)
    rem = states
    for c in range(dim):
        digits[..., c] = rem % base
        rem = rem // base
    return digits


def _constant(params):
    g = np.asarray(params["matrix"], dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("constant cocycle needs a square matrix")
    m = g.shape[0]
    bound = float(np.linalg.norm(g, 2))
    return Cocycle(
        dim=m,
        generator=lambda ph: g.copy(),
        sup_norm_bound=bound,
        label="constant",
        matrix_stack=lambda values: np.broadcast_to(
            g, (np.atleast_1d(values).shape[0], m, m)).copy(),
    )


def _schrodinger(params):
    energy = float(params.get("energy", 0.0))
    coupling = float(params.get("coupling", 1.0))
    amp = abs(energy) + 2.0 * abs(coupling)

    def entry(v):
        return energy - 2.0 * coupling * np.cos(2.0 * np.pi * v)

    def stack(values):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.ndim == 2:
            values = values[:, 0]
        out = np.zeros((values.shape[0], 2, 2))
        out[:, 0, 0] = entry(values)
        out[:, 0, 1] = -1.0
        out[:, 1, 0] = 1.0
        return out

    def gen(ph):
        a = entry(ph.coords[0])
        return np.array([[a, -1.0], [1.0, 0.0]])

    return Cocycle(
        dim=2,
        generator=gen,
        sup_norm_bound=float(np.sqrt(amp * amp + 2.0)),
        label=f"schrodinger(E={energy},lambda={coupling})",
        matrix_stack=stack,
        base_hint={"kind": "rotation", "dim": 1},
    )


def _diagonal_random(params):
    values = np.asarray(params["values"], dtype=float)
    dim = int(params.get("dim", 1))
    if values.ndim != 1 or values.size < 2:
        raise ValueError("diagonal_random needs >= 2 candidate values")
    if dim < 1:
        raise ValueError("diagonal_random needs dim >= 1")
    base = values.size
    n_symbols = base ** dim
    vmax = float(np.max(np.abs(values)))

    def stack(states):
        d = _digits(states, base, dim)
        diag = values[d]
        out = np.zeros((diag.shape[0], dim, dim))
        idx = np.arange(dim)
        out[:, idx, idx] = diag
        return out

    def gen(ph):
        d = _digits(np.array([ph.state]), base, dim)[0]
        return np.diag(values[d])

    return Cocycle(
        dim=dim,
        generator=gen,
        sup_norm_bound=vmax,
        label=f"diagonal_random({values.tolist()},dim={dim})",
        matrix_stack=stack,
        base_hint={"kind": "bernoulli", "n_symbols": n_symbols},
    )


def _random_glm(params):
    dim = int(params["dim"])
    alphabet = int(params.get("alphabet", 2))
    seed = int(params.get("seed", 0))
    spread = float(params.get("spread", 0.7))
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(alphabet):
        q1, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        q2, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        d = np.exp(rng.uniform(-spread, spread, size=dim))
        mats.append(q1 @ np.diag(d) @ q2)
    table = np.stack(mats)
    bound = float(max(np.linalg.norm(g, 2) for g in mats))

    return Cocycle(
        dim=dim,
        generator=lambda ph: table[ph.state].copy(),
        sup_norm_bound=bound,
        label=f"random_glm(dim={dim},alphabet={alphabet},seed={seed})",
        matrix_stack=lambda states: table[np.asarray(states, dtype=np.int64)],
        base_hint={"kind": "bernoulli", "n_symbols": alphabet},
    )


def _custom_table(params):
    dim = int(params["dim"])
    if "matrices" in params:
        mats = [np.asarray(g, dtype=float).reshape(dim, dim)
                for g in params["matrices"]]
    elif "matrices_csv" in params:
        mats = parse_matrix_table(params["matrices_csv"], dim)
    else:
        raise ValueError("custom-table needs 'matrices' or 'matrices_csv'")
    table = np.stack(mats)
    bound = float(max(np.linalg.norm(g, 2) for g in mats))
    breakpoints = params.get("breakpoints")

    if breakpoints is not None:
        # partition of the circle: cell i is [b_{i-1}, b_i), wrapping at 1
        breaks = np.asarray(breakpoints, dtype=float)
        if breaks.size != len(mats) - 1 or np.any(np.diff(breaks) <= 0):
            raise ValueError("breakpoints must be increasing, one fewer than "
                             "the matrix count")

        def index_of(values):
            return np.searchsorted(breaks, values, side="right")

        def gen(ph):
            return table[int(index_of(ph.coords[0]))].copy()

        def stack(values):
            values = np.atleast_1d(np.asarray(values, dtype=float))
            if values.ndim == 2:
                values = values[:, 0]
            return table[index_of(values)]

        hint = {"kind": "rotation", "dim": 1}
    else:
        def gen(ph):
            return table[ph.state].copy()

        def stack(states):
            return table[np.asarray(states, dtype=np.int64)]

        hint = {"kind": "bernoulli", "n_symbols": len(mats)}

    return Cocycle(dim=dim, generator=gen, sup_norm_bound=bound,
                   label="custom-table", matrix_stack=stack, base_hint=hint)


CATALOG = {
    "constant": _constant,
    "diagonal_random": _diagonal_random,
    "schrodinger": _schrodinger,
    "random_glm": _random_glm,
    "custom-table": _custom_table,
}


def catalog(name: str, params=None) -> Cocycle:
    """Build a catalog cocycle by name; see :data:`CATALOG` for choices."""
    if name not in CATALOG:
        raise ValueError(f"unknown catalog cocycle {name!r}; "
                         f"choices: {sorted(CATALOG)}")
    return CATALOG[name](dict(params or {}))


def linf_distance(A: Cocycle, B: Cocycle, phases) -> float:
    """Max over the sampled phases of ``||A(x) - B(x)||`` (operator norm)."""
    worst = 0.0
    for x in phases:
        d = float(np.linalg.norm(A.generator(x) - B.generator(x), 2))
        worst = max(worst, d)
    return worst
