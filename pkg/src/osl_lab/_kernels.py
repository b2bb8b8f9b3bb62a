"""Renormalized matrix-chain kernels.

Every estimator in this package bottoms out in the same hot loop: the
ordered product of many small matrices along an orbit.  Products are kept
as a unit-operator-norm factor plus an accumulated log of the extracted
norms, so chains of any length never overflow or underflow; the log of the
operator norm of the full product is recovered exactly as the accumulator
plus ``log ||factor||``.

The kernels are JIT-compiled with numba when it is importable.  Set
``OSL_LAB_NUMBA=0`` to force the pure-numpy fallbacks; both paths run the
same code, and results agree to floating-point roundoff.  A collapsed
product (operator norm below ``1e-300``) is reported as a zero factor with
a ``-inf`` accumulator, which poisons the rest of the chain.
"""

from __future__ import annotations

import os

import numpy as np

_TINY = 1e-300


def _numba_requested() -> bool:
    value = os.environ.get("OSL_LAB_NUMBA", "1").strip().lower()
    return value not in {"0", "false", "off", "no"}


USING_NUMBA = False
if _numba_requested():
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba missing, fall back
        njit = None
    else:
        USING_NUMBA = True


def _jit(fn):
    if USING_NUMBA:
        return njit(cache=True)(fn)
    return fn


@_jit
def _opnorm(g):
    """Largest singular value; closed form up to 2x2, LAPACK above."""
    m = g.shape[0]
    if m == 1:
        return abs(g[0, 0])
    if m == 2:
        t = g[0, 0] ** 2 + g[0, 1] ** 2 + g[1, 0] ** 2 + g[1, 1] ** 2
        d = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        disc = t * t - 4.0 * d * d
        if disc < 0.0:
            disc = 0.0
        return np.sqrt(0.5 * (t + np.sqrt(disc)))
    u, s, vt = np.linalg.svd(g)
    return s[0]


@_jit
def chain_product(stack, factor, log_scale):
    """Fold ``stack[n-1] @ ... @ stack[0] @ factor`` with per-step renorm.

    Returns the new ``(factor, log_scale)`` pair; the factor has operator
    norm 1 after every multiplication.
    """
    fac = factor.copy()
    acc = log_scale
    for j in range(stack.shape[0]):
        if acc == -np.inf:
            return fac * 0.0, -np.inf
        fac = stack[j] @ fac
        s = _opnorm(fac)
        if s < _TINY:
            return fac * 0.0, -np.inf
        fac = fac / s
        acc = acc + np.log(s)
    return fac, acc


@_jit
def chain_lognorms(stack, factor, log_scale):
    """Log operator norm of the running product after every step.

    Returns ``(lognorms, factor, log_scale)`` where ``lognorms[j]`` is the
    log norm after folding ``stack[j]`` and the trailing pair resumes the
    chain (for chunked evaluation).
    """
    n = stack.shape[0]
    out = np.empty(n)
    fac = factor.copy()
    acc = log_scale
    for j in range(n):
        if acc == -np.inf:
            out[j:] = -np.inf
            return out, fac * 0.0, -np.inf
        fac = stack[j] @ fac
        s = _opnorm(fac)
        if s < _TINY:
            out[j:] = -np.inf
            return out, fac * 0.0, -np.inf
        fac = fac / s
        acc = acc + np.log(s)
        out[j] = acc
    return out, fac, acc


@_jit
def vector_chain(stack, vec, log_scale):
    """Renormalized orbit of one vector under the chain.

    Returns ``(lognorms, unit_vector, log_scale)`` with ``lognorms[j]`` the
    log Euclidean norm of ``stack[j] @ ... @ stack[0] @ vec_in``.
    """
    n = stack.shape[0]
    out = np.empty(n)
    w = vec.copy()
    acc = log_scale
    for j in range(n):
        if acc == -np.inf:
            out[j:] = -np.inf
            return out, w * 0.0, -np.inf
        w = stack[j] @ w
        s = np.sqrt((w * w).sum())
        if s < _TINY:
            out[j:] = -np.inf
            return out, w * 0.0, -np.inf
        w = w / s
        acc = acc + np.log(s)
        out[j] = acc
    return out, w, acc


def warm_up():
    """Trigger JIT compilation of all kernels (no-op on the numpy path)."""
    stack = np.eye(2)[None, :, :].repeat(2, axis=0)
    chain_product(stack, np.eye(2), 0.0)
    chain_lognorms(stack, np.eye(2), 0.0)
    vector_chain(stack, np.array([1.0, 0.0]), 0.0)
    stack3 = np.eye(3)[None, :, :].repeat(2, axis=0)
    chain_product(stack3, np.eye(3), 0.0)
