import json
import os
import subprocess
import sys

import numpy as np
import pytest

from osl_lab import _kernels

CROSS_PATH_SNIPPET = """
import json
import numpy as np
from osl_lab import _kernels
rng = np.random.default_rng(99)
stack = np.ascontiguousarray(rng.normal(size=(400, 3, 3)))
fac, acc = _kernels.chain_product(stack, np.eye(3), 0.0)
logs, _, _ = _kernels.chain_lognorms(stack, np.eye(3), 0.0)
vl, vv, va = _kernels.vector_chain(stack, np.array([1.0, 0.0, 0.0]), 0.0)
print(json.dumps({"numba": _kernels.USING_NUMBA, "acc": acc,
                  "log_mid": logs[200], "vacc": va,
                  "fac": fac.ravel().tolist()}))
"""


def test_chain_product_matches_naive_oracle():
    rng = np.random.default_rng(3)
    stack = np.ascontiguousarray(rng.normal(size=(200, 3, 3)))
    fac, acc = _kernels.chain_product(stack, np.eye(3), 0.0)
    prod = np.eye(3)
    logs = 0.0
    for g in stack:
        prod = g @ prod
        s = np.linalg.norm(prod, 2)
        prod /= s
        logs += np.log(s)
    assert acc == pytest.approx(logs, rel=1e-12)
    assert np.linalg.norm(fac, 2) == pytest.approx(1.0, abs=1e-12)


def test_chain_lognorms_prefixes():
    rng = np.random.default_rng(4)
    stack = np.ascontiguousarray(rng.normal(size=(50, 2, 2)))
    logs, fac, acc = _kernels.chain_lognorms(stack, np.eye(2), 0.0)
    assert logs[-1] == pytest.approx(acc)
    half, _, _ = _kernels.chain_lognorms(stack[:25], np.eye(2), 0.0)
    assert np.allclose(logs[:25], half)


def test_zero_collapse_poisons_chain():
    stack = np.zeros((3, 2, 2))
    stack[0] = np.eye(2)
    logs, fac, acc = _kernels.chain_lognorms(stack, np.eye(2), 0.0)
    assert acc == -np.inf
    assert logs[1] == -np.inf
    assert np.all(fac == 0.0)


def test_vector_chain_matches_direct():
    rng = np.random.default_rng(5)
    stack = np.ascontiguousarray(rng.normal(size=(30, 2, 2)))
    v = np.array([0.6, 0.8])
    logs, unit, acc = _kernels.vector_chain(stack, v, 0.0)
    w = v.copy()
    for g in stack:
        w = g @ w
    assert logs[-1] == pytest.approx(np.log(np.linalg.norm(w)), rel=1e-10)


def test_resume_matches_single_sweep():
    rng = np.random.default_rng(6)
    stack = np.ascontiguousarray(rng.normal(size=(64, 2, 2)))
    fac1, acc1 = _kernels.chain_product(stack, np.eye(2), 0.0)
    fac2, acc2 = _kernels.chain_product(stack[:20], np.eye(2), 0.0)
    fac2, acc2 = _kernels.chain_product(stack[20:], fac2, acc2)
    assert acc1 == pytest.approx(acc2, rel=1e-14)
    assert np.allclose(fac1, fac2)


def test_both_paths_agree():
    # run the same chain with OSL_LAB_NUMBA on and off in subprocesses
    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, OSL_LAB_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", CROSS_PATH_SNIPPET],
                             capture_output=True, text=True, env=env,
                             check=True)
        results[flag] = json.loads(out.stdout)
    assert results["0"]["numba"] is False
    assert results["1"]["acc"] == pytest.approx(results["0"]["acc"],
                                                rel=1e-12)
    assert results["1"]["log_mid"] == pytest.approx(results["0"]["log_mid"],
                                                    rel=1e-12)
    assert results["1"]["vacc"] == pytest.approx(results["0"]["vacc"],
                                                 rel=1e-12)
    assert np.allclose(results["1"]["fac"], results["0"]["fac"],
                       rtol=1e-10, atol=1e-14)
