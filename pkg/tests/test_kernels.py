"""Compiled loops vs vectorised numpy, and both against the per-example losses."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_ground
from emd2loss import _jit, kernels
from emd2loss.losses import emd2_ordered, emd_single_label, hybrid_regularizer, sinkhorn_plan


def _batch(rng, n=40, C=7):
    P = rng.dirichlet(np.ones(C), size=n)
    return P, rng.integers(0, C, n), random_ground(rng, C)


def _inputs(name, rng):
    P, y, D = _batch(rng)
    if name == "emd2_ordered":
        return (P, y)
    if name == "single_label":
        return (P, y, D)
    if name == "hybrid_reg":
        return (P, y, D, 2.0, -0.25)
    if name == "percentile_rows":
        return (rng.integers(0, 5, (9, 9)).astype(float),)
    if name == "sinkhorn":
        return (P[:5], np.full((5, P.shape[1]), 1.0 / P.shape[1]), D, 0.3, 200)
    raise KeyError(name)


@pytest.mark.parametrize("name", [k for k in kernels.ROUTES if k != "accumulate"])
def test_routes_agree(name, rng):
    np_fn, jit_fn = kernels.ROUTES[name]
    args = _inputs(name, rng)
    a, b = np_fn(*args), jit_fn(*args)
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)


def test_accumulate_routes_agree(rng):
    F = rng.standard_normal((60, 5))
    F[3] = 0.0
    F[10] = np.nan
    y = rng.integers(0, 4, 60)
    out = []
    for fn in kernels.ROUTES["accumulate"]:
        sums, counts = np.zeros((4, 5)), np.zeros(4, dtype=np.int64)
        skipped = fn(sums, counts, F, y)
        out.append((sums, counts, int(skipped)))
    np.testing.assert_allclose(out[0][0], out[1][0], atol=1e-14)
    assert out[0][1].tolist() == out[1][1].tolist()
    assert out[0][2] == out[1][2] == 2


def test_batched_kernels_match_single_example_losses(rng):
    P, y, D = _batch(rng, n=25, C=6)
    v, g = kernels.emd2_ordered_batch(P, y)
    v2, g2 = kernels.single_label_batch(P, y, D)
    v3, g3 = kernels.hybrid_reg_batch(P, y, D, 1.0, -0.5)
    for i in range(25):
        r = emd2_ordered(P[i], y[i])
        assert v[i] == pytest.approx(r.value, abs=1e-14)
        np.testing.assert_allclose(g[i], r.grad, atol=1e-14)
        s = emd_single_label(P[i], y[i], D)
        assert v2[i] == pytest.approx(s.value, abs=1e-14)
        np.testing.assert_allclose(g2[i], s.grad)
        assert v3[i] == pytest.approx(hybrid_regularizer(P[i], y[i], D, 1.0, -0.5), abs=1e-14)
        np.testing.assert_allclose(g3[i], 2 * P[i] * (D[:, y[i]] - 0.5), atol=1e-14)


def test_sinkhorn_batch_rows_independent(rng):
    P, y, D = _batch(rng, n=4, C=5)
    T = np.full_like(P, 0.2)
    F, f, g = kernels.sinkhorn_batch(P, T, D, 0.5, 300)
    for i in range(4):
        one = sinkhorn_plan(P[i], T[i], D, 0.5, 300)
        np.testing.assert_allclose(F[i], one.plan, atol=1e-14)
        np.testing.assert_allclose(f[i], one.f, atol=1e-12)


def test_sinkhorn_zero_mass_entry_stays_finite():
    p = np.array([0.0, 0.5, 0.5])
    t = np.array([0.2, 0.3, 0.5])
    sol = sinkhorn_plan(p, t, random_ground(np.random.default_rng(0), 3), 0.1, 500)
    assert np.all(np.isfinite(sol.plan))
    assert sol.plan[0].sum() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")
def test_env_flag_selects_numpy_route():
    code = ("import emd2loss._jit as j, emd2loss.kernels as k, numpy as np;"
            "P = np.array([[0.2, 0.3, 0.5]]);"
            "print(j.USE_NUMBA, k.emd2_ordered_batch(P, np.array([1]))[0][0])")
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, EMD2LOSS_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs[flag] = res.stdout.split()
    assert outs["0"][0] == "True" and outs["1"][0] == "False"
    assert float(outs["0"][1]) == float(outs["1"][1])
