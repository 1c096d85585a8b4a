from __future__ import annotations

import numpy as np
import pytest

from cgsnn import _kernels_py, kernels
from cgsnn.numerics import rng

cy = pytest.importorskip("cgsnn._kernels_cy")


def _multi_case(seed, sizes, gated=False, batch=7):
    g = rng(seed, "kern")
    inputs = g.uniform(0, 1, (batch, sizes[0]))
    weights = [g.normal(0, 2 / np.sqrt(a), (b, a)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [g.normal(0, 0.2, b) for b in sizes[1:]]
    gates = [
        (g.random((batch, n)) < 0.5).astype(float) if gated else None for n in sizes[1:-1]
    ]
    grad = g.normal(size=(batch, sizes[-1]))
    return inputs, weights, biases, gates, grad


@pytest.mark.parametrize("sizes", [(9, 12, 8, 2), (5, 6, 2), (5, 7, 6, 5, 2)])
@pytest.mark.parametrize("gated", [False, True])
@pytest.mark.parametrize("decay", [1.0, 0.9])
def test_multi_parity(sizes, gated, decay):
    inputs, weights, biases, gates, grad = _multi_case(len(sizes), sizes, gated)
    ref = _kernels_py.multi_forward(inputs, weights, biases, gates, 10, decay, 1.0)
    out = cy.multi_forward(inputs, weights, biases, gates, 10, decay, 1.0)
    for a, b in zip(ref, out):
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)
    gref = _kernels_py.multi_backward(inputs, weights, *ref, gates, grad, decay, 1.0, 2.0)
    gout = cy.multi_backward(inputs, weights, *out, gates, grad, decay, 1.0, 2.0)
    for a, b in zip(gref, gout):
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_causal_parity(seed):
    g = rng(seed, "causal")
    w = g.uniform(-0.2, 0.6, (6, 9))
    z = np.exp(g.uniform(0, 2, (11, 9)))
    z[g.random(z.shape) < 0.2] = np.inf
    ref = _kernels_py.causal_forward(w, z)
    out = cy.causal_forward(w, z)
    np.testing.assert_array_equal(ref[1], out[1])
    np.testing.assert_array_equal(ref[2], out[2])
    np.testing.assert_allclose(ref[0], out[0], rtol=1e-12)
    gz = np.where(np.isfinite(ref[0]), g.normal(size=ref[0].shape), 0.0)
    gref = _kernels_py.causal_backward(w, z, *ref, gz)
    gout = cy.causal_backward(w, z, *out, gz)
    for a, b in zip(gref, gout):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_dispatch_reports_backend():
    assert kernels.BACKEND in ("cython", "python")


def test_pure_python_override(monkeypatch):
    import importlib

    monkeypatch.setenv("CGSNN_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
        assert mod.causal_forward is _kernels_py.causal_forward
    finally:
        monkeypatch.delenv("CGSNN_PURE_PYTHON")
        importlib.reload(kernels)
