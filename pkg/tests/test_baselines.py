from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgsnn import baselines, multi, taskgen
from cgsnn.baselines import OwmState, ShapeMismatch, owm_observe, owm_project, xdg_make_masks
from cgsnn.numerics import rng


class TestOwm:
    def test_zero_input_leaves_projector(self):
        st_ = OwmState.identity({0: 4})
        owm_observe(st_, 0, np.zeros(4))
        np.testing.assert_array_equal(st_.projectors[0], np.eye(4))

    def test_shrinkage_along_input(self):
        g = rng(0, "owm")
        st_ = OwmState.identity({0: 5}, alpha_owm=0.1)
        owm_observe(st_, 0, g.normal(size=5))
        x = g.normal(size=5)
        before = np.linalg.norm(st_.projectors[0] @ x)
        xPx = float(x @ st_.projectors[0] @ x)
        owm_observe(st_, 0, x)
        assert np.linalg.norm(st_.projectors[0] @ x) <= 0.1 / (0.1 + xPx) * before + 1e-12

    def test_repeated_observation_closes_direction(self):
        st_ = OwmState.identity({0: 3})
        x = np.array([1.0, 2.0, -1.0])
        norms = []
        for _ in range(500):
            owm_observe(st_, 0, x)
            norms.append(np.linalg.norm(st_.projectors[0] @ x))
        assert all(b <= a for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 1e-6 * np.linalg.norm(x)

    def test_project_identity_and_zero(self):
        grad = rng(1, "g").normal(size=(3, 4))
        st_ = OwmState.identity({0: 4})
        np.testing.assert_array_equal(owm_project(st_, 0, grad), grad)
        st_.projectors[0][:] = 0
        np.testing.assert_array_equal(owm_project(st_, 0, grad), 0)

    def test_projected_rows_orthogonal_to_seen_input(self):
        st_ = OwmState.identity({0: 6})
        x = rng(2, "x").normal(size=6)
        for _ in range(200):
            owm_observe(st_, 0, x)
        out = owm_project(st_, 0, rng(2, "g").normal(size=(4, 6)))
        u = x / np.linalg.norm(x)
        for row in out:
            assert abs(row @ u) < 1e-3 * np.linalg.norm(row)

    def test_shape_mismatch(self):
        st_ = OwmState.identity({0: 4})
        with pytest.raises(ShapeMismatch):
            owm_project(st_, 0, np.ones((2, 3)))
        with pytest.raises(ShapeMismatch):
            owm_observe(st_, 0, np.ones(3))

    def test_symmetric_psd_after_many_updates(self):
        st_ = OwmState.identity({0: 8})
        g = rng(3, "psd")
        for _ in range(10_000):
            owm_observe(st_, 0, g.uniform(0, 1, 8))
        P = st_.projectors[0]
        assert np.max(np.abs(P - P.T)) < 1e-8
        assert np.linalg.eigvalsh(P).min() > -1e-8

    def test_layer_sets(self):
        assert baselines.owm_layers("owm_last2") == (1, 2)
        assert baselines.owm_layers("owm_all") == (0, 1, 2)


class TestXdg:
    def test_counts(self):
        m = xdg_make_masks((100, 100), gate_fraction=0.8, seed=0)
        for task in (1, 2):
            for layer in m.masks[task]:
                assert int((layer == 0).sum()) == 80

    def test_reproducible_and_readonly(self):
        a = xdg_make_masks((50,), seed=3)
        b = xdg_make_masks((50,), seed=3)
        assert np.array_equal(a.masks[1][0], b.masks[1][0])
        with pytest.raises(ValueError):
            a.masks[1][0][0] = 5.0

    def test_overlap_expectation(self):
        overlaps = []
        for seed in range(200):
            m = xdg_make_masks((100,), seed=seed)
            overlaps.append(float((m.masks[1][0] * m.masks[2][0]).sum()))
        assert np.mean(overlaps) == pytest.approx(4.0, abs=0.5)

    @given(st.floats(0.0, 0.99), st.integers(1, 200))
    def test_fraction_within_one_unit(self, frac, n):
        m = xdg_make_masks((n,), gate_fraction=frac, seed=0)
        assert abs(float((m.masks[1][0] == 0).mean()) - frac) <= 1.0 / n + 1e-12


def _arrays(n=48):
    cur = taskgen.make_curriculum("blocked", n, 0)
    return taskgen.to_arrays(cur.trials), taskgen.to_arrays(taskgen.make_grid())


def test_xdg_with_no_gating_equals_vanilla():
    trials, tp = _arrays()
    a = multi.MultiSpikeNet.init(multi.MultiSpikeConfig(), 0)
    b = multi.MultiSpikeNet.init(multi.MultiSpikeConfig(), 0)
    la = baselines.train_baseline("vanilla", a, trials, tp)
    lb = baselines.train_baseline("xdg", b, trials, tp, gate_fraction=0.0)
    assert la.losses == lb.losses
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_xdg_gated_units_stay_silent():
    trials, tp = _arrays()
    net = multi.MultiSpikeNet.init(multi.MultiSpikeConfig(), 0)
    baselines.train_baseline("xdg", net, trials, tp)
    _, cache = multi.evaluate(net, tp)
    for layer in range(2):
        for task in (1, 2):
            gate = net.hidden_gates[task][layer]
            rows = tp.contexts == task
            assert cache.spikes[layer][:, rows][:, :, gate == 0].sum() == 0


@pytest.mark.parametrize("method", ["owm_last2", "owm_all"])
def test_owm_training_runs_and_protects_first_layer(method):
    trials, tp = _arrays()
    net = multi.MultiSpikeNet.init(multi.MultiSpikeConfig(), 0)
    w0 = net.weights[0].copy()
    log = baselines.train_baseline(method, net, trials, tp)
    assert len(log.evals) >= 2
    assert np.all(np.isfinite(net.weights[0]))
    assert not np.array_equal(w0, net.weights[0])


def test_unknown_method():
    trials, tp = _arrays(4)
    with pytest.raises(ValueError):
        baselines.train_baseline("ewc", multi.MultiSpikeNet.init(multi.MultiSpikeConfig(), 0), trials, tp)
