from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgsnn import kernels, single, taskgen
from cgsnn.numerics import finite_diff_grad, rng, sigmoid
from cgsnn.single import (
    SingleCache,
    SingleSpikeConfig,
    SingleSpikeNet,
    SpikeTimesLayer,
    StdpConfig,
    apply_context_stdp,
    latency_encode,
    loss_single,
    spiking_forward,
    stdp_delta,
)

SMALL = SingleSpikeConfig(n_features=4, n_encoder=4, n_hidden=6, encoder_gain=2.0)


class TestEncoder:
    def test_zero_weights(self):
        net = SingleSpikeNet.init(SMALL, 0)
        net.encoder_weights[:] = 0
        np.testing.assert_array_equal(single.encoder_forward(net, np.ones(4)), 0.5)

    def test_matches_oracle(self):
        net = SingleSpikeNet.init(SMALL, 3)
        x = rng(3, "x").uniform(size=4)
        ref = 1 / (1 + np.exp(-(net.encoder_weights @ x + net.encoder_bias)))
        np.testing.assert_allclose(single.encoder_forward(net, x)[0], ref, rtol=1e-14)

    @given(arrays(float, 4, elements=st.floats(-5, 5)))
    def test_open_interval(self, x):
        s = single.encoder_forward(SingleSpikeNet.init(SMALL, 1), x)
        assert np.all((s > 0) & (s < 1))


class TestLatency:
    def test_half(self):
        assert latency_encode(0.5) == pytest.approx(math.e)

    def test_earliest(self):
        assert latency_encode(1.0) == 1.0

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_monotone(self, a, b):
        if a > b:
            assert latency_encode(a) < latency_encode(b)


class TestSpikingForward:
    def test_single_input(self):
        layer = spiking_forward([[2.0]], [[1.0]])
        assert layer.z_values[0, 0] == pytest.approx(2.0)
        assert layer.times[0, 0] == pytest.approx(math.log(2))

    def test_unit_weight_never_fires(self):
        assert np.isinf(spiking_forward([[1.0]], [[1.0]]).z_values[0, 0])

    def test_two_inputs_need_both(self):
        layer = spiking_forward([[0.8, 0.8]], [[1.0, math.e]])
        z = layer.z_values[0, 0]
        assert z == pytest.approx((0.8 + 0.8 * math.e) / 0.6, rel=1e-12)
        assert z > math.e
        assert layer.n_causal[0, 0] == 2

    @given(
        arrays(float, (3, 5), elements=st.floats(-1, 2)),
        arrays(float, (2, 5), elements=st.floats(0, 2)),
    )
    def test_causality(self, w, t_in):
        z_in = np.exp(t_in)
        layer = spiking_forward(w, z_in)
        for b in range(2):
            for j in range(3):
                z = layer.z_values[b, j]
                if np.isfinite(z):
                    assert z >= 1.0
                    members = layer.causal_set(b, j)
                    assert np.all(z_in[b, members] < z)
                    assert w[j, members].sum() > 1.0


class TestLoss:
    def test_symmetric(self):
        assert loss_single(1, 2.0, 2.0) == -0.5

    def test_zero_reward(self):
        assert loss_single(0, 1.0, 5.0) == 0

    def test_negative_reward(self):
        ref = math.exp(-1) / (math.exp(-1) + math.exp(-2))
        assert loss_single(-1, 1.0, 2.0) == pytest.approx(ref, rel=1e-12)

    def test_tie_rejects(self):
        assert single.decisions(np.array([[3.0, 3.0], [np.inf, np.inf]])).tolist() == [0, 0]


class TestBackward:
    def test_single_weight_derivative(self):
        w, z = np.array([[2.0]]), np.array([[1.0]])
        layer = spiking_forward(w, z)
        gw, gz = kernels.causal_backward(w, z, layer.z_values, layer.n_causal, layer.order, np.ones((1, 1)))
        assert gw[0, 0] == pytest.approx(-1.0)

    def test_non_causal_weight_has_zero_gradient(self):
        w, z = np.array([[2.0, 0.5]]), np.array([[1.0, 5.0]])
        layer = spiking_forward(w, z)
        assert layer.n_causal[0, 0] == 1
        gw, _ = kernels.causal_backward(w, z, layer.z_values, layer.n_causal, layer.order, np.ones((1, 1)))
        assert gw[0, 1] == 0.0

    def test_gradients_match_finite_differences(self):
        checked = 0
        for seed in range(40):
            net = SingleSpikeNet.init(SMALL, seed)
            g = rng(seed, "trial")
            f = g.uniform(size=(1, 4))
            c = np.array([g.integers(1, 3)])
            r = np.array([float(g.choice([-2, -1, 1, 2]))])
            cache = single.forward(net, f, c)
            _, grads = single.backward_global(net, cache, r)
            ok, num = _numeric(net, f, c, r, cache)
            if not ok:
                continue
            an = np.concatenate([x.ravel() for x in grads])
            assert np.linalg.norm(an - num) <= 1e-4 * max(np.linalg.norm(an), np.linalg.norm(num)) + 1e-9
            checked += 1
        assert checked >= 20


def _numeric(net, f, c, r, cache):
    params = net.params()
    flat = np.concatenate([p.ravel() for p in params])
    sig = (cache.hidden.n_causal.copy(), cache.out.n_causal.copy())
    short = [w.sum(axis=1) < 1 for w in (net.hidden_weights, net.out_weights)]
    stable = [True]

    def loss(x):
        off = 0
        for p in params:
            p[...] = x[off:off + p.size].reshape(p.shape)
            off += p.size
        cc = single.forward(net, f, c)
        same = np.array_equal(cc.hidden.n_causal, sig[0]) and np.array_equal(cc.out.n_causal, sig[1])
        same &= all(np.array_equal(w.sum(axis=1) < 1, s) for w, s in zip((net.hidden_weights, net.out_weights), short))
        stable[0] &= same
        return single.batch_loss(net, f, c, r)

    num = finite_diff_grad(loss, flat.copy(), 1e-6)
    loss(flat)
    return stable[0], num


class TestStdp:
    def test_decays(self):
        assert stdp_delta(0.0, 1e6, StdpConfig()) == pytest.approx(0.0, abs=1e-300)

    def test_coincidence(self):
        assert stdp_delta(1.0, 1.0, StdpConfig()) == 0.0

    def test_closed_form(self):
        assert stdp_delta(0.0, 5.0, StdpConfig(A_plus=0.1, tau_plus=5.0)) == pytest.approx(0.1 * math.exp(-1))

    def test_depression_branch(self):
        assert stdp_delta(5.0, 0.0, StdpConfig()) == pytest.approx(-0.05 * math.exp(-1))

    @pytest.mark.parametrize("kw", [{"A_plus": 0.0}, {"A_minus": 0.1}, {"tau_plus": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            StdpConfig(**kw)

    def _cache(self, hidden_t):
        E = 2
        cfg = SingleSpikeConfig(n_features=2, n_encoder=E, n_hidden=len(hidden_t))
        net = SingleSpikeNet.init(cfg, 0)
        enc_t = np.array([[0.5, 1.0]])
        z_in = np.hstack([np.exp(enc_t), [[1.0, np.inf]]])
        hz = np.exp(np.array([hidden_t], dtype=float))
        hidden = SpikeTimesLayer(hz, np.ones_like(hz, dtype=int), np.zeros((1, E + 2), dtype=int))
        cache = SingleCache(np.zeros((1, 2)), np.array([1]), np.full((1, E), 0.5), z_in, hidden, hidden)
        return net, cache

    def test_closed_form_update(self):
        net, cache = self._cache([5.5])
        before = net.hidden_weights.copy()
        apply_context_stdp(net, cache, StdpConfig(lambda_local=1.0))
        diff = net.hidden_weights - before
        assert diff[0, 2] == pytest.approx(0.1 * math.exp(-1))
        assert diff[0, 3] == 0.0  # inactive context line
        np.testing.assert_array_equal(diff[:, :2], 0.0)

    def test_silent_hidden_no_update(self):
        net, cache = self._cache([np.inf, np.inf])
        before = net.hidden_weights.copy()
        apply_context_stdp(net, cache, StdpConfig(lambda_local=1.0))
        np.testing.assert_array_equal(net.hidden_weights, before)

    def test_only_context_rows_change(self):
        net = SingleSpikeNet.init(SingleSpikeConfig(), 2)
        tp = taskgen.to_arrays(taskgen.make_grid())
        cache = single.forward(net, tp.features, tp.contexts)
        before = net.copy()
        apply_context_stdp(net, cache, StdpConfig())
        E = net.cfg.n_encoder
        assert np.array_equal(net.hidden_weights[:, :E], before.hidden_weights[:, :E])
        assert np.array_equal(net.out_weights, before.out_weights)
        assert np.array_equal(net.encoder_weights, before.encoder_weights)
        assert not np.array_equal(net.hidden_weights[:, E:], before.hidden_weights[:, E:])


def test_context_mask_layout():
    net = SingleSpikeNet.init(SingleSpikeConfig(), 0)
    E = net.cfg.n_encoder
    assert np.all(net.context_mask[:, E:] == 1) and np.all(net.context_mask[:, :E] == 0)


def _train(I_n, seed=0, n=60):
    cur = taskgen.make_curriculum("blocked", n, seed)
    tp = taskgen.to_arrays(taskgen.make_grid())
    net = SingleSpikeNet.init(SingleSpikeConfig(), seed)
    return single.train_single(net, taskgen.to_arrays(cur.trials), tp, I_n=I_n, eval_every=25), net


def test_training_is_deterministic():
    (a, na), (b, nb) = _train(1), _train(1)
    assert a.losses == b.losses
    assert np.array_equal(na.hidden_weights, nb.hidden_weights)


def test_stdp_arm_differs_from_vanilla():
    (_, vanilla), (_, stdp) = _train(0), _train(1)
    E = vanilla.cfg.n_encoder
    assert not np.array_equal(vanilla.hidden_weights[:, E:], stdp.hidden_weights[:, E:])


def test_eval_cadence():
    log, _ = _train(1, n=60)
    assert log.eval_trials.tolist() == [0, 32, 64, 80, 112, 120]


def test_diverged_loss():
    net = SingleSpikeNet.init(SMALL, 0)
    net.out_weights[:] = np.nan
    with pytest.raises(single.DivergedLoss):
        single.sgd_step(net, np.ones((1, 4)), np.array([1]), np.array([1.0]))


def test_weight_sum_penalty_gradient():
    net = SingleSpikeNet.init(SMALL, 0)
    net.out_weights[0] = 0.01
    g = single.weight_sum_grad(net.out_weights, 2.0)
    assert np.all(g[0] == -2.0)
    assert np.all(g[1] == 0.0) == (net.out_weights[1].sum() >= 1)
