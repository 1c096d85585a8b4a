"""Multi-spike context-gated network.

Clocked IF/LIF layers driven by constant input currents, trained with
spatio-temporal backpropagation through an arctan-family surrogate, plus an
Oja step on the context-to-hidden weights and optional "sluggish" low-pass
filtering of the context lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .numerics import rng
from .taskgen import TrialArrays

N_CONTEXT = 2


class DivergedLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class MultiSpikeConfig:
    n_features: int = 25
    h1: int = 100
    h2: int = 100
    n_out: int = 2
    neuron: str = "if"
    tau: float = 10.0
    T: int = 10
    v_th: float = 1.0
    surrogate_alpha: float = 2.0
    lr: float = 0.2
    batch_size: int = 16
    init_gain: float = 2.0
    context_gain: float = 1.0
    hidden_bias: tuple[float, float] = (-0.3, -0.1)
    context_init: tuple[float, float] | None = (0.0, 0.7)

    @property
    def decay(self) -> float:
        if self.neuron == "if":
            return 1.0
        if self.neuron == "lif":
            return math.exp(-1.0 / self.tau)
        raise ValueError(f"unknown neuron kind {self.neuron!r}")

    @property
    def n_inputs(self) -> int:
        return self.n_features + N_CONTEXT


@dataclass(frozen=True)
class OjaConfig:
    eta_hebb: float = 0.084
    updates_per_step: int = 1

    def __post_init__(self):
        if self.eta_hebb <= 0:
            raise ValueError("eta_hebb must be positive")


@dataclass
class SluggishConfig:
    alpha: float = 0.0
    ema_state: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("sluggish alpha must lie in [0, 1)")


@dataclass
class MultiSpikeNet:
    """Weights are stored ``(n_out, n_in)``; context lines are the last two
    input columns of the first layer."""

    cfg: MultiSpikeConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    context_mask: np.ndarray
    hidden_gates: dict[int, list[np.ndarray]] | None = None

    @classmethod
    def init(cls, cfg: MultiSpikeConfig, seed: int) -> MultiSpikeNet:
        sizes = [cfg.n_inputs, cfg.h1, cfg.h2, cfg.n_out]
        gen = rng(seed, "multi", "init")
        weights = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            bound = cfg.init_gain / math.sqrt(n_in)
            weights.append(gen.uniform(-bound, bound, size=(n_out, n_in)))
        if cfg.context_init is not None:
            lo, hi = cfg.context_init
            weights[0][:, cfg.n_features:] = gen.uniform(lo, hi, size=(cfg.h1, N_CONTEXT))
        biases = [np.full(n, float(b0)) for n, b0 in zip(sizes[1:-1], cfg.hidden_bias)] + [np.zeros(sizes[-1])]
        mask = np.zeros_like(weights[0])
        mask[:, cfg.n_features:] = 1.0
        return cls(cfg=cfg, weights=weights, biases=biases, context_mask=mask)

    def copy(self) -> MultiSpikeNet:
        return MultiSpikeNet(
            cfg=self.cfg,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            context_mask=self.context_mask.copy(),
            hidden_gates=self.hidden_gates,
        )

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


# --------------------------------------------------------------------------
# neuron dynamics
# --------------------------------------------------------------------------


def step_neuron(u: float, x_in: float, kind: str = "if", tau: float = 10.0, b: float = 0.0,
                v_th: float = 1.0) -> tuple[float, int]:
    """Advance one neuron by one step; hard reset to zero on a spike."""
    if kind == "if":
        u_pre = u + x_in + b
    elif kind == "lif":
        u_pre = u * math.exp(-1.0 / tau) + x_in + b
    else:
        raise ValueError(f"unknown neuron kind {kind!r}")
    if u_pre >= v_th:
        return 0.0, 1
    return u_pre, 0


def surrogate_grad(x, alpha: float = 2.0):
    """Arctan surrogate ``alpha / (2 (1 + (pi/2 alpha x)^2))``."""
    x = np.asarray(x, dtype=float)
    out = alpha / (2.0 * (1.0 + (0.5 * math.pi * alpha * x) ** 2))
    return float(out) if out.ndim == 0 else out


def context_inputs(contexts: np.ndarray, gain: float = 1.0) -> np.ndarray:
    """One-hot context lines for task ids 1/2."""
    contexts = np.asarray(contexts, dtype=int)
    out = np.zeros((contexts.size, N_CONTEXT))
    out[np.arange(contexts.size), contexts - 1] = gain
    return out


@dataclass
class ForwardCache:
    inputs: np.ndarray
    u_pre: list[np.ndarray]  # per layer (T, B, n)
    spikes: list[np.ndarray]  # per layer (T, B, n)
    gates: list[np.ndarray | None]

    @property
    def counts(self) -> np.ndarray:
        return self.spikes[-1].sum(axis=0)

    def hidden_rates(self, layer: int = 0) -> np.ndarray:
        return self.spikes[layer].mean(axis=0)


def _gates_for(net: MultiSpikeNet, contexts: np.ndarray | None, batch: int) -> list[np.ndarray | None]:
    n_hidden = len(net.weights) - 1
    if net.hidden_gates is None or contexts is None:
        return [None] * n_hidden
    out = []
    for layer in range(n_hidden):
        table = np.stack([net.hidden_gates[task][layer] for task in sorted(net.hidden_gates)])
        out.append(table[np.asarray(contexts, dtype=int) - 1])
    return out


def forward_batch(net: MultiSpikeNet, inputs: np.ndarray, contexts: np.ndarray | None = None) -> ForwardCache:
    """Run the clocked network for ``T`` steps on a batch of input rows.

    ``inputs`` holds features followed by the (possibly filtered) context
    lines; each row is injected as a constant current every step.
    """
    cfg = net.cfg
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    gates = _gates_for(net, contexts, inputs.shape[0])
    u_pre, spikes = kernels.multi_forward(
        inputs, net.weights, net.biases, gates, cfg.T, cfg.decay, cfg.v_th
    )
    return ForwardCache(inputs=inputs, u_pre=u_pre, spikes=spikes, gates=gates)


def count_loss(counts: np.ndarray, rewards: np.ndarray, T: int) -> tuple[float, np.ndarray]:
    """Reward-weighted softmax cross-entropy on mean output spike counts.

    Returns the batch-mean loss and its gradient w.r.t. the counts. Trials with
    zero reward contribute nothing.
    """
    logits = counts / T
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    target = np.where(rewards > 0, 0, 1)
    weight = np.abs(rewards)
    B = counts.shape[0]
    loss = -float(np.sum(weight * logp[np.arange(B), target])) / B
    p = np.exp(logp)
    onehot = np.zeros_like(p)
    onehot[np.arange(B), target] = 1.0
    grad = weight[:, None] * (p - onehot) / B / T
    return loss, grad


def backward_stbp(net: MultiSpikeNet, cache: ForwardCache, grad_counts: np.ndarray):
    """Backpropagation through time with surrogate spike derivatives.

    The reset path is treated as a gradient cut. Returns ``(weight_grads,
    bias_grads)`` in the same layout as the network parameters.
    """
    cfg = net.cfg
    return kernels.multi_backward(
        cache.inputs, net.weights, cache.u_pre, cache.spikes, cache.gates, grad_counts,
        cfg.decay, cfg.v_th, cfg.surrogate_alpha,
    )


def decisions_from_counts(counts: np.ndarray) -> np.ndarray:
    """1 = accept (output 0 strictly more spikes), 0 = reject (ties included)."""
    return (counts[:, 0] > counts[:, 1]).astype(int)


# --------------------------------------------------------------------------
# local plasticity
# --------------------------------------------------------------------------


def oja_update(w_context: np.ndarray, x: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """Elementwise Oja step ``w += eta * y * (x - w * y)`` averaged over a batch.

    ``w_context`` is ``(n_hidden, n_context)``, ``x`` is ``(B, n_context)`` and
    ``y`` is ``(B, n_hidden)``.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    yy = y[:, :, None]
    delta = eta * yy * (x[:, None, :] - w_context[None, :, :] * yy)
    return w_context + delta.mean(axis=0)


def sluggish_filter(cfg: SluggishConfig, x_t: np.ndarray) -> np.ndarray:
    """Exponential moving average of the context lines across trials."""
    x_t = np.asarray(x_t, dtype=float)
    if cfg.alpha == 0.0:
        cfg.ema_state = x_t.copy()
        return x_t
    if cfg.ema_state is None:
        cfg.ema_state = x_t.copy()
        return x_t.copy()
    out = (1.0 - cfg.alpha) * x_t + cfg.alpha * cfg.ema_state
    cfg.ema_state = out
    return out


def filter_context_stream(alpha: float, contexts: np.ndarray, gain: float = 1.0) -> np.ndarray:
    cfg = SluggishConfig(alpha=alpha)
    raw = context_inputs(contexts, gain)
    return np.stack([sluggish_filter(cfg, row) for row in raw]) if len(raw) else raw


def apply_oja(net: MultiSpikeNet, cache: ForwardCache, eta: float) -> None:
    cfg = net.cfg
    x = cache.inputs[:, cfg.n_features:]
    y = cache.hidden_rates(0)
    w1 = net.weights[0]
    w1[:, cfg.n_features:] = oja_update(w1[:, cfg.n_features:], x, y, eta)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def evaluate(net: MultiSpikeNet, templates: TrialArrays) -> tuple[np.ndarray, ForwardCache]:
    inputs = np.hstack([templates.features, context_inputs(templates.contexts, net.cfg.context_gain)])
    cache = forward_batch(net, inputs, templates.contexts)
    return decisions_from_counts(cache.counts), cache


def sgd_step(net: MultiSpikeNet, inputs, contexts, rewards, grad_hook=None) -> float:
    cache = forward_batch(net, inputs, contexts)
    loss, g_counts = count_loss(cache.counts, rewards, net.cfg.T)
    if not math.isfinite(loss):
        raise DivergedLoss(f"non-finite loss {loss}")
    gw, gb = backward_stbp(net, cache, g_counts)
    if grad_hook is not None:
        gw, gb = grad_hook(net, cache, gw, gb)
    lr = net.cfg.lr
    for w, g in zip(net.weights, gw):
        w -= lr * g
    for b, g in zip(net.biases, gb):
        b -= lr * g
    return loss


def train_multi(
    net: MultiSpikeNet,
    trials: TrialArrays,
    templates: TrialArrays,
    *,
    I_m: int = 1,
    I_n: int = 1,
    oja: OjaConfig | None = None,
    sluggish_alpha: float = 0.0,
    eval_every: int = 25,
    grad_hook=None,
    batch_hook=None,
    method: str = "cg",
    regime: str = "",
) -> TrainLog:
    """Interleave ``I_m`` STBP steps with ``I_n`` Oja steps per minibatch.

    ``grad_hook(net, cache, gw, gb)`` may rewrite gradients (OWM projection);
    ``batch_hook(net, inputs, contexts)`` runs after each minibatch.
    """
    from .records import EvalRecord, TrainLog, template_accuracy

    if I_m < 0 or I_n < 0:
        raise ValueError("I_m and I_n must be non-negative")
    oja = oja or OjaConfig()
    cfg = net.cfg
    ctx = filter_context_stream(sluggish_alpha, trials.contexts, cfg.context_gain)
    inputs_all = np.hstack([trials.features, ctx])
    log = TrainLog(model="multi", method=method, regime=regime)

    def record(n_seen: int) -> None:
        dec, _ = evaluate(net, templates)
        log.evals.append(EvalRecord(n_seen, dec, template_accuracy(dec, templates.rewards, templates.contexts)))

    record(0)
    next_eval = eval_every
    n = len(trials.rewards)
    bs = cfg.batch_size
    for start in range(0, n, bs):
        sl = slice(start, min(start + bs, n))
        inputs, contexts, rewards = inputs_all[sl], trials.contexts[sl], trials.rewards[sl]
        for _ in range(I_m):
            log.losses.append(sgd_step(net, inputs, contexts, rewards, grad_hook))
        for _ in range(I_n):
            apply_oja(net, forward_batch(net, inputs, contexts), oja.eta_hebb)
        if batch_hook is not None:
            batch_hook(net, inputs, contexts)
        seen = sl.stop
        if seen >= next_eval or seen == n:
            record(seen)
            while next_eval <= seen:
                next_eval += eval_every

    _, cache = evaluate(net, templates)
    log.hidden_activity = cache.hidden_rates(0)
    log.template_contexts = templates.contexts.copy()
    log.extras["hidden2_activity"] = cache.hidden_rates(1)
    w1 = net.weights[0]
    log.weight_summary = {
        "context_abs_mean": float(np.abs(w1[:, cfg.n_features:]).mean()),
        "feature_abs_mean": float(np.abs(w1[:, : cfg.n_features]).mean()),
    }
    return log
