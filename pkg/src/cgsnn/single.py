"""Single-spike context-gated network.

Every spiking neuron fires at most once. Spike times are handled in the
z-domain (``z = exp(t)``) where a non-leaky IF neuron with exponentially
saturating synaptic currents fires at

    z_out = sum_C(w_i z_i) / (sum_C(w_i) - 1)

for its causal set ``C`` of earliest inputs. A sigmoid MLP front end turns the
stimulus into input latencies; the two context lines fire at ``t = 0`` when
active. Global training uses exact spike-time gradients; local training is
STDP on the context-line weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import rng, sigmoid
from .records import EvalRecord, TrainLog, template_accuracy
from .taskgen import TrialArrays

N_CONTEXT = 2


class DivergedLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class SingleSpikeConfig:
    n_features: int = 25
    n_encoder: int = 100
    n_hidden: int = 80
    n_out: int = 2
    t_max: float = 2.0
    v_th: float = 1.0
    lr: float = 0.03
    optimizer: str = "adam"  # or "sgd"
    batch_size: int = 16
    z_cap_factor: float = 10.0
    signed_reward: bool = True
    encoder_gain: float = 3.0
    hidden_init: tuple[float, float] = (8.0, 8.0)  # (mean, std) x 1/n_in
    out_init: tuple[float, float] = (4.0, 4.0)
    # penalty on max(0, 1 - sum_i w_ji) that keeps silent neurons recoverable
    weight_sum_cost: float = 1.0
    # per-tensor gradient norm ceiling; 0 disables clipping
    grad_clip: float = 0.0

    @property
    def z_cap(self) -> float:
        return math.exp(self.t_max) * self.z_cap_factor


@dataclass(frozen=True)
class StdpConfig:
    A_plus: float = 0.1
    A_minus: float = -0.05
    tau_plus: float = 5.0
    tau_minus: float = 5.0
    lambda_local: float = 0.02
    updates_per_step: int = 1

    def __post_init__(self):
        if self.A_plus <= 0 or self.A_minus >= 0:
            raise ValueError("need A_plus > 0 and A_minus < 0")
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ValueError("time constants must be positive")
        if self.updates_per_step < 0:
            raise ValueError("updates_per_step must be >= 0")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def copy(self) -> AdamState:
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t, self.beta1, self.beta2, self.eps)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class SingleSpikeNet:
    """Weights are stored ``(n_out, n_in)``. The hidden layer's inputs are the
    encoder units followed by the two context lines."""

    cfg: SingleSpikeConfig
    encoder_weights: np.ndarray
    encoder_bias: np.ndarray
    hidden_weights: np.ndarray
    out_weights: np.ndarray
    context_mask: np.ndarray
    opt_state: AdamState | None = field(default=None, repr=False, compare=False)

    @classmethod
    def init(cls, cfg: SingleSpikeConfig, seed: int) -> SingleSpikeNet:
        gen = rng(seed, "single", "init")
        bound = cfg.encoder_gain / math.sqrt(cfg.n_features)
        enc = gen.uniform(-bound, bound, size=(cfg.n_encoder, cfg.n_features))
        n_in_h = cfg.n_encoder + N_CONTEXT
        m, s = cfg.hidden_init
        hid = gen.normal(m / n_in_h, s / n_in_h, size=(cfg.n_hidden, n_in_h))
        m, s = cfg.out_init
        out = gen.normal(m / cfg.n_hidden, s / cfg.n_hidden, size=(cfg.n_out, cfg.n_hidden))
        mask = np.zeros_like(hid)
        mask[:, cfg.n_encoder:] = 1.0
        return cls(cfg, enc, np.zeros(cfg.n_encoder), hid, out, mask)

    def copy(self) -> SingleSpikeNet:
        return SingleSpikeNet(
            self.cfg,
            self.encoder_weights.copy(),
            self.encoder_bias.copy(),
            self.hidden_weights.copy(),
            self.out_weights.copy(),
            self.context_mask.copy(),
            None if self.opt_state is None else self.opt_state.copy(),
        )

    def params(self) -> list[np.ndarray]:
        return [self.encoder_weights, self.encoder_bias, self.hidden_weights, self.out_weights]

    @property
    def context_weights(self) -> np.ndarray:
        return self.hidden_weights[:, self.cfg.n_encoder:]


# --------------------------------------------------------------------------
# forward
# --------------------------------------------------------------------------


def encoder_forward(net: SingleSpikeNet, features) -> np.ndarray:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    return sigmoid(features @ net.encoder_weights.T + net.encoder_bias)


def latency_encode(intensity, t_max: float = 2.0):
    """Stronger intensities fire earlier: ``z = exp(t_max * (1 - intensity))``."""
    return np.exp(t_max * (1.0 - np.asarray(intensity, dtype=float)))


def context_z(contexts) -> np.ndarray:
    """Active context line fires at ``t = 0`` (z = 1); the other stays silent."""
    contexts = np.asarray(contexts, dtype=int).reshape(-1)
    z = np.full((contexts.size, N_CONTEXT), np.inf)
    z[np.arange(contexts.size), contexts - 1] = 1.0
    return z


@dataclass
class SpikeTimesLayer:
    z_values: np.ndarray
    n_causal: np.ndarray
    order: np.ndarray

    def causal_set(self, trial: int, neuron: int) -> np.ndarray:
        return self.order[trial, : self.n_causal[trial, neuron]]

    @property
    def times(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.z_values)


def spiking_forward(weights: np.ndarray, input_z) -> SpikeTimesLayer:
    z = np.atleast_2d(np.asarray(input_z, dtype=float))
    z_out, n_causal, order = kernels.causal_forward(np.asarray(weights, dtype=float), z)
    return SpikeTimesLayer(z_out, n_causal, order)


@dataclass
class SingleCache:
    features: np.ndarray
    contexts: np.ndarray
    intensity: np.ndarray
    z_hidden_in: np.ndarray
    hidden: SpikeTimesLayer
    out: SpikeTimesLayer

    @property
    def encoder_times(self) -> np.ndarray:
        return np.log(self.z_hidden_in[:, : self.intensity.shape[1]])


def forward(net: SingleSpikeNet, features, contexts) -> SingleCache:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    intensity = encoder_forward(net, features)
    z_in = np.hstack([latency_encode(intensity, net.cfg.t_max), context_z(contexts)])
    hidden = spiking_forward(net.hidden_weights, z_in)
    out = spiking_forward(net.out_weights, hidden.z_values)
    return SingleCache(features, np.asarray(contexts, dtype=int).reshape(-1), intensity, z_in, hidden, out)


def capped_outputs(z_out: np.ndarray, z_cap: float) -> np.ndarray:
    return np.where(np.isfinite(z_out), np.minimum(z_out, z_cap), z_cap)


def decisions(z_out: np.ndarray, z_cap: float = math.inf) -> np.ndarray:
    """Accept when the accept neuron (output 0) fires strictly first."""
    o = capped_outputs(z_out, z_cap)
    return (o[:, 0] < o[:, 1]).astype(int)


# --------------------------------------------------------------------------
# loss and gradients
# --------------------------------------------------------------------------


def loss_single(r, o0, o1):
    """``-r * exp(-o0) / (exp(-o0) + exp(-o1))`` evaluated stably."""
    r = np.asarray(r, dtype=float)
    p0 = sigmoid(np.asarray(o1, dtype=float) - np.asarray(o0, dtype=float))
    out = -r * p0
    return float(out) if np.ndim(out) == 0 else out


def loss_and_output_grad(net: SingleSpikeNet, cache: SingleCache, rewards) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient w.r.t. output z (zero for silent outputs)."""
    cfg = net.cfg
    rewards = np.asarray(rewards, dtype=float)
    r = rewards if cfg.signed_reward else np.abs(rewards)
    z = cache.out.z_values
    fired = np.isfinite(z) & (z < cfg.z_cap)
    o = capped_outputs(z, cfg.z_cap)
    p0 = sigmoid(o[:, 1] - o[:, 0])
    B = o.shape[0]
    loss = float(np.mean(-r * p0))
    dp = p0 * (1.0 - p0)
    g = np.stack([r * dp, -r * dp], axis=1) / B
    return loss, np.where(fired, g, 0.0)


def backward_global(net: SingleSpikeNet, cache: SingleCache, rewards) -> tuple[float, list[np.ndarray]]:
    """Exact gradients of the batch-mean loss for ``net.params()`` order."""
    cfg = net.cfg
    loss, g_out = loss_and_output_grad(net, cache, rewards)
    gw_out, g_zh = kernels.causal_backward(
        net.out_weights, cache.hidden.z_values, cache.out.z_values, cache.out.n_causal, cache.out.order, g_out
    )
    gw_hid, g_zin = kernels.causal_backward(
        net.hidden_weights, cache.z_hidden_in, cache.hidden.z_values, cache.hidden.n_causal,
        cache.hidden.order, g_zh,
    )
    E = cfg.n_encoder
    s = cache.intensity
    z_enc = cache.z_hidden_in[:, :E]
    g_a = g_zin[:, :E] * z_enc * (-cfg.t_max) * s * (1.0 - s)
    gw_enc = g_a.T @ cache.features
    gb_enc = g_a.sum(axis=0)
    if cfg.weight_sum_cost > 0:
        loss += weight_sum_penalty(net, cfg.weight_sum_cost)
        gw_hid = gw_hid + weight_sum_grad(net.hidden_weights, cfg.weight_sum_cost)
        gw_out = gw_out + weight_sum_grad(net.out_weights, cfg.weight_sum_cost)
    return loss, [gw_enc, gb_enc, gw_hid, gw_out]


def weight_sum_penalty(net: SingleSpikeNet, cost: float) -> float:
    total = 0.0
    for w in (net.hidden_weights, net.out_weights):
        total += float(np.maximum(0.0, 1.0 - w.sum(axis=1)).sum())
    return cost * total


def weight_sum_grad(weights: np.ndarray, cost: float) -> np.ndarray:
    """Gradient of ``cost * sum_j max(0, 1 - sum_i w_ji)``."""
    short = weights.sum(axis=1) < 1.0
    return np.where(short[:, None], -cost, 0.0) * np.ones_like(weights)


def batch_loss(net: SingleSpikeNet, features, contexts, rewards) -> float:
    """The objective ``backward_global`` differentiates, penalty included."""
    cache = forward(net, features, contexts)
    loss = loss_and_output_grad(net, cache, rewards)[0]
    if net.cfg.weight_sum_cost > 0:
        loss += weight_sum_penalty(net, net.cfg.weight_sum_cost)
    return loss


# --------------------------------------------------------------------------
# STDP on context weights
# --------------------------------------------------------------------------


def stdp_delta(t_pre, t_post, cfg: StdpConfig):
    """Pair-based STDP window with exponentially decaying lobes; zero at coincidence."""
    t_pre = np.asarray(t_pre, dtype=float)
    t_post = np.asarray(t_post, dtype=float)
    lag = t_post - t_pre
    with np.errstate(over="ignore", invalid="ignore"):
        pot = cfg.A_plus * np.exp(-np.abs(lag) / cfg.tau_plus)
        dep = cfg.A_minus * np.exp(-np.abs(lag) / cfg.tau_minus)
    out = np.where(lag > 0, pot, np.where(lag < 0, dep, 0.0))
    out = np.where(np.isfinite(lag), out, 0.0)
    return float(out) if out.ndim == 0 else out


def context_stdp_deltas(cache: SingleCache, cfg: StdpConfig, n_encoder: int) -> np.ndarray:
    """Summed STDP change for every (hidden, context line) weight over a batch.

    The active context line's spike time is clamped to the earliest encoder
    spike of the same trial; silent hidden neurons contribute nothing.
    """
    t_pre = cache.encoder_times.min(axis=1)  # (B,)
    t_post = cache.hidden.times  # (B, H)
    fired = np.isfinite(t_post)
    d = np.where(fired, stdp_delta(t_pre[:, None], np.where(fired, t_post, 0.0), cfg), 0.0)
    out = np.zeros((t_post.shape[1], N_CONTEXT))
    for c in range(N_CONTEXT):
        sel = cache.contexts == c + 1
        out[:, c] = d[sel].sum(axis=0)
    return out


def apply_context_stdp(net: SingleSpikeNet, cache: SingleCache, cfg: StdpConfig) -> None:
    E = net.cfg.n_encoder
    delta = context_stdp_deltas(cache, cfg, E)
    upd = np.zeros_like(net.hidden_weights)
    upd[:, E:] = delta
    net.hidden_weights += cfg.lambda_local * upd * net.context_mask


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def evaluate(net: SingleSpikeNet, templates: TrialArrays) -> tuple[np.ndarray, SingleCache]:
    cache = forward(net, templates.features, templates.contexts)
    return decisions(cache.out.z_values, net.cfg.z_cap), cache


def sgd_step(net: SingleSpikeNet, features, contexts, rewards) -> float:
    cache = forward(net, features, contexts)
    loss, grads = backward_global(net, cache, rewards)
    if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise DivergedLoss(f"non-finite loss or gradient (loss={loss})")
    clip = net.cfg.grad_clip
    if clip > 0:
        grads = [g * min(1.0, clip / max(float(np.linalg.norm(g)), 1e-300)) for g in grads]
    if net.cfg.optimizer == "adam":
        if net.opt_state is None:
            net.opt_state = AdamState.zeros_like(net.params())
        net.opt_state.step(net.params(), grads, net.cfg.lr)
        return loss
    for p, g in zip(net.params(), grads):
        p -= net.cfg.lr * g
    return loss


def hidden_latency_activity(cache: SingleCache, z_cap: float) -> np.ndarray:
    """Negative hidden spike latency; silent neurons sit at ``-log(z_cap)``."""
    return -np.log(capped_outputs(cache.hidden.z_values, z_cap))


def train_single(
    net: SingleSpikeNet,
    trials: TrialArrays,
    templates: TrialArrays,
    *,
    I_m: int = 1,
    I_n: int = 1,
    stdp: StdpConfig | None = None,
    eval_every: int = 25,
    method: str = "stdp",
    regime: str = "",
) -> TrainLog:
    """Alternate ``I_m`` gradient steps and ``I_n`` context-STDP steps per minibatch."""
    if I_m < 1 or I_n < 0:
        raise ValueError("need I_m >= 1 and I_n >= 0")
    stdp = stdp or StdpConfig()
    cfg = net.cfg
    log = TrainLog(model="single", method=method, regime=regime)

    def record(n_seen: int) -> None:
        dec, _ = evaluate(net, templates)
        log.evals.append(EvalRecord(n_seen, dec, template_accuracy(dec, templates.rewards, templates.contexts)))

    record(0)
    next_eval = eval_every
    n = len(trials.rewards)
    for start in range(0, n, cfg.batch_size):
        sl = slice(start, min(start + cfg.batch_size, n))
        f, c, r = trials.features[sl], trials.contexts[sl], trials.rewards[sl]
        for _ in range(I_m):
            log.losses.append(sgd_step(net, f, c, r))
        for _ in range(I_n):
            apply_context_stdp(net, forward(net, f, c), stdp)
        if sl.stop >= next_eval or sl.stop == n:
            record(sl.stop)
            while next_eval <= sl.stop:
                next_eval += eval_every

    _, cache = evaluate(net, templates)
    log.hidden_activity = hidden_latency_activity(cache, cfg.z_cap)
    log.template_contexts = templates.contexts.copy()
    log.extras["hidden_times"] = cache.hidden.times
    log.weight_summary = weight_summary(net)
    return log


def weight_summary(net: SingleSpikeNet) -> dict[str, float]:
    E = net.cfg.n_encoder
    w = net.hidden_weights
    return {
        "context_abs_mean": float(np.abs(w[:, E:]).mean()),
        "other_abs_mean": float(np.abs(w[:, :E]).mean()),
    }
