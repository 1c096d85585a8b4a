"""Comparison learners on the multi-spike substrate: vanilla, OWM and XdG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multi import MultiSpikeNet, OjaConfig, train_multi
from .numerics import rng
from .records import TrainLog
from .taskgen import TrialArrays

METHODS = ("vanilla", "owm_last2", "owm_all", "xdg")
DEFAULT_ALPHA_OWM = 1e-3
DEFAULT_GATE_FRACTION = 0.8


class ShapeMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# orthogonal weights modification
# --------------------------------------------------------------------------


@dataclass
class OwmState:
    """Per-layer input-space projectors ``P`` keyed by layer index."""

    projectors: dict[int, np.ndarray]
    alpha_owm: float = DEFAULT_ALPHA_OWM

    @classmethod
    def identity(cls, dims: dict[int, int], alpha_owm: float = DEFAULT_ALPHA_OWM) -> OwmState:
        return cls({layer: np.eye(n) for layer, n in dims.items()}, alpha_owm)


def owm_observe(state: OwmState, layer: int, x) -> OwmState:
    """Rank-one shrinkage of ``P`` along the observed input ``x`` (in place)."""
    P = state.projectors[layer]
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != P.shape[0]:
        raise ShapeMismatch(f"input of length {x.shape[0]} for a {P.shape[0]}-dim projector")
    Px = P @ x
    denom = state.alpha_owm + float(x @ Px)
    if denom <= 0.0 or not np.any(Px):
        return state
    P -= np.outer(Px, Px) / denom
    # keep P exactly symmetric against round-off drift
    P += P.T
    P *= 0.5
    return state


def owm_project(state: OwmState, layer: int, grad) -> np.ndarray:
    """Restrict a ``(n_out, n_in)`` update to the span left open by ``P``."""
    P = state.projectors[layer]
    grad = np.asarray(grad, dtype=float)
    if grad.ndim != 2 or grad.shape[1] != P.shape[0]:
        raise ShapeMismatch(f"gradient shape {grad.shape} does not fit projector {P.shape}")
    return grad @ P


def owm_layers(method: str, n_layers: int = 3) -> tuple[int, ...]:
    """Layer indices whose incoming weights are projected."""
    if method == "owm_last2":
        return tuple(range(n_layers - 2, n_layers))
    if method == "owm_all":
        return tuple(range(n_layers))
    raise ValueError(f"not an OWM method: {method!r}")


# --------------------------------------------------------------------------
# context-dependent gating
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class XdgMasks:
    """``masks[task][layer]`` is a read-only 0/1 vector over that layer's units."""

    masks: dict[int, tuple[np.ndarray, ...]]
    gate_fraction: float = field(default=DEFAULT_GATE_FRACTION)

    def as_gates(self) -> dict[int, list[np.ndarray]]:
        return {task: list(layers) for task, layers in self.masks.items()}


def xdg_make_masks(units_per_layer, n_tasks: int = 2, gate_fraction: float = DEFAULT_GATE_FRACTION,
                   seed: int = 0) -> XdgMasks:
    if not 0.0 <= gate_fraction < 1.0:
        raise ValueError("gate_fraction must lie in [0, 1)")
    masks = {}
    for task in range(1, n_tasks + 1):
        layers = []
        for layer, n in enumerate(units_per_layer):
            gen = rng(seed, "xdg", task, layer)
            m = np.ones(n)
            m[gen.permutation(n)[: int(round(gate_fraction * n))]] = 0.0
            m.flags.writeable = False
            layers.append(m)
        masks[task] = tuple(layers)
    return XdgMasks(masks, gate_fraction)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def _layer_input_means(net: MultiSpikeNet, cache) -> list[np.ndarray]:
    """Batch- and time-averaged input to every weight layer."""
    means = [cache.inputs.mean(axis=0)]
    for spikes in cache.spikes[:-1]:
        means.append(spikes.mean(axis=(0, 1)))
    return means


def train_baseline(
    method: str,
    net: MultiSpikeNet,
    trials: TrialArrays,
    templates: TrialArrays,
    *,
    regime: str = "",
    gate_fraction: float = DEFAULT_GATE_FRACTION,
    alpha_owm: float = DEFAULT_ALPHA_OWM,
    mask_seed: int = 0,
    eval_every: int = 25,
) -> TrainLog:
    """Train ``net`` in place with one of the comparison methods."""
    if method not in METHODS:
        raise ValueError(f"unknown baseline {method!r}; expected one of {METHODS}")
    common = dict(I_m=1, I_n=0, oja=OjaConfig(), eval_every=eval_every, regime=regime)
    if method == "vanilla":
        return train_multi(net, trials, templates, method="vanilla", **common)
    if method == "xdg":
        masks = xdg_make_masks((net.cfg.h1, net.cfg.h2), 2, gate_fraction, mask_seed)
        net.hidden_gates = masks.as_gates() if gate_fraction > 0 else None
        log = train_multi(net, trials, templates, method="xdg", **common)
        log.extras["gate_fraction"] = gate_fraction
        return log

    layers = owm_layers(method, len(net.weights))
    state = OwmState.identity({layer: net.weights[layer].shape[1] for layer in layers}, alpha_owm)
    last_cache = {}

    def project(net_, cache, gw, gb):
        last_cache["cache"] = cache
        gw = list(gw)
        for layer in layers:
            gw[layer] = owm_project(state, layer, gw[layer])
        return gw, gb

    def observe(net_, inputs, contexts):
        means = _layer_input_means(net_, last_cache["cache"])
        for layer in layers:
            owm_observe(state, layer, means[layer])

    log = train_multi(net, trials, templates, method=method, grad_hook=project, batch_hook=observe, **common)
    log.extras["owm_state"] = state
    return log
