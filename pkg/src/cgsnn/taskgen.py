"""Two-context "trees" task: stimuli on a branch x leaf density grid.

Task 1 rewards leaf density, task 2 rewards branch density. Each stimulus is a
Gaussian bump on a ``D x D`` grid so neighbouring stimuli share features.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .numerics import rng

DEFAULT_D = 5
DEFAULT_BLUR = 0.8
DEFAULT_N_PER_TASK = 800
TASKS = (1, 2)


class InvalidGrid(ValueError):
    pass


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    NEUTRAL = "neutral"


def level_reward(level: int, D: int) -> int:
    return int(level) - (D + 1) // 2


def relevant_level(branch: int, leaf: int, task: int) -> int:
    return leaf if task == 1 else branch


def is_congruent(branch: int, leaf: int, D: int) -> bool | None:
    """Whether both rules agree on the choice; ``None`` when either is neutral."""
    rb, rl = level_reward(branch, D), level_reward(leaf, D)
    if rb == 0 or rl == 0:
        return None
    return (rb > 0) == (rl > 0)


@dataclass(frozen=True)
class Stimulus:
    branch_level: int
    leaf_level: int
    context: int
    features: np.ndarray = field(repr=False, compare=False)
    reward: int
    congruent: bool | None

    @property
    def target(self) -> Decision:
        return decision_target(self)


def encode_stimulus(branch_level: int, leaf_level: int, D: int, blur: float = DEFAULT_BLUR) -> np.ndarray:
    """Flattened 2-D Gaussian bump with unit peak at ``(branch, leaf)``.

    Rows index branch level, columns leaf level. ``blur == 0`` gives a one-hot
    vector.
    """
    if not (1 <= branch_level <= D and 1 <= leaf_level <= D):
        raise ValueError("levels must lie in 1..D")
    if blur < 0:
        raise ValueError("blur must be non-negative")
    levels = np.arange(1, D + 1, dtype=float)
    if blur * blur == 0.0:  # also catches blurs whose square underflows
        out = np.zeros(D * D)
        out[(branch_level - 1) * D + (leaf_level - 1)] = 1.0
        return out
    db = (levels - branch_level) ** 2
    dl = (levels - leaf_level) ** 2
    grid = np.exp(-(db[:, None] + dl[None, :]) / (2.0 * blur * blur))
    return grid.reshape(-1)


def _check_grid(D: int) -> None:
    if D < 3 or D % 2 == 0:
        raise InvalidGrid(f"D must be odd and >= 3, got {D}")


def make_stimulus(branch: int, leaf: int, context: int, D: int, blur: float = DEFAULT_BLUR) -> Stimulus:
    return Stimulus(
        branch_level=branch,
        leaf_level=leaf,
        context=context,
        features=encode_stimulus(branch, leaf, D, blur),
        reward=level_reward(relevant_level(branch, leaf, context), D),
        congruent=is_congruent(branch, leaf, D),
    )


def make_grid(D: int = DEFAULT_D, blur: float = DEFAULT_BLUR) -> list[Stimulus]:
    """All ``2 * D**2`` templates, task 1 first, branch-major within a task."""
    _check_grid(D)
    return [
        make_stimulus(b, l, task, D, blur)
        for task in TASKS
        for b in range(1, D + 1)
        for l in range(1, D + 1)
    ]


def decision_target(stim: Stimulus) -> Decision:
    if stim.reward > 0:
        return Decision.ACCEPT
    if stim.reward < 0:
        return Decision.REJECT
    return Decision.NEUTRAL


@dataclass(frozen=True)
class Curriculum:
    regime: str
    trials: tuple[Stimulus, ...]
    n_per_task: int

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def contexts(self) -> np.ndarray:
        return np.array([s.context for s in self.trials], dtype=int)


def make_curriculum(
    regime: str,
    n_per_task: int = DEFAULT_N_PER_TASK,
    seed: int = 0,
    D: int = DEFAULT_D,
    blur: float = DEFAULT_BLUR,
) -> Curriculum:
    """Sample trials uniformly (with replacement) from each context's templates."""
    if regime not in ("blocked", "interleaved"):
        raise ValueError(f"unknown regime {regime!r}")
    if n_per_task < 1:
        raise ValueError("n_per_task must be >= 1")
    _check_grid(D)
    gen = rng(seed, "curriculum", regime)
    per_task = []
    for task in TASKS:
        cells = gen.integers(0, D * D, size=n_per_task)
        per_task.append([make_stimulus(c // D + 1, c % D + 1, task, D, blur) for c in cells])
    trials = per_task[0] + per_task[1]
    if regime == "interleaved":
        order = gen.permutation(len(trials))
        trials = [trials[i] for i in order]
    return Curriculum(regime=regime, trials=tuple(trials), n_per_task=n_per_task)


@dataclass(frozen=True)
class TrialArrays:
    """Columnar view of a trial list used by the training loops."""

    features: np.ndarray
    contexts: np.ndarray
    rewards: np.ndarray
    branch: np.ndarray
    leaf: np.ndarray
    congruent: np.ndarray  # 1 congruent, 0 incongruent, -1 undefined


def to_arrays(trials) -> TrialArrays:
    trials = list(trials)
    return TrialArrays(
        features=np.stack([s.features for s in trials]),
        contexts=np.array([s.context for s in trials], dtype=int),
        rewards=np.array([s.reward for s in trials], dtype=float),
        branch=np.array([s.branch_level for s in trials], dtype=int),
        leaf=np.array([s.leaf_level for s in trials], dtype=int),
        congruent=np.array([-1 if s.congruent is None else int(s.congruent) for s in trials], dtype=int),
    )


CSV_HEADER = ("index", "context", "branch", "leaf", "reward", "congruent")


def trials_to_csv(trials) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, s in enumerate(trials):
        cong = "" if s.congruent is None else int(s.congruent)
        w.writerow((i, s.context, s.branch_level, s.leaf_level, s.reward, cong))
    return buf.getvalue()
