"""Training-log container shared by both network families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EvalRecord:
    """Model behaviour on the full template set at one evaluation point."""

    trial: int
    decisions: np.ndarray  # 1 accept / 0 reject, one per template
    accuracy: dict[int, float]


@dataclass
class TrainLog:
    model: str
    method: str
    regime: str
    losses: list[float] = field(default_factory=list)
    evals: list[EvalRecord] = field(default_factory=list)
    # activity of the first spiking hidden layer on templates at the end
    hidden_activity: np.ndarray | None = None
    template_contexts: np.ndarray | None = None
    weight_summary: dict[str, float] = field(default_factory=dict)
    extras: dict[str, object] = field(default_factory=dict)

    def accuracy_series(self, task: int) -> np.ndarray:
        return np.array([e.accuracy[task] for e in self.evals])

    @property
    def eval_trials(self) -> np.ndarray:
        return np.array([e.trial for e in self.evals], dtype=int)

    @property
    def final_decisions(self) -> np.ndarray:
        return self.evals[-1].decisions

    def final_accuracy(self, task: int) -> float:
        return self.evals[-1].accuracy[task]


def template_accuracy(decisions: np.ndarray, rewards: np.ndarray, contexts: np.ndarray) -> dict[int, float]:
    """Per-task accuracy over non-neutral templates."""
    out = {}
    for task in (1, 2):
        sel = (contexts == task) & (rewards != 0)
        correct = decisions[sel] == (rewards[sel] > 0)
        out[task] = float(correct.mean()) if correct.size else float("nan")
    return out
