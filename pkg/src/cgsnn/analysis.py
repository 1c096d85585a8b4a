"""Behavioural and neural read-outs computed from training logs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import FitResult, logistic_fit, ols_fit
from .records import TrainLog
from .taskgen import DEFAULT_D, TrialArrays

SELECTIVITY_T = 2.0
CLASSES = ("task1", "task2", "both", "agnostic")
MIN_TRIALS_PER_CONTEXT = 30


@dataclass(frozen=True)
class ChoiceMatrix:
    """Accept probability per (branch, leaf) cell; rows are branch levels."""

    grid: np.ndarray
    task: int

    @property
    def relevant_axis(self) -> str:
        return "leaf" if self.task == 1 else "branch"

    @property
    def irrelevant_axis(self) -> str:
        return "branch" if self.task == 1 else "leaf"

    def to_csv(self) -> str:
        return "".join(",".join(f"{v:.6g}" for v in row) + "\n" for row in self.grid)


@dataclass(frozen=True)
class SelectivityReport:
    labels: tuple[str, ...]  # one class name per unit
    t_statistics: np.ndarray
    proportions: dict[str, float]
    mean_activity: dict[str, dict[int, float]]  # class -> context -> mean

    @property
    def proportion_selective(self) -> float:
        return self.proportions["task1"] + self.proportions["task2"]

    def to_dict(self) -> dict:
        return {
            "proportion_selective": self.proportion_selective,
            "proportions": dict(self.proportions),
            "mean_activity": {c: {str(k): v for k, v in m.items()} for c, m in self.mean_activity.items()},
            "labels": list(self.labels),
        }


def accuracy_series(log: TrainLog, task: int) -> np.ndarray:
    return log.accuracy_series(task)


def choice_matrix(decisions, templates: TrialArrays, task: int, D: int = DEFAULT_D) -> ChoiceMatrix:
    """Arrange per-template accept decisions of one context into a ``D x D`` grid.

    ``decisions`` may be an array aligned with ``templates`` or a ``TrainLog``
    (its final evaluation is used).
    """
    if isinstance(decisions, TrainLog):
        decisions = decisions.final_decisions
    decisions = np.asarray(decisions, dtype=float)
    grid = np.full((D, D), np.nan)
    counts = np.zeros((D, D))
    total = np.zeros((D, D))
    sel = templates.contexts == task
    for b, l, d in zip(templates.branch[sel], templates.leaf[sel], decisions[sel]):
        total[b - 1, l - 1] += d
        counts[b - 1, l - 1] += 1
    filled = counts > 0
    grid[filled] = total[filled] / counts[filled]
    return ChoiceMatrix(grid, task)


def congruency_effect(decisions, templates: TrialArrays) -> tuple[float, float]:
    """Accuracy on congruent vs incongruent non-neutral templates, both tasks pooled."""
    if isinstance(decisions, TrainLog):
        decisions = decisions.final_decisions
    decisions = np.asarray(decisions)
    scored = templates.rewards != 0
    correct = decisions == (templates.rewards > 0)
    out = []
    for flag in (1, 0):
        sel = scored & (templates.congruent == flag)
        out.append(float(correct[sel].mean()) if sel.any() else float("nan"))
    return out[0], out[1]


def _marginal_slope(rates: np.ndarray, levels: np.ndarray) -> float:
    if np.allclose(rates, rates[0]):
        return 0.0
    return logistic_fit(levels, rates).slope


def psychometric_slopes(choice: ChoiceMatrix) -> tuple[float, float]:
    """Logistic slopes of the accept rate along the relevant and irrelevant axes.

    Each axis is marginalised over the other before fitting; levels are centred
    on the neutral level.
    """
    D = choice.grid.shape[0]
    levels = np.arange(D) - (D - 1) / 2
    by_branch = np.nanmean(choice.grid, axis=1)
    by_leaf = np.nanmean(choice.grid, axis=0)
    rel, irrel = (by_leaf, by_branch) if choice.task == 1 else (by_branch, by_leaf)
    return _marginal_slope(rel, levels), _marginal_slope(irrel, levels)


def ideal_choices(D: int = DEFAULT_D) -> tuple[np.ndarray, np.ndarray]:
    """Factorised and context-blind linear ideal choices, stacked task 1 then task 2."""
    neutral = (D + 1) // 2
    b, l = np.meshgrid(np.arange(1, D + 1), np.arange(1, D + 1), indexing="ij")
    fact = np.concatenate([(l > neutral).ravel(), (b > neutral).ravel()]).astype(float)
    lin = ((l + b - 2 * neutral) > 0).ravel().astype(float)
    return fact, np.concatenate([lin, lin])


def model_regression(choice1: ChoiceMatrix, choice2: ChoiceMatrix) -> tuple[float, float]:
    """Coefficients of the stacked choices on the factorised and linear ideals."""
    D = choice1.grid.shape[0]
    fact, lin = ideal_choices(D)
    y = np.concatenate([choice1.grid.ravel(), choice2.grid.ravel()])
    design = np.column_stack([np.ones_like(fact), fact, lin])
    fit: FitResult = ols_fit(design, y)
    return float(fit.coefficients[1]), float(fit.coefficients[2])


def selectivity(hidden_activity, contexts, threshold: float = SELECTIVITY_T) -> SelectivityReport:
    """Classify units by an OLS fit of activity on a +1/-1 context regressor.

    Positive ``t >= threshold`` marks task-1 selectivity, ``t <= -threshold``
    task-2. The remaining units are ``both`` when they respond to the stimulus
    within each context and ``agnostic`` otherwise.
    """
    act = np.asarray(hidden_activity, dtype=float)
    contexts = np.asarray(contexts, dtype=int)
    if act.ndim != 2 or act.shape[0] != contexts.size:
        raise ValueError("hidden_activity must be (trials, units) aligned with contexts")
    for task in (1, 2):
        if np.sum(contexts == task) < MIN_TRIALS_PER_CONTEXT:
            raise ValueError(f"need at least {MIN_TRIALS_PER_CONTEXT} trials per context")
    x = np.where(contexts == 1, 1.0, -1.0)
    design = np.column_stack([np.ones_like(x), x])
    n_units = act.shape[1]
    t_stats = np.zeros(n_units)
    labels = []
    for j in range(n_units):
        y = act[:, j]
        if np.ptp(y) > 0:
            fit = ols_fit(design, y)
            t = fit.t_statistics[1]
            t_stats[j] = t if np.isfinite(t) else np.sign(fit.coefficients[1]) * np.inf
        m1, m2 = y[contexts == 1].mean(), y[contexts == 2].mean()
        if t_stats[j] >= threshold and m1 > m2:
            labels.append("task1")
        elif t_stats[j] <= -threshold and m2 > m1:
            labels.append("task2")
        elif np.ptp(y[contexts == 1]) > 0 and np.ptp(y[contexts == 2]) > 0:
            labels.append("both")
        else:
            labels.append("agnostic")
    labels_arr = np.array(labels)
    proportions = {c: float(np.mean(labels_arr == c)) if n_units else 0.0 for c in CLASSES}
    mean_activity = {}
    for c in CLASSES:
        cols = labels_arr == c
        mean_activity[c] = {
            task: (float(act[np.ix_(contexts == task, cols)].mean()) if cols.any() else float("nan"))
            for task in (1, 2)
        }
    return SelectivityReport(tuple(labels), t_stats, proportions, mean_activity)


def forgetting_slope(series) -> float:
    """OLS slope (per evaluation) over the second half of ``series``."""
    y = np.asarray(series, dtype=float)
    if y.size < 4:
        raise ValueError("need at least four evaluations")
    half = y[y.size // 2:]
    x = np.arange(half.size, dtype=float)
    return float(ols_fit(np.column_stack([np.ones_like(x), x]), half).coefficients[1])


def task2_block(log: TrainLog, n_per_task: int, task: int = 1) -> np.ndarray:
    """Accuracy on ``task`` at the evaluations made during the second block."""
    trials = log.eval_trials
    return log.accuracy_series(task)[trials > n_per_task]


def context_activity(hidden_activity, contexts) -> dict[int, np.ndarray]:
    """Mean activity of every unit under each context."""
    act = np.asarray(hidden_activity, dtype=float)
    contexts = np.asarray(contexts, dtype=int)
    return {task: act[contexts == task].mean(axis=0) for task in (1, 2)}
