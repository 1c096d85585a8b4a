"""Canned multi-seed experiments with pass/fail checks against target bands."""

from __future__ import annotations

import dataclasses
import functools
import io
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .experiments import RunConfig, RunReport, analyze, dump_json, train, _write_bytes
from .numerics import welch_one_sided

SEEDS = tuple(range(10))
SLUGGISH_LEVELS = (0.0, 0.2, 0.4, 0.6, 0.8)
FIGURES = ("fig2", "fig4", "fig7", "selectivity", "psychometric")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class FigureReport:
    figure: str
    tables: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        for name, text in self.tables.items():
            _write_bytes(out / name, text.encode("utf-8"))
        payload = {
            "figure": self.figure,
            "summary": self.summary,
            "checks": [dataclasses.asdict(c) for c in self.checks],
            "passed": self.passed,
        }
        _write_bytes(out / "checks.json", dump_json(payload).encode("utf-8"))


# --------------------------------------------------------------------------
# run cache
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def report_for(cfg: RunConfig) -> RunReport:
    """Train and analyse ``cfg`` once per process."""
    cfg = cfg.normalized()
    _, log = train(cfg)
    return analyze(cfg, log)


def reports(base: RunConfig, seeds=SEEDS, **changes) -> list[RunReport]:
    cfg = dataclasses.replace(base, **changes)
    return [report_for(dataclasses.replace(cfg, seed=s)) for s in seeds]


def final(reps: list[RunReport], task: int) -> np.ndarray:
    return np.array([r.log.final_accuracy(task) for r in reps])


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _mean_curves(reps: list[RunReport]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    trials = reps[0].log.eval_trials
    return trials, np.mean([r.log.accuracy_series(1) for r in reps], 0), np.mean(
        [r.log.accuracy_series(2) for r in reps], 0
    )


# --------------------------------------------------------------------------
# metric collectors
# --------------------------------------------------------------------------


SINGLE = RunConfig(model="single", regime="blocked")
MULTI = RunConfig(model="multi", regime="blocked")


def single_arms(seeds=SEEDS) -> dict[str, list[RunReport]]:
    return {m: reports(SINGLE, seeds, method=m) for m in ("vanilla", "stdp", "multi-stdp")}


def forgetting_slopes(reps: list[RunReport]) -> np.ndarray:
    return np.array([r.stats["forgetting_slope"] for r in reps], dtype=float)


def context_weight_ratio(reps: list[RunReport]) -> np.ndarray:
    return np.array([r.log.weight_summary["context_abs_mean"] / r.log.weight_summary["other_abs_mean"] for r in reps])


def multi_arms(seeds=SEEDS) -> dict[str, list[RunReport]]:
    arms = {m: reports(MULTI, seeds, method=m) for m in ("vanilla", "cg", "xdg", "owm-last2", "owm-all")}
    arms["cg-lif"] = reports(MULTI, seeds, method="cg", neuron="lif", tau=10.0)
    return arms


def congruency_gaps(reps: list[RunReport]) -> np.ndarray:
    c = [r.stats["congruency"] for r in reps]
    return np.array([d["congruent"] - d["incongruent"] for d in c])


def irrelevant_slopes(reps: list[RunReport]) -> np.ndarray:
    """Mean absolute irrelevant-axis psychometric slope over both tasks, per run."""
    out = []
    for r in reps:
        vals = [abs(r.stats["psychometric"][str(t)]["irrelevant"]) for t in (1, 2)]
        out.append(float(np.nanmean(vals)))
    return np.array(out)


def sluggish_sweep(regime: str, seeds=SEEDS, levels=SLUGGISH_LEVELS) -> dict[float, list[RunReport]]:
    return {a: reports(MULTI, seeds, method="cg", regime=regime, sluggish=a) for a in levels}


def mean_accuracy(reps: list[RunReport]) -> float:
    return float(np.mean([(r.log.final_accuracy(1) + r.log.final_accuracy(2)) / 2 for r in reps]))


def mean_selectivity(reps: list[RunReport]) -> float:
    return float(np.mean([r.selectivity.proportion_selective for r in reps]))


def non_increasing(values, tol: float) -> bool:
    v = list(values)
    return all(b <= a + tol for a, b in zip(v, v[1:]))


# --------------------------------------------------------------------------
# figures
# --------------------------------------------------------------------------


def fig2(seeds=SEEDS) -> FigureReport:
    arms = single_arms(seeds)
    rep = FigureReport("fig2")
    rows = []
    for name, reps in arms.items():
        trials, c1, c2 = _mean_curves(reps)
        rows.extend((name, int(t), a, b) for t, a, b in zip(trials, c1, c2))
    rep.tables["curves.csv"] = _table(("method", "trial", "task1", "task2"), rows)
    rep.tables["weights.csv"] = _table(
        ("method", "context_abs_mean", "other_abs_mean"),
        [
            (name, float(np.mean([r.log.weight_summary["context_abs_mean"] for r in reps])),
             float(np.mean([r.log.weight_summary["other_abs_mean"] for r in reps])))
            for name, reps in arms.items()
        ],
    )
    van, stdp = final(arms["vanilla"], 1).mean(), final(arms["stdp"], 1).mean()
    s1, s3 = forgetting_slopes(arms["stdp"]), forgetting_slopes(arms["multi-stdp"])
    t, p = welch_one_sided(s3, s1)
    ratio = context_weight_ratio(arms["stdp"]).mean()
    rep.summary = {"vanilla_task1": van, "stdp_task1": stdp, "slope_stdp": s1.mean(), "slope_multi_stdp": s3.mean(),
                   "welch_t": t, "welch_p": p, "context_weight_ratio": ratio}
    rep.checks = [
        Check("stdp retention", 0.65 <= stdp <= 0.85 and van < 0.60, f"stdp {stdp:.3f}, vanilla {van:.3f}"),
        Check("repeat slope", p < 0.05 and s3.mean() > s1.mean(), f"t={t:.3f} p={p:.4f}"),
        Check("context weight growth", ratio >= 2.0, f"ratio {ratio:.2f}"),
    ]
    return rep


def fig4(seeds=SEEDS) -> FigureReport:
    arms = multi_arms(seeds)
    rep = FigureReport("fig4")
    rows = []
    means = {}
    for name, reps in arms.items():
        a1, a2 = final(reps, 1), final(reps, 2)
        means[name] = (a1.mean(), a2.mean())
        rows.append((name, a1.mean(), a1.std(ddof=1), a2.mean(), a2.std(ddof=1)))
    rep.tables["comparison.csv"] = _table(("method", "task1_mean", "task1_sd", "task2_mean", "task2_sd"), rows)
    rows = []
    for name, reps in arms.items():
        trials, c1, c2 = _mean_curves(reps)
        rows.extend((name, int(t), a, b) for t, a, b in zip(trials, c1, c2))
    rep.tables["curves.csv"] = _table(("method", "trial", "task1", "task2"), rows)
    rep.summary = {k: {"task1": v[0], "task2": v[1]} for k, v in means.items()}
    van, cg, xdg, lif = means["vanilla"], means["cg"], means["xdg"], means["cg-lif"]
    rep.checks = [
        Check("vanilla forgetting", van[0] <= 0.65 and van[1] >= 0.95, f"{van[0]:.3f}/{van[1]:.3f}"),
        Check("cg retention", cg[0] >= 0.85 and cg[1] >= 0.99, f"{cg[0]:.3f}/{cg[1]:.3f}"),
        Check("cg beats xdg", cg[0] > xdg[0] and 0.70 <= xdg[0] <= 0.92, f"cg {cg[0]:.3f}, xdg {xdg[0]:.3f}"),
        Check("lif variant", lif[0] >= 0.82, f"{lif[0]:.3f}"),
    ]
    return rep


def fig7(seeds=SEEDS) -> FigureReport:
    inter = sluggish_sweep("interleaved", seeds)
    block = sluggish_sweep("blocked", seeds)
    rep = FigureReport("fig7")
    rows = []
    for regime, sweep in (("interleaved", inter), ("blocked", block)):
        for a, reps in sweep.items():
            betas = np.array([[r.stats["model_regression"]["beta_factorized"], r.stats["model_regression"]["beta_linear"]]
                              for r in reps])
            rows.append((regime, a, mean_accuracy(reps), mean_selectivity(reps), *betas.mean(0)))
    rep.tables["sluggish.csv"] = _table(
        ("regime", "alpha", "accuracy", "selectivity", "beta_factorized", "beta_linear"), rows
    )
    acc_i = [mean_accuracy(r) for r in inter.values()]
    sel_i = [mean_selectivity(r) for r in inter.values()]
    acc_b = [mean_accuracy(r) for r in block.values()]
    dev_b = max(abs(a - acc_b[0]) for a in acc_b)
    rep.summary = {"interleaved_accuracy": acc_i, "interleaved_selectivity": sel_i, "blocked_accuracy": acc_b}
    rep.checks = [
        Check("interleaved accuracy non-increasing", non_increasing(acc_i, 0.02), str(np.round(acc_i, 3).tolist())),
        Check("interleaved selectivity non-increasing", non_increasing(sel_i, 0.02), str(np.round(sel_i, 3).tolist())),
        Check("blocked insensitive", dev_b <= 0.03, f"max deviation {dev_b:.3f}"),
    ]
    return rep


def selectivity_figure(seeds=SEEDS) -> FigureReport:
    cg = reports(MULTI, seeds, method="cg")
    van = reports(MULTI, seeds, method="vanilla")
    rep = FigureReport("selectivity")
    rows = []
    for name, reps in (("cg", cg), ("vanilla", van)):
        for r in reps:
            rows.append((name, r.config.seed, *[r.selectivity.proportions[c] for c in analysis.CLASSES]))
    rep.tables["selectivity.csv"] = _table(("method", "seed", *analysis.CLASSES), rows)
    p_cg, p_van = mean_selectivity(cg), mean_selectivity(van)
    rep.summary = {"cg": p_cg, "vanilla": p_van}
    rep.checks = [Check("selectivity gap", p_cg >= 0.20 and p_van <= 0.15, f"cg {p_cg:.3f}, vanilla {p_van:.3f}")]
    return rep


def psychometric_figure(seeds=SEEDS) -> FigureReport:
    block = reports(MULTI, seeds, method="cg", regime="blocked")
    inter = reports(MULTI, seeds, method="cg", regime="interleaved")
    rep = FigureReport("psychometric")
    gb, gi = congruency_gaps(block), congruency_gaps(inter)
    sb, si = irrelevant_slopes(block), irrelevant_slopes(inter)
    rows = [(int(s), a, b, c, d) for s, a, b, c, d in zip(seeds, gb, gi, sb, si)]
    rep.tables["psychometric.csv"] = _table(
        ("seed", "gap_blocked", "gap_interleaved", "irrel_slope_blocked", "irrel_slope_interleaved"), rows
    )
    n_gap = int(np.sum((gi > 0) & (gi > gb)))
    n_slope = int(np.sum(si > sb))
    rep.summary = {"seeds_with_larger_interleaved_gap": n_gap, "seeds_with_steeper_irrelevant_slope": n_slope}
    need = int(np.ceil(0.8 * len(seeds)))
    rep.checks = [
        Check("congruency effect", n_gap >= need, f"{n_gap}/{len(seeds)} seeds"),
        Check("irrelevant slope", n_slope > len(seeds) / 2, f"{n_slope}/{len(seeds)} seeds"),
    ]
    return rep


_FIGURES = {
    "fig2": fig2,
    "fig4": fig4,
    "fig7": fig7,
    "selectivity": selectivity_figure,
    "psychometric": psychometric_figure,
}


def reproduce(figure: str, seeds=SEEDS) -> FigureReport:
    try:
        fn = _FIGURES[figure]
    except KeyError:
        raise UsageError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}") from None
    return fn(tuple(seeds))
