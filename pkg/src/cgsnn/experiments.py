"""Seeded end-to-end runs: configuration, training, analysis and persistence."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analysis, baselines, multi, single, taskgen
from .records import TrainLog
from .taskgen import TrialArrays, to_arrays

SINGLE_METHODS = ("vanilla", "stdp", "multi-stdp")
MULTI_METHODS = ("vanilla", "cg", "owm-last2", "owm-all", "xdg")
REGIMES = ("blocked", "interleaved")
NEURONS = ("if", "lif")
TRAIN_FILES = ("checkpoint.npz", "trainlog.npz")
OUTPUT_FILES = (
    "accuracy.csv",
    "choice_task1.csv",
    "choice_task2.csv",
    "selectivity.json",
    "stats.json",
    "checkpoint.npz",
    "trainlog.npz",
)


class ConfigInvalid(ValueError):
    pass


class IoError(OSError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run. ``out`` is where files go and does
    not influence any result."""

    model: str = "multi"
    method: str = "cg"
    regime: str = "blocked"
    neuron: str = "if"
    tau: float = 10.0
    seed: int = 0
    D: int = taskgen.DEFAULT_D
    blur: float = taskgen.DEFAULT_BLUR
    n_per_task: int = taskgen.DEFAULT_N_PER_TASK
    I_m: int = 1
    I_n: int = -1  # -1 picks the method's schedule
    sluggish: float = 0.0
    lr: float = -1.0  # -1 keeps the model default
    eta_hebb: float = multi.OjaConfig.eta_hebb
    a_plus: float = single.StdpConfig.A_plus
    a_minus: float = single.StdpConfig.A_minus
    tau_plus: float = single.StdpConfig.tau_plus
    tau_minus: float = single.StdpConfig.tau_minus
    lambda_local: float = single.StdpConfig.lambda_local
    gate_fraction: float = baselines.DEFAULT_GATE_FRACTION
    alpha_owm: float = baselines.DEFAULT_ALPHA_OWM
    eval_every: int = 25
    probe_repeats: int = 2
    out: str = "runs/default"

    # -- validation ---------------------------------------------------------

    def normalized(self) -> RunConfig:
        """Validate and resolve method-dependent defaults."""
        if self.model not in ("single", "multi"):
            raise ConfigInvalid(f"model must be single or multi, got {self.model!r}")
        allowed = SINGLE_METHODS if self.model == "single" else MULTI_METHODS
        if self.method not in allowed:
            raise ConfigInvalid(f"method {self.method!r} is not available for the {self.model} model")
        if self.regime not in REGIMES:
            raise ConfigInvalid(f"regime must be one of {REGIMES}")
        if self.neuron not in NEURONS:
            raise ConfigInvalid(f"neuron must be one of {NEURONS}")
        if self.model == "single" and self.neuron != "if":
            raise ConfigInvalid("the single-spike model has no leaky variant")
        if self.tau <= 0:
            raise ConfigInvalid("tau must be positive")
        if self.D < 3 or self.D % 2 == 0:
            raise ConfigInvalid("D must be an odd integer >= 3")
        if self.n_per_task < 1:
            raise ConfigInvalid("n_per_task must be >= 1")
        if self.I_m < 1:
            raise ConfigInvalid("I_m must be >= 1")
        if not 0.0 <= self.sluggish < 1.0:
            raise ConfigInvalid("sluggish must lie in [0, 1)")
        if self.model == "single" and self.sluggish != 0.0:
            raise ConfigInvalid("sluggish filtering applies to the multi-spike model only")
        if not 0.0 <= self.gate_fraction < 1.0:
            raise ConfigInvalid("gate_fraction must lie in [0, 1)")
        if self.eval_every < 1 or self.probe_repeats < 1:
            raise ConfigInvalid("eval_every and probe_repeats must be >= 1")
        I_n = self.I_n
        if self.method in ("vanilla", "xdg", "owm-last2", "owm-all"):
            I_n = 0
        elif self.method == "multi-stdp":
            I_n = 3 if I_n < 0 else I_n
            if I_n < 2:
                raise ConfigInvalid("multi-stdp needs I_n >= 2")
        elif I_n < 0:
            I_n = 1
        elif I_n == 0:
            raise ConfigInvalid(f"{self.method} needs I_n >= 1; use method=vanilla for I_n = 0")
        return dataclasses.replace(self, I_n=I_n)

    # -- identity -----------------------------------------------------------

    def result_fields(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.normalized().result_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    # -- text form ----------------------------------------------------------

    def to_text(self, include_out: bool = True) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        fields = dataclasses.asdict(self) if include_out else self.result_fields()
        parser["run"] = {k: str(v) for k, v in fields.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    @classmethod
    def from_mapping(cls, values: dict) -> RunConfig:
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        parsed = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ConfigInvalid(f"unknown config key {key!r}")
            parsed[key] = _coerce(key, raw, kinds[key])
        return cls(**parsed)

    @classmethod
    def from_text(cls, text: str) -> RunConfig:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
        except configparser.Error as exc:
            raise ConfigInvalid(str(exc)) from exc
        if "run" not in parser:
            raise ConfigInvalid("config needs a [run] section")
        return cls.from_mapping(dict(parser["run"]))

    @classmethod
    def from_file(cls, path) -> RunConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)


def _coerce(key: str, raw, kind: str):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip().strip('"').strip("'")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"{key}: expected {kind}, got {raw!r}") from exc
    return raw


# --------------------------------------------------------------------------
# model construction and training
# --------------------------------------------------------------------------


def multi_config(cfg: RunConfig) -> multi.MultiSpikeConfig:
    base = multi.MultiSpikeConfig(n_features=cfg.D * cfg.D, neuron=cfg.neuron, tau=cfg.tau)
    return dataclasses.replace(base, lr=cfg.lr) if cfg.lr > 0 else base


def single_config(cfg: RunConfig) -> single.SingleSpikeConfig:
    base = single.SingleSpikeConfig(n_features=cfg.D * cfg.D)
    return dataclasses.replace(base, lr=cfg.lr) if cfg.lr > 0 else base


def stdp_config(cfg: RunConfig) -> single.StdpConfig:
    return single.StdpConfig(
        A_plus=cfg.a_plus, A_minus=cfg.a_minus, tau_plus=cfg.tau_plus, tau_minus=cfg.tau_minus,
        lambda_local=cfg.lambda_local,
    )


def build_net(cfg: RunConfig):
    if cfg.model == "single":
        return single.SingleSpikeNet.init(single_config(cfg), cfg.seed)
    return multi.MultiSpikeNet.init(multi_config(cfg), cfg.seed)


def templates_for(cfg: RunConfig) -> TrialArrays:
    return to_arrays(taskgen.make_grid(cfg.D, cfg.blur))


def curriculum_for(cfg: RunConfig) -> taskgen.Curriculum:
    return taskgen.make_curriculum(cfg.regime, cfg.n_per_task, cfg.seed, cfg.D, cfg.blur)


def train(cfg: RunConfig, curriculum: taskgen.Curriculum | None = None):
    """Build and train the configured network; returns ``(net, log)``."""
    cfg = cfg.normalized()
    curriculum = curriculum or curriculum_for(cfg)
    trials = to_arrays(curriculum.trials)
    templates = templates_for(cfg)
    net = build_net(cfg)
    common = dict(eval_every=cfg.eval_every, regime=cfg.regime)
    if cfg.model == "single":
        log = single.train_single(
            net, trials, templates, I_m=cfg.I_m, I_n=cfg.I_n, stdp=stdp_config(cfg), method=cfg.method, **common
        )
    elif cfg.method == "cg":
        log = multi.train_multi(
            net, trials, templates, I_m=cfg.I_m, I_n=cfg.I_n, oja=multi.OjaConfig(cfg.eta_hebb),
            sluggish_alpha=cfg.sluggish, method="cg", **common,
        )
    elif cfg.method == "vanilla" and (cfg.sluggish > 0 or cfg.I_m > 1):
        log = multi.train_multi(
            net, trials, templates, I_m=cfg.I_m, I_n=0, sluggish_alpha=cfg.sluggish, method="vanilla", **common
        )
    else:
        log = baselines.train_baseline(
            cfg.method.replace("-", "_"), net, trials, templates, gate_fraction=cfg.gate_fraction,
            alpha_owm=cfg.alpha_owm, mask_seed=cfg.seed, **common,
        )
    return net, log


# --------------------------------------------------------------------------
# analysis
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    config: RunConfig
    log: TrainLog
    choices: dict[int, analysis.ChoiceMatrix]
    selectivity: analysis.SelectivityReport
    stats: dict


def _safe_slopes(choice: analysis.ChoiceMatrix) -> tuple[float, float]:
    try:
        return analysis.psychometric_slopes(choice)
    except ValueError:
        return float("nan"), float("nan")


def analyze(cfg: RunConfig, log: TrainLog) -> RunReport:
    cfg = cfg.normalized()
    templates = templates_for(cfg)
    choices = {task: analysis.choice_matrix(log.final_decisions, templates, task, cfg.D) for task in (1, 2)}
    # small grids are tiled until each context has enough probe trials
    reps = max(cfg.probe_repeats, -(-analysis.MIN_TRIALS_PER_CONTEXT // (cfg.D * cfg.D)))
    sel_ctx = np.tile(log.template_contexts, reps)
    sel = analysis.selectivity(np.tile(log.hidden_activity, (reps, 1)), sel_ctx)
    if cfg.regime == "blocked":
        forgetting_series = analysis.task2_block(log, cfg.n_per_task, 1)
    else:
        forgetting_series = log.accuracy_series(1)
    cong, incong = analysis.congruency_effect(log.final_decisions, templates)
    beta_f, beta_l = analysis.model_regression(choices[1], choices[2])
    stats = {
        "final_accuracy": {str(t): log.final_accuracy(t) for t in (1, 2)},
        "forgetting_slope": analysis.forgetting_slope(forgetting_series) if len(forgetting_series) >= 4 else None,
        "congruency": {"congruent": cong, "incongruent": incong},
        "psychometric": {
            str(t): dict(zip(("relevant", "irrelevant"), _safe_slopes(choices[t]))) for t in (1, 2)
        },
        "model_regression": {"beta_factorized": beta_f, "beta_linear": beta_l},
        "selectivity_proportion": sel.proportion_selective,
        "weights": dict(log.weight_summary),
        "n_losses": len(log.losses),
        "mean_loss_last_block": float(np.mean(log.losses[-50:])) if log.losses else None,
    }
    return RunReport(cfg, log, choices, sel, stats)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _clean(obj):
    """Replace non-finite floats with ``None`` so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, default=_json_default) + "\n"


def accuracy_csv(log: TrainLog, header: str) -> str:
    lines = [header, "trial,task,accuracy"]
    for rec in log.evals:
        for task in (1, 2):
            lines.append(f"{rec.trial},{task},{rec.accuracy[task]:.6f}")
    return "\n".join(lines) + "\n"


def net_arrays(net) -> dict[str, np.ndarray]:
    if isinstance(net, single.SingleSpikeNet):
        return {
            "encoder_weights": net.encoder_weights,
            "encoder_bias": net.encoder_bias,
            "hidden_weights": net.hidden_weights,
            "out_weights": net.out_weights,
            "context_mask": net.context_mask,
        }
    out = {f"weights_{i}": w for i, w in enumerate(net.weights)}
    out.update({f"biases_{i}": b for i, b in enumerate(net.biases)})
    out["context_mask"] = net.context_mask
    if net.hidden_gates:
        for task, layers in net.hidden_gates.items():
            for i, g in enumerate(layers):
                out[f"gate_{task}_{i}"] = np.asarray(g)
    return out


def save_checkpoint(path, cfg: RunConfig, net) -> None:
    """Write the network arrays and the run config into one ``.npz`` file."""
    arrays = {k: np.ascontiguousarray(v) for k, v in net_arrays(net).items()}
    arrays["config"] = np.frombuffer(cfg.to_text(include_out=False).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    _write_bytes(Path(path), buf.getvalue())


def load_checkpoint(path):
    """Inverse of ``save_checkpoint``; returns ``(config, net)``."""
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    cfg = RunConfig.from_text(arrays.pop("config").tobytes().decode()).normalized()
    net = build_net(cfg)
    if cfg.model == "single":
        for name in ("encoder_weights", "encoder_bias", "hidden_weights", "out_weights", "context_mask"):
            setattr(net, name, arrays[name])
        return cfg, net
    net.weights = [arrays[f"weights_{i}"] for i in range(len(net.weights))]
    net.biases = [arrays[f"biases_{i}"] for i in range(len(net.biases))]
    net.context_mask = arrays["context_mask"]
    gate_keys = sorted(k for k in arrays if k.startswith("gate_"))
    if gate_keys:
        gates: dict[int, list[np.ndarray]] = {}
        for key in gate_keys:
            _, task, layer = key.split("_")
            gates.setdefault(int(task), []).append(arrays[key])
        net.hidden_gates = gates
    return cfg, net


def save_trainlog(path, log: TrainLog) -> None:
    arrays = {
        "eval_trials": log.eval_trials,
        "eval_decisions": np.stack([e.decisions for e in log.evals]),
        "eval_accuracy": np.array([[e.accuracy[1], e.accuracy[2]] for e in log.evals]),
        "losses": np.asarray(log.losses, dtype=float),
        "hidden_activity": np.asarray(log.hidden_activity, dtype=float),
        "template_contexts": np.asarray(log.template_contexts, dtype=int),
        "meta": np.frombuffer(
            json.dumps(
                {"model": log.model, "method": log.method, "regime": log.regime, "weights": log.weight_summary},
                sort_keys=True,
            ).encode(),
            dtype=np.uint8,
        ),
    }
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    _write_bytes(Path(path), buf.getvalue())


def load_trainlog(path) -> TrainLog:
    from .records import EvalRecord

    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read training log {path}: {exc}") from exc
    meta = json.loads(arrays["meta"].tobytes().decode())
    log = TrainLog(meta["model"], meta["method"], meta["regime"], losses=arrays["losses"].tolist())
    for trial, dec, acc in zip(arrays["eval_trials"], arrays["eval_decisions"], arrays["eval_accuracy"]):
        log.evals.append(EvalRecord(int(trial), dec, {1: float(acc[0]), 2: float(acc[1])}))
    log.hidden_activity = arrays["hidden_activity"]
    log.template_contexts = arrays["template_contexts"]
    log.weight_summary = meta["weights"]
    return log


def _write_bytes(path: Path, data: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str
    duration_s: float
    files: dict[str, str] = field(default_factory=dict)

    @property
    def manifest_hash(self) -> str:
        blob = json.dumps({"config": self.config, "files": self.files}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        return dump_json({
            "config": self.config,
            "version": self.version,
            "duration_s": self.duration_s,
            "files": self.files,
            "manifest_hash": self.manifest_hash,
        })


def write_outputs(report: RunReport, net, out_dir) -> dict[str, str]:
    """Write every result file for one run; returns ``{name: sha256}``."""
    cfg = report.config
    out = Path(out_dir)
    tag = {"run": cfg.config_hash(), "seed": cfg.seed}
    header = f"# run={tag['run']} seed={cfg.seed}"
    texts = {
        "accuracy.csv": accuracy_csv(report.log, header),
        "choice_task1.csv": header + "\n" + report.choices[1].to_csv(),
        "choice_task2.csv": header + "\n" + report.choices[2].to_csv(),
        "selectivity.json": dump_json({**tag, **report.selectivity.to_dict()}),
        "stats.json": dump_json({**tag, **report.stats}),
    }
    for name, text in texts.items():
        _write_bytes(out / name, text.encode("utf-8"))
    save_checkpoint(out / "checkpoint.npz", cfg, net)
    save_trainlog(out / "trainlog.npz", report.log)
    return {name: sha256_file(out / name) for name in OUTPUT_FILES}


def run(cfg: RunConfig, out_dir=None, write: bool = True):
    """Train, analyse and (optionally) persist one run.

    Returns ``(manifest, report, net)``.
    """
    t0 = time.perf_counter()
    cfg = cfg.normalized()
    net, log = train(cfg)
    report = analyze(cfg, log)
    manifest = RunManifest(cfg.result_fields(), __version__, 0.0)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.out)
        manifest.files = write_outputs(report, net, out)
        manifest.duration_s = round(time.perf_counter() - t0, 3)
        _write_bytes(out / "manifest.json", manifest.to_json().encode("utf-8"))
    else:
        manifest.duration_s = round(time.perf_counter() - t0, 3)
    return manifest, report, net


def writable(path) -> bool:
    p = Path(path)
    while not p.exists():
        p = p.parent
    return os.access(p, os.W_OK)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SWEEP_AXES = ("sluggish", "schedule", "method", "seed")


def parse_schedule(value) -> tuple[int, int]:
    """``"2x4"``, ``"2:4"`` or ``(2, 4)`` to ``(I_m, I_n)``."""
    if isinstance(value, (tuple, list)):
        parts = list(value)
    else:
        parts = str(value).replace(":", "x").split("x")
    try:
        I_m, I_n = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"schedule values look like IMxIN, got {value!r}") from None
    return I_m, I_n


def sweep_configs(base: RunConfig, axis: str, values, seeds=(0,)) -> list[tuple[str, RunConfig]]:
    """Expand an axis and a seed list into ``(value label, config)`` pairs."""
    if axis not in SWEEP_AXES:
        raise ConfigInvalid(f"sweep axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigInvalid("sweep needs at least one value")
    out = []
    for value in values:
        if axis == "seed":
            cfg = dataclasses.replace(base, seed=int(value))
            out.append((str(int(value)), cfg.normalized()))
            continue
        if axis == "schedule":
            I_m, I_n = parse_schedule(value)
            cfg, label = dataclasses.replace(base, I_m=I_m, I_n=I_n), f"{I_m}x{I_n}"
        elif axis == "sluggish":
            cfg, label = dataclasses.replace(base, sluggish=float(value)), f"{float(value):g}"
        else:
            cfg, label = dataclasses.replace(base, method=str(value)), str(value)
        out.extend((label, dataclasses.replace(cfg, seed=int(s)).normalized()) for s in seeds)
    return out


def sweep_summary(axis: str, rows: list[tuple[str, RunReport]]) -> str:
    """Per-value means and standard deviations, in first-seen value order."""
    groups: dict[str, list[RunReport]] = {}
    for label, rep in rows:
        groups.setdefault(label, []).append(rep)
    lines = [f"{axis},n,task1_mean,task1_sd,task2_mean,task2_sd,selectivity_mean,selectivity_sd"]
    for label, reps in groups.items():
        cols = [
            np.array([r.log.final_accuracy(1) for r in reps]),
            np.array([r.log.final_accuracy(2) for r in reps]),
            np.array([r.selectivity.proportion_selective for r in reps]),
        ]
        stats = ",".join(f"{c.mean():.6f},{c.std(ddof=1) if c.size > 1 else 0.0:.6f}" for c in cols)
        lines.append(f"{label},{len(reps)},{stats}")
    return "\n".join(lines) + "\n"


def sweep(base: RunConfig, axis: str, values, seeds=(0,), out_dir=None):
    """Run every configuration of an axis sweep; returns ``(manifests, summary_csv)``.

    Each run lands in ``<out>/<axis>=<value>/seed=<seed>`` and the summary in
    ``<out>/sweep_summary.csv``.
    """
    out = Path(out_dir if out_dir is not None else base.out)
    manifests, rows = [], []
    for label, cfg in sweep_configs(base, axis, values, seeds):
        manifest, report, _ = run(cfg, out / f"{axis}={label}" / f"seed={cfg.seed}")
        manifests.append(manifest)
        rows.append((label, report))
    summary = sweep_summary(axis, rows)
    _write_bytes(out / "sweep_summary.csv", summary.encode("utf-8"))
    return manifests, summary
