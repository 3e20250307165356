"""Multi-arm experiment driver and ablation sweeps.

An experiment trains one base head and then adapts a copy of it once per
arm.  Each arm gets a JSON report and a CSV curve file; a summary JSON/CSV
pair ranks the arms.  Files contain no timestamps or paths, so a re-run with
the same configuration reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from ..kernel import KernelSpec
from ..learner import (
    ConfigError,
    ProjectionHead,
    SyntheticTaskSpec,
    TrainConfig,
    base_train,
    few_shot_adapt,
    generate_task,
)
from ..learner.data import FewShotTask
from ..loss import LossConfig
from .metrics import MetricsReport, cluster_stats, compute_confusion, convergence_iterations, forgetting_curve

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("iteration", "base_accuracy", "novel_accuracy", "base_novel_similarity",
                 "loss", "ce", "intra", "inter")


@dataclass(frozen=True)
class Arm:
    name: str
    loss: Union[LossConfig, str]
    adapt_overrides: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        loss = self.loss.to_dict() if isinstance(self.loss, LossConfig) else self.loss
        d = {"name": self.name, "loss": loss}
        if self.adapt_overrides:
            d["adapt_overrides"] = dict(self.adapt_overrides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Arm":
        _check_keys(d, {"name", "loss"}, {"adapt_overrides"}, "arm")
        loss = d["loss"]
        if isinstance(loss, dict):
            loss = LossConfig.from_dict(loss)
        elif loss not in ("ce_only", "supcon"):
            raise ConfigError(f"arm {d['name']!r}: unknown loss {loss!r}")
        return cls(d["name"], loss, dict(d.get("adapt_overrides", {})))


def _check_keys(d: dict, required: set, optional: set, what: str) -> None:
    keys = set(d)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise ConfigError(f"{what}: missing keys {sorted(missing)}")
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    task: SyntheticTaskSpec
    base: TrainConfig
    adapt: TrainConfig
    arms: List[Arm]
    output_dir: str = "runs/experiment"
    head_seed: int = 0

    def __post_init__(self):
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ConfigError(f"arm names must be unique, got {names}")
        if not names:
            raise ConfigError("an experiment needs at least one arm")
        if self.base.stage != "base" or self.adapt.stage != "adapt":
            raise ConfigError("base/adapt train configs have the wrong stage")

    def to_dict(self) -> dict:
        return {"task": self.task.to_dict(), "base": self.base.to_dict(),
                "adapt": self.adapt.to_dict(), "arms": [a.to_dict() for a in self.arms],
                "output_dir": self.output_dir, "head_seed": self.head_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(d, {"task", "base", "adapt", "arms"}, {"output_dir", "head_seed"}, "experiment")
        try:
            task = SyntheticTaskSpec(**d["task"])
        except TypeError as exc:
            raise ConfigError(f"task: {exc}") from None
        base = TrainConfig.from_dict({"stage": "base", **d["base"]})
        adapt = TrainConfig.from_dict({"stage": "adapt", **d["adapt"]})
        return cls(task, base, adapt, [Arm.from_dict(a) for a in d["arms"]],
                   d.get("output_dir", "runs/experiment"), int(d.get("head_seed", 0)))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, task=replace(self.task, seed=seed), base=replace(self.base, seed=seed),
                       adapt=replace(self.adapt, seed=seed), head_seed=seed)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


@dataclass
class ArmOutcome:
    name: str
    report: Optional[MetricsReport] = None
    log: Optional[object] = None
    head: Optional[ProjectionHead] = None
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    base_log: object
    arms: Dict[str, ArmOutcome]
    summary: dict

    def report(self, name: str) -> MetricsReport:
        out = self.arms[name]
        if out.report is None:
            raise RuntimeError(f"arm {name!r} failed: {out.error}")
        return out.report


def evaluate_head(head: ProjectionHead, task: FewShotTask, adapt_log=None, total_iterations: int = 0,
                  kernel: Optional[KernelSpec] = None) -> MetricsReport:
    """Metrics of an adapted head on the test split."""
    xt, yt = task.split("test")
    conf = compute_confusion(head, xt, yt, class_ids=task.class_ids)
    stats = cluster_stats(head.forward(xt), yt, task.base_ids, task.novel_ids, kernel)
    entries = adapt_log.entries if adapt_log is not None else [
        {"iteration": 0, "base_accuracy": conf.accuracy(task.base_ids),
         "novel_accuracy": conf.accuracy(task.novel_ids)}]
    return MetricsReport(
        base_accuracy=conf.accuracy(task.base_ids),
        novel_accuracy=conf.accuracy(task.novel_ids),
        confusion=conf,
        forgetting=forgetting_curve(entries),
        convergence_iters=convergence_iterations(entries),
        clusters=stats,
        total_iterations=total_iterations,
    )


def _curve_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for e in entries:
        w.writerow([repr(e.get(c)) if isinstance(e.get(c), float) else e.get(c) for c in CURVE_COLUMNS])
    return buf.getvalue()


def _summary(cfg: ExperimentConfig, task: FewShotTask, outcomes: Dict[str, ArmOutcome]) -> dict:
    rows, failed = [], {}
    for arm in cfg.arms:
        out = outcomes[arm.name]
        if out.report is None:
            failed[arm.name] = out.error
            continue
        r = out.report
        rows.append({
            "arm": arm.name,
            "base_accuracy": r.base_accuracy,
            "novel_accuracy": r.novel_accuracy,
            "combined_score": r.combined_score,
            "forgetting_delta": r.forgetting.delta,
            "convergence_iters": r.convergence_iters,
            "base_novel_similarity": r.clusters.base_novel_mean,
            "base_novel_confusion": r.confusion.cross_group_mass(task.base_ids, task.novel_ids),
        })
    ranking = [r["arm"] for r in sorted(rows, key=lambda r: (-r["novel_accuracy"], r["arm"]))]
    return {"arms": rows, "failed": failed, "ranking_by_novel_accuracy": ranking}


def _summary_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["arm", "base_accuracy", "novel_accuracy", "combined_score", "forgetting_delta",
            "convergence_iters", "base_novel_similarity", "base_novel_confusion"]
    w.writerow(cols + ["status"])
    for r in summary["arms"]:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols] + ["ok"])
    for name in summary["failed"]:
        w.writerow([name] + [""] * (len(cols) - 1) + ["failed"])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, write: bool = True, task: Optional[FewShotTask] = None,
                   base_head: Optional[ProjectionHead] = None) -> ExperimentResult:
    """Base-train once, adapt once per arm, and collect metrics.

    A failing arm (divergence, invalid loss configuration) is recorded in the
    summary and does not stop the others.
    """
    task = task if task is not None else generate_task(cfg.task)
    base_log = None
    if base_head is None:
        init = ProjectionHead(task.x.shape[1], cfg.task.embed_dim, seed=cfg.head_seed)
        base_head, base_log = base_train(task, init, cfg.base)
    outcomes: Dict[str, ArmOutcome] = {}
    for arm in cfg.arms:
        try:
            acfg = replace(cfg.adapt, loss=arm.loss, **arm.adapt_overrides)
            head, alog = few_shot_adapt(task, base_head, acfg)
            report = evaluate_head(head, task, alog, acfg.iterations)
            outcomes[arm.name] = ArmOutcome(arm.name, report, alog, head)
        except (ArithmeticError, ValueError, TypeError, RuntimeError) as exc:
            log.warning("arm %s failed: %s", arm.name, exc)
            outcomes[arm.name] = ArmOutcome(arm.name, error=f"{type(exc).__name__}: {exc}")
    summary = _summary(cfg, task, outcomes)
    result = ExperimentResult(cfg, base_log, outcomes, summary)
    if write:
        write_reports(result, task)
    return result


def write_reports(result: ExperimentResult, task: FewShotTask) -> Path:
    out = Path(result.config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_json(result.config.to_dict()))
    if result.base_log is not None:
        rows = [{"iteration": e["iteration"], "base_accuracy": e["base_accuracy"], "loss": e["loss"]}
                for e in result.base_log.entries]
        (out / "base_curve.csv").write_text(_curve_csv(rows))
    for arm in result.config.arms:
        o = result.arms[arm.name]
        if o.report is None:
            payload = {"arm": arm.to_dict(), "status": "failed", "error": o.error}
        else:
            payload = {"arm": arm.to_dict(), "status": "ok",
                       "metrics": o.report.to_dict(task.base_ids, task.novel_ids)}
            (out / f"{arm.name}_curve.csv").write_text(_curve_csv(o.log.entries))
        (out / f"{arm.name}.json").write_text(dump_json(payload))
    (out / "summary.json").write_text(dump_json(result.summary))
    (out / "summary.csv").write_text(_summary_csv(result.summary))
    return out


# -- arm sets for sweeps ----------------------------------------------------

def component_arms(variant: str = "flmi", base_loss: Optional[LossConfig] = None) -> List[Arm]:
    """Baseline, +intra, +inter and +both arms."""
    lc = base_loss or LossConfig(variant)
    return [Arm("ce_only", "ce_only"),
            Arm("intra", replace(lc, variant=variant, eta=0.0)),
            Arm("inter", replace(lc, variant=variant, eta=1.0)),
            Arm("both", replace(lc, variant=variant, eta=0.5))]


def eta_arms(etas=(0.0, 0.2, 0.5, 0.8, 1.0), variant: str = "flmi") -> List[Arm]:
    return [Arm(f"eta_{e:g}", LossConfig(variant, eta=e)) for e in etas]


def lambda_arms(lams=(0.5, 0.7, 1.0, 1.2, 1.5), variant: str = "gcmi") -> List[Arm]:
    return [Arm(f"lambda_{l:g}", LossConfig(variant, lam=l)) for l in lams]


def kernel_arms(variant: str = "flmi") -> List[Arm]:
    return [Arm(f"kernel_{k}", LossConfig(variant, kernel=KernelSpec(k))) for k in ("euclidean", "cosine", "rbf")]


def objective_arms() -> List[Arm]:
    return [Arm("ce_only", "ce_only"), Arm("gcmi", LossConfig("gcmi")), Arm("flmi", LossConfig("flmi"))]


SWEEPS = {"component": component_arms, "eta": eta_arms, "lambda": lambda_arms,
          "kernel": kernel_arms, "objective": objective_arms}
