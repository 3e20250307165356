"""Seeded SGD for the two training stages.

Base training fits the head on the abundant base split with a
prototype-softmax cross-entropy.  Few-shot adaptation fine-tunes on a
support set of K rows per class (or all base rows with ``abundant_base``),
adding the configured combinatorial loss on the projected batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from ..loss import LossConfig, LossResult, l_comb, supcon_baseline, total_objective
from ..setfn import ClassPartition
from .data import ConfigError, FewShotTask
from .head import ProjectionHead, Prototypes, classify, prototype_cross_entropy

STAGES = ("base", "adapt")
BASELINES = ("ce_only", "supcon")


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"loss became non-finite ({value}) at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    stage: str = "base"
    loss: Union[LossConfig, str] = "ce_only"
    learning_rate: float = 0.5
    iterations: int = 500
    batch_size: int = 64
    eval_every: int = 50
    seed: int = 42
    comb_weight: float = 1.0
    temperature: float = 0.1
    supcon_temperature: float = 0.1
    abundant_base: bool = False

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")
        if isinstance(self.loss, str) and self.loss not in BASELINES:
            raise ConfigError(f"unknown loss {self.loss!r}; expected a LossConfig or one of {BASELINES}")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.batch_size < 2 or self.eval_every < 1:
            raise ConfigError("batch_size must be >= 2 and eval_every >= 1")
        if not (self.temperature > 0 and self.supcon_temperature > 0):
            raise ConfigError("temperatures must be > 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(self.loss, LossConfig):
            d["loss"] = self.loss.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig.from_dict(d["loss"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class TrainLog:
    stage: str
    entries: List[dict] = field(default_factory=list)

    def column(self, key: str) -> list:
        return [e[key] for e in self.entries]


def accuracy(head: ProjectionHead, x: np.ndarray, y: np.ndarray, protos: Prototypes) -> float:
    if y.size == 0:
        return float("nan")
    pred, _ = classify(head, x, protos)
    return float(np.mean(pred == y))


def _prototypes(head: ProjectionHead, x: np.ndarray, y: np.ndarray) -> Prototypes:
    return Prototypes.from_embeddings(head.forward(x), y)


def _check_finite(value: float, it: int) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(it, value)


def base_train(task: FewShotTask, head: ProjectionHead, cfg: TrainConfig):
    """Train ``head`` (a copy is returned) on the base split.

    Returns ``(head, TrainLog)``; every ``eval_every`` iterations the log
    records the batch loss and the base-class test accuracy.
    """
    if cfg.stage != "base":
        raise ConfigError(f"base_train needs stage 'base', got {cfg.stage!r}")
    head = head.copy()
    x, y = task.split("base")
    xt, yt = task.split("test", classes=task.base_ids)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog("base")
    bs = min(cfg.batch_size, x.shape[0])
    for it in range(1, cfg.iterations + 1):
        protos = _prototypes(head, x, y)
        idx = np.sort(rng.choice(x.shape[0], size=bs, replace=False))
        z, cache = head.forward(x[idx], cache=True)
        loss, g = prototype_cross_entropy(z, y[idx], protos, cfg.temperature)
        _check_finite(loss, it)
        head.sgd_step(head.backward(cache, g), cfg.learning_rate)
        if not head.finite():
            raise TrainingDiverged(it, float("nan"))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            protos = _prototypes(head, x, y)
            log.entries.append({"iteration": it, "loss": loss,
                                "base_accuracy": accuracy(head, xt, yt, protos)})
    head.prototypes = _prototypes(head, x, y)
    return head, log


def support_set(task: FewShotTask, cfg: TrainConfig):
    """Adaptation training rows: K per base class (or all of them) plus the novel split."""
    xb, yb = task.split("base")
    xn, yn = task.split("novel")
    if not cfg.abundant_base:
        rng = np.random.default_rng([cfg.seed, 1])
        keep = []
        for c in task.base_ids:
            rows = np.flatnonzero(yb == c)
            keep.append(np.sort(rng.choice(rows, size=min(task.k_shot, rows.size), replace=False)))
        keep = np.concatenate(keep)
        xb, yb = xb[keep], yb[keep]
    return np.vstack([xb, xn]), np.concatenate([yb, yn])


def stratified_batch(y: np.ndarray, novel_ids, k: int, batch_size: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Row indices covering at least two classes, one of them novel, with <= k rows per class."""
    classes = np.unique(y)
    novel = np.array([c for c in classes if c in set(novel_ids)])
    if novel.size == 0 or classes.size < 2:
        raise ConfigError("adaptation batches need at least two classes including a novel one")
    n_cls = int(np.clip(batch_size // k, 2, classes.size))
    if n_cls == classes.size:
        chosen = classes
    else:
        first = rng.choice(novel)
        rest = rng.choice(classes[classes != first], size=n_cls - 1, replace=False)
        chosen = np.sort(np.concatenate([[first], rest]))
    rows = []
    for c in chosen:
        pool = np.flatnonzero(y == c)
        rows.append(np.sort(rng.choice(pool, size=min(k, pool.size), replace=False)))
    return np.concatenate(rows)


def _batch_objective(z, labels, novel_ids, cfg: TrainConfig, ce: LossResult) -> LossResult:
    if cfg.loss == "ce_only":
        return total_objective(ce, None)
    if cfg.loss == "supcon":
        sc = supcon_baseline(z, labels, cfg.supcon_temperature)
        sc.term_breakdown = {"intra": 0.0, "inter": 0.0}
        return total_objective(ce, sc, cfg.comb_weight)
    part = ClassPartition.from_labels(labels, novel_ids)
    return total_objective(ce, l_comb(z, part, cfg.loss), cfg.comb_weight)


def evaluate_split(head: ProjectionHead, task: FewShotTask, protos: Prototypes) -> dict:
    xt, yt = task.split("test")
    pred, _ = classify(head, xt, protos)
    base = np.isin(yt, task.base_ids)
    return {"base_accuracy": float(np.mean(pred[base] == yt[base])),
            "novel_accuracy": float(np.mean(pred[~base] == yt[~base]))}


def few_shot_adapt(task: FewShotTask, head: ProjectionHead, cfg: TrainConfig):
    """Fine-tune ``head`` (a copy is returned) on the K-shot support set.

    The log holds an entry at iteration 0 and every ``eval_every`` iterations
    with base/novel test accuracy, the loss breakdown and the mean
    base-novel cluster similarity.
    """
    from ..harness.metrics import cluster_stats  # harness imports this module

    if cfg.stage != "adapt":
        raise ConfigError(f"few_shot_adapt needs stage 'adapt', got {cfg.stage!r}")
    head = head.copy()
    xs, ys = support_set(task, cfg)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog("adapt")
    novel = task.novel_ids
    xt, yt = task.split("test")

    def record(it, terms):
        protos = _prototypes(head, xs, ys)
        entry = {"iteration": it, **evaluate_split(head, task, protos)}
        stats = cluster_stats(head.forward(xt), yt, task.base_ids, novel)
        entry["base_novel_similarity"] = stats.base_novel_mean
        entry.update({k: terms.get(k, 0.0) for k in ("loss", "ce", "intra", "inter")})
        log.entries.append(entry)

    record(0, {})
    for it in range(1, cfg.iterations + 1):
        protos = _prototypes(head, xs, ys)
        idx = stratified_batch(ys, novel, task.k_shot, cfg.batch_size, rng)
        z, cache = head.forward(xs[idx], cache=True)
        ce_val, ce_grad = prototype_cross_entropy(z, ys[idx], protos, cfg.temperature)
        res = _batch_objective(z, ys[idx], novel, cfg, LossResult(ce_val, ce_grad))
        _check_finite(res.value, it)
        head.sgd_step(head.backward(cache, res.grad), cfg.learning_rate)
        if not head.finite():
            raise TrainingDiverged(it, float("nan"))
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            record(it, {"loss": res.value, **res.term_breakdown})
    head.prototypes = _prototypes(head, xs, ys)
    return head, log
