"""Evaluation metrics: confusion, forgetting, cluster geometry and convergence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..kernel import KernelSpec, build_similarity_matrix

CONVERGENCE_FRACTION = 0.9
ROW_TOL = 1e-9


class MetricsError(ValueError):
    pass


@dataclass
class Confusion:
    """Row-normalized confusion matrix; ``empty`` flags classes absent from the data."""

    class_ids: List[int]
    matrix: np.ndarray
    counts: np.ndarray
    empty: List[int] = field(default_factory=list)

    def recall(self, cls: int) -> float:
        return float(self.matrix[self.class_ids.index(cls), self.class_ids.index(cls)])

    def accuracy(self, classes: Optional[Sequence[int]] = None) -> float:
        """Count-weighted mean of the diagonal over ``classes``."""
        idx = [self.class_ids.index(c) for c in (classes if classes is not None else self.class_ids)]
        w = self.counts[idx]
        if w.sum() == 0:
            return float("nan")
        return float(np.dot(np.diag(self.matrix)[idx], w) / w.sum())

    def cross_group_mass(self, group_a: Sequence[int], group_b: Sequence[int]) -> float:
        """Mean predicted mass a row of one group puts on the other group, both directions."""
        ia = [self.class_ids.index(c) for c in group_a]
        ib = [self.class_ids.index(c) for c in group_b]
        m = self.matrix
        a_to_b = m[np.ix_(ia, ib)].sum(axis=1)
        b_to_a = m[np.ix_(ib, ia)].sum(axis=1)
        return float(np.concatenate([a_to_b, b_to_a]).mean())


def confusion_from_predictions(y_true, y_pred, class_ids: Sequence[int]) -> Confusion:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    ids = [int(c) for c in class_ids]
    pos = {c: i for i, c in enumerate(ids)}
    counts = np.zeros((len(ids), len(ids)))
    for t, p in zip(y_true.tolist(), y_pred.tolist()):
        counts[pos[t], pos[p]] += 1
    totals = counts.sum(axis=1)
    empty = [ids[i] for i in np.flatnonzero(totals == 0)]
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(totals[:, None] > 0, counts / totals[:, None], 0.0)
    return Confusion(ids, matrix, totals, empty)


def compute_confusion(head, x, y, prototypes=None, class_ids: Optional[Sequence[int]] = None) -> Confusion:
    """Confusion of ``head``'s nearest-prototype predictions on ``(x, y)``."""
    from ..learner.head import classify

    if len(y) == 0:
        raise MetricsError("cannot compute a confusion matrix on an empty split")
    protos = prototypes if prototypes is not None else head.prototypes
    pred, _ = classify(head, x, protos)
    ids = class_ids if class_ids is not None else protos.class_ids.tolist()
    return confusion_from_predictions(y, pred, ids)


@dataclass
class ForgettingCurve:
    points: List[Tuple[int, float]]

    @property
    def delta(self) -> float:
        """Final minus initial base accuracy; negative means forgetting."""
        return self.points[-1][1] - self.points[0][1]


def forgetting_curve(log) -> ForgettingCurve:
    entries = getattr(log, "entries", log)
    if not entries:
        raise MetricsError("empty training log")
    pts = [(int(e["iteration"]), float(e["base_accuracy"])) for e in entries]
    its = [p[0] for p in pts]
    if any(b <= a for a, b in zip(its, its[1:])):
        raise MetricsError("log iterations are not strictly increasing")
    return ForgettingCurve(pts)


def convergence_iterations(log, fraction: float = CONVERGENCE_FRACTION) -> Optional[int]:
    """First logged iteration with novel accuracy >= ``fraction`` x final.

    Returns ``None`` when the final novel accuracy is zero (undefined).
    """
    entries = getattr(log, "entries", log)
    if not entries:
        raise MetricsError("empty training log")
    final = float(entries[-1]["novel_accuracy"])
    if final <= 0:
        return None
    for e in entries:
        if e["novel_accuracy"] >= fraction * final:
            return int(e["iteration"])
    return int(entries[-1]["iteration"])


@dataclass
class ClusterStats:
    intra: Dict[int, float]
    inter: Dict[Tuple[int, int], float]
    skipped: List[int]
    base_novel_mean: Optional[float] = None

    def to_dict(self) -> dict:
        return {"intra": {str(k): v for k, v in self.intra.items()},
                "inter": {f"{a}->{b}": v for (a, b), v in self.inter.items()},
                "skipped": self.skipped, "base_novel_mean": self.base_novel_mean}


def cluster_stats(z, labels, base_ids: Sequence[int] = (), novel_ids: Sequence[int] = (),
                  kernel: Optional[KernelSpec] = None) -> ClusterStats:
    """Mean within-class and cross-class similarity of embedded rows.

    Within-class means exclude self pairs; classes with a single row are
    skipped and listed in ``skipped``.  ``base_novel_mean`` averages the
    cross-class means over every (base, novel) pair.
    """
    kernel = kernel or KernelSpec("cosine", nonneg_shift=False)
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    s = build_similarity_matrix(z, kernel).values
    ids = [int(c) for c in np.unique(labels)]
    rows = {c: np.flatnonzero(labels == c) for c in ids}
    intra, skipped = {}, []
    for c in ids:
        r = rows[c]
        if r.size < 2:
            skipped.append(c)
            continue
        block = s[np.ix_(r, r)]
        intra[c] = float((block.sum() - np.trace(block)) / (r.size * (r.size - 1)))
    kept = [c for c in ids if c not in skipped]
    inter = {(a, b): float(s[np.ix_(rows[a], rows[b])].mean()) for a in kept for b in kept if a != b}
    pairs = [inter[(b, n)] for b in base_ids for n in novel_ids if (b, n) in inter]
    return ClusterStats(intra, inter, skipped, float(np.mean(pairs)) if pairs else None)


@dataclass
class MetricsReport:
    base_accuracy: float
    novel_accuracy: float
    confusion: Confusion
    forgetting: ForgettingCurve
    convergence_iters: Optional[int]
    clusters: ClusterStats
    total_iterations: int

    @property
    def combined_score(self) -> float:
        return 0.5 * (self.base_accuracy + self.novel_accuracy)

    def to_dict(self, base_ids: Sequence[int], novel_ids: Sequence[int]) -> dict:
        return {
            "base_accuracy": self.base_accuracy,
            "novel_accuracy": self.novel_accuracy,
            "combined_score": self.combined_score,
            "confusion": {"class_ids": self.confusion.class_ids,
                          "matrix": self.confusion.matrix.tolist(),
                          "empty_rows": self.confusion.empty,
                          "base_novel_mass": self.confusion.cross_group_mass(base_ids, novel_ids)},
            "forgetting_curve": [list(p) for p in self.forgetting.points],
            "forgetting_delta": self.forgetting.delta,
            "convergence_iters": self.convergence_iters,
            "cluster_stats": self.clusters.to_dict(),
            "total_iterations": self.total_iterations,
        }
