"""Combinatorial losses over class partitions of an embedding batch.

Every loss is evaluated in two steps: the objective is written as a function
of the similarity matrix ``S`` and its derivative ``dL/dS`` is accumulated
alongside the value; :func:`smile.kernel.similarity_backward` then maps
``dL/dS`` to ``dL/dz``.  Max terms route their gradient through a single
witness, the lowest column index among tied maxima.

The ground set of a batch is the union of the partition's class sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional

import numpy as np

from .kernel import (
    KernelSpec,
    SimilarityMatrix,
    build_similarity_matrix,
    l2_normalize,
    normalize_backward,
    similarity_backward,
)
from .setfn import ClassPartition

VARIANTS = ("flmi", "gcmi")


class LossDomainError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    """Settings of a combinatorial objective.

    ``normalize_terms`` divides every pairwise double sum by ``|A| |B|`` and
    every facility-location outer sum by its number of outer indices, which
    keeps the loss scale independent of batch composition.  Raw mode (off)
    reproduces the textbook set-function values.
    """

    variant: str = "flmi"
    eta: float = 0.5
    lam: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    normalize_terms: bool = True
    normalize_embeddings: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam!r}")

    def to_dict(self) -> dict:
        return {"variant": self.variant, "eta": self.eta, "lam": self.lam,
                "kernel": self.kernel.to_dict(), "normalize_terms": self.normalize_terms,
                "normalize_embeddings": self.normalize_embeddings}

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        d = dict(d)
        if "kernel" in d:
            d["kernel"] = KernelSpec.from_dict(d["kernel"])
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown loss keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class LossResult:
    value: float
    grad: np.ndarray
    term_breakdown: Dict[str, float] = field(default_factory=dict)


# -- similarity plumbing ----------------------------------------------------

def _array(z) -> np.ndarray:
    return np.asarray(getattr(z, "data", z), dtype=np.float64)


def _forward(z: np.ndarray, cfg: LossConfig):
    if cfg.normalize_embeddings:
        u, norms = l2_normalize(z)
        return u, norms, build_similarity_matrix(u, cfg.kernel)
    return z, None, build_similarity_matrix(z, cfg.kernel)


def _backward(z: np.ndarray, feats: np.ndarray, norms, sim: SimilarityMatrix,
              grad_s: np.ndarray) -> np.ndarray:
    g = similarity_backward(feats, sim, grad_s)
    if norms is not None:
        g = normalize_backward(feats, norms, g)
    return g


def similarity_for_loss(z, cfg: LossConfig) -> np.ndarray:
    """The similarity matrix a loss evaluation would see for ``z``."""
    return _forward(_array(z), cfg)[2].values


# -- term accumulators on S -------------------------------------------------

def _max_term(s, rows, cols, weight, grad_s) -> float:
    sub = s[rows][:, cols]
    arg = np.argmax(sub, axis=1)
    grad_s[rows, cols[arg]] += weight
    return weight * float(sub[np.arange(rows.size), arg].sum())


def _intra_on_s(s: np.ndarray, p: ClassPartition, cfg: LossConfig):
    grad_s = np.zeros_like(s)
    total = 0.0
    for k in p.class_ids:
        a = p.sets[k]
        out = p.complement(k)
        if cfg.variant == "flmi":
            if out.size:
                w = 1.0 / out.size if cfg.normalize_terms else 1.0
                total += _max_term(s, out, a, w, grad_s)
            continue
        wc = 1.0 / (a.size * out.size) if (cfg.normalize_terms and out.size) else 1.0
        ww = cfg.lam / a.size**2 if cfg.normalize_terms else cfg.lam
        cross = s[np.ix_(a, out)].sum() if out.size else 0.0
        total += wc * cross - ww * s[np.ix_(a, a)].sum()
        if out.size:
            grad_s[np.ix_(a, out)] += wc
        grad_s[np.ix_(a, a)] -= ww
    return float(total), grad_s


def inter_pairs(p: ClassPartition):
    """Ordered class pairs ``(k, l)`` with ``l`` novel and ``k != l``."""
    return [(k, l) for k in p.class_ids for l in sorted(p.novel_ids) if k != l]


def _inter_on_s(s: np.ndarray, p: ClassPartition, cfg: LossConfig):
    if not p.novel_ids:
        raise LossDomainError("inter-class loss needs at least one novel class in the batch")
    pairs = inter_pairs(p)
    if not pairs:
        raise LossDomainError(
            f"inter-class loss needs at least two classes in the batch, got {p.class_ids}")
    grad_s = np.zeros_like(s)
    total = 0.0
    for k, l in pairs:
        ak, al = p.sets[k], p.sets[l]
        if cfg.variant == "flmi":
            w1 = 1.0 / ak.size if cfg.normalize_terms else 1.0
            w2 = cfg.lam / al.size if cfg.normalize_terms else cfg.lam
            total += _max_term(s, ak, al, w1, grad_s)
            total += _max_term(s, al, ak, w2, grad_s)
        else:
            w = 2.0 * cfg.lam
            if cfg.normalize_terms:
                w /= ak.size * al.size
            total += w * s[np.ix_(ak, al)].sum()
            grad_s[np.ix_(ak, al)] += w
    return float(total), grad_s


def _run(z, p: ClassPartition, cfg: LossConfig, term) -> LossResult:
    z = _array(z)
    p.validate_size(z.shape[0])
    feats, norms, sim = _forward(z, cfg)
    value, grad_s = term(sim.values, p, cfg)
    return LossResult(value, _backward(z, feats, norms, sim, grad_s))


def l_intra(z, p: ClassPartition, cfg: LossConfig) -> LossResult:
    """Total submodular information of the class sets (within-class constant dropped)."""
    res = _run(z, p, cfg, _intra_on_s)
    res.term_breakdown = {"intra": res.value, "inter": 0.0}
    return res


def l_inter(z, p: ClassPartition, cfg: LossConfig) -> LossResult:
    """Summed mutual information over ordered (any class, novel class) pairs."""
    res = _run(z, p, cfg, _inter_on_s)
    res.term_breakdown = {"intra": 0.0, "inter": res.value}
    return res


def l_comb(z, p: ClassPartition, cfg: LossConfig) -> LossResult:
    """``(1 - eta) * intra + eta * inter``."""
    z = _array(z)
    p.validate_size(z.shape[0])
    feats, norms, sim = _forward(z, cfg)
    intra, g_intra = _intra_on_s(sim.values, p, cfg)
    inter, g_inter = _inter_on_s(sim.values, p, cfg)
    g_intra = _backward(z, feats, norms, sim, g_intra)
    g_inter = _backward(z, feats, norms, sim, g_inter)
    eta = cfg.eta
    value = (1.0 - eta) * intra + eta * inter
    grad = (1.0 - eta) * g_intra + eta * g_inter
    return LossResult(value, grad, {"intra": intra, "inter": inter})


COMPONENTS = {"intra": l_intra, "inter": l_inter, "comb": l_comb}


# -- baseline and composition ----------------------------------------------

def supcon_baseline(z, labels, temperature: float = 0.1) -> LossResult:
    """Supervised contrastive loss on unit-normalized rows.

    Anchors without a positive partner are skipped; the loss is the mean over
    the remaining anchors.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature!r}")
    z = _array(z)
    labels = np.asarray(labels)
    n = z.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    u, norms = l2_normalize(z)
    off = ~np.eye(n, dtype=bool)
    pos = (labels[:, None] == labels[None, :]) & off
    npos = pos.sum(axis=1)
    anchors = np.flatnonzero(npos > 0)
    if anchors.size == 0:
        raise LossDomainError("supervised contrastive loss needs a class with at least two samples")
    logits = (u @ u.T) / temperature
    masked = np.where(off, logits, -np.inf)
    mx = masked.max(axis=1, keepdims=True)
    ex = np.exp(masked - mx)
    denom = ex.sum(axis=1, keepdims=True)
    lse = (mx + np.log(denom))[:, 0]
    soft = ex / denom
    mean_pos = np.where(pos, logits, 0.0).sum(axis=1) / np.maximum(npos, 1)
    per_anchor = lse - mean_pos
    value = float(per_anchor[anchors].mean())

    grad_logits = soft - pos / np.maximum(npos, 1)[:, None]
    grad_logits[npos == 0] = 0.0
    grad_c = grad_logits / (temperature * anchors.size)
    cos = SimilarityMatrix(u @ u.T, KernelSpec("cosine", nonneg_shift=False))
    grad = normalize_backward(u, norms, similarity_backward(u, cos, grad_c))
    return LossResult(value, grad, {"supcon": value})


def total_objective(ce: LossResult, comb: Optional[LossResult], weight: float = 1.0) -> LossResult:
    """Classification loss plus ``weight`` times the combinatorial loss."""
    if comb is None:
        return LossResult(ce.value, ce.grad.copy(), {"ce": ce.value, **_zero_terms()})
    if ce.grad.shape != comb.grad.shape:
        raise ValueError(f"gradient shapes differ: {ce.grad.shape} vs {comb.grad.shape}")
    breakdown = {"ce": ce.value, **comb.term_breakdown, "comb": comb.value}
    return LossResult(ce.value + weight * comb.value, ce.grad + weight * comb.grad, breakdown)


def _zero_terms():
    return {"intra": 0.0, "inter": 0.0, "comb": 0.0}


# -- finite differences -----------------------------------------------------

def argmax_gap(z, p: ClassPartition, cfg: LossConfig) -> float:
    """Smallest gap between the best and runner-up candidate of any max term.

    Returns ``inf`` for objectives without max terms.
    """
    if cfg.variant != "flmi":
        return np.inf
    s = similarity_for_loss(z, cfg)
    blocks = []
    for k in p.class_ids:
        out = p.complement(k)
        if out.size:
            blocks.append((out, p.sets[k]))
    for k, l in inter_pairs(p):
        blocks += [(p.sets[k], p.sets[l]), (p.sets[l], p.sets[k])]
    gap = np.inf
    for rows, cols in blocks:
        if cols.size < 2:
            continue
        top2 = np.sort(s[np.ix_(rows, cols)], axis=1)[:, -2:]
        gap = min(gap, float((top2[:, 1] - top2[:, 0]).min()))
    return gap


def numeric_gradient(fn: Callable[[np.ndarray], float], z: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(z)
    work = z.copy()
    for idx in np.ndindex(*z.shape):
        orig = work[idx]
        work[idx] = orig + step
        hi = fn(work)
        work[idx] = orig - step
        lo = fn(work)
        work[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Normwise relative error ``max|a - b| / max(max|a|, max|b|)``."""
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - b).max() / scale)


def finite_difference_check(loss_op, z, p, cfg, step: float = 1e-5, rng=None,
                            max_resamples: int = 20) -> float:
    """Max relative error between ``loss_op``'s gradient and central differences.

    ``loss_op(z, p, cfg)`` must return a :class:`LossResult`.  When ``cfg`` is a
    facility-location :class:`LossConfig`, ``z`` is jittered until every max
    term's top two candidates are more than ``10 * step`` apart.
    """
    z = _array(z).copy()
    if isinstance(cfg, LossConfig):
        rng = np.random.default_rng(0) if rng is None else rng
        for _ in range(max_resamples):
            if argmax_gap(z, p, cfg) > 10 * step:
                break
            z = z + 1e-2 * np.abs(z).mean() * rng.standard_normal(z.shape)
        else:
            raise LossDomainError(f"could not avoid argmax ties after {max_resamples} re-samples")
    analytic = loss_op(z, p, cfg).grad
    numeric = numeric_gradient(lambda w: loss_op(w, p, cfg).value, z, step)
    return relative_error(analytic, numeric)


def with_eta(cfg: LossConfig, eta: float) -> LossConfig:
    return replace(cfg, eta=eta)
