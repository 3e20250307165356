"""Two-layer projection head and nearest-prototype classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from ..kernel import KernelSpec, build_similarity_matrix, l2_normalize, normalize_backward

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class Prototypes:
    """Per-class mean embeddings, rows ordered by ascending class id."""

    class_ids: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        order = np.argsort(self.class_ids, kind="stable")
        self.class_ids, self.vectors = self.class_ids[order], self.vectors[order]

    @classmethod
    def from_embeddings(cls, z: np.ndarray, labels: np.ndarray,
                        class_ids: Optional[Sequence[int]] = None) -> "Prototypes":
        ids = np.unique(labels) if class_ids is None else np.asarray(sorted(class_ids))
        missing = [int(c) for c in ids if not np.any(labels == c)]
        if missing:
            raise ValueError(f"no samples to build a prototype for classes {missing}")
        return cls(ids, np.stack([z[labels == c].mean(axis=0) for c in ids]))


class ProjectionHead:
    """``x -> normalize(tanh(x W1 + b1) W2 + b2)`` with hidden width ``2 * embed_dim``."""

    def __init__(self, input_dim: int, embed_dim: int = 128, seed: int = 0,
                 params: Optional[Dict[str, np.ndarray]] = None):
        self.input_dim = int(input_dim)
        self.embed_dim = int(embed_dim)
        self.hidden_dim = 2 * self.embed_dim
        self.prototypes: Optional[Prototypes] = None
        if params is None:
            rng = np.random.default_rng(seed)
            params = {
                "w1": rng.standard_normal((self.input_dim, self.hidden_dim)) / np.sqrt(self.input_dim),
                "b1": np.zeros(self.hidden_dim),
                "w2": rng.standard_normal((self.hidden_dim, self.embed_dim)) / np.sqrt(self.hidden_dim),
                "b2": np.zeros(self.embed_dim),
            }
        self.params = {k: np.array(params[k], dtype=np.float64) for k in PARAM_NAMES}
        if self.params["w1"].shape != (self.input_dim, self.hidden_dim) or \
                self.params["w2"].shape != (self.hidden_dim, self.embed_dim):
            raise ValueError("parameter shapes do not match the declared dimensions")

    def copy(self) -> "ProjectionHead":
        head = ProjectionHead(self.input_dim, self.embed_dim, params=self.params)
        if self.prototypes is not None:
            head.prototypes = Prototypes(self.prototypes.class_ids.copy(), self.prototypes.vectors.copy())
        return head

    def forward(self, x: np.ndarray, cache: bool = False):
        p = self.params
        h = np.tanh(x @ p["w1"] + p["b1"])
        o = h @ p["w2"] + p["b2"]
        z, norms = l2_normalize(o)
        if cache:
            return z, (x, h, z, norms)
        return z

    __call__ = forward

    def backward(self, cache, grad_z: np.ndarray) -> Dict[str, np.ndarray]:
        x, h, z, norms = cache
        p = self.params
        g_o = normalize_backward(z, norms, grad_z)
        g_h = (g_o @ p["w2"].T) * (1.0 - h * h)
        return {"w1": x.T @ g_h, "b1": g_h.sum(axis=0), "w2": h.T @ g_o, "b2": g_o.sum(axis=0)}

    def sgd_step(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        for k in PARAM_NAMES:
            self.params[k] -= lr * grads[k]

    def finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())


def prototype_logits(z: np.ndarray, protos: Prototypes, temperature: float) -> np.ndarray:
    """Cosine similarity of unit rows ``z`` to each prototype, divided by ``temperature``."""
    pn, _ = l2_normalize(protos.vectors)
    return (z @ pn.T) / temperature


def prototype_cross_entropy(z: np.ndarray, labels: np.ndarray, protos: Prototypes,
                            temperature: float = 0.1):
    """Softmax cross-entropy over prototype similarities; prototypes are constants.

    Returns ``(mean loss, dL/dz)``.
    """
    pn, _ = l2_normalize(protos.vectors)
    logits = (z @ pn.T) / temperature
    logits -= logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    cols = np.searchsorted(protos.class_ids, labels)
    if np.any(protos.class_ids[np.minimum(cols, len(protos.class_ids) - 1)] != labels):
        raise ValueError("a label has no prototype")
    rows = np.arange(z.shape[0])
    loss = float(-logp[rows, cols].mean())
    g = np.exp(logp)
    g[rows, cols] -= 1.0
    return loss, (g @ pn) / (temperature * z.shape[0])


def classify(head: ProjectionHead, x: np.ndarray, prototypes: Optional[Prototypes] = None,
             kernel: Optional[KernelSpec] = None):
    """Nearest-prototype labels and score matrix for input rows ``x``.

    Scores are kernel similarities between each embedded row and each
    prototype; ties go to the lowest class id.  A single row may be passed as
    a 1-D array, in which case a ``(label, scores)`` pair is returned.
    """
    protos = prototypes if prototypes is not None else head.prototypes
    if protos is None:
        raise ValueError("no prototypes available for classification")
    kernel = kernel or KernelSpec("cosine", nonneg_shift=False)
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = head.forward(x)
    both = build_similarity_matrix(np.vstack([z, protos.vectors]), kernel).values
    scores = both[: z.shape[0], z.shape[0]:]
    labels = protos.class_ids[np.argmax(scores, axis=1)]
    if single:
        return int(labels[0]), scores[0]
    return labels, scores
