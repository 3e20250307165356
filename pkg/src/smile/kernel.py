"""Embedding containers and pairwise similarity kernels.

Three kernels are supported:

* ``cosine``    -- ``u_i . u_j`` with ``u = z / |z|``; optionally shifted to
  ``(1 + cos) / 2`` so that every entry lies in ``[0, 1]``.
* ``euclidean`` -- ``1 / (1 + |z_i - z_j|)``.
* ``rbf``       -- ``exp(-|z_i - z_j|^2 / (2 sigma^2))``; ``sigma`` defaults to
  the median pairwise distance.

Besides the forward maps this module carries the analytic derivatives used
by the loss layer: :func:`kernel_gradient` for a single pair and
:func:`similarity_backward` for pulling a full ``dL/dS`` matrix back onto the
embedding rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

KERNELS = ("cosine", "euclidean", "rbf")

_UNIT_TOL = 1e-9


class KernelDomainError(ValueError):
    """Raised when a kernel is evaluated outside its domain (e.g. zero rows)."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice.

    ``rbf_bandwidth`` is either a positive float or ``"auto"`` (median pairwise
    distance).  ``nonneg_shift`` only affects the cosine kernel; the other two
    are already in ``[0, 1]``.
    """

    kind: str = "cosine"
    rbf_bandwidth: Union[float, str] = "auto"
    nonneg_shift: bool = True

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; expected one of {KERNELS}")
        bw = self.rbf_bandwidth
        if isinstance(bw, str):
            if bw != "auto":
                raise ValueError(f"rbf_bandwidth must be a positive float or 'auto', got {bw!r}")
        elif not (np.isfinite(bw) and bw > 0):
            raise ValueError(f"rbf_bandwidth must be > 0, got {bw!r}")

    @property
    def shifted(self) -> bool:
        return self.kind == "cosine" and self.nonneg_shift

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rbf_bandwidth": self.rbf_bandwidth,
                "nonneg_shift": self.nonneg_shift}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        unknown = set(d) - {"kind", "rbf_bandwidth", "nonneg_shift"}
        if unknown:
            raise ValueError(f"unknown kernel keys {sorted(unknown)}")
        return cls(**d)


@dataclass
class EmbeddingMatrix:
    """``n x d`` matrix of feature rows."""

    data: np.ndarray
    unit_normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"embeddings must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("embeddings contain non-finite entries")
        if self.unit_normalized:
            norms = np.linalg.norm(data, axis=1)
            bad = np.flatnonzero(np.abs(norms - 1.0) > _UNIT_TOL)
            if bad.size:
                raise ValueError(f"row {bad[0]} has norm {norms[bad[0]]!r}, expected 1")
        self.data = data

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @classmethod
    def normalized(cls, data) -> "EmbeddingMatrix":
        u, _ = l2_normalize(np.asarray(data, dtype=np.float64))
        return cls(u, unit_normalized=True)


@dataclass
class SimilarityMatrix:
    values: np.ndarray
    kernel: KernelSpec = field(default_factory=KernelSpec)
    bandwidth: Optional[float] = None  # resolved sigma for rbf

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _as_array(z) -> np.ndarray:
    if isinstance(z, EmbeddingMatrix):
        return z.data
    return np.asarray(z, dtype=np.float64)


def l2_normalize(z: np.ndarray):
    """Row-normalize ``z``; returns ``(u, norms)``.

    Raises KernelDomainError naming the first zero-norm row.
    """
    norms = np.linalg.norm(z, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise KernelDomainError(f"row {zero[0]} has zero norm")
    return z / norms[:, None], norms


def normalize_backward(u: np.ndarray, norms: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    """Pull ``dL/du`` back through ``u = z / |z|``."""
    radial = np.sum(grad_u * u, axis=1, keepdims=True)
    return (grad_u - radial * u) / norms[:, None]


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0:
        raise KernelDomainError("row 0 has zero norm")
    if nb == 0.0:
        raise KernelDomainError("row 1 has zero norm")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def pairwise_distances(z: np.ndarray) -> np.ndarray:
    return squareform(pdist(z))


def resolve_bandwidth(z: np.ndarray, spec: KernelSpec, dist: Optional[np.ndarray] = None) -> float:
    if spec.rbf_bandwidth != "auto":
        return float(spec.rbf_bandwidth)
    n = z.shape[0]
    if n < 2:
        return 1.0
    if dist is None:
        dist = pairwise_distances(z)
    sigma = float(np.median(dist[np.triu_indices(n, k=1)]))
    return sigma if sigma > 0 else 1.0


def build_similarity_matrix(z, spec: Optional[KernelSpec] = None) -> SimilarityMatrix:
    """Full ``n x n`` similarity matrix of the rows of ``z`` under ``spec``."""
    spec = spec or KernelSpec()
    z = _as_array(z)
    if not np.all(np.isfinite(z)):
        raise KernelDomainError("embeddings contain non-finite entries")
    sigma = None
    if spec.kind == "cosine":
        u, _ = l2_normalize(z)
        s = np.clip(u @ u.T, -1.0, 1.0)
        s = 0.5 * (s + s.T)
        np.fill_diagonal(s, 1.0)
        if spec.nonneg_shift:
            s = 0.5 * (1.0 + s)
    else:
        dist = pairwise_distances(z)
        if spec.kind == "euclidean":
            s = 1.0 / (1.0 + dist)
        else:
            sigma = resolve_bandwidth(z, spec, dist)
            s = np.exp(-dist**2 / (2.0 * sigma**2))
    if not np.all(np.isfinite(s)):
        raise KernelDomainError("similarity matrix contains non-finite entries")
    return SimilarityMatrix(s, spec, sigma)


def kernel_gradient(z, spec: KernelSpec, i: int, j: int, bandwidth: Optional[float] = None):
    """Return ``(dS_ij/dz_i, dS_ij/dz_j)``.

    For ``rbf`` with ``"auto"`` bandwidth the median distance is resolved on
    ``z`` and then held fixed.
    """
    if i == j:
        raise ValueError("kernel_gradient requires i != j")
    z = _as_array(z)
    zi, zj = z[i], z[j]
    if spec.kind == "cosine":
        ni, nj = np.linalg.norm(zi), np.linalg.norm(zj)
        for idx, nrm in ((i, ni), (j, nj)):
            if nrm == 0.0:
                raise KernelDomainError(f"row {idx} has zero norm")
        ui, uj = zi / ni, zj / nj
        c = ui @ uj
        gi = (uj - c * ui) / ni
        gj = (ui - c * uj) / nj
        if spec.nonneg_shift:
            gi, gj = 0.5 * gi, 0.5 * gj
        return gi, gj
    diff = zi - zj
    dist = np.linalg.norm(diff)
    if spec.kind == "euclidean":
        if dist == 0.0:
            return np.zeros_like(zi), np.zeros_like(zj)
        gi = -diff / (dist * (1.0 + dist) ** 2)
        return gi, -gi
    sigma = bandwidth if bandwidth is not None else resolve_bandwidth(z, spec)
    s = np.exp(-dist**2 / (2.0 * sigma**2))
    gi = -s * diff / sigma**2
    return gi, -gi


def similarity_backward(z: np.ndarray, sim: SimilarityMatrix, grad_s: np.ndarray) -> np.ndarray:
    """Pull ``dL/dS`` (``n x n``, not necessarily symmetric) back to ``dL/dz``.

    Diagonal entries of ``grad_s`` are ignored: every kernel's self-similarity
    is constant.
    """
    spec = sim.kernel
    g = np.array(grad_s, dtype=np.float64)
    np.fill_diagonal(g, 0.0)
    g = g + g.T
    if spec.kind == "cosine":
        if spec.nonneg_shift:
            g = 0.5 * g
        u, norms = l2_normalize(z)
        return normalize_backward(u, norms, g @ u)
    dist = pairwise_distances(z)
    if spec.kind == "euclidean":
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(dist > 0, -1.0 / (dist * (1.0 + dist) ** 2), 0.0)
    else:
        coef = -sim.values / sim.bandwidth**2
    w = g * coef
    return w.sum(axis=1)[:, None] * z - w @ z
