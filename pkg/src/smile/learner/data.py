"""Synthetic few-shot classification tasks.

Class centers sit on the unit sphere of the input space.  With
``inter_overlap = 0`` they form a regular simplex (pairwise cosine
``-1 / (C - 1)``); raising the overlap to ``rho`` mixes in a shared direction
so that every pairwise cosine becomes ``(1 - rho) * (-1 / (C - 1)) + rho``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Set, Tuple

import numpy as np

SPLITS = ("base", "novel", "test")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticTaskSpec:
    num_base: int = 5
    num_novel: int = 3
    input_dim: int = 16
    embed_dim: int = 128
    samples_per_base: int = 100
    k_shot: int = 5
    intra_spread: float = 0.3
    inter_overlap: float = 0.5
    test_per_class: int = 60
    seed: int = 42

    def __post_init__(self):
        if self.num_base < 1 or self.num_novel < 1:
            raise ConfigError("need at least one base and one novel class")
        if self.k_shot < 1:
            raise ConfigError("k_shot must be >= 1")
        if self.samples_per_base < 1 or self.test_per_class < 1:
            raise ConfigError("sample counts must be >= 1")
        if self.input_dim < 1 or self.embed_dim < 1:
            raise ConfigError("dimensions must be >= 1")
        if not self.intra_spread > 0:
            raise ConfigError("intra_spread must be > 0")
        if not 0.0 <= self.inter_overlap <= 1.0:
            raise ConfigError("inter_overlap must lie in [0, 1]")

    @property
    def num_classes(self) -> int:
        return self.num_base + self.num_novel

    def to_dict(self) -> dict:
        return asdict(self)


def class_centers(num_classes: int, dim: int, overlap: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm centers with equal pairwise cosine, randomly oriented in ``dim``."""
    c = num_classes
    if c == 1:
        v = rng.standard_normal(dim)
        return (v / np.linalg.norm(v))[None, :]
    simplex = np.eye(c) - 1.0 / c
    simplex /= np.linalg.norm(simplex, axis=1, keepdims=True)
    # orthonormal coordinates of the simplex span (rank c - 1)
    basis = np.linalg.svd(simplex)[2][: c - 1]
    coords = simplex @ basis.T
    if overlap > 0:
        coords = np.hstack([np.sqrt(1.0 - overlap) * coords, np.full((c, 1), np.sqrt(overlap))])
    rank = coords.shape[1]
    if rank > dim:
        raise ConfigError(
            f"{c} classes with overlap {overlap} need input_dim >= {rank}, got {dim}")
    rot, _ = np.linalg.qr(rng.standard_normal((dim, rank)))
    centers = coords @ rot.T
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


class FewShotTask:
    """Labelled rows tagged with a split name.

    Rows are fetched through :meth:`split`, which records every split that has
    been read in :attr:`accessed` so stage isolation can be audited.
    """

    def __init__(self, x, y, tags, num_base: int, num_novel: int, k_shot: int,
                 spec: Optional[SyntheticTaskSpec] = None):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.tags = np.asarray(tags, dtype=np.uint8)
        self.num_base = int(num_base)
        self.num_novel = int(num_novel)
        self.k_shot = int(k_shot)
        self.spec = spec
        self.accessed: Set[str] = set()
        self._validate()

    def _validate(self):
        n = self.x.shape[0]
        if self.y.shape != (n,) or self.tags.shape != (n,):
            raise ValueError("x, y and tags disagree on the number of rows")
        novel_rows = self.y[self.tags == SPLITS.index("novel")]
        counts = np.bincount(novel_rows - self.num_base, minlength=self.num_novel)
        if novel_rows.size and np.any(counts != self.k_shot):
            raise ValueError(f"novel classes must have exactly {self.k_shot} rows, got {counts.tolist()}")
        if np.any(self.y[self.tags == SPLITS.index("base")] >= self.num_base):
            raise ValueError("base split contains a non-base label")

    @property
    def base_ids(self) -> list:
        return list(range(self.num_base))

    @property
    def novel_ids(self) -> list:
        return list(range(self.num_base, self.num_base + self.num_novel))

    @property
    def class_ids(self) -> list:
        return list(range(self.num_base + self.num_novel))

    def split(self, name: str, classes: Optional[Iterable[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        self.accessed.add(name)
        mask = self.tags == SPLITS.index(name)
        if classes is not None:
            mask &= np.isin(self.y, list(classes))
        return self.x[mask], self.y[mask]

    def __eq__(self, other):
        if not isinstance(other, FewShotTask):
            return NotImplemented
        return (np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and np.array_equal(self.tags, other.tags)
                and (self.num_base, self.num_novel, self.k_shot)
                == (other.num_base, other.num_novel, other.k_shot))


def generate_task(spec: SyntheticTaskSpec) -> FewShotTask:
    """Sample base, K-shot novel and test rows around seeded class centers."""
    rng = np.random.default_rng(spec.seed)
    centers = class_centers(spec.num_classes, spec.input_dim, spec.inter_overlap, rng)
    xs, ys, tags = [], [], []

    def draw(cls: int, count: int, tag: str):
        xs.append(centers[cls] + spec.intra_spread * rng.standard_normal((count, spec.input_dim)))
        ys.append(np.full(count, cls))
        tags.append(np.full(count, SPLITS.index(tag)))

    for c in range(spec.num_base):
        draw(c, spec.samples_per_base, "base")
    for c in range(spec.num_base, spec.num_classes):
        draw(c, spec.k_shot, "novel")
    for c in range(spec.num_classes):
        draw(c, spec.test_per_class, "test")
    return FewShotTask(np.vstack(xs), np.concatenate(ys), np.concatenate(tags),
                       spec.num_base, spec.num_novel, spec.k_shot, spec)
