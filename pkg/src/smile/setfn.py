"""Facility-Location and Graph-Cut set functions over a similarity matrix.

Index sets are any iterable of row indices; they are deduplicated and sorted
before evaluation.  The ground set defaults to every row of ``S``.

The ``check_*`` helpers enumerate every subset of a small ground set (at most
:data:`MAX_ENUM` items) and test the submodular / monotone inequalities
exhaustively.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence, Set, Union

import numpy as np

from .kernel import SimilarityMatrix

SET_FUNCTIONS = ("facility_location", "graph_cut")
GC_FORMS = ("full_sum", "cut")
MAX_ENUM = 10
CHECK_TOL = 1e-9


class SetFunctionDomainError(ValueError):
    pass


class GroundSetTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SetFunctionSpec:
    kind: str = "facility_location"
    lam: float = 1.0
    gc_form: str = "full_sum"

    def __post_init__(self):
        if self.kind not in SET_FUNCTIONS:
            raise ValueError(f"unknown set function {self.kind!r}")
        if self.gc_form not in GC_FORMS:
            raise ValueError(f"unknown graph-cut form {self.gc_form!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam!r}")


@dataclass
class ClassPartition:
    """Disjoint class index sets split into base and novel groups."""

    sets: Dict[int, Sequence[int]]
    base_ids: Set[int] = field(default_factory=set)
    novel_ids: Set[int] = field(default_factory=set)

    def __post_init__(self):
        self.sets = {int(k): np.unique(np.asarray(list(v), dtype=np.intp)) for k, v in self.sets.items()}
        self.base_ids = {int(c) for c in self.base_ids}
        self.novel_ids = {int(c) for c in self.novel_ids}
        if not self.base_ids and not self.novel_ids:
            self.base_ids = set(self.sets)
        if self.base_ids & self.novel_ids:
            raise ValueError(f"classes {sorted(self.base_ids & self.novel_ids)} are both base and novel")
        unknown = (self.base_ids | self.novel_ids) ^ set(self.sets)
        if unknown:
            raise ValueError(f"classes {sorted(unknown)} are not both grouped and populated")
        seen: Set[int] = set()
        for k, idx in self.sets.items():
            if idx.size == 0:
                raise ValueError(f"class {k} has an empty index set")
            if np.any(idx < 0):
                raise ValueError(f"class {k} has a negative index")
            overlap = seen.intersection(idx.tolist())
            if overlap:
                raise ValueError(f"class {k} overlaps another class at index {min(overlap)}")
            seen.update(idx.tolist())
        self._ground = np.sort(np.concatenate([self.sets[k] for k in sorted(self.sets)]))
        self._complements = {k: np.setdiff1d(self._ground, v) for k, v in self.sets.items()}

    @property
    def class_ids(self):
        return sorted(self.sets)

    @property
    def ground(self) -> np.ndarray:
        return self._ground

    def complement(self, k: int) -> np.ndarray:
        """Ground-set indices outside class ``k``."""
        return self._complements[k]

    def validate_size(self, n: int) -> None:
        top = max(int(v.max()) for v in self.sets.values())
        if top >= n:
            raise ValueError(f"partition index {top} out of range for {n} rows")

    @classmethod
    def from_labels(cls, labels, novel_ids: Iterable[int] = ()) -> "ClassPartition":
        labels = np.asarray(labels)
        novel = {int(c) for c in novel_ids}
        sets = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
        present_novel = novel & set(sets)
        return cls(sets, set(sets) - present_novel, present_novel)


def _idx(a) -> np.ndarray:
    if a is None:
        return np.empty(0, dtype=np.intp)
    return np.unique(np.fromiter((int(i) for i in a), dtype=np.intp))


def _values(S) -> np.ndarray:
    return S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)


def _ground(S: np.ndarray, T) -> np.ndarray:
    if T is None:
        return np.arange(S.shape[0])
    return _idx(T)


def _check_subset(a: np.ndarray, t: np.ndarray, name: str = "A") -> None:
    missing = np.setdiff1d(a, t)
    if missing.size:
        raise SetFunctionDomainError(f"{name} contains index {missing[0]} outside the ground set")


def facility_location(S, A, T=None) -> float:
    """``sum_{i in T} max_{j in A} S_ij``; undefined for empty ``A``."""
    s = _values(S)
    a, t = _idx(A), _ground(s, T)
    if a.size == 0:
        raise SetFunctionDomainError("facility location is undefined on the empty set")
    _check_subset(a, t)
    return float(s[np.ix_(t, a)].max(axis=1).sum())


def graph_cut(S, A, T=None, lam: float = 1.0, form: str = "full_sum") -> float:
    """Graph-cut value of ``A``.

    ``full_sum``: ``sum_{i in A, j in T} S_ij - lam * sum_{i,j in A} S_ij``
    ``cut``:      ``sum_{i in A, j in T\\A} S_ij - lam * sum_{i,j in A} S_ij``
    """
    if form not in GC_FORMS:
        raise ValueError(f"unknown graph-cut form {form!r}")
    s = _values(S)
    a, t = _idx(A), _ground(s, T)
    if a.size == 0:
        return 0.0
    _check_subset(a, t)
    within = s[np.ix_(a, a)].sum()
    if form == "full_sum":
        outer = s[np.ix_(a, t)].sum()
    else:
        outer = s[np.ix_(a, np.setdiff1d(t, a))].sum()
    return float(outer - lam * within)


def evaluate(S, f: SetFunctionSpec, A, T=None) -> float:
    if f.kind == "facility_location":
        return facility_location(S, A, T)
    return graph_cut(S, A, T, f.lam, f.gc_form)


def total_information(S, partition: ClassPartition, f: SetFunctionSpec, T=None) -> float:
    """Sum of ``f(A_k)`` over every class in the partition."""
    s = _values(S)
    partition.validate_size(s.shape[0])
    return float(sum(evaluate(s, f, partition.sets[k], T) for k in partition.class_ids))


def generic_mutual_information(S, f: SetFunctionSpec, A, B, T=None) -> float:
    """``f(A) + f(B) - f(A u B)``."""
    a, b = _idx(A), _idx(B)
    return evaluate(S, f, a, T) + evaluate(S, f, b, T) - evaluate(S, f, np.union1d(a, b), T)


# -- exhaustive checks ------------------------------------------------------

@dataclass
class CheckReport:
    function: str
    lam: Optional[float]
    ground_size: int
    passed: bool
    witness_X: Optional[list] = None
    witness_Y: Optional[list] = None
    margin: Optional[float] = None
    violations: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["pass"] = d.pop("passed")
        return d

    def to_text(self) -> str:
        keys = ("function", "lambda", "ground_size", "pass", "witness_X", "witness_Y", "margin")
        d = self.to_dict()
        return json.dumps({k: d[k] for k in keys})


SetFunction = Union[SetFunctionSpec, Callable[[frozenset], float]]


def _mask_members(mask: int, t: np.ndarray) -> list:
    return [int(t[b]) for b in range(t.size) if mask >> b & 1]


def subset_values(S, f: SetFunction, T=None):
    """Value of ``f`` on every subset of ``T``, indexed by bitmask.

    Returns ``(values, ground_indices)``; bit ``b`` of a mask selects
    ``ground_indices[b]``.

    Facility location on the empty set is taken to be 0 here, which is the
    usual convention for nonnegative similarities.
    """
    s = None if callable(f) else _values(S)
    if T is None:
        if s is None:
            raise ValueError("an explicit ground set is required for a callable set function")
        t = np.arange(s.shape[0])
    else:
        t = _idx(T)
    if t.size > MAX_ENUM:
        raise GroundSetTooLarge(f"ground set of size {t.size} exceeds the enumeration limit {MAX_ENUM}")
    vals = np.empty(1 << t.size)
    for mask in range(vals.size):
        members = _mask_members(mask, t)
        if callable(f):
            vals[mask] = f(frozenset(members))
        elif not members and f.kind == "facility_location":
            vals[mask] = 0.0
        else:
            vals[mask] = evaluate(s, f, members, t)
    return vals, t


def _describe(f: SetFunction):
    if callable(f):
        return getattr(f, "__name__", "callable"), None
    name = f.kind if f.kind == "facility_location" else f"graph_cut[{f.gc_form}]"
    return name, (f.lam if f.kind == "graph_cut" else None)


def _first_violation(slack: np.ndarray, valid: np.ndarray, t: np.ndarray, f: SetFunction,
                     tol: float) -> CheckReport:
    bad = valid & (slack < -tol)
    name, lam = _describe(f)
    if not bad.any():
        return CheckReport(name, lam, int(t.size), True)
    x, y = np.unravel_index(np.argmax(bad), bad.shape)
    return CheckReport(name, lam, int(t.size), False, _mask_members(x, t), _mask_members(y, t),
                       float(slack[x, y]), int(bad.sum()))


def check_submodularity(S, f: SetFunction, T=None, tol: float = CHECK_TOL) -> CheckReport:
    """Test ``f(X) + f(Y) >= f(X u Y) + f(X n Y)`` on every pair of subsets.

    The reported witness is the first violating pair in bitmask order
    (``X`` major), and ``margin`` is the (negative) slack at that pair.
    """
    vals, t = subset_values(S, f, T)
    m = np.arange(vals.size)
    x, y = m[:, None], m[None, :]
    slack = vals[x] + vals[y] - vals[x | y] - vals[x & y]
    return _first_violation(slack, np.ones_like(slack, dtype=bool), t, f, tol)


def check_monotonicity(S, f: SetFunction, T=None, tol: float = CHECK_TOL) -> CheckReport:
    """Test ``f(X) <= f(Y)`` for every ``X`` subset of ``Y``."""
    vals, t = subset_values(S, f, T)
    m = np.arange(vals.size)
    x, y = m[:, None], m[None, :]
    return _first_violation(vals[y] - vals[x], (x & ~y) == 0, t, f, tol)
