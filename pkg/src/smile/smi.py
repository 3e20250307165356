"""Closed-form submodular mutual information between two index sets.

``flmi(S, A, Q, lam) = sum_{i in Q} max_{j in A} S_ij + lam * sum_{i in A} max_{j in Q} S_ij``
``gcmi(S, A, Q, lam) = 2 lam sum_{i in Q} sum_{j in A} S_ij``

``gcmi`` coincides with ``f(A) + f(Q) - f(A u Q)`` for the full-sum graph cut
on disjoint sets.  ``flmi`` is *not* the generic expansion of plain facility
location; that expansion is available separately as
:func:`fl_generic_mi` for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .setfn import SetFunctionDomainError, _idx, _values

SMI_KINDS = ("flmi", "gcmi")


@dataclass(frozen=True)
class SmiSpec:
    kind: str = "flmi"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in SMI_KINDS:
            raise ValueError(f"unknown SMI kind {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam!r}")

    def __call__(self, S, A, Q) -> float:
        fn = flmi if self.kind == "flmi" else gcmi
        return fn(S, A, Q, self.lam)


def flmi(S, A, Q, lam: float = 1.0) -> float:
    s = _values(S)
    a, q = _idx(A), _idx(Q)
    if a.size == 0 or q.size == 0:
        raise SetFunctionDomainError("FLMI is undefined when either set is empty")
    cross = s[np.ix_(q, a)]
    return float(cross.max(axis=1).sum() + lam * s[np.ix_(a, q)].max(axis=1).sum())


def gcmi(S, A, Q, lam: float = 1.0) -> float:
    s = _values(S)
    a, q = _idx(A), _idx(Q)
    if a.size == 0 or q.size == 0:
        return 0.0
    return float(2.0 * lam * s[np.ix_(q, a)].sum())


def fl_generic_mi(S, A, Q, T=None) -> float:
    """``FL(A) + FL(Q) - FL(A u Q)``, i.e. ``sum_{i in T} min(max_A S_i., max_Q S_i.)``."""
    s = _values(S)
    a, q = _idx(A), _idx(Q)
    if a.size == 0 or q.size == 0:
        raise SetFunctionDomainError("facility location is undefined on the empty set")
    t = np.arange(s.shape[0]) if T is None else _idx(T)
    return float(np.minimum(s[np.ix_(t, a)].max(axis=1), s[np.ix_(t, q)].max(axis=1)).sum())
