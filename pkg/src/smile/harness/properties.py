"""Seeded property suite over the set-function, SMI and loss layers.

Every check compares an implementation against an independent route: the
closed-form SMI against the generic ``f(A) + f(B) - f(A u B)`` expansion,
set functions against exhaustive subset enumeration, gradients against
central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .. import setfn, smi
from ..loss import LossConfig, finite_difference_check, l_comb, l_inter, l_intra, supcon_baseline
from ..setfn import ClassPartition, SetFunctionSpec

ORACLE_TOL = 1e-9


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.seconds:.2f}s)  {self.detail}"


@dataclass
class PropertyReport:
    results: List[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[PropertyResult]:
        return [r for r in self.results if not r.passed]

    def text(self) -> str:
        return "\n".join(r.line() for r in self.results)


def random_similarity(rng: np.random.Generator, n: int) -> np.ndarray:
    """Symmetric nonnegative matrix with a maximal unit diagonal."""
    a = rng.random((n, n))
    s = 0.5 * (a + a.T)
    np.fill_diagonal(s, 1.0)
    return s


def random_disjoint_pair(rng: np.random.Generator, n: int):
    labels = rng.integers(0, 3, size=n)
    return np.flatnonzero(labels == 0), np.flatnonzero(labels == 1)


def check_gcmi_identity(gcmi_impl: Callable = smi.gcmi, trials: int = 50, seed: int = 0) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst, witness = 0.0, None
    for t in range(trials):
        n = int(rng.integers(2, 11))
        s = random_similarity(rng, n)
        a, b = random_disjoint_pair(rng, n)
        lam = float(rng.choice([0.0, 0.5, 1.0, 1.5]))
        got = gcmi_impl(s, a, b, lam)
        generic = setfn.generic_mutual_information(s, SetFunctionSpec("graph_cut", lam), a, b)
        direct = 2.0 * lam * s[np.ix_(a, b)].sum()
        err = max(abs(got - generic), abs(got - direct))
        if err > worst:
            worst, witness = err, (t, a.tolist(), b.tolist(), lam)
    ok = worst <= ORACLE_TOL
    detail = f"max error {worst:.2e}" + ("" if ok else f"; witness trial/A/B/lambda {witness}")
    return PropertyResult("gcmi equals generic graph-cut MI", ok, detail)


def check_fl_submodular(trials: int = 10, n: int = 6, seed: int = 1) -> PropertyResult:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        s = random_similarity(rng, n)
        sub = setfn.check_submodularity(s, SetFunctionSpec("facility_location"))
        mono = setfn.check_monotonicity(s, SetFunctionSpec("facility_location"))
        if not (sub.passed and mono.passed):
            return PropertyResult("facility location submodular + monotone", False,
                                  (sub if not sub.passed else mono).to_text())
    return PropertyResult("facility location submodular + monotone", True, f"{trials} matrices, |T|={n}")


def check_gc_submodular(lams=(0.0, 0.5, 1.0, 1.5), trials: int = 10, n: int = 6,
                        seed: int = 2) -> PropertyResult:
    rng = np.random.default_rng(seed)
    mats = [random_similarity(rng, n) for _ in range(trials)]
    per_lam = {}
    for lam in lams:
        reports = [setfn.check_submodularity(s, SetFunctionSpec("graph_cut", lam)) for s in mats]
        bad = [r for r in reports if not r.passed]
        per_lam[lam] = "pass" if not bad else bad[0].to_text()
    ok = all(v == "pass" for v in per_lam.values())
    return PropertyResult("graph cut (full sum) submodular per lambda", ok, str(per_lam))


def _squared_modular(weights):
    def f(subset):
        return float(sum(weights[i] for i in subset)) ** 2
    f.__name__ = "squared_modular"
    return f


def check_supermodular_counterexample(seed: int = 3) -> PropertyResult:
    rng = np.random.default_rng(seed)
    w = rng.random(6) + 0.1
    rep = setfn.check_submodularity(None, _squared_modular(w), T=range(6))
    ok = (not rep.passed) and rep.witness_X is not None
    return PropertyResult("supermodular function is rejected", ok, rep.to_text())


def check_cut_not_monotone(seed: int = 4) -> PropertyResult:
    rng = np.random.default_rng(seed)
    rep = setfn.check_monotonicity(random_similarity(rng, 5), SetFunctionSpec("graph_cut", 1.0, "cut"))
    return PropertyResult("cut-form graph cut is not monotone", not rep.passed, rep.to_text())


def check_smi_symmetry(trials: int = 30, seed: int = 5) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst_gc, worst_fl = 0.0, 0.0
    for _ in range(trials):
        n = int(rng.integers(3, 11))
        s = random_similarity(rng, n)
        a, b = random_disjoint_pair(rng, n)
        if a.size == 0 or b.size == 0:
            continue
        lam = float(rng.random() * 2)
        worst_gc = max(worst_gc, abs(smi.gcmi(s, a, b, lam) - smi.gcmi(s, b, a, lam)))
        # flmi is symmetric only at lambda = 1
        worst_fl = max(worst_fl, abs(smi.flmi(s, a, b, 1.0) - smi.flmi(s, b, a, 1.0)))
    ok = max(worst_gc, worst_fl) <= ORACLE_TOL
    return PropertyResult("SMI symmetry", ok, f"gcmi {worst_gc:.1e}, flmi(lambda=1) {worst_fl:.1e}")


def _random_batch(rng, n=12, d=8, classes=4, novel=2):
    z = rng.standard_normal((n, d))
    labels = np.arange(n) % classes
    return z, ClassPartition.from_labels(labels, range(classes - novel, classes)), labels


def check_loss_decomposition(trials: int = 20, seed: int = 6) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        z, p, _ = _random_batch(rng)
        cfg = LossConfig("flmi" if t % 2 else "gcmi", eta=float(rng.random()))
        comb = l_comb(z, p, cfg)
        expect = (1 - cfg.eta) * l_intra(z, p, cfg).value + cfg.eta * l_inter(z, p, cfg).value
        worst = max(worst, abs(comb.value - expect))
    return PropertyResult("l_comb = (1-eta) intra + eta inter", worst <= 1e-12, f"max error {worst:.1e}")


def check_inter_matches_gcmi(gcmi_impl: Callable = smi.gcmi, trials: int = 20, seed: int = 7) -> PropertyResult:
    from ..loss import inter_pairs, similarity_for_loss

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        z, p, _ = _random_batch(rng)
        cfg = LossConfig("gcmi", normalize_terms=False)
        s = similarity_for_loss(z, cfg)
        expect = sum(gcmi_impl(s, p.sets[l], p.sets[k], cfg.lam) for k, l in inter_pairs(p))
        worst = max(worst, abs(l_inter(z, p, cfg).value - expect))
    return PropertyResult("l_inter(gcmi) equals summed gcmi", worst <= 1e-12, f"max error {worst:.1e}")


def check_gradients(trials: int = 4, seed: int = 8) -> PropertyResult:
    rng = np.random.default_rng(seed)
    worst = {}
    for _ in range(trials):
        z, p, labels = _random_batch(rng)
        for variant in ("flmi", "gcmi"):
            cfg = LossConfig(variant)
            for op in (l_intra, l_inter, l_comb):
                key = f"{op.__name__}/{variant}"
                worst[key] = max(worst.get(key, 0.0), finite_difference_check(op, z, p, cfg, rng=rng))
        err = finite_difference_check(lambda w, _p, _c: supcon_baseline(w, labels, 0.5), z, None, None)
        worst["supcon"] = max(worst.get("supcon", 0.0), err)
    bounds = {k: (1e-6 if "gcmi" in k else 1e-4) for k in worst}
    ok = all(worst[k] < bounds[k] for k in worst)
    return PropertyResult("analytic gradients match finite differences", ok,
                          ", ".join(f"{k}={v:.1e}" for k, v in sorted(worst.items())))


def run_property_suite(gcmi_impl: Optional[Callable] = None, seed: int = 0) -> PropertyReport:
    """Run every check; ``gcmi_impl`` swaps in an alternative gcmi for mutation testing."""
    impl = gcmi_impl or smi.gcmi
    checks = [
        lambda: check_gcmi_identity(impl, seed=seed),
        lambda: check_fl_submodular(seed=seed + 1),
        lambda: check_gc_submodular(seed=seed + 2),
        lambda: check_supermodular_counterexample(seed=seed + 3),
        lambda: check_cut_not_monotone(seed=seed + 4),
        lambda: check_smi_symmetry(seed=seed + 5),
        lambda: check_loss_decomposition(seed=seed + 6),
        lambda: check_inter_matches_gcmi(impl, seed=seed + 7),
        lambda: check_gradients(seed=seed + 8),
    ]
    report = PropertyReport()
    for chk in checks:
        t0 = time.perf_counter()
        res = chk()
        res.seconds = time.perf_counter() - t0
        report.results.append(res)
    return report
