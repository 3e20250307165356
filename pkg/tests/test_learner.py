import numpy as np
import pytest

from smile.learner import (
    ConfigError,
    ProjectionHead,
    Prototypes,
    SyntheticTaskSpec,
    TrainConfig,
    TrainingDiverged,
    base_train,
    class_centers,
    classify,
    few_shot_adapt,
    generate_task,
    prototype_cross_entropy,
    stratified_batch,
    support_set,
)
from smile.learner.train import _batch_objective
from smile.loss import LossConfig, LossDomainError, LossResult, numeric_gradient, relative_error

ADAPT = TrainConfig(stage="adapt", loss=LossConfig("gcmi"), learning_rate=0.05, iterations=20,
                    batch_size=20, eval_every=10, seed=5, comb_weight=0.1)


class TestGenerateTask:
    def test_antipodal_centers(self):
        c = class_centers(2, 2, 0.0, np.random.default_rng(0))
        assert c[0] @ c[1] == pytest.approx(-1.0, abs=1e-12)

    @pytest.mark.parametrize("overlap", [0.0, 0.3, 0.9])
    def test_equal_pairwise_cosine(self, overlap):
        c = class_centers(5, 8, overlap, np.random.default_rng(1))
        g = c @ c.T
        off = g[~np.eye(5, dtype=bool)]
        np.testing.assert_allclose(off, (1 - overlap) * (-1 / 4) + overlap, atol=1e-12)

    def test_infeasible(self):
        with pytest.raises(ConfigError):
            generate_task(SyntheticTaskSpec(num_base=5, num_novel=3, input_dim=4))

    def test_deterministic(self):
        spec = SyntheticTaskSpec(input_dim=10, seed=3)
        a, b = generate_task(spec), generate_task(spec)
        assert a == b
        assert a.x.tobytes() == b.x.tobytes()

    def test_k_shot_rows(self, small_task):
        _, y = small_task.split("novel")
        assert np.bincount(y)[small_task.novel_ids].tolist() == [5, 5]

    def test_base_split_labels(self, small_task):
        _, y = small_task.split("base")
        assert set(y.tolist()) == set(small_task.base_ids)

    @pytest.mark.parametrize("kw", [{"num_novel": 0}, {"k_shot": 0}, {"intra_spread": 0.0},
                                    {"inter_overlap": 1.5}])
    def test_invalid_spec(self, kw):
        with pytest.raises(ConfigError):
            SyntheticTaskSpec(**kw)


class TestHead:
    def test_output_unit_rows(self, rng):
        head = ProjectionHead(4, 6, seed=0)
        z = head.forward(rng.standard_normal((5, 4)))
        assert z.shape == (5, 6)
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)

    def test_backward_matches_finite_differences(self, rng):
        head = ProjectionHead(3, 4, seed=1)
        x = rng.standard_normal((6, 3))
        w = rng.standard_normal((6, 4))
        _, cache = head.forward(x, cache=True)
        grads = head.backward(cache, w)
        for name in ("w1", "b2"):
            def f(p, name=name):
                saved = head.params[name]
                head.params[name] = p
                out = float((head.forward(x) * w).sum())
                head.params[name] = saved
                return out
            num = numeric_gradient(f, head.params[name].copy(), 1e-6)
            assert relative_error(grads[name], num) < 1e-7

    def test_cross_entropy_gradient(self, rng):
        z = rng.standard_normal((6, 4))
        y = np.array([0, 1, 2, 0, 1, 2])
        protos = Prototypes([0, 1, 2], rng.standard_normal((3, 4)))
        _, g = prototype_cross_entropy(z, y, protos, 0.5)
        num = numeric_gradient(lambda v: prototype_cross_entropy(v, y, protos, 0.5)[0], z, 1e-6)
        assert relative_error(g, num) < 1e-7

    def test_missing_prototype(self, rng):
        protos = Prototypes([0, 1], rng.standard_normal((2, 3)))
        with pytest.raises(ValueError):
            prototype_cross_entropy(rng.standard_normal((2, 3)), np.array([0, 2]), protos)

    def test_prototype_row_wins(self, rng):
        head = ProjectionHead(3, 5, seed=2)
        x = rng.standard_normal((3, 3))
        protos = Prototypes([4, 7, 9], head.forward(x))
        for i, cls in enumerate([4, 7, 9]):
            assert classify(head, x[i], protos)[0] == cls

    def test_tie_goes_to_lowest_id(self, rng):
        head = ProjectionHead(3, 5, seed=2)
        x = rng.standard_normal(3)
        v = head.forward(x[None])[0]
        label, scores = classify(head, x, Prototypes([8, 3], np.stack([v, v])))
        assert label == 3 and scores[0] == scores[1]

    def test_no_prototypes(self):
        with pytest.raises(ValueError):
            classify(ProjectionHead(2, 2), np.zeros(2))


class TestBaseTrain:
    def test_stage_isolation(self, small_task):
        base_train(small_task, ProjectionHead(8, 16, seed=0), TrainConfig(iterations=5, eval_every=5))
        assert "novel" not in small_task.accessed

    def test_test_rows_restricted_to_base(self, small_task, monkeypatch):
        seen = []
        original = small_task.split

        def spy(name, classes=None):
            seen.append((name, None if classes is None else sorted(classes)))
            return original(name, classes)

        monkeypatch.setattr(small_task, "split", spy)
        base_train(small_task, ProjectionHead(8, 16, seed=0), TrainConfig(iterations=2, eval_every=1))
        assert ("test", small_task.base_ids) in seen
        assert all(name != "novel" for name, _ in seen)
        assert ("test", None) not in seen

    def test_deterministic(self, small_task):
        cfg = TrainConfig(iterations=15, eval_every=5, seed=9)
        a, la = base_train(small_task, ProjectionHead(8, 16, seed=1), cfg)
        b, lb = base_train(small_task, ProjectionHead(8, 16, seed=1), cfg)
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()
        assert la.entries == lb.entries

    def test_zero_learning_rate(self, small_task):
        head = ProjectionHead(8, 16, seed=1)
        out, _ = base_train(small_task, head, TrainConfig(learning_rate=0.0, iterations=10, eval_every=5))
        for k in head.params:
            np.testing.assert_array_equal(out.params[k], head.params[k])

    def test_wrong_stage(self, small_task):
        with pytest.raises(ConfigError):
            base_train(small_task, ProjectionHead(8, 16), TrainConfig(stage="adapt"))

    def test_divergence(self, small_task):
        head = ProjectionHead(8, 16, seed=0)
        head.params["w2"][0, 0] = np.nan
        with pytest.raises(TrainingDiverged) as err:
            base_train(small_task, head, TrainConfig(iterations=3, eval_every=1))
        assert err.value.iteration == 1

    def test_well_separated_reference_seed(self):
        spec = SyntheticTaskSpec(inter_overlap=0.0, intra_spread=0.1, seed=42)
        task = generate_task(spec)
        head = ProjectionHead(spec.input_dim, spec.embed_dim, seed=42)
        _, log = base_train(task, head, TrainConfig(iterations=500, eval_every=50, seed=42))
        assert max(log.column("base_accuracy")) >= 0.95

    @pytest.mark.parametrize("kw", [{"stage": "eval"}, {"loss": "triplet"}, {"learning_rate": -1.0},
                                    {"iterations": 0}, {"batch_size": 1}, {"temperature": 0.0}])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_config_round_trip(self):
        assert TrainConfig.from_dict(ADAPT.to_dict()) == ADAPT
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"stage": "base", "momentum": 0.9})


class TestAdapt:
    def test_support_set_k_shot(self, small_task):
        _, y = support_set(small_task, ADAPT)
        assert np.bincount(y).tolist() == [5] * 5

    def test_support_set_abundant(self, small_task):
        _, y = support_set(small_task, TrainConfig(stage="adapt", abundant_base=True))
        assert np.bincount(y).tolist() == [40, 40, 40, 5, 5]

    @pytest.mark.parametrize("seed", range(10))
    def test_stratified_batch_contract(self, seed):
        y = np.repeat(np.arange(6), 12)
        idx = stratified_batch(y, [4, 5], 5, 17, np.random.default_rng(seed))
        counts = np.bincount(y[idx], minlength=6)
        assert counts.max() <= 5
        assert (counts > 0).sum() >= 2
        assert counts[4] + counts[5] > 0
        assert np.unique(idx).size == idx.size

    def test_stratified_batch_needs_novel(self):
        with pytest.raises(ConfigError):
            stratified_batch(np.array([0, 0, 1, 1]), [3], 2, 4, np.random.default_rng(0))

    def test_batches_respect_k(self, small_task, small_base_head, monkeypatch):
        import smile.learner.train as train_mod

        sizes = []
        original = train_mod.stratified_batch

        def spy(y, novel, k, bs, rng):
            idx = original(y, novel, k, bs, rng)
            sizes.append(np.bincount(y[idx]).max())
            return idx

        monkeypatch.setattr(train_mod, "stratified_batch", spy)
        few_shot_adapt(small_task, small_base_head, ADAPT)
        assert sizes and max(sizes) <= small_task.k_shot

    def test_log_and_scores(self, small_task, small_base_head):
        head, log = few_shot_adapt(small_task, small_base_head, ADAPT)
        assert log.column("iteration") == [0, 10, 20]
        for key in ("base_accuracy", "novel_accuracy", "base_novel_similarity", "ce", "intra", "inter"):
            assert key in log.entries[-1]
        _, scores = classify(head, small_task.x[0])
        assert scores.shape == (5,)

    def test_input_head_untouched(self, small_task, small_base_head):
        before = {k: v.copy() for k, v in small_base_head.params.items()}
        few_shot_adapt(small_task, small_base_head, ADAPT)
        for k in before:
            np.testing.assert_array_equal(before[k], small_base_head.params[k])

    def test_ce_only_has_no_comb_terms(self, small_task, small_base_head):
        from dataclasses import replace

        _, log = few_shot_adapt(small_task, small_base_head, replace(ADAPT, loss="ce_only"))
        assert log.column("intra")[1:] == [0.0, 0.0] and log.column("inter")[1:] == [0.0, 0.0]

    def test_deterministic(self, small_task, small_base_head):
        a, la = few_shot_adapt(small_task, small_base_head, ADAPT)
        b, lb = few_shot_adapt(small_task, small_base_head, ADAPT)
        assert la.entries == lb.entries
        assert a.params["w1"].tobytes() == b.params["w1"].tobytes()

    def test_single_class_batch_error(self, rng):
        z = rng.standard_normal((3, 4))
        ce = LossResult(0.0, np.zeros_like(z))
        with pytest.raises(LossDomainError, match="two classes"):
            _batch_objective(z, np.array([5, 5, 5]), [5], ADAPT, ce)

    def test_gradient_plumbing(self, small_task, small_base_head):
        """One SGD step of size eps lowers the batch objective by eps * |grad|^2."""
        xs, ys = support_set(small_task, ADAPT)
        idx = stratified_batch(ys, small_task.novel_ids, 5, 20, np.random.default_rng(0))
        head = small_base_head.copy()
        protos = Prototypes.from_embeddings(head.forward(xs), ys)

        def objective(h):
            z, cache = h.forward(xs[idx], cache=True)
            ce = LossResult(*prototype_cross_entropy(z, ys[idx], protos, ADAPT.temperature))
            res = _batch_objective(z, ys[idx], small_task.novel_ids, ADAPT, ce)
            return res.value, h.backward(cache, res.grad)

        eps = 1e-4
        before, grads = objective(head)
        sq = sum(float((g * g).sum()) for g in grads.values())
        head.sgd_step(grads, eps)
        after, _ = objective(head)
        assert (after - before) == pytest.approx(-eps * sq, rel=0.1)
