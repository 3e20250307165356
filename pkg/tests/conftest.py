import sys
import time

import numpy as np
import pytest

from smile.harness.experiment import run_experiment
from smile.harness.reference import reference_config
from smile.learner import ProjectionHead, SyntheticTaskSpec, TrainConfig, base_train, generate_task


@pytest.fixture
def s3():
    return np.array([[1.0, 0.8, 0.1], [0.8, 1.0, 0.2], [0.1, 0.2, 1.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_TASK = SyntheticTaskSpec(num_base=3, num_novel=2, input_dim=8, embed_dim=16,
                               samples_per_base=40, k_shot=5, intra_spread=0.2,
                               test_per_class=20, seed=7)


@pytest.fixture
def small_task():
    return generate_task(SMALL_TASK)


@pytest.fixture(scope="session")
def small_base_head():
    task = generate_task(SMALL_TASK)
    head = ProjectionHead(SMALL_TASK.input_dim, SMALL_TASK.embed_dim, seed=3)
    trained, _ = base_train(task, head, TrainConfig(iterations=60, batch_size=32, eval_every=20, seed=3))
    return trained


@pytest.fixture(scope="session")
def reference_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference")
    t0 = time.perf_counter()
    result = run_experiment(reference_config(str(out)))
    result.elapsed = time.perf_counter() - t0
    return result


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
