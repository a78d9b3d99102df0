import os

import numpy as np
import pytest

from pinnreg import net, train

# Desk-scale training used by the acceptance checks: default polar sampling
# (radii 0..6, four frequencies including 1.0), 100 epochs.
ACCEPTANCE_CONFIG = train.TrainConfig()


@pytest.fixture(scope="session")
def trained_model(tmp_path_factory):
    """Network trained once per session on the acceptance configuration.

    ``PINNREG_TRAINED_MODEL`` may point at a model file produced by
    ``pinnreg train`` with the default configuration, to skip retraining.
    """
    cached = os.environ.get("PINNREG_TRAINED_MODEL")
    if cached:
        return net.load(cached), None
    p, history = train.train(ACCEPTANCE_CONFIG)
    path = tmp_path_factory.mktemp("model") / "model.json"
    net.save(p, path)
    return p, history


@pytest.fixture
def small_net():
    return net.init(3, layer_dims=(3, 6, 5, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance outcome; returns the verdict so the test can assert it."""

    def _record(criterion: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_RESULTS[criterion] = (bool(passed), detail)
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
