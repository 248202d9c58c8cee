import numpy as np
import pytest

from tradeshock.panel import PanelBuilder
from tradeshock.parallel import set_threads
from tradeshock.synthgen import GeneratorConfig, generate

set_threads(1)


@pytest.fixture(scope="session")
def small_world():
    cfg = GeneratorConfig(n_firms=500, months=(1, 2, 4), seed=11,
                          month_coefs={1: 0.1, 2: 0.0, 4: 0.05}, shock_targets={4: -0.2})
    return generate(cfg)


@pytest.fixture(scope="session")
def small_builder(small_world):
    return PanelBuilder(small_world.records, small_world.covariates)


@pytest.fixture(scope="session")
def small_panels(small_builder):
    train = {m: small_builder.build(2018, m) for m in (1, 2, 4)}
    aware = {m: small_builder.build(2019, m, shock_aware=True) for m in (1, 2, 4)}
    return train, aware


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
