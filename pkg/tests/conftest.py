import numpy as np
import pytest

from sapda.data import philox


@pytest.fixture
def rng():
    return philox(1234, 77)


def random_params(rng, input_dim=3, num_classes=5, hidden=12, feature_dim=6, jitter=0.1):
    from sapda import nn

    p = nn.NetworkParams.init(input_dim, num_classes, rng, hidden=hidden, feature_dim=feature_dim)
    for v in p.weights.values():
        v += rng.normal(scale=jitter, size=v.shape)
    return p



# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    return pytestconfig.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    report = config.stash.get(ACCEPTANCE, {})
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(report):
        ok, detail = report[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
