import sys

import numpy as np
import pytest

from bandit_lab import kernels


BACKENDS = ["python"] + (["compiled"] if kernels.HAVE_EXTENSION else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def same_record(a, b) -> bool:
    return (
        np.array_equal(a.arms, b.arms)
        and np.array_equal(a.probabilities, b.probabilities)
        and np.array_equal(a.rewards, b.rewards)
        and np.array_equal(a.counterfactuals, b.counterfactuals)
        and a.events == b.events
        and a.switch_round == b.switch_round
        and a.switch_reason == b.switch_reason
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
