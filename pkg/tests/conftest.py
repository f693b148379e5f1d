import os
import sys
import warnings

import numpy as np
import pytest
from hypothesis import settings

from bandit_ot.measures import DiscreteMeasure
from bandit_ot.transport import NonConvergence

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_measure(rng, k, low=0.05):
    w = rng.uniform(low, 1.0, k)
    return DiscreteMeasure.on_line(w / w.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
