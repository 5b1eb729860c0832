import random

import pytest

from rpqsuper.scalars import DeformationSpec

BACKENDS = ("classical", "q", "pq")


@pytest.fixture(params=BACKENDS)
def spec(request):
    return DeformationSpec(request.param)


@pytest.fixture
def rng():
    return random.Random(20240601)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # exposes the call outcome to fixtures (used by the acceptance verdict lines)
    outcome = yield
    rep = outcome.get_result()
    setattr(item, f"rep_{rep.when}", rep)
