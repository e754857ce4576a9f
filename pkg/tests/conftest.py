"""Shared fixtures.  Debug finite-checks stay on for the unit suites."""

from __future__ import annotations

import numpy as np
import pytest

from pyrocast.nn import set_debug_checks


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture(autouse=True)
def _finite_checks(request):
    # The acceptance suite times full training runs; per-op checks would skew it.
    if "acceptance" in request.node.nodeid:
        yield
        return
    set_debug_checks(True)
    yield
    set_debug_checks(False)
