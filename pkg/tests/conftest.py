"""Shared test fixtures and helpers."""

import numpy as np
import pytest


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@pytest.fixture
def rng():
    return make_rng(0)
