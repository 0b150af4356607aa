"""Shared fixtures: a small flagship-shaped setup that keeps tests fast.

The full-size experiment lives in test_acceptance.py; module tests reuse
the same geometry at 512 points so each file stays in the seconds range.
"""

import numpy as np
import pytest

from fraqhom.lattice import Grid, interval_mask
from fraqhom.homog import periodic_sequence_1d, predicted_limit_1d


@pytest.fixture(scope="session")
def grid512():
    return Grid(dim=1, half_width=8.0, points_per_axis=512)


@pytest.fixture(scope="session")
def mask512(grid512):
    return interval_mask(grid512, -1.0, 1.0)


@pytest.fixture(scope="session")
def seq512(grid512):
    # 2 + sin(2 pi n x): harmonic mean sqrt(3), arithmetic mean 2
    return periodic_sequence_1d(
        grid512, lambda x: 2.0 + np.sin(2.0 * np.pi * x), alpha=1.0, beta=3.0)


@pytest.fixture(scope="session")
def limit512(seq512, mask512):
    return predicted_limit_1d(seq512, mask512)


@pytest.fixture(scope="session")
def unit_forcing512(grid512):
    from fraqhom.lattice import field_from_function
    return field_from_function(
        grid512, lambda x: np.where(np.abs(x) < 1.0, 1.0, 0.0))
