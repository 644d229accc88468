from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Make the src package importable from the repository root
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.models import ConstantPotential, PeriodicPotential  # noqa: E402


@pytest.fixture
def free():
    return ConstantPotential(0.0)


@pytest.fixture
def period_two():
    return PeriodicPotential([1.0, 0.0])


def transfer_array(E: float, v: float) -> np.ndarray:
    return np.array([[E - v, -1.0], [1.0, 0.0]])


def dense_product(src, E: float, k: int, n: int) -> np.ndarray:
    """A_n(k) by plain matrix multiplication, for n >= 0."""
    m = np.eye(2)
    for j in range(n):
        m = transfer_array(E, src.sample(k + j)) @ m
    return m
