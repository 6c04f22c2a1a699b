import os
import sys

import numpy as np
import pytest

# Корень репозитория в sys.path: модули импортируются как в main.py
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.tensor import convolve  # noqa: E402


def unit_atoms(rng, n_atoms, n_channels, atom_length):
    d = rng.standard_normal((n_atoms, n_channels, atom_length))
    return d / np.sqrt(np.sum(d ** 2, axis=(1, 2), keepdims=True))


def sparse_codes(rng, n_atoms, valid_length, density=0.05):
    active = rng.random((n_atoms, valid_length)) < density
    return np.where(active, rng.uniform(0.5, 1.5, (n_atoms, valid_length)), 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_problem(rng):
    """Словарь (2, 2, 5), разреженные коды и точная реконструкция длины 64."""
    d = unit_atoms(rng, 2, 2, 5)
    z = sparse_codes(rng, 2, 60)
    return d, z, convolve(d, z)
