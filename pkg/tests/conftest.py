import os

import numpy as np
import pytest

from fairsearch.dataset import table_from_arrays
from fairsearch.synth import ensure_dataset

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture(scope="session")
def german_csv() -> str:
    return ensure_dataset("german", DATA_DIR)


@pytest.fixture(scope="session")
def compas_csv() -> str:
    return ensure_dataset("compas", DATA_DIR)


def biased_table(n=400, seed=42, n_features=6, two_attrs=False):
    """Small table with group-dependent labels, for search tests."""
    rng = np.random.default_rng(seed)
    a = (rng.random(n) < 0.7).astype(np.int8)
    merit = rng.standard_normal(n) + 0.8 * (a - 0.5)
    x = np.column_stack([merit + 0.5 * rng.standard_normal(n) for _ in range(n_features)])
    y = ((merit + 0.9 * (a - 0.5) + 0.7 * rng.standard_normal(n)) > 0).astype(np.int8)
    sensitive = {"attr": a}
    if two_attrs:
        sensitive["attr2"] = (rng.random(n) < 0.5).astype(np.int8)
    return table_from_arrays(x, y, sensitive)


@pytest.fixture(scope="session")
def small_table():
    return biased_table()
