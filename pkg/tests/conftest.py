from __future__ import annotations

import os

import numpy as np
import pytest

from gsscene import GaussianCloud

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def random_unit_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_cloud(rng: np.random.Generator, n: int = 50, spread: float = 1.0) -> GaussianCloud:
    return GaussianCloud(
        p=rng.normal(size=(n, 3)) * spread,
        s=rng.uniform(0.02, 0.3, size=(n, 3)),
        q=random_unit_quats(rng, n),
        c=rng.uniform(size=(n, 3)),
        alpha=rng.uniform(0.05, 1.0, size=n),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
