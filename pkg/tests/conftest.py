import numpy as np
import pytest

from src.loopspace import LoopCurve, TangentField, sample_ellipse, theta_grid


def smooth_curve(rng: np.random.Generator, n: int, amplitude: float = 0.05) -> LoopCurve:
    """A star-shaped perturbation of the unit circle built from modes 2..4."""
    theta = theta_grid(n)
    radius = np.ones(n)
    for k in range(2, 5):
        a, b = amplitude * rng.standard_normal(2)
        radius += a * np.cos(k * theta) + b * np.sin(k * theta)
    shift = 0.2 * rng.standard_normal(2)
    return LoopCurve(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]) + shift)


def smooth_field(rng: np.random.Generator, n: int, modes: int = 5) -> TangentField:
    theta = theta_grid(n)
    vec = np.zeros((n, 2))
    for k in range(0, modes + 1):
        a = rng.standard_normal((2, 2)) / (1 + k)
        vec += np.outer(np.cos(k * theta), a[0]) + np.outer(np.sin(k * theta), a[1])
    return TangentField(vec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ellipse():
    return sample_ellipse(2.0, 1.0, 64)
