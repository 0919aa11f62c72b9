import numpy as np
import pytest

from lwfield.trajectory import Circular, Rest, Uniform


@pytest.fixture
def circular():
    return Circular(radius=1.0, omega=0.3)


@pytest.fixture
def uniform_half():
    return Uniform(v=(0.5, 0.0, 0.0))


@pytest.fixture
def rest():
    return Rest()


def random_points(n, seed=0, rmin=2.0, rmax=5.0, tspan=3.0):
    """Events on a shell around the origin with times in [-tspan, tspan]."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r1 = d * rng.uniform(rmin, rmax, n)[:, None]
    t = rng.uniform(-tspan, tspan, n)
    return r1, t
