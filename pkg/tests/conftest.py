import numpy as np
import pytest

from dirfmm.bench import BenchConfig, build_problem, random_vector


def grid_config(k, **kw):
    kw.setdefault("aca_eps", None)
    return BenchConfig(k=k, **kw).resolved()


@pytest.fixture(scope="session")
def grid_k5():
    """Grid problem k = 5 with dense coupling matrices."""
    return build_problem(grid_config(5))


@pytest.fixture(scope="session")
def grid_k5_matvec(grid_k5):
    v = random_vector(len(grid_k5.points), 0)
    from dirfmm.engine import matvec

    return v, matvec(grid_k5.operator, v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
