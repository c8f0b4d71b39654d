import numpy as np
import pytest

from kcsim.grid import PhaseGrid
from kcsim.model import KernelSpec, WeightSpec


@pytest.fixture(scope="session")
def kernel_const():
    return KernelSpec.constant(1.0)


@pytest.fixture(scope="session")
def kernel_alg():
    return KernelSpec.algebraic_decay(1.0)


@pytest.fixture(scope="session")
def weights():
    return WeightSpec(4.0)


def small_grid(nx=8, nv=8, lx=1.0, lv=1.0, fill=0.0, t=0.0):
    return PhaseGrid(np.full((nx, nv), float(fill)), lx, lv, t)


def random_grid(nx=8, nv=8, lx=1.0, lv=1.0, seed=0):
    rng = np.random.default_rng(seed)
    return PhaseGrid(rng.random((nx, nv)), lx, lv)
