import numpy as np
import pytest

from sparsesar.operators import NuftPlan, make_csa_filters
from sparsesar.sar import SarParams, fast_time_grid
from sparsesar.scenes import toy_params


@pytest.fixture(scope="session")
def table2():
    return SarParams.table2()


@pytest.fixture(scope="session")
def toy():
    return toy_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_system(params, na=8, nr=8):
    tau = fast_time_grid(params, nr)
    plan = NuftPlan.uniform(na, params.prf)
    return tau, plan, make_csa_filters(params, plan, tau)


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
