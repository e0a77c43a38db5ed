import pytest

from fracdamp.kernel import FracParams, build_diffusive_grid
from fracdamp.wave import Domain1D, Simulator


@pytest.fixture(scope="session")
def default_params():
    return FracParams()


@pytest.fixture(scope="session")
def default_grid(default_params):
    return build_diffusive_grid(default_params)


def make_sim(n_cells=40, n_xi=60, **kw):
    p = FracParams(**kw)
    g = build_diffusive_grid(p, n_nodes=n_xi)
    return Simulator(Domain1D(1.0, n_cells), p, g)

