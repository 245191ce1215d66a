import warnings

import numpy as np
import pytest

from bohmphase.grid import PhysicalConstants, SpacetimeGrid
from bohmphase.oracles import CoherentStateSpec, coherent_density, harmonic_potential
from bohmphase.retrieval import retrieve

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="session")
def c():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def coarse_grid():
    """Cheap grid for unit tests: one harmonic period on [-8, 8]."""
    return SpacetimeGrid(-8.0, 8.0, 201, 0.0, TWO_PI, 201)


@pytest.fixture(scope="session")
def coherent_case(coarse_grid, c):
    spec = CoherentStateSpec(c, omega=1.0, b=1.0)
    P = coherent_density(spec, coarse_grid)
    V = harmonic_potential(coarse_grid, 1.0, c)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        psi, report = retrieve(P, V)
    return spec, P, V, psi, report
