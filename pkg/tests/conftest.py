import numpy as np
import pytest

import clustertail as ct
from clustertail.geometry import RareEventSet


@pytest.fixture(scope="session")
def r2():
    return ct.reference_r2()


@pytest.fixture(scope="session")
def d1_zero():
    """One-type model with no offspring at all: every cluster is the root."""
    return ct.ModelConfig([[ct.OffspringLaw("zeta_tail", 2.0, 0.0)]])


@pytest.fixture(scope="session")
def box_low():
    """[1,2] x [0.1,0.4]; meets the first ray only."""
    return RareEventSet([(np.array([1.0, 0.1]), np.array([2.0, 0.4]))])


@pytest.fixture(scope="session")
def box_diag():
    """[1,2]^2; meets only the two-index cone."""
    return RareEventSet([(np.array([1.0, 1.0]), np.array([2.0, 2.0]))])
