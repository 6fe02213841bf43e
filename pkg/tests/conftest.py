import os
import sys

import numpy as np
import pytest

# Add parent directory to path to import app modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from qbohm.enums import Boundary
from qbohm.grid_core import GridSpec


@pytest.fixture
def periodic_line():
    """[-10, 10) with 256 nodes."""
    return GridSpec.line(-10.0, 10.0, 256, Boundary.PERIODIC)


@pytest.fixture
def unit_torus():
    """[0, 2pi)^2 with 64 nodes per axis."""
    return GridSpec(dim=2, extent_min=(0.0, 0.0), extent_max=(2 * np.pi, 2 * np.pi), points=(64, 64),
                    boundary=Boundary.PERIODIC)


@pytest.fixture
def vortex_box():
    """Dirichlet [-4, 4]^2 with 64 nodes per axis; the origin sits mid-plaquette."""
    return GridSpec.square(-4.0, 4.0, 64, Boundary.DIRICHLET)
