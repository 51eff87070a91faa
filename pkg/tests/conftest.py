import numpy as np
import pytest
import yaml

from meanfieldpy.core.blowup import bubble_profile
from meanfieldpy.core.spectral import GridField, grid_nodes
from meanfieldpy.core.torus import TorusLattice, TranslationGroup


@pytest.fixture
def unit_lattice():
    return TorusLattice()


@pytest.fixture
def skew_lattice():
    return TorusLattice((1.0, 0.0), (0.3, 0.9))


@pytest.fixture
def hex_lattice():
    return TorusLattice((1.0, 0.0), (0.5, np.sqrt(3.0) / 2.0))


@pytest.fixture
def half_shift():
    return TranslationGroup.cyclic(2)


@pytest.fixture
def exact_bubble():
    """u(x) = phi((x - center) / s) sampled on an n x n grid, with phi the planar bubble."""
    def make(n, s, center=(0.5, 0.5), lattice=None):
        lattice = lattice or TorusLattice()
        xi1, xi2 = grid_nodes(n, n)
        y = lattice.minimal_displacement(np.stack([xi1 - center[0], xi2 - center[1]], axis=-1)) / s
        return GridField(bubble_profile(y), lattice)
    return make


@pytest.fixture
def write_config(tmp_path):
    def write(payload, name="run.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(payload), encoding="utf-8")
        return str(path)
    return write
