"""
Pytest configuration and fixtures for the Biot FETI-DP tests.
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.fem.assembly import BiotAssembler, FieldState
from app.fem.dofmap import build_dofmap
from app.fem.mesh import build_partition, build_structured_mesh
from app.models.schemas import ModelParams
from app.solvers.fetidp import build_fetidp


# ============================================================================
# Parameters
# ============================================================================


@pytest.fixture
def compressible_params() -> ModelParams:
    """Compressible, permeable regime (ν=0.3, κ=1e-2)."""
    return ModelParams(poisson_ratio=0.3, permeability=1e-2)


@pytest.fixture
def incompressible_params() -> ModelParams:
    """Nearly incompressible, low-permeability regime (ν=0.4999, κ=1e-7)."""
    return ModelParams(poisson_ratio=0.4999, permeability=1e-7)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


# ============================================================================
# Meshes and partitions
# ============================================================================


@pytest.fixture
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture
def partition8(mesh8):
    """m=8 split into 2x2 subdomains."""
    return build_partition(mesh8, 2)


@pytest.fixture
def dofmap8(mesh8, partition8):
    return build_dofmap(mesh8, partition8)


# ============================================================================
# Assembled systems and operators
# ============================================================================


def make_case(m: int, nd: int, params: ModelParams):
    """Mesh, partition, dof map, assembler and the first-step system."""
    mesh = build_structured_mesh(m)
    partition = build_partition(mesh, nd)
    dofmap = build_dofmap(mesh, partition)
    assembler = BiotAssembler(mesh, partition, dofmap, params)
    system = assembler.assemble(params.dt, FieldState.zeros(mesh))
    return mesh, partition, dofmap, assembler, system


@pytest.fixture
def case_factory():
    """make_case for tests that need other sizes or parameters."""
    return make_case


@pytest.fixture
def case8(compressible_params):
    return make_case(8, 2, compressible_params)


@pytest.fixture
def system8(case8):
    return case8[4]


@pytest.fixture
def operator8(case8):
    """FETI-DP operator on m=8, 2x2, built sequentially."""
    _, partition, dofmap, _, system = case8
    operator = build_fetidp(system, dofmap, partition, threads=1)
    yield operator
    operator.close()


@pytest.fixture
def case4(compressible_params):
    return make_case(4, 2, compressible_params)


@pytest.fixture
def operator4(case4):
    _, partition, dofmap, _, system = case4
    operator = build_fetidp(system, dofmap, partition, threads=1)
    yield operator
    operator.close()
