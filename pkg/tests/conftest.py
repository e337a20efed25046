import pytest

from stencilkit.machine import builtin_machine_path, load_machine
from stencilkit.stencil import StencilSpec, build_kernel


@pytest.fixture(scope="session")
def hsw():
    return load_machine(builtin_machine_path("hsw"))


@pytest.fixture(scope="session")
def toy():
    return load_machine(builtin_machine_path("toy"))


@pytest.fixture(scope="session")
def zen():
    return load_machine(builtin_machine_path("zen"))


@pytest.fixture(scope="session")
def fullassoc():
    return load_machine(builtin_machine_path("fullassoc"))


@pytest.fixture(scope="session")
def star7():
    """The 3D 7-point constant homogeneous double stencil."""
    return build_kernel(StencilSpec(3, 1, "star", "homogeneous", "constant", "float64"))


@pytest.fixture(scope="session")
def star19():
    """The 3D long-range (r3) heterogeneous star stencil."""
    return build_kernel(StencilSpec(3, 3, "star", "heterogeneous", "constant", "float64"))


@pytest.fixture(scope="session")
def box27():
    """The 3D 27-point box stencil with variable coefficients."""
    return build_kernel(StencilSpec(3, 1, "box", "heterogeneous", "variable", "float64"))
