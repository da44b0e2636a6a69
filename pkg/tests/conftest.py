import pytest

from smallbiot.geometry import named_shape
from smallbiot.mesh import generate, refine_uniform


@pytest.fixture(scope="session")
def sart2_mesh():
    """SART-2 at the resolution used for the transient checks."""
    return refine_uniform(generate(named_shape("sart2"), 0.1))


@pytest.fixture(scope="session")
def square_mesh():
    return generate(named_shape("square"), 0.2)
