import numpy as np
import pytest

from mlplate.laminate import homogeneous_laminate, isotropic_form
from mlplate.relaxation import effective_forms


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_iso():
    return isotropic_form(1.0, 1.0)


@pytest.fixture(scope="session")
def example_laminate(unit_iso):
    return homogeneous_laminate(unit_iso, None, np.eye(3))


@pytest.fixture(scope="session")
def example_forms(example_laminate):
    return effective_forms(example_laminate)
