import numpy as np
import pytest

from dcdeblur.engine import set_float_width


@pytest.fixture(autouse=True)
def _double_precision():
    """Gradient tolerances are stated for float64; reset after each test."""
    set_float_width("float64")
    yield
    set_float_width("float64")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
