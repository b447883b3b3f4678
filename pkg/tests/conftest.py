import math

import pytest

from hubloops.lattice import chain, square
from hubloops.model import Model


@pytest.fixture
def ring4_hardcore():
    return Model(chain(4, 1.0, "periodic"), 3, math.inf)


@pytest.fixture
def square2_hardcore():
    return Model(square(2), 3, math.inf)
