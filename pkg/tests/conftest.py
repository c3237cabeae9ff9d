import numpy as np
import pytest

from viab_qt import Ball, SpectralSpace, make_model, singleton_control


@pytest.fixture
def plane():
    """2-D space with zero generator and one noise direction."""
    return SpectralSpace(n=2, mu=np.zeros(2), m=1, d=1)


@pytest.fixture
def tangential_model(plane):
    return make_model(plane, "tangential-rotation")


@pytest.fixture
def unit_ball():
    return Ball(radius=1.0, center=np.zeros(2))


@pytest.fixture
def no_control():
    return singleton_control(1)
