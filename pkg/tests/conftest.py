import numpy as np
import pytest

from brokenray import (AffineXYField, BallDomain, ConstantField, GridField,
                       StepControl)


@pytest.fixture
def affine_field():
    return AffineXYField(1.0, 1.0, 1.0)


@pytest.fixture
def unit_field():
    return ConstantField(1.0)


@pytest.fixture
def big_ball():
    # large enough that tracing the unit affine medium to t=2 stays inside
    return BallDomain([0.0, 0.0, 0.0], 12.0)


@pytest.fixture
def ctl():
    return StepControl(h_init=5e-3)


def make_smooth_grid_field():
    """Grid sampling of a gentle analytic speed field on [-4, 4]^3."""
    n = 33
    ax = np.linspace(-4.0, 4.0, n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    values = 2.0 + 0.3 * np.sin(0.6 * X) * np.cos(0.5 * Y) + 0.1 * np.tanh(0.4 * Z)
    return GridField(origin=(-4.0, -4.0, -4.0), spacing=0.25, values=values)


@pytest.fixture
def grid_field():
    return make_smooth_grid_field()
