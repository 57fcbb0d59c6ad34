import numpy as np
import pytest

from grushinmfg.geometry import Band, Cone, CurveFn, Rectangle, Sublevel, UnionSet, Witness


@pytest.fixture
def unit_rect():
    return Rectangle(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def band_ex53():
    # curved band 0<=x1<=1, x1^2<=x2<=1 with the boundary-curve witness at the cusp
    return Band(
        CurveFn("power", (1.0, 2.0)), CurveFn("const", (1.0,)), 0.0, 1.0,
        witnesses=(Witness((0.0, 0.0), 1.0, 1.0, "power_curve_pos"),),
    )


@pytest.fixture
def cone_12():
    return Cone(1.0, 2.0)


def zero_ell(x, t):
    return np.zeros(np.asarray(x, dtype=float)[..., 0].shape)


def const_g(c):
    return lambda x: np.full(np.asarray(x, dtype=float)[..., 0].shape, float(c))


def quad_g(center, scale=1.0):
    cx, cy = center

    def g(x):
        x = np.asarray(x, dtype=float)
        return scale * ((x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2)

    return g
