import numpy as np
import pytest

from affine_tc.levy import CompoundPoisson, GammaSubordinator, LevySpec, PointMass
from affine_tc.solver import AffineModel


def brownian(dim=1, var=1.0, coord=0, drift=None):
    cov = np.zeros((dim, dim))
    cov[coord, coord] = var
    return LevySpec(dim, drift=drift, gaussian_cov=cov)


def drift(*b):
    return LevySpec(len(b), drift=list(b))


def feller(z=1.0, immigration=0.0):
    return AffineModel(1, 0, (brownian(),), drift(immigration), z0=[z])


def two_type(a=(1.0, 2.0, 1.0), drift1=(-0.5, 0.5), drift2=(0.3, -0.4), z0=(1.0, 0.5)):
    """Two branching coordinates with gamma subordinator jumps and compound-Poisson cross terms."""
    x1 = LevySpec(2, drift=list(drift1), jumps=(GammaSubordinator(a[0], 2.0, 0), GammaSubordinator(a[1], 4.0, 1)))
    x2 = LevySpec(2, drift=list(drift2), jumps=(GammaSubordinator(a[2], 1.0, 1),
                                                CompoundPoisson(1.0, PointMass((0.1, 0.0)))))
    return AffineModel(2, 0, (x1, x2), drift(0.5, 0.5), z0=list(z0))


@pytest.fixture
def rng():
    from affine_tc.streams import TESTING, stream
    return stream(0, TESTING)
