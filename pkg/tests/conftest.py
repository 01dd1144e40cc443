import numpy as np
import pytest

from mtebounds.core import GridSpec, ObservationTable
from mtebounds.liv import PsFit, RfFit, liv_curve
from mtebounds.simulate import McConfig, gen_threshold_design


def make_ps(intercept=0.0, slopes=(0.5,), z_range=(0.0, 1.0), groups=(0,), sample=None, target="t"):
    """Propensity fit with given coefficients; ``sample`` seeds the empirical CDF."""
    groups = np.asarray(groups)
    intercepts = np.broadcast_to(np.asarray(intercept, dtype=float), groups.shape).copy()
    fitted = row_groups = None
    if sample is not None:
        zs = np.asarray(sample, dtype=float)
        row_groups = np.repeat(groups, zs.size)
        zz = np.tile(zs, groups.size)
        fitted = intercepts[np.searchsorted(groups, row_groups)] + np.polynomial.polynomial.polyval(
            zz, np.concatenate([[0.0], slopes]))
    return PsFit(target, groups, intercepts, np.asarray(slopes, dtype=float), z_range, fitted, row_groups)


def make_rf(coef, z_range=(0.0, 1.0), groups=(0,)):
    coef = np.atleast_2d(np.asarray(coef, dtype=float))
    if coef.shape[0] != len(groups):
        coef = np.repeat(coef, len(groups), axis=0)
    return RfFit(np.asarray(groups), coef, (1, max(coef.shape[1] - 2, 0)), z_range)


def make_curve(rf, ps, points=None):
    points = np.linspace(0.05, 0.95, 19) if points is None else points
    return liv_curve(rf, ps, GridSpec(points=points))


def random_table(rng, n=200, groups=3, binary_y=False):
    x = rng.integers(0, groups, size=n)
    z = rng.uniform(size=n)
    d = (rng.uniform(size=n) <= 0.1 + 0.1 * x + 0.6 * z).astype(int)
    t = np.where(rng.uniform(size=n) <= 0.9, d, 1 - d)
    y = 0.2 * x + 0.5 * d * (1 - z) + rng.normal(0, 0.3, size=n)
    if binary_y:
        y = (y > 0.3).astype(float)
    return ObservationTable(y=y, t=t, z=z, x=x, d=d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def design_config():
    return McConfig()


@pytest.fixture(scope="session")
def design_sample():
    return gen_threshold_design(McConfig(n=20000), 11)
