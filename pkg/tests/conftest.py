import numpy as np
import pytest

from scri_scatter.chart import ChartParams


def bump(x, a, b, amp=1.0):
    """Smooth bump on [a, b] with peak ``amp``."""
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    m = (x > a) & (x < b)
    z = (x[m] - a) / (b - a)
    y[m] = amp * np.exp(4.0 - 1.0 / (z * (1.0 - z)))
    return y


def gauss(x, c, w):
    return np.exp(-(((np.asarray(x, dtype=float) - c) / w) ** 2))


@pytest.fixture
def far_params():
    """Desk region near spatial infinity used by the energy audits."""
    return ChartParams(m=1.0, u_min=-170.0, u_max=-70.0, R_max=0.0125, u0=-100.0)


@pytest.fixture
def scatter_params():
    return ChartParams(m=1.0, R_max=0.1)
