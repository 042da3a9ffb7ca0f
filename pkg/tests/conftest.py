import numpy as np
import pytest

from covbounds.dist import ObservedDistribution, pushforward_observed
from covbounds.model import builtin_model
from covbounds.sim import sample_truth


def draw(setting, seed):
    """(model, truth, observed table) for one flat-Dirichlet draw."""
    m = builtin_model(setting)
    t = sample_truth(setting, np.random.default_rng(seed))
    return m, t, pushforward_observed(m, t)


def random_table(vars_, rng):
    return ObservedDistribution(tuple(vars_), rng.dirichlet(np.ones(2 ** len(vars_))))


def iv_table(cells_by_z):
    """Table over (Z, X, Y) from P(X,Y | Z=z) dicts keyed 'xy', with P(Z=1)=0.5."""
    t = np.zeros((2, 2, 2))
    for z, cells in cells_by_z.items():
        for xy, p in cells.items():
            t[z, int(xy[0]), int(xy[1])] = 0.5 * p
    return ObservedDistribution(("Z", "X", "Y"), t)


# P(X=x, Y=y | Z=z) = 0.1, 0.2, 0.3, 0.4 for (x,y) = 00, 01, 10, 11 in both arms;
# in p_{yx.z} notation: p_{00}=0.1, p_{01}=0.2, p_{10}=0.3, p_{11}=0.4
UNINFORMATIVE = {"00": 0.1, "10": 0.2, "01": 0.3, "11": 0.4}


@pytest.fixture
def uninformative_iv():
    return iv_table({0: UNINFORMATIVE, 1: UNINFORMATIVE})


@pytest.fixture
def s_model_1_table():
    t = np.zeros((2, 2, 2))
    t[1, 0, 1] = 0.5  # S=1, X=0, Y=1
    t[0, 1, 1] = 0.5  # S=0, X=1, Y=1
    return ObservedDistribution(("S", "X", "Y"), t)
