import numpy as np
import pytest

from reinforced_loops.graph import bundled_graph


@pytest.fixture
def single():
    return bundled_graph("single-vertex+root")


@pytest.fixture
def path2():
    return bundled_graph("2-path+root")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def within_3se(est, se, target, target_se=0.0):
    return abs(est - target) <= 3 * np.hypot(se, target_se)
