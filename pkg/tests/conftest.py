import numpy as np
import pytest

from structact import structured_net as net
from structact.synthetic import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mini():
    return net.MINI


@pytest.fixture(scope="session")
def mini_samples():
    return generate_synthetic(3, 2, net.MINI, seed=11)


@pytest.fixture
def mini_params():
    p = net.init_params(net.MINI, 2, 5)
    r = np.random.default_rng(6)
    p.cls_w[...] = r.standard_normal(p.cls_w.shape)
    p.cls_b[...] = 0.1 * r.standard_normal(p.cls_b.shape)
    return p
