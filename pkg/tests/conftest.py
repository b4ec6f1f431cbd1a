import numpy as np
import pytest

from cnas import ArchDescriptor, instantiate


SMALL_DESC_TEXT = """\
input 8x8x1
conv 4
pool
flatten
dense 8
softmax 3
"""

CONV_DESC_TEXT = """\
input 8x8x2
conv 5
pool
conv 6
pool
dropout 0.25
flatten
dense 10
dense 7
softmax 4
"""


@pytest.fixture
def small_desc():
    return ArchDescriptor.from_text(SMALL_DESC_TEXT)


@pytest.fixture
def conv_desc():
    return ArchDescriptor.from_text(CONV_DESC_TEXT)


@pytest.fixture
def small_net(small_desc):
    return instantiate(small_desc, seed=1)


@pytest.fixture
def conv_net(conv_desc):
    return instantiate(conv_desc, seed=2)


def probe_batch(rng, shape, n=64):
    return rng.random((n,) + tuple(shape), dtype=np.float32)


def max_prob_deviation(net_a, net_b, shape, seed=0, n=64):
    rng = np.random.default_rng(seed)
    x = probe_batch(rng, shape, n)
    return float(np.abs(net_a.forward(x) - net_b.forward(x)).max())
