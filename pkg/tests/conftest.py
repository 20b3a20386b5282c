import numpy as np
import pytest
from hypothesis import strategies as st

from awi_dsa.belief import ChannelParams


def make_obs(p21, p20):
    """Two-level CQI matrix with P(level 2 | good) = p21 and P(level 2 | poor) = p20."""
    return [[1.0 - p20, 1.0 - p21], [p20, p21]]


UNINFORMATIVE = [[0.5, 0.5], [0.5, 0.5]]
INFORMATIVE = make_obs(0.9, 0.1)


def random_channel(rng, K=None, throughput=None, sign=None):
    """Random valid channel; ``sign`` forces p11 > p01 (+1) or p11 < p01 (-1)."""
    while True:
        p01, p11 = rng.uniform(0.02, 0.98, size=2)
        if abs(p11 - p01) < 0.02:
            continue
        if sign is not None and np.sign(p11 - p01) != sign:
            p01, p11 = p11, p01
        break
    K = K if K is not None else int(rng.integers(1, 4))
    obs = np.column_stack([rng.dirichlet(np.ones(K)), rng.dirichlet(np.ones(K))])
    obs /= obs.sum(axis=0)
    B = throughput if throughput is not None else float(rng.uniform(0.3, 1.5))
    return ChannelParams(float(p01), float(p11), obs, B)


@st.composite
def channels(draw, K=None):
    p01 = draw(st.floats(0.01, 0.99))
    p11 = draw(st.floats(0.01, 0.99).filter(lambda x: abs(x - p01) > 1e-3))
    k = K if K is not None else draw(st.integers(1, 4))
    cols = []
    for _ in range(2):
        raw = [draw(st.floats(0.01, 1.0)) for _ in range(k)]
        tot = sum(raw)
        col = [r / tot for r in raw]
        col[-1] = 1.0 - sum(col[:-1])
        cols.append(col)
    obs = np.column_stack(cols)
    B = draw(st.floats(0.1, 2.0))
    return ChannelParams(p01, p11, obs, B)


beliefs = st.floats(0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
