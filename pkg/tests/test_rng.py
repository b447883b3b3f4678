import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hubloops import rng


@settings(max_examples=25, deadline=None)
@given(k0=st.integers(0, 2**64 - 1), k1=st.integers(0, 2**64 - 1),
       c=st.lists(st.integers(0, 2**64 - 1), min_size=4, max_size=4))
def test_philox_matches_numpy(k0, k1, c):
    keys = rng.key_schedule((k0, k1))
    bg = np.random.Philox(key=np.array([k0, k1], dtype=np.uint64),
                          counter=np.array(c, dtype=np.uint64))
    # numpy increments its counter before generating the first block
    nxt = list(c)
    for i in range(4):
        nxt[i] = (nxt[i] + 1) % 2**64
        if nxt[i] != 0:
            break
    assert np.array_equal(rng.raw_block(nxt, keys), bg.random_raw(4))


def test_seed_keys_deterministic_and_distinct():
    assert np.array_equal(rng.seed_keys(5), rng.seed_keys(5))
    assert not np.array_equal(rng.seed_keys(5), rng.seed_keys(6))


def test_uniforms_are_uniform_and_in_range():
    keys = rng.seed_keys(1)
    s = rng.SubstreamRNG(keys, 3, 9)
    u = np.array([s.uniform_open() for _ in range(20000)])
    assert u.min() > 0 and u.max() <= 1
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_substreams_differ():
    keys = rng.seed_keys(1)
    a = [rng.SubstreamRNG(keys, 0, 0).uniform() for _ in range(1)]
    b = [rng.SubstreamRNG(keys, 1, 0).uniform() for _ in range(1)]
    c = [rng.SubstreamRNG(keys, 0, 1).uniform() for _ in range(1)]
    d = [rng.SubstreamRNG(keys, 0, 0, rng.TAG_INIT).uniform() for _ in range(1)]
    assert len({a[0], b[0], c[0], d[0]}) == 4


def test_unit_conversions_edges():
    assert rng.to_unit_open(np.uint64(0)) == pytest.approx(2.0**-53)
    assert rng.to_unit_open(np.uint64(2**64 - 1)) == 1.0
    assert 0.0 <= rng.to_unit(np.uint64(2**64 - 1)) < 1.0
