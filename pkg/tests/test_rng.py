import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swingcvx import rng


def test_substream_reproducible():
    a = rng.substream(42, rng.PATHS, 3).standard_normal(8)
    b = rng.substream(42, rng.PATHS, 3).standard_normal(8)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("other", [(43, rng.PATHS, 3), (42, rng.FORWARD, 3), (42, rng.PATHS, 4)])
def test_substreams_distinct(other):
    a = rng.substream(42, rng.PATHS, 3).standard_normal(8)
    b = rng.substream(*other).standard_normal(8)
    assert not np.array_equal(a, b)


def test_full_u64_seed_accepted():
    rng.substream((1 << 64) - 1, rng.TESTS, 0).standard_normal()


def test_block_index_bounds():
    with pytest.raises(ValueError):
        rng.substream(0, 1 << 32, 0)


def test_block_ranges_cover_count():
    r = rng.block_ranges(2500, 1024)
    assert r == [(0, 1024), (1024, 2048), (2048, 2500)]


@settings(max_examples=25, deadline=None)
@given(count=st.integers(1, 5000), workers=st.integers(1, 4), seed=st.integers(0, 2 ** 64 - 1))
def test_map_blocks_independent_of_workers(count, workers, seed):
    def draw(b, s, e):
        return rng.substream(seed, rng.PATHS, b).standard_normal(e - s)

    serial = np.concatenate(rng.map_blocks(draw, count, 1))
    parallel = np.concatenate(rng.map_blocks(draw, count, workers))
    np.testing.assert_array_equal(serial, parallel)
    np.testing.assert_array_equal(serial, rng.normals(seed, rng.PATHS, count))
