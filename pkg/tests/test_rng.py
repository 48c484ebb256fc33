import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesokin._reduce import chunked_sum, fsum_columns
from mesokin.rng import RNGStream, cell_counter_words, derive_key, philox4x32, uniform_pair

U = np.uint32


# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr, key, expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox4x32(*(U(c) for c in ctr), U(key[0]), U(key[1]))
    assert tuple(int(v) for v in out) == expected


def test_derive_key_is_stable_and_label_sensitive():
    assert derive_key(0, "init/gaussian_cloud") == derive_key(0, "init/gaussian_cloud")
    assert derive_key(0, "a") != derive_key(0, "b")
    assert derive_key(0, "a") != derive_key(1, "a")
    assert 0 <= derive_key(2**64 - 1, "x") < 2**64
    with pytest.raises(ValueError):
        derive_key(-1, "x")


def test_stream_generators_reproducible_and_independent():
    s = RNGStream(7, "pair_subsample")
    a = s.generator(3).random(5)
    assert np.array_equal(a, s.generator(3).random(5))
    assert not np.array_equal(a, s.generator(4).random(5))
    assert not np.array_equal(a, s.child("x").generator(3).random(5))


def test_key32_splits_key():
    s = RNGStream(1, "k")
    lo, hi = s.key32()
    assert int(lo) | (int(hi) << 32) == s.key


def test_uniform_pair_range_and_mean():
    k0, k1 = RNGStream(5, "u").key32()
    vals = np.array([uniform_pair(U(d), U(0), U(1), U(2), k0, k1) for d in range(20000)])
    assert vals.min() >= 0.0 and vals.max() < 1.0
    assert abs(vals.mean() - 0.5) < 0.01
    assert abs(np.corrcoef(vals[:, 0], vals[:, 1])[0, 1]) < 0.03


def test_cell_counter_words_distinguish_neighbours():
    seen = {tuple(int(v) for v in cell_counter_words(np.array([i, j], dtype=np.int64)))
            for i in range(-20, 20) for j in range(-20, 20)}
    assert len(seen) == 1600


def test_chunked_sum_matches_fsum():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(10_001) * 1e6
    assert chunked_sum(v, 100) == pytest.approx(math.fsum(v), rel=1e-15, abs=1e-6)
    m = rng.standard_normal((5000, 3))
    np.testing.assert_allclose(chunked_sum(m, 64), [math.fsum(m[:, k]) for k in range(3)],
                               rtol=1e-14)
    assert chunked_sum(np.zeros((0, 2)), 8).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        chunked_sum(v, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=300),
       st.integers(1, 50))
def test_chunked_sum_is_order_fixed(values, chunk):
    v = np.array(values)
    assert chunked_sum(v, chunk) == chunked_sum(v.copy(), chunk)
    assert abs(chunked_sum(v, chunk) - math.fsum(values)) <= 1e-9 * (1 + np.abs(v).sum())


def test_fsum_columns_exact():
    rows = np.array([[1e16, 1.0], [1.0, 1.0], [-1e16, 1.0]])
    assert fsum_columns(rows).tolist() == [1.0, 3.0]
