from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lwcnn.tensor import (
    Prng,
    ShapeError,
    Tensor,
    fnv1a64,
    from_data,
    seeded_uniform,
    zeros,
)

_MASK = (1 << 64) - 1


def _splitmix_reference(seed: int, count: int) -> list[int]:
    # independent big-int reimplementation used as the oracle
    out = []
    state = seed & _MASK
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out.append(z ^ (z >> 31))
    return out


def _fnv_reference(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


class TestTensor:
    def test_stores_float32_row_major(self):
        t = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3))
        assert t.data.dtype == np.float32
        assert t.data.flags["C_CONTIGUOUS"]
        assert t.shape == (2, 3)
        assert t.size == 6
        assert t.tolist() == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]

    def test_rejects_rank_zero(self):
        with pytest.raises(ShapeError):
            Tensor(np.float32(1.0))

    def test_rejects_empty_dimension(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 0, 3), dtype=np.float32))

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            Tensor(np.array([1.0, bad], dtype=np.float32))

    def test_tobytes_little_endian(self):
        t = from_data((2,), [1.0, 2.0])
        assert t.tobytes() == np.array([1.0, 2.0], dtype="<f4").tobytes()

    def test_equality(self):
        a = from_data((2, 2), [1, 2, 3, 4])
        b = from_data((2, 2), [1, 2, 3, 4])
        c = from_data((4,), [1, 2, 3, 4])
        assert a == b
        assert a != c
        assert a != object()

    def test_from_data_count_mismatch(self):
        with pytest.raises(ShapeError):
            from_data((2, 3), [1.0] * 5)

    def test_zeros(self):
        t = zeros((3, 1, 2))
        assert t.shape == (3, 1, 2)
        assert not t.data.any()


class TestPrng:
    def test_known_seed_zero_stream(self):
        p = Prng(0)
        assert p.next_u64() == 0xE220A8397B1DCDAF
        assert p.next_u64() == 0x6E789E6AA1B965F4
        assert p.next_u64() == 0x06C45D188009454F

    @given(st.integers(min_value=0, max_value=_MASK))
    def test_matches_reference_stream(self, seed):
        p = Prng(seed)
        assert [p.next_u64() for _ in range(5)] == _splitmix_reference(seed, 5)

    def test_uniform_in_range(self):
        p = Prng(7)
        values = [p.uniform(-1.5, 2.5) for _ in range(200)]
        assert all(-1.5 <= v < 2.5 for v in values)

    def test_randrange_and_choice(self):
        p = Prng(3)
        assert all(0 <= p.randrange(10) < 10 for _ in range(100))
        seq = ("a", "b", "c")
        assert all(p.choice(seq) in seq for _ in range(20))


class TestSeededUniform:
    def test_deterministic(self):
        a = seeded_uniform((3, 4), 99, -0.05, 0.05)
        b = seeded_uniform((3, 4), 99, -0.05, 0.05)
        assert a == b
        assert a.data.tobytes() == b.data.tobytes()

    def test_seed_changes_values(self):
        a = seeded_uniform((64,), 1)
        b = seeded_uniform((64,), 2)
        assert a != b

    def test_matches_sequential_prng(self):
        # element i must come from stream output i + 1
        t = seeded_uniform((10,), 1234, 0.0, 1.0)
        p = Prng(1234)
        expected = np.array([p.uniform(0.0, 1.0) for _ in range(10)], dtype=np.float32)
        assert np.array_equal(t.flat, expected)

    @given(
        st.integers(min_value=0, max_value=_MASK),
        st.integers(min_value=1, max_value=30),
    )
    def test_bounds_half_open(self, seed, n):
        t = seeded_uniform((n,), seed, -0.25, 0.5)
        assert float(t.flat.min()) >= -0.25
        assert float(t.flat.max()) < 0.5

    def test_rejects_empty_interval(self):
        with pytest.raises(ValueError):
            seeded_uniform((2,), 0, 0.5, 0.5)
        with pytest.raises(ValueError):
            seeded_uniform((2,), 0, 1.0, -1.0)


class TestFnv1a64:
    def test_known_vectors(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_str_equals_utf8_bytes(self):
        assert fnv1a64("layer1.w") == fnv1a64(b"layer1.w")

    @given(st.binary(max_size=64))
    def test_matches_reference(self, data):
        assert fnv1a64(data) == _fnv_reference(data)
