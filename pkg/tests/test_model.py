from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmstall.model import (
    DiskComponent,
    DomainError,
    Piece,
    draws_distinct,
    merge_pieces,
    overlapping_files,
    split_pieces,
    union_distinct,
    zipf_distinct,
)
from lsmstall.oracles import mc_distinct


def f(lo, hi, cid=0, size=100.0):
    return DiskComponent(cid, 2, size, 0.0, size, (lo, hi))


class TestDrawsDistinct:
    def test_small_values(self):
        assert draws_distinct(0, 4) == 0
        assert draws_distinct(1, 4) == pytest.approx(1.0)
        assert draws_distinct(2, 4) == pytest.approx(1.75)

    def test_against_sampling(self):
        mean, hw = mc_distinct(2, 4, "uniform", seed=3, trials=100_000)
        assert abs(mean - 1.75) < 0.01
        assert abs(draws_distinct(2, 4) - mean) <= hw

    def test_empty_keyspace_rejected(self):
        with pytest.raises(DomainError):
            draws_distinct(3, 0)

    def test_fractional_keyspace_is_continuous_limit(self):
        assert draws_distinct(10, 0.5) == pytest.approx(0.5 * -math.expm1(-20))

    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.floats(1, 1e7))
    def test_monotone_and_bounded(self, a, b, K):
        lo, hi = sorted((a, b))
        assert draws_distinct(lo, K) <= draws_distinct(hi, K) + 1e-9
        assert draws_distinct(hi, K) <= min(hi, K) + 1e-9


class TestUnionDistinct:
    def test_single_input(self):
        assert union_distinct([7], 100) == pytest.approx(7)

    def test_saturated(self):
        assert union_distinct([100, 3], 100) == 100

    def test_two_pairs_of_four(self):
        assert union_distinct([2, 2], 4) == pytest.approx(3.0)

    def test_oversized_input_rejected(self):
        with pytest.raises(DomainError):
            union_distinct([5], 4)

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=5))
    def test_between_max_and_sum(self, sizes):
        got = union_distinct(sizes, 50)
        assert max(sizes) - 1e-9 <= got <= min(sum(sizes), 50) + 1e-9


class TestZipfDistinct:
    def test_single_write(self):
        assert zipf_distinct(1, 100, 1.0) == pytest.approx(1.0)

    def test_uniform_reduction(self):
        assert zipf_distinct(1e6, 10, 0.0) == pytest.approx(draws_distinct(1e6, 10))
        assert zipf_distinct(1e6, 10, 0.0) == pytest.approx(10)

    def test_against_sampling(self):
        mean, hw = mc_distinct(2, 3, "zipf", seed=5, trials=100_000, s=1.0)
        assert abs(zipf_distinct(2, 3, 1.0) - mean) < 0.01

    def test_large_keyspace_tail(self):
        # the integrated tail agrees with a direct sum just above the cutoff
        U = (1 << 16) + 5000
        import numpy as np
        k = np.arange(1, U + 1, dtype=float)
        p = k ** -0.99 / (k ** -0.99).sum()
        direct = float(np.sum(-np.expm1(5e4 * np.log1p(-p))))
        assert zipf_distinct(5e4, U, 0.99) == pytest.approx(direct, rel=1e-6)

    def test_skew_reduces_distinct(self):
        assert zipf_distinct(1000, 1000, 0.99) < draws_distinct(1000, 1000)


class TestOverlappingFiles:
    level2 = [f(0.0, 0.20, 1), f(0.22, 0.52, 2), f(0.54, 1.0, 3)]

    def test_range_query_on_three_files(self):
        got = overlapping_files((0.0, 0.50), self.level2)
        assert [x.id for x in got] == [1, 2]

    def test_empty_level(self):
        assert overlapping_files((0.1, 0.2), []) == []

    def test_gap_is_half_open(self):
        assert overlapping_files((0.20, 0.22), self.level2[:2]) == []


class TestPieces:
    def test_merge_conserves_content(self):
        a = DiskComponent(1, 0, 0.0, 400.0, 390.0, (0.0, 1.0))
        b = f(0.0, 0.5, 2, 300.0)
        c = f(0.5, 1.0, 3, 300.0)
        pieces = merge_pieces([a, b, c], 10_000)
        assert sum(p.updates for p in pieces) == pytest.approx(400.0)
        assert sum(p.loaded for p in pieces) == pytest.approx(600.0)
        assert all(p.size <= p.loaded + p.updates + 1e-9 for p in pieces)

    @settings(max_examples=60)
    @given(st.lists(st.floats(1.0, 500.0), min_size=1, max_size=8), st.floats(10.0, 400.0))
    def test_split_respects_file_max(self, sizes, file_max):
        pieces, lo = [], 0.0
        for s in sizes:
            hi = lo + s / sum(sizes)
            pieces.append(Piece(lo, hi, s, 0.0, s))
            lo = hi
        files = split_pieces(pieces, file_max)
        assert sum(p.size for p in files) == pytest.approx(sum(sizes))
        assert all(p.size <= file_max * (1 + 1e-9) for p in files)
        assert len(files) == math.ceil(sum(sizes) / file_max - 1e-9)
        for x, y in zip(files, files[1:]):
            assert x.hi == pytest.approx(y.lo)
