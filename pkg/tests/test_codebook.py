import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibprobe.codebook import (
    Codebook,
    Scheme,
    SubsetPolicy,
    UsageHistogram,
    build_quantizer,
    codebook_entropy,
    explicit_codebook,
    quantize,
    restrict,
    round_half_up,
)


class TestBuildQuantizer:
    def test_fsq_size_is_product_of_levels(self):
        cb = build_quantizer("fsq", levels=[8, 5, 5, 5])
        assert cb.size == 1000
        assert cb.dim == 4

    def test_lfq_matches_binary_fsq(self):
        lfq = build_quantizer("lfq", dim=3)
        fsq = build_quantizer("fsq", levels=[2, 2, 2])
        assert lfq.size == 8
        np.testing.assert_array_equal(lfq.entries, fsq.entries)

    def test_bsq_entries_unit_norm(self):
        cb = build_quantizer("bsq", dim=4)
        assert cb.size == 16
        norms = np.linalg.norm(cb.entries, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_fsq_symmetric_grid_values(self):
        cb = build_quantizer("fsq", levels=[3])
        np.testing.assert_array_equal(cb.entries.ravel(), [-1.0, 0.0, 1.0])

    def test_rejects_bad_levels(self):
        with pytest.raises(ValueError):
            build_quantizer("fsq", levels=[1, 3])
        with pytest.raises(ValueError):
            build_quantizer("fsq", levels=[])
        with pytest.raises(ValueError):
            build_quantizer("lfq", dim=0)

    def test_rejects_oversized_grid(self):
        with pytest.raises(ValueError):
            build_quantizer("fsq", levels=[2] * 21)
        with pytest.raises(ValueError):
            build_quantizer("fsq", levels=[1024, 1024], max_entries=2**16)

    @settings(max_examples=25, deadline=None)
    @given(dim=st.integers(min_value=1, max_value=10))
    def test_lfq_equals_fsq_all_dims(self, dim):
        lfq = build_quantizer("lfq", dim=dim)
        fsq = build_quantizer("fsq", levels=[2] * dim)
        np.testing.assert_array_equal(lfq.entries, fsq.entries)

    def test_entries_distinct_enforced(self):
        with pytest.raises(ValueError):
            explicit_codebook([[1.0, 0.0], [1.0, 0.0]])


class TestQuantize:
    def test_exact_entry_maps_to_itself(self):
        cb = build_quantizer("fsq", levels=[4, 3])
        for k in range(cb.size):
            assert quantize(cb.entries[k], cb) == k

    def test_fsq_rounding(self):
        # Grid {-1, 0, 1}: 0.4 is nearer to 0 than to 1.
        cb = build_quantizer("fsq", levels=[3])
        assert quantize([0.4], cb) == 1

    def test_bsq_matches_brute_force(self):
        cb = build_quantizer("bsq", dim=2)
        v = np.array([0.3, -0.9])
        dists = [float(np.linalg.norm(v - e)) for e in cb.entries]
        expected = int(np.argmin(dists))
        assert quantize(v, cb) == expected
        r = 1.0 / math.sqrt(2)
        np.testing.assert_allclose(cb.entries[expected], [r, -r])

    def test_fsq_equals_per_dimension_rounding(self):
        rng = np.random.default_rng(7)
        cb = build_quantizer("fsq", levels=[3, 4, 2])
        values = [np.linspace(-1, 1, L) for L in (3, 4, 2)]
        for _ in range(50):
            v = rng.uniform(-1.3, 1.3, size=3)
            per_dim = [int(np.argmin(np.abs(vals - vi))) for vals, vi in zip(values, v)]
            flat = (per_dim[0] * 4 + per_dim[1]) * 2 + per_dim[2]
            assert quantize(v, cb) == flat

    def test_dimension_mismatch(self):
        cb = build_quantizer("fsq", levels=[3])
        with pytest.raises(ValueError):
            quantize([0.1, 0.2], cb)


class TestRestrict:
    @pytest.fixture
    def cb8(self):
        return build_quantizer("lfq", dim=3)

    def test_ratio_one_keeps_everything(self, cb8):
        usage = UsageHistogram(np.array([9, 7, 5, 3, 1, 0, 0, 0]))
        for policy in SubsetPolicy:
            sub = restrict(cb8, usage, policy, 1.0, seed=3)
            assert sub.active == tuple(range(8))

    def test_drop_least_frequent(self, cb8):
        usage = UsageHistogram(np.array([9, 7, 5, 3, 1, 0, 0, 0]))
        sub = restrict(cb8, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.5)
        assert sub.active == (0, 1, 2, 3)

    def test_drop_most_frequent_with_tie_break(self, cb8):
        usage = UsageHistogram(np.array([9, 7, 5, 3, 1, 0, 0, 0]))
        sub = restrict(cb8, usage, SubsetPolicy.DROP_MOST_FREQUENT, 0.5)
        assert sub.active == (4, 5, 6, 7)

    def test_drop_random_deterministic_in_seed(self, cb8):
        usage = UsageHistogram(np.arange(8))
        a = restrict(cb8, usage, SubsetPolicy.DROP_RANDOM, 0.5, seed=11)
        b = restrict(cb8, usage, SubsetPolicy.DROP_RANDOM, 0.5, seed=11)
        c = restrict(cb8, usage, SubsetPolicy.DROP_RANDOM, 0.5, seed=12)
        assert a.active == b.active
        assert len(a.active) == 4
        assert a.active != c.active  # overwhelmingly likely for these seeds

    def test_minimum_one_entry(self, cb8):
        usage = UsageHistogram(np.arange(8))
        sub = restrict(cb8, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.01)
        assert len(sub.active) == 1

    def test_size_rounding_half_up(self, cb8):
        usage = UsageHistogram(np.arange(8))
        # 0.3 * 8 = 2.4 -> 2; 0.45 * 8 = 3.6 -> 4; 0.4375 * 8 = 3.5 -> 4
        for ratio, expected in ((0.3, 2), (0.45, 4), (0.4375, 4)):
            sub = restrict(cb8, usage, SubsetPolicy.DROP_LEAST_FREQUENT, ratio)
            assert len(sub.active) == expected

    def test_complementary_policies_partition(self, cb8):
        usage = UsageHistogram(np.array([9, 7, 5, 3, 2, 1, 10, 4]))
        keep = restrict(cb8, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.25)
        drop = restrict(cb8, usage, SubsetPolicy.DROP_MOST_FREQUENT, 0.75)
        assert set(keep.active) | set(drop.active) == set(range(8))
        assert set(keep.active) & set(drop.active) == set()

    def test_rejects_bad_inputs(self, cb8):
        usage = UsageHistogram(np.arange(8))
        with pytest.raises(ValueError):
            restrict(cb8, usage, SubsetPolicy.DROP_RANDOM, 0.0)
        with pytest.raises(ValueError):
            restrict(cb8, usage, SubsetPolicy.DROP_RANDOM, 1.2)
        with pytest.raises(ValueError):
            restrict(cb8, UsageHistogram(np.arange(5)), SubsetPolicy.DROP_RANDOM, 0.5)


class TestCodebookEntropy:
    def test_uniform_sixteen_codes(self):
        usage = UsageHistogram(np.full(16, 3))
        assert codebook_entropy(usage) == pytest.approx(4.0, abs=1e-12)

    def test_degenerate(self):
        usage = UsageHistogram(np.array([0, 12, 0]))
        assert codebook_entropy(usage) == 0.0

    def test_three_one_split(self):
        # -0.75 log2 0.75 - 0.25 log2 0.25 = 0.8112781244591328
        usage = UsageHistogram(np.array([3, 1]))
        assert codebook_entropy(usage) == pytest.approx(0.811278124459, abs=1e-9)

    def test_empty_total_rejected(self):
        with pytest.raises(ValueError):
            codebook_entropy(UsageHistogram(np.zeros(4, dtype=int)))

    @settings(max_examples=50, deadline=None)
    @given(
        counts=st.lists(st.integers(min_value=0, max_value=40), min_size=1, max_size=12)
    )
    def test_bounded_by_log_size(self, counts):
        if sum(counts) == 0:
            return
        usage = UsageHistogram(np.asarray(counts))
        h = codebook_entropy(usage)
        assert -1e-12 <= h <= math.log2(len(counts)) + 1e-12
        uniform = len(set(counts)) == 1
        if uniform:
            assert h == pytest.approx(math.log2(len(counts)), abs=1e-12)


class TestSerialization:
    def test_codebook_round_trip(self, tmp_path):
        cb = build_quantizer("fsq", levels=[3, 2])
        path = tmp_path / "cb.json"
        cb.save(path)
        loaded = Codebook.load(path)
        assert loaded.scheme is Scheme.FSQ
        assert loaded.levels == (3, 2)
        np.testing.assert_array_equal(loaded.entries, cb.entries)

    def test_usage_csv_round_trip(self, tmp_path):
        usage = UsageHistogram(np.array([4, 0, 7]))
        path = tmp_path / "usage.csv"
        usage.to_csv(path)
        loaded = UsageHistogram.from_csv(path)
        np.testing.assert_array_equal(loaded.counts, usage.counts)
        assert path.read_text().splitlines()[0] == "index,count"


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(2.4) == 2
    assert round_half_up(3.5) == 4
    assert round_half_up(0.5) == 1
