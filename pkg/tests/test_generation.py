import itertools
import math
from collections import Counter, defaultdict

import numpy as np
import pytest

from conftest import X0, ar_spec, diff_spec, mim_spec
from ibprobe.codebook import (
    SubsetPolicy,
    UsageHistogram,
    build_quantizer,
    explicit_codebook,
    restrict,
)
from ibprobe.generation import (
    Argmax,
    ArPath,
    EnumerationBoundError,
    MimPath,
    StageWindow,
    Stochastic,
    TokenGrid,
    decode,
    ar_generate,
    diff_generate,
    enumerate_outcomes,
    mim_generate,
    sample,
    schedule_counts,
    stage_windows,
)


def outcome_dist(outcomes):
    dist = defaultdict(float)
    for o in outcomes:
        dist[o.grid.tokens] += o.prob
    return dict(dist)


class TestArGenerate:
    def test_argmax_is_deterministic(self):
        spec = ar_spec([0.2, 0.5, 0.3], [[0.1, 0.6, 0.3]] * 3, shape=(2, 2))
        a, pa = ar_generate(spec, X0, Argmax(), seed=1)
        b, pb = ar_generate(spec, X0, Argmax(), seed=999)
        assert a == b
        assert pa == ArPath((0, 1, 2, 3))

    def test_two_token_chain_distribution(self):
        # p(z0) = (1, 0); p(z1 | z0=0) = (.5, .5): outcomes (0,0) and (0,1)
        # each with probability 1/2.
        spec = ar_spec([1.0, 0.0], [[0.5, 0.5], [1.0, 0.0]])
        outcomes = enumerate_outcomes(spec, X0)
        dist = outcome_dist(outcomes)
        assert dist == {(0, 0): pytest.approx(0.5), (0, 1): pytest.approx(0.5)}

    def test_singleton_subset_forces_constant_grid(self):
        spec = ar_spec([0.25] * 4, [[0.25] * 4] * 4, shape=(2, 2))
        usage = UsageHistogram(np.array([5, 1, 1, 1]))
        sub = restrict(spec.codebook, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.25)
        assert sub.active == (0,)
        for seed in range(5):
            grid, _ = ar_generate(spec, X0, Stochastic(), sub, seed=seed)
            assert grid.tokens == (0, 0, 0, 0)

    def test_window_zero_is_iid(self):
        spec = ar_spec([0.7, 0.3], shape=(1, 3), window=0)
        outcomes = enumerate_outcomes(spec, X0)
        dist = outcome_dist(outcomes)
        assert dist[(0, 0, 0)] == pytest.approx(0.7**3)
        assert dist[(1, 1, 1)] == pytest.approx(0.3**3)


class TestMimGenerate:
    def test_single_step_has_single_path(self):
        spec = mim_spec([[0.5, 0.5], [0.5, 0.5]], steps=1, counts=(2,))
        _, path = mim_generate(spec, X0, seed=0)
        assert path == MimPath((frozenset({0, 1}),))
        outcomes = enumerate_outcomes(spec, X0)
        assert len({o.path for o in outcomes}) == 1

    def test_one_per_step_paths_equiprobable(self):
        spec = mim_spec(
            [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]],
            shape=(1, 3),
            steps=3,
            counts=(1, 1, 1),
        )
        outcomes = enumerate_outcomes(spec, X0)
        paths = defaultdict(float)
        for o in outcomes:
            paths[o.path] += o.prob
        assert len(paths) == 6
        for p in paths.values():
            assert p == pytest.approx(1.0 / 6.0)

    def test_argmax_outputs_differ_iff_conditioning_differs(self):
        # Strong same-code attraction: the second token copies the first, so
        # the two unmask orders produce (0, 0) and (1, 1).
        affinity = np.array([[9.0, 1.0], [1.0, 9.0]])
        spec = mim_spec(
            [[0.6, 0.4], [0.4, 0.6]],
            steps=2,
            counts=(1, 1),
            affinity=affinity,
        )
        outcomes = enumerate_outcomes(spec, X0, Argmax())
        dist = outcome_dist(outcomes)
        assert dist == {(0, 0): pytest.approx(0.5), (1, 1): pytest.approx(0.5)}
        # Without interaction the orders agree and a single grid remains.
        flat = mim_spec([[0.6, 0.4], [0.4, 0.6]], steps=2, counts=(1, 1))
        outcomes = enumerate_outcomes(flat, X0, Argmax())
        assert outcome_dist(outcomes) == {(0, 1): pytest.approx(1.0)}

    def test_mask_sets_decrease_by_schedule(self):
        spec = mim_spec(np.full((4, 3), 1 / 3), shape=(2, 2), steps=3, counts=(1, 1, 2))
        for seed in range(10):
            _, path = mim_generate(spec, X0, seed=seed)
            assert path.mask_sets[0] == frozenset(range(4))
            sizes = [len(m) for m in path.mask_sets]
            assert sizes == [4, 3, 2]
            groups = path.reveal_groups()
            assert [len(g) for g in groups] == [1, 1, 2]
            assert set().union(*[set(g) for g in groups]) == set(range(4))

    def test_rejects_zero_count_schedule(self):
        with pytest.raises(ValueError):
            mim_spec([[0.5, 0.5]] * 4, shape=(2, 2), steps=4, counts=(0, 2, 1, 1))

    def test_confidence_selection_deterministic_path(self):
        spec = mim_spec(
            [[0.9, 0.1], [0.6, 0.4], [0.5, 0.5]],
            shape=(1, 3),
            steps=3,
            counts=(1, 1, 1),
            selection="confidence",
        )
        paths = {mim_generate(spec, X0, seed=s)[1] for s in range(6)}
        assert len(paths) == 1
        # Highest-confidence position first.
        assert paths.pop().reveal_groups()[0] == (0,)


class TestDiffGenerate:
    def test_one_hot_transitions_follow_prior(self):
        spec = diff_spec([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], steps=3)
        for seed in range(8):
            grid, path = diff_generate(spec, X0, seed=seed)
            assert len(path.trajectory) == 3
            assert grid == path.trajectory[-1]
            assert grid.tokens == path.trajectory[0].tokens
        # Argmax changes nothing when rows are one-hot.
        g_st, p_st = diff_generate(spec, X0, Stochastic(), seed=3)
        g_am, p_am = diff_generate(spec, X0, Argmax(), seed=3)
        assert g_st == g_am and p_st == p_am

    def test_single_state_returns_prior_draw(self):
        spec = diff_spec([0.25, 0.75], [[0.5, 0.5], [0.5, 0.5]], steps=1)
        outcomes = enumerate_outcomes(spec, X0)
        dist = outcome_dist(outcomes)
        assert dist == {(0,): pytest.approx(0.25), (1,): pytest.approx(0.75)}

    def test_uniform_prior_identity_transitions_enumeration(self):
        spec = diff_spec([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], steps=2)
        outcomes = enumerate_outcomes(spec, X0)
        # Joint over (z_2, z_1) has two reachable outcomes at 1/2.
        assert len(outcomes) == 2
        dist = outcome_dist(outcomes)
        assert dist == {(0,): pytest.approx(0.5), (1,): pytest.approx(0.5)}

    def test_argmax_never_touches_prior(self):
        # Flat prior with deterministic transitions: the prior draw must stay
        # stochastic under Argmax, so outputs vary across seeds.
        spec = diff_spec([0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], steps=2)
        values = {diff_generate(spec, X0, Argmax(), seed=s)[0].tokens for s in range(12)}
        assert values == {(0,), (1,)}

    def test_subset_restricts_prior_and_transitions(self):
        spec = diff_spec(
            [0.25, 0.25, 0.25, 0.25],
            np.full((4, 4), 0.25),
            shape=(2, 2),
            steps=3,
        )
        usage = UsageHistogram(np.array([8, 6, 2, 1]))
        sub = restrict(spec.codebook, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.5)
        for seed in range(6):
            grid, path = diff_generate(spec, X0, Stochastic(), sub, seed=seed)
            for state in path.trajectory:
                assert set(state.tokens) <= set(sub.active)


class TestPolicies:
    def test_stage_windows_partition(self):
        for t in (3, 4, 5, 7, 9):
            windows = stage_windows(t)
            covered = sorted(
                itertools.chain.from_iterable(windows.values())
            )
            assert covered == list(range(t))
        assert list(stage_windows(4)[StageWindow.EARLY]) == [0, 1]
        assert list(stage_windows(4)[StageWindow.MIDDLE]) == [2]
        assert list(stage_windows(4)[StageWindow.LATE]) == [3]

    def test_staged_requires_three_steps(self):
        with pytest.raises(ValueError):
            stage_windows(2)

    def test_temperature_changes_distribution(self):
        spec = ar_spec([0.8, 0.2], shape=(1, 1), window=0)
        hot = outcome_dist(enumerate_outcomes(spec, X0, Stochastic(4.0)))
        cold = outcome_dist(enumerate_outcomes(spec, X0, Stochastic(0.25)))
        assert hot[(1,)] > 0.2 > cold[(1,)]
        # tau=1 leaves the table untouched.
        plain = outcome_dist(enumerate_outcomes(spec, X0, Stochastic(1.0)))
        assert plain[(0,)] == pytest.approx(0.8, abs=1e-15)


class TestSchedules:
    def test_cosine_counts(self):
        assert schedule_counts(4, 3, "cosine") == (1, 1, 2)
        assert schedule_counts(4, 2, "cosine") == (1, 3)

    def test_linear_counts(self):
        assert schedule_counts(4, 4, "linear") == (1, 1, 1, 1)
        assert schedule_counts(6, 3, "linear") == (2, 2, 2)

    def test_counts_always_sum_to_n(self):
        for n in range(1, 20):
            for t in range(1, n + 1):
                for kind in ("cosine", "linear"):
                    assert sum(schedule_counts(n, t, kind)) == n


class TestEnumerate:
    def test_ar_argmax_single_outcome(self):
        spec = ar_spec([0.2, 0.5, 0.3], [[0.1, 0.6, 0.3]] * 3, shape=(2, 2))
        outcomes = enumerate_outcomes(spec, X0, Argmax())
        assert len(outcomes) == 1
        assert outcomes[0].prob == pytest.approx(1.0)
        assert outcomes[0].grid.tokens == (1, 1, 1, 1)

    def test_probabilities_sum_to_one(self):
        specs = [
            ar_spec([0.3, 0.3, 0.4], np.full((3, 3), 1 / 3), shape=(2, 2)),
            mim_spec(np.full((4, 2), 0.5), shape=(2, 2), steps=2, counts=(1, 3)),
            diff_spec([0.4, 0.6], [[0.7, 0.3], [0.2, 0.8]], shape=(1, 2), steps=3),
        ]
        for spec in specs:
            outcomes = enumerate_outcomes(spec, X0)
            assert math.fsum(o.prob for o in outcomes) == pytest.approx(1.0, abs=1e-9)

    def test_bound_exceeded(self):
        spec = ar_spec([0.25] * 4, np.full((4, 4), 0.25), shape=(2, 2))
        with pytest.raises(EnumerationBoundError):
            enumerate_outcomes(spec, X0, bound=100)

    def test_empirical_frequencies_match_exact(self):
        # Seeded sampling agrees with the enumerated distribution within
        # three standard errors on every outcome.
        spec = mim_spec(
            [[0.7, 0.3], [0.45, 0.55], [0.2, 0.8]],
            shape=(1, 3),
            steps=2,
            counts=(2, 1),
            affinity=np.array([[2.0, 1.0], [1.0, 2.0]]),
        )
        exact = defaultdict(float)
        for o in enumerate_outcomes(spec, X0):
            exact[(o.path, o.grid)] += o.prob
        n = 100_000
        counts = Counter()
        for i in range(n):
            grid, path = mim_generate(spec, X0, seed=(42, i))
            counts[(path, grid)] += 1
        assert set(counts) <= set(exact)
        for key, p in exact.items():
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts[key] / n - p) <= 3 * se + 1e-12

    @pytest.mark.parametrize(
        "spec_builder",
        [
            lambda: ar_spec([0.6, 0.4], [[0.8, 0.2], [0.35, 0.65]]),
            lambda: diff_spec([0.3, 0.7], [[0.9, 0.1], [0.25, 0.75]], steps=2),
        ],
    )
    def test_empirical_frequencies_other_strategies(self, spec_builder):
        spec = spec_builder()
        exact = defaultdict(float)
        for o in enumerate_outcomes(spec, X0):
            exact[(o.path, o.grid)] += o.prob
        n = 20_000
        counts = Counter()
        for i in range(n):
            grid, path = sample(spec, X0, seed=(17, i))
            counts[(path, grid)] += 1
        assert set(counts) <= set(exact)
        for key, p in exact.items():
            se = math.sqrt(p * (1 - p) / n)
            assert abs(counts[key] / n - p) <= 3 * se + 1e-12

    def test_inconsistent_active_set_raises(self):
        from ibprobe.generation import InconsistentSpecError

        spec = ar_spec([0.0, 0.0, 1.0], [[0.0, 0.0, 1.0]] * 3)
        usage = UsageHistogram(np.array([9, 8, 0]))
        sub = restrict(spec.codebook, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.5)
        assert sub.active == (0, 1)
        with pytest.raises(InconsistentSpecError):
            ar_generate(spec, X0, Stochastic(), sub, seed=0)
        with pytest.raises(InconsistentSpecError):
            enumerate_outcomes(spec, X0, Stochastic(), sub)


class TestDecode:
    def test_identical_grids_identical_images(self):
        cb = build_quantizer("bsq", dim=4)
        a = TokenGrid((2, 2), (1, 5, 9, 13))
        np.testing.assert_array_equal(decode(a, cb), decode(a, cb))

    def test_single_token_difference_is_local(self):
        cb = build_quantizer("bsq", dim=4)
        a = TokenGrid((2, 2), (1, 5, 9, 13))
        b = TokenGrid((2, 2), (1, 5, 2, 13))
        da, db = decode(a, cb), decode(b, cb)
        diff = da != db
        assert diff[2:4, 0:2].any()
        diff[2:4, 0:2] = False
        assert not diff.any()

    def test_bsq_patch_is_mapped_entry(self):
        cb = build_quantizer("bsq", dim=4)
        k = 5
        img = decode(TokenGrid((1, 1), (k,)), cb)
        lo, hi = cb.value_range()
        expected = (cb.entries[k].reshape(2, 2) - lo) / (hi - lo)
        np.testing.assert_allclose(img, expected)
        assert img.shape == (2, 2)
        assert set(np.unique(img)) <= {0.0, 1.0}

    def test_injective_on_grids(self):
        cb = build_quantizer("fsq", levels=[3, 3, 3, 3])
        seen = {}
        rng = np.random.default_rng(0)
        for _ in range(200):
            tokens = tuple(int(t) for t in rng.integers(0, cb.size, size=4))
            img = decode(TokenGrid((2, 2), tokens), cb).tobytes()
            if img in seen:
                assert seen[img] == tokens
            seen[img] = tokens
        assert len(seen) > 150

    def test_scalar_codebook(self):
        cb = build_quantizer("fsq", levels=[5])
        img = decode(TokenGrid((1, 2), (0, 4)), cb)
        np.testing.assert_allclose(img, [[0.0, 1.0]])

    def test_values_in_unit_interval(self):
        cb = explicit_codebook([[0.3, 0.9, 0.1, 0.5], [2.0, -1.0, 0.0, 0.25]])
        img = decode(TokenGrid((1, 2), (0, 1)), cb)
        assert img.min() >= 0.0 and img.max() <= 1.0


class TestStreamDiscipline:
    def test_same_seed_same_output(self):
        spec = mim_spec(np.full((4, 3), 1 / 3), shape=(2, 2), steps=2, counts=(1, 3))
        a = mim_generate(spec, X0, seed=(7, 3))
        b = mim_generate(spec, X0, seed=(7, 3))
        assert a == b

    def test_argmax_preserves_structural_stream(self):
        # Masks (MIM) and the initial state (DIFF) come from a separate
        # stream, so switching token draws to argmax leaves them unchanged.
        spec = mim_spec(np.full((4, 3), 1 / 3), shape=(2, 2), steps=2, counts=(1, 3))
        _, p_st = mim_generate(spec, X0, Stochastic(), seed=5)
        _, p_am = mim_generate(spec, X0, Argmax(), seed=5)
        assert p_st == p_am

        dspec = diff_spec([0.5, 0.3, 0.2], np.full((3, 3), 1 / 3), steps=2)
        _, t_st = diff_generate(dspec, X0, Stochastic(), seed=5)
        _, t_am = diff_generate(dspec, X0, Argmax(), seed=5)
        assert t_st.trajectory[0] == t_am.trajectory[0]

    def test_subset_tokens_always_active(self):
        spec = mim_spec(np.full((4, 4), 0.25), shape=(2, 2), steps=2, counts=(2, 2))
        usage = UsageHistogram(np.array([1, 9, 9, 1]))
        sub = restrict(spec.codebook, usage, SubsetPolicy.DROP_LEAST_FREQUENT, 0.5)
        assert sub.active == (1, 2)
        for seed in range(10):
            grid, _ = mim_generate(spec, X0, Stochastic(), sub, seed=seed)
            assert set(grid.tokens) <= {1, 2}
