import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ppslmobo.core import (BoundError, DimensionError, DomainError, EvaluationArchive, RandomSource,
                           check_preference, dominates, nondominated_filter, sample_simplex,
                           sample_task, space_filling_init)


def brute_nondominated(Y):
    keep = []
    for i, a in enumerate(Y):
        if not any(np.all(b <= a) and np.any(b < a) for j, b in enumerate(Y) if j != i):
            keep.append(a)
    return np.array(keep).reshape(-1, Y.shape[1])


class TestSimplex:
    def test_two_objectives_on_simplex(self):
        w = sample_simplex(RandomSource(3), 2)
        assert w.shape == (2,) and np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_three_objective_means(self):
        W = sample_simplex(RandomSource(0), 3, size=10_000)
        assert np.all(np.abs(W.mean(axis=0) - 1 / 3) < 0.02)

    def test_same_seed_same_draw(self):
        a = sample_simplex(RandomSource(11), 4, size=5)
        b = sample_simplex(RandomSource(11), 4, size=5)
        assert np.array_equal(a, b)

    def test_rejects_single_objective(self):
        with pytest.raises(DimensionError):
            sample_simplex(RandomSource(0), 1)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**63 - 1), m=st.integers(2, 6))
    def test_always_a_valid_preference(self, seed, m):
        check_preference(sample_simplex(RandomSource(seed), m), m)


class TestTasks:
    def test_unit_box(self):
        t = sample_task(RandomSource(1), [0.0], [1.0], size=100)
        assert np.all((t >= 0) & (t <= 1))

    def test_zero_width_box_is_exact(self):
        t = sample_task(RandomSource(1), [0.3], [0.3], size=10)
        assert np.all(t == 0.3)

    def test_uniform_mean(self):
        t = sample_task(RandomSource(2), [0.0], [1.0], size=10_000)
        assert abs(t.mean() - 0.5) < 0.02

    def test_inverted_box(self):
        with pytest.raises(BoundError):
            sample_task(RandomSource(0), [1.0], [0.0])


class TestLatinHypercube:
    def test_four_points_one_per_stratum(self):
        X, T = space_filling_init(RandomSource(0), 4, ([0.0], [1.0]), ([0.0], [1.0]))
        for col in (X[:, 0], T[:, 0]):
            assert sorted(np.floor(col * 4).astype(int)) == [0, 1, 2, 3]

    def test_single_point(self):
        X, T = space_filling_init(RandomSource(5), 1, ([0.0, -1.0], [1.0, 1.0]), ([2.0], [3.0]))
        assert X.shape == (1, 2) and T.shape == (1, 1)
        assert np.all(X >= [0, -1]) and np.all(X <= [1, 1]) and 2 <= T[0, 0] <= 3

    def test_twenty_points_all_marginals_stratified(self):
        lb, ub = np.array([-2.0, 0.0]), np.array([2.0, 5.0])
        X, T = space_filling_init(RandomSource(9), 20, (lb, ub), ([10.0], [20.0]))
        U = np.hstack([(X - lb) / (ub - lb), (T - 10.0) / 10.0])
        for j in range(3):
            counts = np.bincount(np.minimum(np.floor(U[:, j] * 20).astype(int), 19), minlength=20)
            assert np.all(counts == 1)

    def test_deterministic(self):
        a = space_filling_init(RandomSource(4), 7, ([0.0], [1.0]), ([0.0], [1.0]))
        b = space_filling_init(RandomSource(4), 7, ([0.0], [1.0]), ([0.0], [1.0]))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestDominance:
    def test_small_example(self):
        out = nondominated_filter([[1, 2], [2, 1], [2, 2]])
        assert out.tolist() == [[1, 2], [2, 1]]

    def test_singleton_and_empty(self):
        assert nondominated_filter([[1, 1]]).tolist() == [[1, 1]]
        assert nondominated_filter(np.empty((0, 2))).shape == (0, 2)

    def test_matches_pairwise_oracle(self, rng):
        Y = rng.random((50, 3))
        assert np.array_equal(nondominated_filter(Y), brute_nondominated(Y))

    def test_duplicates_survive_together(self):
        out = nondominated_filter([[1, 1], [1, 1], [2, 2]])
        assert out.tolist() == [[1, 1], [1, 1]]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=15))
    def test_idempotent_and_oracle(self, pts):
        Y = np.array(pts, dtype=float)
        once = nondominated_filter(Y)
        assert np.array_equal(nondominated_filter(once), once)
        assert np.array_equal(once, brute_nondominated(Y))

    @pytest.mark.parametrize("m", [1, 3, 4])
    def test_ties_in_other_dimensions(self, rng, m):
        for _ in range(30):
            Y = rng.integers(0, 3, (int(rng.integers(1, 25)), m)).astype(float)
            assert np.array_equal(nondominated_filter(Y), brute_nondominated(Y))

    def test_large_front_is_kept_whole(self):
        t = np.linspace(0, 1, 10_000)
        F = np.column_stack([t, 1 - np.sqrt(t)])
        assert len(nondominated_filter(np.vstack([F, F + 0.01]))) == 10_000

    def test_dominates(self):
        assert dominates([0, 1], [1, 1]) and not dominates([1, 1], [1, 1]) and not dominates([0, 2], [1, 1])


class TestArchive:
    def test_fifo_keeps_last_records_in_order(self):
        arc = EvaluationArchive(capacity=3)
        for k in range(7):
            arc.push([k], [0.0], [k, -k], k=k)
        assert len(arc) == 3
        assert arc.X[:, 0].tolist() == [4, 5, 6]
        assert [i["k"] for i in arc.info] == [4, 5, 6]

    def test_dimension_mismatch(self):
        arc = EvaluationArchive()
        arc.push([0.0, 1.0], [0.0], [1.0, 2.0])
        with pytest.raises(DimensionError):
            arc.push([0.0], [0.0], [1.0, 2.0])

    def test_non_finite_objectives_rejected(self):
        with pytest.raises(DomainError):
            EvaluationArchive().push([0.0], [0.0], [np.nan, 1.0])

    def test_select(self):
        arc = EvaluationArchive()
        arc.extend(np.eye(3), np.zeros((3, 1)), np.eye(3)[:, :2], gen=1)
        arc.push([1, 1, 1], [0], [0, 0], gen=2)
        assert len(arc.select(lambda i: i["gen"] == 2)) == 1

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            EvaluationArchive(capacity=0)


class TestValidation:
    def test_preference_checks(self):
        check_preference([0.25, 0.75])
        with pytest.raises(DomainError):
            check_preference([-0.1, 1.1])
        with pytest.raises(DomainError):
            check_preference([0.5, 0.6])
        with pytest.raises(DimensionError):
            check_preference([0.5, 0.5], m=3)


def test_random_source_children_are_independent_and_reproducible():
    a, b = RandomSource(5).child(1), RandomSource(5).child(1)
    c = RandomSource(5).child(2)
    assert a.seed == b.seed != c.seed
    assert a.generator.random() == b.generator.random()
