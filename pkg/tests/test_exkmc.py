import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xkmeans.core import Assignment, CenterSet, DataMatrix, kmeans_cost, surrogate_cost
from xkmeans.exkmc import (
    cell_cost,
    expand,
    find_labels,
    root_tree,
    scan_best_split,
    split_cost,
)
from xkmeans.imm import build_imm
from xkmeans.kmeans import KMeansConfig, fit_reference
from xkmeans.synth import gen_gaussian_blobs
from xkmeans.tree import ThresholdTree

FOUR_POINTS = DataMatrix([[0.0, 0.0], [0.0, 1.0], [4.0, 0.0], [4.0, 1.0]])
TWO_CENTERS = CenterSet([[0.0, 0.5], [4.0, 0.5]])


def naive_best_split(points, centers):
    """Exhaustive enumeration of every (feature, point-value threshold) pair
    with costs summed directly; candidates within 1e-9 relative of the best
    cost count as tied and the lowest (feature, threshold) wins."""
    points = np.asarray(points, float)
    m, d = points.shape
    rows = []  # (cost, feature, theta, left_label, right_label)
    for f in range(d):
        for theta in np.unique(points[:, f])[:-1]:
            mask = points[:, f] <= theta
            left, right = points[mask], points[~mask]
            lcosts = [((left - c) ** 2).sum() for c in centers]
            rcosts = [((right - c) ** 2).sum() for c in centers]
            ll = int(np.argmin(lcosts))
            rl = int(np.argmin(rcosts))
            rows.append((float(lcosts[ll] + rcosts[rl]), f, float(theta), ll, rl))
    if not rows:
        return None
    lowest = min(r[0] for r in rows)
    cutoff = lowest + 1e-9 * max(1.0, lowest)
    return min((r for r in rows if r[0] <= cutoff), key=lambda r: (r[1], r[2]))


def replay_trace(X, M, base, result):
    """Re-apply a recorded expansion step by step on a fresh copy, checking
    each trace row against recomputation from first principles."""
    tree = base.copy()
    before = tree.induced_assignment(X).labels
    for step in result.trace:
        moved = tree.node(step.leaf).point_ids
        tree.split_leaf(
            step.leaf, step.feature, step.threshold, step.left_label, step.right_label
        )
        after = tree.induced_assignment(X).labels
        outside = np.setdiff1d(np.arange(X.n), moved)
        assert np.array_equal(before[outside], after[outside]), "labels leaked outside the split leaf"

        partition = [tree.node(i).point_ids for i in tree.leaf_ids()]
        sur = surrogate_cost(X, partition, M)
        assert sur == pytest.approx(step.surrogate_cost, rel=1e-9, abs=1e-9)
        km = kmeans_cost(X, Assignment(after))
        assert km == pytest.approx(step.kmeans_cost, rel=1e-9, abs=1e-9)
        before = after
    return tree


class TestFindLabels:
    def test_four_point_example(self):
        assert find_labels(FOUR_POINTS.points, TWO_CENTERS, 0, 0.0) == (0, 1)

    def test_same_label_children_allowed(self):
        M = CenterSet([[0.0, 0.5], [100.0, 0.5]])
        assert find_labels(FOUR_POINTS.points, M, 0, 0.0) == (0, 0)

    def test_singleton_sides_pick_own_center(self):
        X = np.array([[0.0], [10.0]])
        M = CenterSet([[0.0], [10.0]])
        assert find_labels(X, M, 0, 5.0) == (0, 1)

    def test_empty_side_rejected(self):
        with pytest.raises(ValueError):
            find_labels(FOUR_POINTS.points, TWO_CENTERS, 0, 10.0)


class TestSplitCost:
    def test_four_point_example(self):
        assert split_cost(FOUR_POINTS.points, TWO_CENTERS, 0, 0.0) == pytest.approx(1.0)

    def test_semantically_empty_split_keeps_cost(self):
        pts = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
        M = CenterSet([[0.1, 0.0], [50.0, 0.0]])
        pre = cell_cost(pts, M)
        assert split_cost(pts, M, 0, 0.0) == pytest.approx(pre)

    def test_consistent_with_fixed_center_costs(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pts = rng.normal(size=(12, 3))
            M = CenterSet(rng.normal(size=(3, 3)))
            f, theta = 1, float(np.median(pts[:, 1]))
            if (pts[:, f] <= theta).all() or not (pts[:, f] <= theta).any():
                continue
            ll, rl = find_labels(pts, M, f, theta)
            mask = pts[:, f] <= theta
            want = ((pts[mask] - M.centers[ll]) ** 2).sum()
            want += ((pts[~mask] - M.centers[rl]) ** 2).sum()
            assert split_cost(pts, M, f, theta) == pytest.approx(float(want))


class TestScanBestSplit:
    def test_four_point_candidate(self):
        cand = scan_best_split(FOUR_POINTS.points, TWO_CENTERS)
        assert (cand.feature, cand.threshold) == (0, 0.0)
        assert (cand.left_label, cand.right_label) == (0, 1)
        assert cand.post_split_cost == pytest.approx(1.0, rel=1e-12)
        assert cand.gain == pytest.approx(32.0, rel=1e-12)

    def test_identical_points_no_split(self):
        pts = np.ones((5, 3))
        M = CenterSet([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
        assert scan_best_split(pts, M) is None

    def test_matches_naive_enumeration(self):
        rng = np.random.default_rng(17)
        for trial in range(30):
            n = int(rng.integers(2, 41))
            d = int(rng.integers(1, 5))
            k = int(rng.integers(1, 4))
            pts = rng.normal(size=(n, d))
            M = CenterSet(rng.normal(size=(k, d)))
            got = scan_best_split(pts, M)
            want = naive_best_split(pts, M.centers)
            if want is None:
                assert got is None
                continue
            assert (got.feature, got.threshold) == (want[1], want[2])
            assert (got.left_label, got.right_label) == (want[3], want[4])
            assert got.post_split_cost == pytest.approx(want[0], rel=1e-9)

    def test_every_split_at_most_pre_cost(self):
        # splitting never increases the surrogate: probe random valid splits
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 100:
            n = int(rng.integers(3, 25))
            d = int(rng.integers(1, 4))
            pts = rng.normal(size=(n, d))
            M = CenterSet(rng.normal(size=(int(rng.integers(1, 4)), d)))
            f = int(rng.integers(0, d))
            vals = np.unique(pts[:, f])
            if vals.size < 2:
                continue
            theta = float(rng.choice(vals[:-1]))
            pre = cell_cost(pts, M)
            assert split_cost(pts, M, f, theta) <= pre * (1 + 1e-9) + 1e-12
            checked += 1


class TestExpand:
    def blob_fit(self, seed, k=3, n=60, d=3):
        X, _ = gen_gaussian_blobs(k, n, d, separation=6.0, seed=seed)
        ref = fit_reference(X, KMeansConfig(k=k, n_init=3, seed=seed))
        return X, ref

    def test_budget_equal_to_base_returns_unchanged(self):
        X, ref = self.blob_fit(0)
        base = build_imm(X, ref.centers, ref.assignment)
        result = expand(X, ref.centers, base, base.leaf_count)
        assert result.trace == ()
        assert result.tree.leaf_count == base.leaf_count
        assert np.array_equal(
            result.tree.induced_assignment(X).labels,
            base.induced_assignment(X).labels,
        )

    def test_empty_base_single_step(self):
        base = ThresholdTree(FOUR_POINTS)  # single unlabeled root
        result = expand(FOUR_POINTS, TWO_CENTERS, base, 2)
        assert len(result.trace) == 1
        step = result.trace[0]
        assert (step.feature, step.threshold) == (0, 0.0)
        assert (step.left_label, step.right_label) == (0, 1)
        assert step.surrogate_cost == pytest.approx(1.0)
        assert result.tree.induced_assignment().labels.tolist() == [0, 0, 1, 1]

    def test_budget_below_base_rejected(self):
        X, ref = self.blob_fit(1)
        base = build_imm(X, ref.centers, ref.assignment)
        with pytest.raises(ValueError):
            expand(X, ref.centers, base, base.leaf_count - 1)

    def test_full_budget_reaches_reference(self):
        X, ref = self.blob_fit(2, k=3, n=40)
        base = build_imm(X, ref.centers, ref.assignment)
        result = expand(X, ref.centers, base, X.n)
        assert np.array_equal(
            result.tree.induced_assignment(X).labels, ref.assignment.labels
        )
        assert result.final_surrogate == pytest.approx(ref.cost, rel=1e-9)

    def test_trace_monotone_and_replay_consistent(self):
        for seed in (3, 4):
            X, ref = self.blob_fit(seed, k=4, n=80, d=4)
            base = build_imm(X, ref.centers, ref.assignment)
            result = expand(X, ref.centers, base, 4 * 4)
            costs = [result.initial_surrogate] + [s.surrogate_cost for s in result.trace]
            for a, b in zip(costs, costs[1:]):
                assert b <= a * (1 + 1e-9) + 1e-12
            replay_trace(X, ref.centers, base, result)

    def test_kmeans_cost_never_exceeds_surrogate(self):
        X, ref = self.blob_fit(5, k=3, n=90)
        base = build_imm(X, ref.centers, ref.assignment)
        result = expand(X, ref.centers, base, 12)
        assert result.initial_kmeans_cost <= result.initial_surrogate * (1 + 1e-9)
        for step in result.trace:
            assert step.kmeans_cost <= step.surrogate_cost * (1 + 1e-9) + 1e-12

    def test_refinement_is_a_fixed_point(self):
        # once every leaf is pure wrt the reference, the induced clustering
        # equals the reference and later splits carry zero gain
        X, ref = self.blob_fit(6, k=2, n=24, d=2)
        base = build_imm(X, ref.centers, ref.assignment)
        result = expand(X, ref.centers, base, X.n)
        purity_step = None
        tree = base.copy()
        for idx, step in enumerate(result.trace):
            tree.split_leaf(
                step.leaf, step.feature, step.threshold, step.left_label, step.right_label
            )
            pure = all(
                np.unique(ref.assignment.labels[tree.node(i).point_ids]).size <= 1
                for i in tree.leaf_ids()
            )
            if pure:
                purity_step = idx
                break
        assert purity_step is not None
        assert np.array_equal(tree.induced_assignment(X).labels, ref.assignment.labels)
        for step in result.trace[purity_step + 1 :]:
            assert step.gain <= 1e-9 * max(1.0, result.initial_surrogate)

    def test_gain_table_tracks_leaves(self):
        X, ref = self.blob_fit(7)
        base = build_imm(X, ref.centers, ref.assignment)

        def check(state):
            assert sorted(state.gains.keys()) == sorted(state.tree.leaf_ids())
            for leaf, cand in state.gains.items():
                if cand is not None:
                    assert cand.leaf_id == leaf
            return False

        expand(X, ref.centers, base, 9, stop_condition=check)

    def test_stop_condition_halts_expansion(self):
        X, ref = self.blob_fit(8)
        base = build_imm(X, ref.centers, ref.assignment)
        result = expand(
            X, ref.centers, base, X.n, stop_condition=lambda s: len(s.trace) >= 2
        )
        assert len(result.trace) == 2
        assert result.stop_reason == "callback"

    def test_no_split_early_stop(self):
        X = DataMatrix(np.ones((6, 2)))
        M = CenterSet([[1.0, 1.0], [5.0, 5.0]])
        base = ThresholdTree(X)
        result = expand(X, M, base, 4)
        assert result.stop_reason == "no_split"
        assert result.tree.leaf_count == 1

    def test_jobs_do_not_change_the_trace(self):
        X, ref = self.blob_fit(9, k=4, n=100, d=5)
        base = build_imm(X, ref.centers, ref.assignment)
        r1 = expand(X, ref.centers, base, 16, jobs=1)
        r4 = expand(X, ref.centers, base, 16, jobs=4)
        assert r1.trace == r4.trace


def test_unlabeled_multi_leaf_base_rejected():
    tree = ThresholdTree(FOUR_POINTS)
    tree.split_leaf(0, 0, 0.0, None, None)
    with pytest.raises(ValueError, match="unlabeled"):
        expand(FOUR_POINTS, TWO_CENTERS, tree, 4)


def test_imported_tree_without_points_rejected():
    tree = ThresholdTree(FOUR_POINTS, root_label=0)
    restored = ThresholdTree.from_json(tree.to_json())
    with pytest.raises(ValueError, match="built over"):
        expand(FOUR_POINTS, TWO_CENTERS, restored, 2)


@settings(max_examples=150, deadline=None)
@given(
    st.integers(2, 12),
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(0, 10**6),
)
def test_scan_matches_naive_on_tie_heavy_integer_data(n, d, k, seed):
    # small integer grids force exact cost ties between distinct splits,
    # stressing the banded lexicographic tie-break on both routes
    rng = np.random.default_rng(seed)
    pts = rng.integers(-2, 3, size=(n, d)).astype(float)
    M = CenterSet(rng.integers(-2, 3, size=(k, d)).astype(float))
    got = scan_best_split(pts, M)
    want = naive_best_split(pts, M.centers)
    if want is None:
        assert got is None
        return
    assert (got.feature, got.threshold) == (want[1], want[2])
    assert got.post_split_cost == pytest.approx(want[0], rel=1e-9, abs=1e-9)
    assert (got.left_label, got.right_label) == (want[3], want[4])


@settings(max_examples=80, deadline=None)
@given(
    st.integers(2, 16),
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(0, 10**6),
)
def test_full_budget_expansion_reaches_nearest_assignment(n, d, k, seed):
    # with the full leaf budget the tree refines down to (possibly repeated)
    # points; leaves of identical points share a nearest center, so the
    # induced clustering must equal the nearest-center assignment even when
    # the expansion stops early on unsplittable leaves
    rng = np.random.default_rng(seed)
    pts = rng.integers(-2, 3, size=(n, d)).astype(float)
    X = DataMatrix(pts)
    M = CenterSet(rng.integers(-2, 3, size=(k, d)).astype(float))
    d2 = ((pts[:, None, :] - M.centers[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)

    result = expand(X, M, ThresholdTree(X), n)
    induced = result.tree.induced_assignment(X)
    assert np.array_equal(induced.labels, nearest)
    assert result.final_surrogate == pytest.approx(
        float(d2[np.arange(n), nearest].sum()), rel=1e-9, abs=1e-9
    )

    costs = [result.initial_surrogate] + [s.surrogate_cost for s in result.trace]
    slack = 1e-9 * max(1.0, costs[0]) + 1e-12
    assert all(b <= a + slack for a, b in zip(costs, costs[1:]))
    assert result.initial_kmeans_cost <= result.initial_surrogate + slack
    for step in result.trace:
        assert step.kmeans_cost <= step.surrogate_cost + slack
