"""Greedy tree expansion under a fixed-center surrogate cost.

The expansion loop repeatedly splits the leaf whose best split buys the
largest drop in surrogate cost, relabels the two children with their best
reference centers, and rescans only those children. Because the centers
never move, the per-leaf costs are independent and the whole loop needs no
global recomputation.

The split scan avoids evaluating every (threshold, center) pair from
scratch. For a cell C and center mu,

    sum_{x in C} |x - mu|^2 = sum |x|^2 - 2 <sum_{x in C} x, mu> + |C| |mu|^2,

and the first term does not depend on the split, so ranking splits only
needs running inner products <x, mu> accumulated in sorted feature order.
One sort per feature plus an O(k) update per threshold gives
O(d k n + d n log n) per scanned leaf.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from xkmeans.core import CenterSet, DataMatrix, best_center
from xkmeans.tree import ThresholdTree

__all__ = [
    "SplitCandidate",
    "TraceStep",
    "ExpansionState",
    "ExpandResult",
    "cell_cost",
    "find_labels",
    "split_cost",
    "scan_best_split",
    "root_tree",
    "expand",
]

_REL_TOL = 1e-9
_BLOCK = 64  # features vectorized together in the scan


@dataclass(frozen=True)
class SplitCandidate:
    leaf_id: int
    feature: int
    threshold: float
    left_label: int
    right_label: int
    post_split_cost: float
    gain: float


@dataclass(frozen=True)
class TraceStep:
    step: int
    leaf: int
    feature: int
    threshold: float
    left_label: int
    right_label: int
    gain: float
    surrogate_cost: float
    kmeans_cost: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "leaf": self.leaf,
            "feature": self.feature,
            "threshold": self.threshold,
            "left_label": self.left_label,
            "right_label": self.right_label,
            "gain": self.gain,
            "surrogate_cost": self.surrogate_cost,
            "kmeans_cost": self.kmeans_cost,
        }


@dataclass
class ExpansionState:
    """Mutable view of an in-progress expansion, passed to stop callbacks."""

    tree: ThresholdTree
    centers: CenterSet
    gains: dict[int, SplitCandidate | None]
    trace: list[TraceStep]
    surrogate_cost: float
    kmeans_cost: float


@dataclass(frozen=True)
class ExpandResult:
    tree: ThresholdTree
    trace: tuple[TraceStep, ...]
    initial_surrogate: float
    initial_kmeans_cost: float
    stop_reason: str  # "budget", "no_split", or "callback"

    @property
    def final_surrogate(self) -> float:
        return self.trace[-1].surrogate_cost if self.trace else self.initial_surrogate


def cell_cost(points, M: CenterSet) -> float:
    """Cost of one cell against its single best fixed center."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] == 0:
        return 0.0
    best = np.inf
    for c in M.centers:
        diff = points - c
        best = min(best, float(np.einsum("ij,ij->", diff, diff)))
    return best


def _side_costs(points, M: CenterSet, feature: int, threshold: float):
    points = np.asarray(points, dtype=np.float64)
    mask = points[:, feature] <= threshold
    left, right = points[mask], points[~mask]
    if left.shape[0] == 0 or right.shape[0] == 0:
        raise ValueError(f"split on feature {feature} at {threshold} leaves a side empty")
    out = []
    for side in (left, right):
        costs = np.empty(M.k)
        for j, c in enumerate(M.centers):
            diff = side - c
            costs[j] = np.einsum("ij,ij->", diff, diff)
        j = int(np.argmin(costs))
        out.append((j, float(costs[j])))
    return out[0][0], out[0][1], out[1][0], out[1][1]


def find_labels(points, M: CenterSet, feature: int, threshold: float) -> tuple[int, int]:
    """Best reference center for each side of a split (tie: lowest index)."""
    ll, _, rl, _ = _side_costs(points, M, feature, threshold)
    return ll, rl


def split_cost(points, M: CenterSet, feature: int, threshold: float) -> float:
    """Surrogate cost of the two cells a split produces."""
    _, lc, _, rc = _side_costs(points, M, feature, threshold)
    return lc + rc


def _block_ranges(d: int, jobs: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, d, jobs + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]


def scan_best_split(
    points, M: CenterSet, *, leaf_id: int = -1, jobs: int = 1
) -> SplitCandidate | None:
    """Best candidate over all (feature, point-value threshold) pairs.

    Thresholds sit at distinct point values, excluding each feature's max so
    both sides stay nonempty. Returns None when no feature has two distinct
    values. Candidates within 1e-9 relative of the best cost are treated as
    tied and resolved to the lowest (feature, threshold); distinct splits
    can have algebraically identical costs (any split whose sides keep the
    parent's center does), so an exact-equality tie-break would be at the
    mercy of summation order. The result does not depend on the parallelism
    degree.
    """
    points = np.asarray(points, dtype=np.float64)
    m, d = points.shape
    if m < 2:
        return None
    centers = M.centers
    P = points @ centers.T
    m2 = np.einsum("ij,ij->i", centers, centers)
    s_tot = P.sum(axis=0)
    sumsq = float(np.einsum("ij,ij->", points, points))
    pre_score = float((-2.0 * s_tot + m * m2).min())
    tol = _REL_TOL * max(1.0, abs(sumsq + pre_score))
    order = np.argsort(points, axis=0, kind="stable")
    counts = np.arange(1, m, dtype=np.float64)[:, None, None]

    def scan_range(f0, f1):
        entries = []  # per-feature best: (score, feature, theta, left, right)
        for c0 in range(f0, f1, _BLOCK):
            cols = np.arange(c0, min(c0 + _BLOCK, f1))
            ord_blk = order[:, cols]
            sv = np.take_along_axis(points[:, cols], ord_blk, axis=0)
            valid = sv[:-1] < sv[1:]
            if not valid.any():
                continue
            cum = np.cumsum(P[ord_blk], axis=0)[:-1]
            lbest = (-2.0 * cum + counts * m2).min(axis=2)
            rbest = (-2.0 * (s_tot - cum) + (m - counts) * m2).min(axis=2)
            tot = np.where(valid, lbest + rbest, np.inf)
            s_min = tot.min(axis=0)
            t_star = (tot <= s_min + tol).argmax(axis=0)  # first near-tied row
            width = np.arange(cols.size)
            s_star = tot[t_star, width]
            # side labels only for each column's chosen row
            cum_star = cum[t_star, width, :]
            n_left = (t_star + 1.0)[:, None]
            ll_vec = (-2.0 * cum_star + n_left * m2).argmin(axis=1)
            rl_vec = (-2.0 * (s_tot - cum_star) + (m - n_left) * m2).argmin(axis=1)
            for w in np.flatnonzero(np.isfinite(s_star)):
                t = int(t_star[w])
                entries.append(
                    (
                        float(s_star[w]),
                        int(cols[w]),
                        float(sv[t, w]),
                        int(ll_vec[w]),
                        int(rl_vec[w]),
                    )
                )
        return entries

    if jobs <= 1:
        found = scan_range(0, d)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            found = [
                e
                for chunk in pool.map(lambda r: scan_range(*r), _block_ranges(d, jobs))
                for e in chunk
            ]
    if not found:
        return None
    cutoff = min(e[0] for e in found) + tol
    score, feature, theta, ll, rl = min(
        (e for e in found if e[0] <= cutoff), key=lambda e: (e[1], e[2])
    )

    post_cost = sumsq + score
    gain = pre_score - score
    if -tol < gain < 0.0:
        gain = 0.0
    if -tol < post_cost < 0.0:
        post_cost = 0.0
    return SplitCandidate(leaf_id, feature, theta, ll, rl, post_cost, gain)


def root_tree(X: DataMatrix, M: CenterSet) -> ThresholdTree:
    """Single-leaf tree labeled with the best center for the whole dataset."""
    label, _ = best_center(X, np.arange(X.n), M)
    return ThresholdTree(X, root_label=label)


class _ClusterAggregates:
    """Per-cluster count / sum / sum-of-squares, for O(kd) induced-cost updates."""

    def __init__(self, pts: np.ndarray, labels: np.ndarray, k: int):
        self.pts = pts
        self.count = np.bincount(labels, minlength=k).astype(np.int64)
        self.sums = np.zeros((k, pts.shape[1]))
        np.add.at(self.sums, labels, pts)
        sq = np.einsum("ij,ij->i", pts, pts)
        self.sumsq = np.zeros(k)
        np.add.at(self.sumsq, labels, sq)

    def move(self, ids: np.ndarray, src: int, dst: int) -> None:
        if ids.size == 0 or src == dst:
            return
        block = self.pts[ids]
        s = block.sum(axis=0)
        q = float(np.einsum("ij,ij->", block, block))
        self.sums[src] -= s
        self.sums[dst] += s
        self.sumsq[src] -= q
        self.sumsq[dst] += q
        self.count[src] -= ids.size
        self.count[dst] += ids.size

    def cost(self) -> float:
        nz = self.count > 0
        per = self.sumsq[nz] - np.einsum(
            "ij,ij->i", self.sums[nz], self.sums[nz]
        ) / self.count[nz]
        return float(np.maximum(per, 0.0).sum())


def expand(
    X: DataMatrix,
    M: CenterSet,
    base: ThresholdTree,
    k_prime: int,
    jobs: int = 1,
    stop_condition: Callable[[ExpansionState], bool] | None = None,
) -> ExpandResult:
    """Grow `base` to k_prime leaves by repeatedly taking the max-gain split.

    Zero-gain splits are taken as long as a valid split exists; a leaf whose
    points are all identical is skipped, and the loop ends early once every
    leaf is unsplittable. Ties on gain go to the lowest leaf id. The input
    tree is not modified. `stop_condition`, when given, is checked after
    every step and ends the expansion early when it returns True.
    """
    if M.d != X.d:
        raise ValueError("centers and data disagree on dimension")
    if k_prime < base.leaf_count:
        raise ValueError(f"budget {k_prime} is below the base leaf count {base.leaf_count}")
    tree = base.copy()
    leaves = tree.leaf_ids()
    if len(leaves) == 1 and tree.node(leaves[0]).label is None:
        lab, _ = best_center(X, tree.node(leaves[0]).point_ids, M)
        tree.set_leaf_label(leaves[0], lab)
    for i in leaves:
        node = tree.node(i)
        if node.point_ids is None:
            raise ValueError("expansion requires a tree built over the dataset")
        if node.label is None:
            raise ValueError(f"base leaf {i} is unlabeled")

    pts = X.points
    leaf_cost: dict[int, float] = {}
    gains: dict[int, SplitCandidate | None] = {}
    labels = np.empty(X.n, dtype=np.int64)
    for i in leaves:
        node = tree.node(i)
        cell = pts[node.point_ids]
        leaf_cost[i] = cell_cost(cell, M)
        gains[i] = scan_best_split(cell, M, leaf_id=i, jobs=jobs)
        labels[node.point_ids] = node.label

    agg = _ClusterAggregates(pts, labels, M.k)
    surrogate = float(sum(leaf_cost.values()))
    kcost = agg.cost()
    trace: list[TraceStep] = []
    state = ExpansionState(tree, M, gains, trace, surrogate, kcost)
    initial_surrogate, initial_kmeans = surrogate, kcost

    stop_reason = "budget"
    step = 0
    while tree.leaf_count < k_prime:
        best_leaf = None
        for i, cand in gains.items():
            if cand is None:
                continue
            if best_leaf is None or cand.gain > gains[best_leaf].gain:
                best_leaf = i
        if best_leaf is None:
            stop_reason = "no_split"
            break

        cand = gains.pop(best_leaf)
        old_label = tree.node(best_leaf).label
        cell_ids = tree.node(best_leaf).point_ids
        ll, lc, rl, rc = _side_costs(pts[cell_ids], M, cand.feature, cand.threshold)
        lid, rid = tree.split_leaf(best_leaf, cand.feature, cand.threshold, ll, rl)
        left_ids = tree.node(lid).point_ids
        right_ids = tree.node(rid).point_ids
        if ll != old_label:
            agg.move(left_ids, old_label, ll)
            labels[left_ids] = ll
        if rl != old_label:
            agg.move(right_ids, old_label, rl)
            labels[right_ids] = rl

        prev_cost = leaf_cost.pop(best_leaf)
        leaf_cost[lid] = lc
        leaf_cost[rid] = rc
        gains[lid] = scan_best_split(pts[left_ids], M, leaf_id=lid, jobs=jobs)
        gains[rid] = scan_best_split(pts[right_ids], M, leaf_id=rid, jobs=jobs)

        surrogate = float(sum(leaf_cost.values()))
        kcost = agg.cost()
        gain = prev_cost - (lc + rc)
        if -_REL_TOL * max(1.0, abs(prev_cost)) < gain < 0.0:
            gain = 0.0
        step += 1
        trace.append(
            TraceStep(
                step, best_leaf, cand.feature, cand.threshold, ll, rl,
                gain, surrogate, kcost,
            )
        )
        state.surrogate_cost = surrogate
        state.kmeans_cost = kcost
        if stop_condition is not None and stop_condition(state):
            stop_reason = "callback"
            break

    return ExpandResult(tree, tuple(trace), initial_surrogate, initial_kmeans, stop_reason)
