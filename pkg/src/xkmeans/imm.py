"""Base tree with exactly k leaves, built by iterative mistake minimization.

Each node is split by the feature-threshold pair separating the fewest
points from their own reference center, subject to sending at least one
center to each side; recursion stops when a node holds a single center,
which becomes the leaf's label. Points already separated from their center
higher up ride along for leaf membership but cannot be separated again, so
they are excluded from the mistake counts below that node.

A (point, center) pair is separated by threshold t exactly when t lies in
[min(p_i, c_i), max(p_i, c_i)), so per feature the mistake counts for every
candidate fall out of comparing both pair endpoints against the candidate
values at once. Candidate thresholds are the distinct point and center
coordinate values inside [min center coord, max center coord); restricting
to center coordinates alone can miss splits with strictly fewer mistakes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from xkmeans.core import Assignment, CenterSet, DataMatrix
from xkmeans.tree import ThresholdTree

__all__ = ["ImmNodeState", "count_mistakes", "best_mistake_split", "build_imm"]


@dataclass(frozen=True)
class ImmNodeState:
    """Points and centers alive at one node during construction."""

    point_ids: np.ndarray
    center_ids: np.ndarray


def count_mistakes(points, labels, centers, feature: int, threshold: float) -> int:
    """Number of points routed to the opposite side of their own center.

    `labels` index rows of `centers`; every labeled center is assumed to
    be present at the node under consideration.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    centers = np.asarray(centers, dtype=np.float64)
    if points.shape[0] != labels.shape[0]:
        raise ValueError("one label per point required")
    p = points[:, feature] <= threshold
    c = centers[labels, feature] <= threshold
    return int(np.sum(p != c))


def best_mistake_split(
    X: DataMatrix, M: CenterSet, reference: Assignment, state: ImmNodeState
) -> tuple[int, float, int]:
    """Minimum-mistake split of a node (tie: lowest feature, lowest threshold).

    Only candidates routing at least one point to each side are considered
    while any exist; if none do, center separation alone decides.
    """
    if state.center_ids.size < 2:
        raise ValueError("node must contain at least two centers")
    pts = X.points[state.point_ids]
    labs = reference.labels[state.point_ids]
    elig = np.isin(labs, state.center_ids)
    epts = pts[elig]
    ecenters = M.centers[labs[elig]]
    m = pts.shape[0]
    cvals = M.centers[state.center_ids]
    cmin = cvals.min(axis=0)
    cmax = cvals.max(axis=0)

    # transposed copies so the per-feature loop reads contiguous rows; a pair
    # is separated by theta exactly when theta falls in [min(p, c), max(p, c))
    pts_t = np.ascontiguousarray(pts.T)
    have_elig = epts.shape[0] > 0
    if have_elig:
        epts_t = np.ascontiguousarray(epts.T)
        ecen_t = np.ascontiguousarray(ecenters.T)

    features = np.flatnonzero(cmin < cmax)

    def candidates_for(f):
        col_c = cvals[:, f]
        in_window = col_c[(col_c >= cmin[f]) & (col_c < cmax[f])]
        col = pts_t[f]
        window_pts = col[(col >= cmin[f]) & (col < cmax[f])]
        return np.unique(np.concatenate([window_pts, in_window]))

    def mistake_counts(f, cand):
        if not have_elig:
            return np.zeros(cand.size, dtype=np.int64)
        sep = (epts_t[f][:, None] <= cand) != (ecen_t[f][:, None] <= cand)
        return sep.sum(axis=0)

    best = None  # (mistakes, feature, theta) over two-sided candidates
    for f in features:
        f = int(f)
        cand = candidates_for(f)
        if cand.size == 0 or m == 0:
            continue
        left_counts = (pts_t[f][:, None] <= cand).sum(axis=0)
        two_sided = np.flatnonzero((left_counts > 0) & (left_counts < m))
        if two_sided.size == 0:
            continue
        counts = mistake_counts(f, cand)
        j = two_sided[int(np.argmin(counts[two_sided]))]
        if best is None or counts[j] < best[0]:
            best = (int(counts[j]), f, float(cand[j]))

    fallback = None  # only consulted when no candidate has points on both sides
    if best is None:
        for f in features:
            f = int(f)
            cand = candidates_for(f)
            if cand.size == 0:
                continue
            counts = mistake_counts(f, cand)
            j = int(np.argmin(counts))
            if fallback is None or counts[j] < fallback[0]:
                fallback = (int(counts[j]), f, float(cand[j]))

    chosen = best if best is not None else fallback
    if chosen is None:
        raise ValueError("centers are identical on every feature; no split exists")
    mistakes, feature, theta = chosen
    return feature, theta, mistakes


def build_imm(X: DataMatrix, M: CenterSet, reference: Assignment) -> ThresholdTree:
    """Recursively split until every leaf holds one center; k leaves total."""
    if M.d != X.d:
        raise ValueError("centers and data disagree on dimension")
    if reference.n != X.n:
        raise ValueError("reference assignment does not match the dataset")
    if np.unique(M.centers, axis=0).shape[0] != M.k:
        raise ValueError("reference centers must be distinct")
    if reference.labels.size and reference.labels.max() >= M.k:
        raise ValueError("reference label out of range")

    tree = ThresholdTree(X)
    stack = [(tree.root, np.arange(M.k))]
    while stack:
        leaf_id, center_ids = stack.pop()
        if center_ids.size == 1:
            tree.set_leaf_label(leaf_id, int(center_ids[0]))
            continue
        state = ImmNodeState(tree.node(leaf_id).point_ids, center_ids)
        feature, theta, _ = best_mistake_split(X, M, reference, state)
        side = M.centers[center_ids, feature] <= theta
        left_id, right_id = tree.split_leaf(
            leaf_id, feature, theta, None, None, allow_empty_side=True
        )
        stack.append((right_id, center_ids[~side]))
        stack.append((left_id, center_ids[side]))
    return tree
