"""Histogram split finding and leaf-wise tree growth."""

import heapq
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

LEAF = 0
SPLIT = 1


@dataclass
class Histogram:
    """Per-feature, per-bin sums of gradients, hessians and sample counts."""

    gradients: np.ndarray
    hessians: np.ndarray
    counts: np.ndarray

    def __sub__(self, other: "Histogram") -> "Histogram":
        return Histogram(
            self.gradients - other.gradients,
            self.hessians - other.hessians,
            self.counts - other.counts,
        )

    def __add__(self, other: "Histogram") -> "Histogram":
        return Histogram(
            self.gradients + other.gradients,
            self.hessians + other.hessians,
            self.counts + other.counts,
        )


def build_histogram(
    binned: np.ndarray,
    rows: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    width: int,
) -> Histogram:
    """
    Accumulate a histogram over the given rows.

    Args:
        binned: (n, F) bin codes
        rows: Row indices belonging to the node
        gradients: Weighted gradient per row of binned
        hessians: Weighted hessian per row of binned
        width: Bins per feature including the missing bin

    Returns:
        Histogram with (F, width) arrays
    """
    n_features = binned.shape[1]
    offsets = np.arange(n_features, dtype=np.int64) * width
    flat = (binned[rows].astype(np.int64) + offsets).ravel()
    size = n_features * width
    g = np.bincount(flat, weights=np.repeat(gradients[rows], n_features), minlength=size)
    h = np.bincount(flat, weights=np.repeat(hessians[rows], n_features), minlength=size)
    c = np.bincount(flat, minlength=size)
    return Histogram(g.reshape(n_features, width), h.reshape(n_features, width), c.reshape(n_features, width))


@dataclass(frozen=True)
class SplitInfo:
    """Best split of a node: rows with bin <= threshold go left; missing follows default_left."""

    feature: int
    threshold: int
    gain: float
    default_left: bool


def best_split(
    histogram: Histogram,
    n_bins: np.ndarray,
    l2_lambda: float,
    min_data_in_leaf: int,
    min_split_gain: float = 0.0,
) -> Optional[SplitInfo]:
    """
    Highest-gain feasible split of a node.

    gain = G_L^2/(H_L + l) + G_R^2/(H_R + l) - G^2/(H + l). Missing values
    join the side with the larger hessian sum. Both children need at least
    min_data_in_leaf samples. Ties go to the lowest feature, then the lowest
    bin.

    Args:
        histogram: Node histogram; the last bin of each feature holds missing values
        n_bins: Value bins per feature
        l2_lambda: L2 regularisation on leaf values
        min_data_in_leaf: Minimum samples per child
        min_split_gain: Gains at or below this are rejected

    Returns:
        SplitInfo, or None when no split has positive gain
    """
    g_all, h_all, c_all = histogram.gradients, histogram.hessians, histogram.counts
    width = g_all.shape[1]
    thresholds = width - 2
    if thresholds < 1:
        return None

    g_missing, h_missing, c_missing = g_all[:, -1:], h_all[:, -1:], c_all[:, -1:]
    g_left = np.cumsum(g_all[:, :-1], axis=1)[:, :-1]
    h_left = np.cumsum(h_all[:, :-1], axis=1)[:, :-1]
    c_left = np.cumsum(c_all[:, :-1], axis=1)[:, :-1]
    g_total = g_all.sum(axis=1, keepdims=True)
    h_total = h_all.sum(axis=1, keepdims=True)
    c_total = c_all.sum(axis=1, keepdims=True)
    h_value = h_total - h_missing
    h_right = h_value - h_left

    default_left = h_left >= h_right
    g_l = np.where(default_left, g_left + g_missing, g_left)
    h_l = np.where(default_left, h_left + h_missing, h_left)
    c_l = np.where(default_left, c_left + c_missing, c_left)
    g_r = g_total - g_l
    h_r = h_total - h_l
    c_r = c_total - c_l

    with np.errstate(divide="ignore", invalid="ignore"):
        gain = g_l**2 / (h_l + l2_lambda) + g_r**2 / (h_r + l2_lambda) - g_total**2 / (h_total + l2_lambda)

    valid_bin = np.arange(thresholds)[None, :] < (np.asarray(n_bins)[:, None] - 1)
    feasible = valid_bin & (c_l >= min_data_in_leaf) & (c_r >= min_data_in_leaf) & np.isfinite(gain)
    gain = np.where(feasible, gain, -np.inf)

    best = int(np.argmax(gain))
    f, b = divmod(best, thresholds)
    if not gain[f, b] > max(min_split_gain, 0.0):
        return None
    return SplitInfo(feature=f, threshold=b, gain=float(gain[f, b]), default_left=bool(default_left[f, b]))


def leaf_value(gradient_sum: float, hessian_sum: float, l2_lambda: float) -> float:
    """Regularised Newton step -G / (H + lambda)."""
    return -gradient_sum / (hessian_sum + l2_lambda)


@dataclass
class TreeNode:
    """A node of a grown tree; leaves carry a value, internal nodes a split."""

    node_id: int
    count: int
    value: float
    split: Optional[SplitInfo] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass(frozen=True)
class Tree:
    """Flat array form of a tree, indexed by node id."""

    kind: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.kind.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.kind == LEAF).sum())

    @classmethod
    def from_root(cls, root: TreeNode) -> "Tree":
        nodes: List[TreeNode] = []
        stack = [root]
        while stack:
            node = stack.pop()
            nodes.append(node)
            if not node.is_leaf:
                stack.extend([node.right, node.left])
        nodes.sort(key=lambda n: n.node_id)
        n = len(nodes)
        tree = cls(
            kind=np.zeros(n, dtype=np.int8),
            feature=np.full(n, -1, dtype=np.int64),
            threshold=np.full(n, -1, dtype=np.int64),
            default_left=np.zeros(n, dtype=bool),
            left=np.full(n, -1, dtype=np.int64),
            right=np.full(n, -1, dtype=np.int64),
            value=np.zeros(n, dtype=np.float64),
            count=np.zeros(n, dtype=np.int64),
        )
        for node in nodes:
            i = node.node_id
            tree.value[i] = node.value
            tree.count[i] = node.count
            if not node.is_leaf:
                tree.kind[i] = SPLIT
                tree.feature[i] = node.split.feature
                tree.threshold[i] = node.split.threshold
                tree.default_left[i] = node.split.default_left
                tree.left[i] = node.left.node_id
                tree.right[i] = node.right.node_id
        return tree

    def leaf_index(self, binned: np.ndarray, missing_bin: int) -> np.ndarray:
        """Leaf node id reached by every row of a binned matrix."""
        node = np.zeros(binned.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.kind[node] == SPLIT)
        while active.size:
            current = node[active]
            codes = binned[active, self.feature[current]].astype(np.int64)
            missing = codes == missing_bin
            go_left = np.where(missing, self.default_left[current], codes <= self.threshold[current])
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.kind[node[active]] == SPLIT]
        return node

    def predict_binned(self, binned: np.ndarray, missing_bin: int) -> np.ndarray:
        return self.value[self.leaf_index(binned, missing_bin)]


@dataclass(order=True)
class _Candidate:
    priority: Tuple[float, int]
    node: TreeNode = field(compare=False)
    rows: np.ndarray = field(compare=False)
    histogram: Histogram = field(compare=False)


def _partition(binned: np.ndarray, rows: np.ndarray, split: SplitInfo, missing_bin: int) -> Tuple[np.ndarray, np.ndarray]:
    codes = binned[rows, split.feature].astype(np.int64)
    missing = codes == missing_bin
    go_left = np.where(missing, split.default_left, codes <= split.threshold)
    return rows[go_left], rows[~go_left]


def grow_tree(
    binned: np.ndarray,
    gradients: np.ndarray,
    hessians: np.ndarray,
    rows: np.ndarray,
    n_bins: np.ndarray,
    missing_bin: int,
    num_leaves: int,
    min_data_in_leaf: int,
    l2_lambda: float,
    min_split_gain: float = 0.0,
) -> TreeNode:
    """
    Grow one tree leaf-wise.

    The frontier leaf with the largest split gain is split next, until the
    tree has num_leaves leaves or no leaf has a positive-gain split. The
    smaller child's histogram is built directly and the sibling's is
    obtained by subtraction from the parent.

    Args:
        binned: (n, F) bin codes
        gradients: Per-row gradients, already multiplied by sample weights
        hessians: Per-row hessians, already multiplied by sample weights
        rows: Rows used to grow this tree
        n_bins: Value bins per feature
        missing_bin: Bin code reserved for missing values
        num_leaves: Maximum number of leaves
        min_data_in_leaf: Minimum rows per leaf
        l2_lambda: L2 regularisation
        min_split_gain: Minimum accepted gain

    Returns:
        Root TreeNode
    """
    width = missing_bin + 1
    rows = np.asarray(rows, dtype=np.int64)
    next_id = 0

    def make_leaf(node_rows: np.ndarray) -> TreeNode:
        nonlocal next_id
        g_sum = float(gradients[node_rows].sum())
        h_sum = float(hessians[node_rows].sum())
        node = TreeNode(node_id=next_id, count=int(node_rows.shape[0]), value=leaf_value(g_sum, h_sum, l2_lambda))
        next_id += 1
        return node

    def candidate(node: TreeNode, node_rows: np.ndarray, histogram: Histogram) -> Optional[_Candidate]:
        if node_rows.shape[0] < 2 * min_data_in_leaf:
            return None
        split = best_split(histogram, n_bins, l2_lambda, min_data_in_leaf, min_split_gain)
        if split is None:
            return None
        node.split = split
        return _Candidate((-split.gain, node.node_id), node, node_rows, histogram)

    root_hist = build_histogram(binned, rows, gradients, hessians, width)
    root = make_leaf(rows)
    heap: List[_Candidate] = []
    first = candidate(root, rows, root_hist)
    if first is not None:
        heap.append(first)

    n_leaves = 1
    while heap and n_leaves < num_leaves:
        best = heapq.heappop(heap)
        parent = best.node
        left_rows, right_rows = _partition(binned, best.rows, parent.split, missing_bin)
        if left_rows.shape[0] <= right_rows.shape[0]:
            left_hist = build_histogram(binned, left_rows, gradients, hessians, width)
            right_hist = best.histogram - left_hist
        else:
            right_hist = build_histogram(binned, right_rows, gradients, hessians, width)
            left_hist = best.histogram - right_hist
        parent.left = make_leaf(left_rows)
        parent.right = make_leaf(right_rows)
        n_leaves += 1
        for child, child_rows, child_hist in (
            (parent.left, left_rows, left_hist),
            (parent.right, right_rows, right_hist),
        ):
            entry = candidate(child, child_rows, child_hist)
            if entry is not None:
                heapq.heappush(heap, entry)

    # frontier leaves that were never split keep no split
    for entry in heap:
        entry.node.split = None
    return root
