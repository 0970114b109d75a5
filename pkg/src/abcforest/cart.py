"""Randomized CART induction and prediction.

Trees are grown greedily: at every node a random subset of ``n_try``
candidate features is drawn, and the split ``X_j < t`` minimizing the
weighted child impurity ``N(v1)Q(v1) + N(v2)Q(v2)`` is installed, where Q
is the Gini index for classification and the within-node squared deviation
for regression. Classification nodes are split until pure, regression
nodes until they hold at most ``min_leaf`` records; nodes whose candidate
features admit no split become majority / mean leaves.

Determinism: all node-level randomness comes from a SplitMix64 stream
seeded per tree, thresholds are midpoints of consecutive distinct sorted
values, and ties are broken toward the lowest feature index, then the
smallest threshold, so (records, n_try, seed) fully determine the tree.

The heavy loops are numba-compiled; the tree itself is stored as flat
arrays (feature == -1 marks a leaf).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .seeding import mix64

CLASSIFICATION = "classification"
REGRESSION = "regression"

_U64_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_U64_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_U64_MIX2 = np.uint64(0x94D049BB133111EB)


@dataclass(frozen=True)
class SplitRule:
    """Internal-node rule: route left when ``summaries[feature] < threshold``."""

    feature: int
    threshold: float


@dataclass(frozen=True)
class TreeNode:
    """Linked view of one node; ``rule is None`` marks a leaf."""

    rule: SplitRule | None
    value: float
    count: int
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


def gini(class_freqs) -> float:
    """Gini impurity sum p(1-p) of a normalized class-frequency vector."""
    p = np.asarray(class_freqs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("class frequencies must be a non-empty 1-D vector")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("class frequencies must be nonnegative and sum to 1")
    return float(np.sum(p * (1.0 - p)))


@njit(cache=True, nogil=True, inline="always")
def _sm_next(state):
    state = state + _U64_GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _U64_MIX1
    z = (z ^ (z >> np.uint64(27))) * _U64_MIX2
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True, inline="always")
def _rand_below(z, m):
    # Lemire multiply-shift reduction of the top 32 bits
    return np.int64(((z >> np.uint64(32)) * np.uint64(m)) >> np.uint64(32))


@njit(cache=True, nogil=True)
def _scan_feature(x_col, idx, start, end, y, resp, counts, cleft, n_classes,
                  is_reg, vals):
    """Best threshold for one feature on the node idx[start:end].

    Returns (score, threshold); score = inf when no admissible threshold
    exists. Thresholds are midpoints of consecutive distinct sorted values,
    scanned in increasing order with strict improvement, so the smallest
    optimal threshold is returned.
    """
    m = end - start
    for i in range(m):
        vals[i] = x_col[idx[start + i]]
    order_m = np.argsort(vals[:m], kind="mergesort")
    best = np.inf
    best_t = 0.0
    if is_reg:
        total = 0.0
        total_sq = 0.0
        for i in range(m):
            r = resp[idx[start + i]]
            total += r
            total_sq += r * r
        sl = 0.0
        for p in range(m - 1):
            o = order_m[p]
            sl += resp[idx[start + o]]
            v0 = vals[o]
            v1 = vals[order_m[p + 1]]
            if v0 == v1:
                continue
            n_l = p + 1
            n_r = m - n_l
            sr = total - sl
            score = total_sq - (sl * sl) / n_l - (sr * sr) / n_r
            if score < best:
                best = score
                t = 0.5 * (v0 + v1)
                if t <= v0:
                    t = v1
                best_t = t
    else:
        for c in range(n_classes):
            cleft[c] = 0
        for p in range(m - 1):
            o = order_m[p]
            cleft[y[idx[start + o]]] += 1
            v0 = vals[o]
            v1 = vals[order_m[p + 1]]
            if v0 == v1:
                continue
            n_l = p + 1
            n_r = m - n_l
            s2l = np.int64(0)
            s2r = np.int64(0)
            for c in range(n_classes):
                cl = cleft[c]
                cr = counts[c] - cl
                s2l += cl * cl
                s2r += cr * cr
            score = (n_l - s2l / n_l) + (n_r - s2r / n_r)
            if score < best:
                best = score
                t = 0.5 * (v0 + v1)
                if t <= v0:
                    t = v1
                best_t = t
    return best, best_t


@njit(cache=True, nogil=True)
def _best_split(X, idx, start, end, y, resp, feats, n_feats, counts, cleft,
                n_classes, is_reg, vals):
    """Best (feature, threshold, score) over the candidate features.

    Candidates are scanned in increasing feature index with strict
    improvement, implementing the lowest-feature / smallest-threshold tie
    rule. Returns feature -1 when no candidate admits a split.
    """
    best_j = -1
    best_t = 0.0
    best = np.inf
    for k in range(n_feats):
        j = feats[k]
        score, t = _scan_feature(X[:, j], idx, start, end, y, resp, counts,
                                 cleft, n_classes, is_reg, vals)
        if score < best:
            best = score
            best_j = j
            best_t = t
    return best_j, best_t, best


@njit(cache=True, nogil=True)
def _grow(X, y, resp, sample, n_classes, n_try, min_leaf, is_reg, seed,
          feature, threshold, left, right, value, count, importance):
    """Grow one tree over X[sample]; fills the flat node arrays.

    Returns the number of nodes. Node ids are assigned in creation order
    (children allocated left-then-right when their parent is split), which
    depends only on the tree shape.
    """
    n = sample.shape[0]
    d = X.shape[1]
    state = seed
    idx = sample.copy()
    buf_l = np.empty(n, dtype=np.int64)
    buf_r = np.empty(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    counts = np.zeros(n_classes, dtype=np.int64)
    cleft = np.zeros(n_classes, dtype=np.int64)
    pool = np.empty(d, dtype=np.int64)
    feats = np.empty(d, dtype=np.int64)
    # stack of (node, start, end); preorder, left child popped first
    cap = 2 * n
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0], st_lo[0], st_hi[0] = 0, 0, n
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_lo[top]
        end = st_hi[top]
        m = end - start
        count[node] = m

        # node statistics and stopping rules
        leaf_val = 0.0
        parent_score = 0.0
        stop = False
        if is_reg:
            total = 0.0
            total_sq = 0.0
            for i in range(start, end):
                r = resp[idx[i]]
                total += r
                total_sq += r * r
            leaf_val = total / m
            parent_score = total_sq - (total * total) / m
            if m <= min_leaf:
                stop = True
        else:
            for c in range(n_classes):
                counts[c] = 0
            for i in range(start, end):
                counts[y[idx[i]]] += 1
            present = 0
            best_c = 0
            best_n = np.int64(-1)
            s2 = np.int64(0)
            for c in range(n_classes):
                if counts[c] > 0:
                    present += 1
                if counts[c] > best_n:
                    best_n = counts[c]
                    best_c = c
                s2 += counts[c] * counts[c]
            leaf_val = float(best_c)
            parent_score = m - s2 / m
            if present == 1:
                stop = True

        best_j = -1
        best_t = 0.0
        best_score = np.inf
        if not stop and m >= 2:
            # draw the candidate subset: partial Fisher-Yates, then ascending
            for i in range(d):
                pool[i] = i
            k = n_try if n_try < d else d
            for i in range(k):
                state, z = _sm_next(state)
                r = i + _rand_below(z, d - i)
                tmp = pool[i]
                pool[i] = pool[r]
                pool[r] = tmp
            for i in range(k):
                feats[i] = pool[i]
            for i in range(1, k):
                v = feats[i]
                p = i - 1
                while p >= 0 and feats[p] > v:
                    feats[p + 1] = feats[p]
                    p -= 1
                feats[p + 1] = v
            best_j, best_t, best_score = _best_split(
                X, idx, start, end, y, resp, feats, k, counts, cleft,
                n_classes, is_reg, vals)

        if stop or best_j < 0:
            feature[node] = -1
            threshold[node] = 0.0
            left[node] = -1
            right[node] = -1
            value[node] = leaf_val
            continue

        importance[best_j] += parent_score - best_score

        n_l = 0
        n_r = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_j] < best_t:
                buf_l[n_l] = r
                n_l += 1
            else:
                buf_r[n_r] = r
                n_r += 1
        for i in range(n_l):
            idx[start + i] = buf_l[i]
        for i in range(n_r):
            idx[start + n_l + i] = buf_r[i]

        child_l = n_nodes
        child_r = n_nodes + 1
        n_nodes += 2
        feature[node] = best_j
        threshold[node] = best_t
        left[node] = child_l
        right[node] = child_r
        value[node] = leaf_val
        st_node[top], st_lo[top], st_hi[top] = child_r, start + n_l, end
        top += 1
        st_node[top], st_lo[top], st_hi[top] = child_l, start, start + n_l
        top += 1
    return n_nodes


@njit(cache=True, nogil=True)
def _predict_batch(feature, threshold, left, right, value, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]


class DecisionTree:
    """A grown randomized CART (flat-array storage).

    Classification leaves store 0-based class codes internally; the public
    predict API speaks 1-based model indices.
    """

    def __init__(self, task, feature, threshold, left, right, value, count,
                 importance, n_features, n_classes, n_try, min_leaf, seed):
        self.task = task
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.count = count
        self.importance = importance
        self.n_features = n_features
        self.n_classes = n_classes
        self.n_try = n_try
        self.min_leaf = min_leaf
        self.seed = seed

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, summaries):
        """Route one summary vector to its leaf label / value."""
        x = np.asarray(summaries, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(
                f"expected a summary vector of length {self.n_features}, got shape {x.shape}")
        out = np.empty(1)
        _predict_batch(self.feature, self.threshold, self.left, self.right,
                       self.value, x.reshape(1, -1), out)
        if self.task == CLASSIFICATION:
            return int(out[0]) + 1
        return float(out[0])

    def predict_batch(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected shape (n, {self.n_features})")
        out = np.empty(X.shape[0])
        _predict_batch(self.feature, self.threshold, self.left, self.right,
                       self.value, X, out)
        if self.task == CLASSIFICATION:
            return out.astype(np.int64) + 1
        return out

    @property
    def root(self) -> TreeNode:
        """Linked TreeNode view of the stored arrays (built on demand)."""
        return self._node(0)

    def _node(self, i: int) -> TreeNode:
        if self.feature[i] < 0:
            v = self.value[i]
            if self.task == CLASSIFICATION:
                v = int(v) + 1
            return TreeNode(None, v, int(self.count[i]))
        rule = SplitRule(int(self.feature[i]), float(self.threshold[i]))
        return TreeNode(rule, float(self.value[i]), int(self.count[i]),
                        self._node(int(self.left[i])), self._node(int(self.right[i])))

    def dump(self) -> str:
        """Indented one-rule-per-line text rendering (debugging aid only)."""
        lines = []

        def walk(i, depth):
            pad = "  " * depth
            if self.feature[i] < 0:
                v = self.value[i]
                label = int(v) + 1 if self.task == CLASSIFICATION else v
                lines.append(f"{pad}leaf value={label} n={self.count[i]}")
            else:
                lines.append(f"{pad}if x[{self.feature[i]}] < {self.threshold[i]!r}"
                             f" n={self.count[i]}")
                walk(int(self.left[i]), depth + 1)
                walk(int(self.right[i]), depth + 1)

        walk(0, 0)
        return "\n".join(lines)


def _prepare_targets(y, task, n_classes):
    if task == CLASSIFICATION:
        y = np.asarray(y, dtype=np.int64)
        if y.size and y.min() < 1:
            raise ValueError("classification labels must be 1-based model indices")
        codes = (y - 1).astype(np.int64)
        if n_classes is None:
            n_classes = int(y.max()) if y.size else 0
        resp = np.zeros(1, dtype=np.float64)
        return codes, resp, n_classes
    if task == REGRESSION:
        resp = np.asarray(y, dtype=np.float64)
        codes = np.zeros(1, dtype=np.int64)
        return codes, resp, 1
    raise ValueError(f"unknown task {task!r}")


def best_split(X, y, candidate_features, task=CLASSIFICATION, n_classes=None):
    """Best rule over the given candidate features, or None.

    Returns (SplitRule, score) where score is the weighted child impurity
    N(v1)Q(v1) + N(v2)Q(v2); None when no candidate feature separates the
    records.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    feats = np.asarray(sorted(set(int(f) for f in candidate_features)), dtype=np.int64)
    if feats.size == 0:
        raise ValueError("candidate feature set must be non-empty")
    if feats.min() < 0 or feats.max() >= X.shape[1]:
        raise ValueError("candidate feature index out of range")
    codes, resp, n_classes = _prepare_targets(y, task, n_classes)
    n = X.shape[0]
    idx = np.arange(n, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    counts = np.zeros(max(n_classes, 1), dtype=np.int64)
    cleft = np.zeros(max(n_classes, 1), dtype=np.int64)
    if task == CLASSIFICATION:
        for c in codes:
            counts[c] += 1
    j, t, score = _best_split(X, idx, 0, n, codes, resp, feats, feats.size,
                              counts, cleft, n_classes, task == REGRESSION,
                              vals)
    if j < 0:
        return None
    return SplitRule(int(j), float(t)), float(score)


def grow(X, y, task=CLASSIFICATION, n_try=None, seed=0, n_classes=None,
         min_leaf=None, sample=None):
    """Grow a randomized CART on X[sample] (default: all records).

    ``y`` holds 1-based model indices for classification, responses for
    regression. ``n_try`` defaults to all features.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    n, d = X.shape
    codes, resp, n_classes = _prepare_targets(y, task, n_classes)
    if task == CLASSIFICATION and codes.shape[0] != n:
        raise ValueError("X and y disagree on record count")
    if task == REGRESSION and resp.shape[0] != n:
        raise ValueError("X and y disagree on record count")
    if n_try is None:
        n_try = d
    n_try = int(n_try)
    if not 1 <= n_try <= d:
        raise ValueError(f"n_try must be in [1, {d}]")
    if min_leaf is None:
        min_leaf = 5 if task == REGRESSION else 1
    if sample is None:
        sample = np.arange(n, dtype=np.int64)
    else:
        sample = np.asarray(sample, dtype=np.int64)
        if sample.size == 0:
            raise ValueError("sample must be non-empty")
    cap = 2 * sample.shape[0]
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap, dtype=np.float64)
    count = np.empty(cap, dtype=np.int64)
    importance = np.zeros(d, dtype=np.float64)
    n_nodes = _grow(X, codes, resp, sample, max(n_classes, 1), n_try,
                    int(min_leaf), task == REGRESSION, np.uint64(mix64(seed)),
                    feature, threshold, left, right, value, count, importance)
    return DecisionTree(task, feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
                        left[:n_nodes].copy(), right[:n_nodes].copy(),
                        value[:n_nodes].copy(), count[:n_nodes].copy(),
                        importance, d, n_classes, n_try, int(min_leaf), int(seed))
