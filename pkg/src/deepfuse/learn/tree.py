"""CART trees stored as flat node arrays.

Labels are binary (0 = real, 1 = fake).  Equal-gain candidates (within
``GAIN_TIE``) resolve to the lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAIN_TIE = 1e-12


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # classification: P(y=1) at the leaf; regression: leaf value
    n_node_samples: np.ndarray

    @property
    def node_count(self):
        return len(self.feature)

    @property
    def depth(self):
        depth = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            nid = node[active]
            go_left = X[rows[active], f[active]] <= self.threshold[nid]
            node[active] = np.where(go_left, self.left[nid], self.right[nid])

    def predict_value(self, X):
        return self.value[self.apply(X)]

    def predict(self, X):
        # leaf majority, ties -> class 0
        return (self.predict_value(X) > 0.5).astype(np.int64)

    def to_state(self):
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_node_samples")}

    @classmethod
    def from_state(cls, state):
        return cls(np.asarray(state["feature"], dtype=np.intp),
                   np.asarray(state["threshold"], dtype=np.float64),
                   np.asarray(state["left"], dtype=np.intp),
                   np.asarray(state["right"], dtype=np.intp),
                   np.asarray(state["value"], dtype=np.float64),
                   np.asarray(state["n_node_samples"], dtype=np.intp))


def gini(pos, n):
    """Binary Gini impurity from a positive count and a total."""
    p1 = pos / n
    p0 = (n - pos) / n
    return 1.0 - p1 ** 2 - p0 ** 2


def gini_gain(pos_total, n, pos_left, n_left):
    n_right = n - n_left
    pos_right = pos_total - pos_left
    return (gini(pos_total, n)
            - (n_left / n) * gini(pos_left, n_left)
            - (n_right / n) * gini(pos_right, n_right))


def _midpoints(lo, hi):
    mid = 0.5 * (lo + hi)
    # adjacent floats: the midpoint may round onto the upper value
    return np.where(mid < hi, mid, lo)


def best_split_sorted(Xn, target, criterion):
    """Exhaustive search over midpoints of consecutive distinct values.

    ``Xn`` is (n, k) with columns already in ascending feature order.
    Returns (column, threshold, gain) or None when no column has two
    distinct values.
    """
    order = np.argsort(Xn, axis=0, kind="stable")
    return _best_from_sorted(np.take_along_axis(Xn, order, axis=0), target[order], criterion)


def _best_from_sorted(xs, ts, criterion):
    """Split search on column-wise sorted values ``xs`` and aligned targets ``ts``."""
    n = xs.shape[0]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    cum = np.cumsum(ts, axis=0)[:-1]
    total = ts.sum(axis=0)
    if criterion == "gini":
        gain = gini_gain(total[None, :], float(n), cum, n_left)
    else:
        # squared-error reduction up to the constant parent term
        gain = cum ** 2 / n_left + (total[None, :] - cum) ** 2 / (n - n_left)
    gain = np.where(valid, gain, -np.inf)
    # gains within GAIN_TIE of the best count as ties, so rounding noise
    # between equivalent partitions cannot decide the split
    hits = gain >= gain.max() - GAIN_TIE
    col = int(np.argmax(hits.any(axis=0)))
    row = int(np.argmax(hits[:, col]))
    thr = float(_midpoints(xs[row, col], xs[row + 1, col]))
    best = gain[row, col]
    if criterion == "mse":
        best = best - total[col] ** 2 / n
    return col, thr, float(best)


def random_split(Xn, target, criterion, rng):
    """One uniform threshold in (min, max) per column; best column wins."""
    lo = Xn.min(axis=0)
    hi = Xn.max(axis=0)
    thr = rng.uniform(lo, hi)
    thr = np.where(thr >= hi, lo, thr)
    left = Xn <= thr[None, :]
    n = Xn.shape[0]
    n_left = left.sum(axis=0).astype(np.float64)
    ok = (n_left > 0) & (n_left < n)
    if not ok.any():
        return None
    sums = (left * target[:, None]).sum(axis=0)
    total = target.sum()
    if criterion == "gini":
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gini_gain(total, float(n), sums, n_left)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = sums ** 2 / n_left + (total - sums) ** 2 / (n - n_left) - total ** 2 / n
    gain = np.where(ok, gain, -np.inf)
    col = int(np.argmax(gain))
    return col, float(thr[col]), float(gain[col])


def _candidates(X, rows, d, max_features, rng):
    """Sorted candidate features for one node.

    Features constant within the node can never split it and are skipped.
    With ``max_features`` the candidates are the first ``max_features``
    non-constant features of a fresh random permutation; the permutation is
    scanned in chunks so wide matrices are not copied at every node.
    """
    if max_features is None or max_features >= d:
        Xn = X[rows]
        return np.flatnonzero(Xn.max(axis=0) > Xn.min(axis=0))
    perm = rng.permutation(d)
    found = []
    need = max_features
    step = max(2 * max_features, 8)
    for start in range(0, d, step):
        chunk = perm[start:start + step]
        block = X[np.ix_(rows, chunk)]
        ok = chunk[block.max(axis=0) > block.min(axis=0)]
        found.append(ok[:need])
        need -= len(found[-1])
        if need == 0:
            break
    return np.sort(np.concatenate(found))


def build_tree(X, target, *, criterion="gini", splitter="best", max_depth=None,
               min_samples_split=2, min_samples_leaf=1, max_features=None,
               rng=None, sample_index=None, leaf_value=None, presorted=False):
    """Grow a tree depth-first.

    ``target`` is the 0/1 label for ``gini`` and the regression target for
    ``mse``.  ``sample_index`` (possibly with repeats, e.g. a bootstrap)
    selects the training rows.  ``leaf_value(rows)`` overrides the stored
    leaf value; by default it is the mean target of the leaf.

    ``presorted`` sorts every column once up front and partitions that
    order at each split instead of re-sorting.  Only valid without repeated
    rows in ``sample_index``.  An array passed here is taken as that root
    order (row ids sorted per column), letting callers reuse it.
    """
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = X.shape[1]
    if sample_index is None:
        sample_index = np.arange(X.shape[0])
    if max_depth is None:
        max_depth = np.iinfo(np.int64).max
    feature, threshold, left, right, value, counts = [], [], [], [], [], []
    go_left_mask = np.zeros(X.shape[0], dtype=bool)

    def new_node(rows):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(target[rows].mean()) if leaf_value is None else float(leaf_value(rows)))
        counts.append(len(rows))
        return len(feature) - 1

    root = new_node(sample_index)
    # with ``presorted`` each stack entry carries its rows sorted per column
    if isinstance(presorted, np.ndarray):
        order0 = presorted
    elif presorted:
        order0 = sample_index[np.argsort(X[sample_index], axis=0, kind="stable")]
    else:
        order0 = None
    stack = [(root, sample_index, 0, order0)]
    while stack:
        node, rows, depth, node_order = stack.pop()
        t = target[rows]
        if (depth >= max_depth or len(rows) < max(min_samples_split, 2 * min_samples_leaf)
                or t.min() == t.max()):
            continue
        cand = _candidates(X, rows, d, max_features, rng)
        if cand.size == 0:
            continue
        sub = X[np.ix_(rows, cand)]
        if splitter == "best" and node_order is not None:
            oc = node_order[:, cand]
            found = _best_from_sorted(X[oc, cand[None, :]], target[oc], criterion)
        elif splitter == "best":
            found = best_split_sorted(sub, t, criterion)
        else:
            found = random_split(sub, t, criterion, rng)
        if found is None:
            continue
        col, thr, _gain = found
        go_left = sub[:, col] <= thr
        n_left = int(go_left.sum())
        if n_left < min_samples_leaf or len(rows) - n_left < min_samples_leaf:
            continue
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = int(cand[col])
        threshold[node] = thr
        li = new_node(lrows)
        ri = new_node(rrows)
        left[node], right[node] = li, ri
        # push right first so the left subtree is numbered first
        lorder = rorder = None
        if node_order is not None:
            go_left_mask[rows] = go_left
            m = go_left_mask[node_order.T]
            lorder = node_order.T[m].reshape(d, n_left).T
            rorder = node_order.T[~m].reshape(d, len(rows) - n_left).T
        stack.append((ri, rrows, depth + 1, rorder))
        stack.append((li, lrows, depth + 1, lorder))

    return Tree(np.asarray(feature, dtype=np.intp), np.asarray(threshold),
                np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
                np.asarray(value), np.asarray(counts, dtype=np.intp))


def leaf_rows(tree: Tree, X, rows):
    """Map leaf id -> training row indices that land there."""
    leaves = tree.apply(X[rows])
    out = {}
    for leaf in np.unique(leaves):
        out[int(leaf)] = rows[leaves == leaf]
    return out
