"""Random forest and extremely randomised trees (binary, Gini)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .tree import Tree, build_tree


def resolve_max_features(max_features, n_features):
    if max_features is None:
        return None
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(max_features, float):
        return max(1, int(max_features * n_features))
    return max(1, min(int(max_features), n_features))


def tree_rng(seed, index):
    """Independent stream per (seed, tree index); thread count never matters."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


@dataclass
class ForestParams:
    n_trees: int = 100
    max_features: object = "sqrt"
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1


@dataclass
class Forest:
    """Majority vote over CART trees; a tied vote goes to class 0."""

    kind: str  # "random_forest" | "extra_trees"
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0
    trees: list = field(default_factory=list)

    @property
    def bootstrap(self):
        return self.kind == "random_forest"

    @property
    def splitter(self):
        return "best" if self.kind == "random_forest" else "random"

    def _grow(self, X, y, index):
        rng = tree_rng(self.seed, index)
        n = X.shape[0]
        rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
        p = self.params
        return build_tree(X, y, criterion="gini", splitter=self.splitter,
                          max_depth=p.max_depth, min_samples_split=p.min_samples_split,
                          min_samples_leaf=p.min_samples_leaf,
                          max_features=resolve_max_features(p.max_features, X.shape[1]),
                          rng=rng, sample_index=rows)

    def fit(self, X, y, threads=1):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        idx = range(self.params.n_trees)
        if threads and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                self.trees = list(pool.map(lambda i: self._grow(X, y, i), idx))
        else:
            self.trees = [self._grow(X, y, i) for i in idx]
        return self

    def vote_fraction(self, X):
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for t in self.trees:
            votes += t.predict(X)
        return (2 * votes > len(self.trees)).astype(np.int64)

    def to_state(self):
        return {"trees": [t.to_state() for t in self.trees]}

    @classmethod
    def from_state(cls, kind, params, seed, state):
        return cls(kind, params, seed, [Tree.from_state(s) for s in state["trees"]])
