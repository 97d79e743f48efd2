"""Gradient-boosted regression trees under the logistic loss."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import Tree, build_tree

PRIOR_CLIP = 1e-6


def sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def log_loss_terms(score, y):
    """Per-sample logistic loss log(1 + e^s) - y s, stable for large |s|."""
    return np.logaddexp(0.0, score) - y * score


def log_loss(score, y):
    return float(np.mean(log_loss_terms(score, y)))


@dataclass
class BoostingParams:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1


@dataclass
class GradientBoosting:
    params: BoostingParams = field(default_factory=BoostingParams)
    init_score: float = 0.0
    trees: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)

    def fit(self, X, y):
        """Each round fits a depth-limited squared-error tree to y - p and
        replaces its leaves with shrunken Newton steps sum(y - p) / sum(p(1-p)).

        A leaf step that would raise that leaf's loss is halved until it does
        not, so the training loss never increases.
        """
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        p0 = np.clip(y.mean(), PRIOR_CLIP, 1.0 - PRIOR_CLIP)
        self.init_score = float(np.log(p0 / (1.0 - p0)))
        score = np.full(len(y), self.init_score)
        self.trees = []
        self.train_loss = [log_loss(score, y)]
        if y.min() == y.max():
            return self
        p = self.params
        order = np.argsort(X, axis=0, kind="stable")  # shared by every round
        for _ in range(p.n_rounds):
            prob = sigmoid(score)
            resid = y - prob
            hess = prob * (1.0 - prob)
            tree = build_tree(X, resid, criterion="mse", splitter="best",
                              max_depth=p.max_depth, min_samples_leaf=p.min_samples_leaf,
                              presorted=order)
            leaves = tree.apply(X)
            for leaf in np.flatnonzero(tree.feature < 0):
                rows = leaves == leaf
                step = p.learning_rate * resid[rows].sum() / max(hess[rows].sum(), 1e-12)
                before = log_loss_terms(score[rows], y[rows]).sum()
                for _halving in range(60):
                    if log_loss_terms(score[rows] + step, y[rows]).sum() <= before:
                        break
                    step *= 0.5
                else:
                    step = 0.0
                tree.value[leaf] = step
                score[rows] += step
            self.trees.append(tree)
            self.train_loss.append(log_loss(score, y))
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.full(X.shape[0], self.init_score)
        for t in self.trees:
            score += t.predict_value(X)
        return score

    def predict_proba(self, X):
        return sigmoid(self.decision_function(X))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_state(self):
        return {"init_score": self.init_score, "train_loss": self.train_loss,
                "trees": [t.to_state() for t in self.trees]}

    @classmethod
    def from_state(cls, params, state):
        return cls(params, state["init_score"], [Tree.from_state(s) for s in state["trees"]],
                   list(state["train_loss"]))
