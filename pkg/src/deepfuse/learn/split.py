from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ClassTooSmall


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def split_indices(y, spec: SplitSpec = SplitSpec()):
    """Sorted (train_rows, test_rows).  Stratified splits round each class's
    train share and keep at least one sample of it on both sides."""
    y = np.asarray(y)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        n = len(y)
        perm = rng.permutation(n)
        k = min(max(int(round(spec.train_fraction * n)), 1), n - 1)
        return np.sort(perm[:k]), np.sort(perm[k:])
    train, test = [], []
    for label in (0, 1):
        rows = np.flatnonzero(y == label)
        if len(rows) < 2:
            name = "real" if label == 0 else "fake"
            raise ClassTooSmall(f"class '{name}' has {len(rows)} sample(s); need at least 2")
        perm = rng.permutation(rows)
        k = min(max(int(round(spec.train_fraction * len(rows))), 1), len(rows) - 1)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(ds, spec: SplitSpec = SplitSpec()):
    tr, te = split_indices(ds.y, spec)
    return ds.subset(tr), ds.subset(te)
