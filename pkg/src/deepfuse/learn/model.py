"""Trained-model wrapper, training entry points, evaluation and model files.

Model file layout (UTF-8 text)::

    DEEPFUSE-MODEL <major>.<minor>\\n
    <header JSON>\\n
    <body JSON>

The header carries kind, feature_dims, param_fingerprint, hyperparameters,
seed, standardisation flag, training wall time and ``body_sha256`` (hex digest
of the body bytes).  The body holds the learned state; floats are written by
``json`` with shortest round-trip repr, so a reload predicts bit-identically.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CorruptModel, DegenerateData, FingerprintMismatch, VersionMismatch
from .boosting import BoostingParams, GradientBoosting
from .forest import Forest, ForestParams
from .metrics import EvalReport, evaluate_predictions
from .svm import SVC, SVCParams

MODEL_MAGIC = "DEEPFUSE-MODEL"
MODEL_VERSION = (1, 0)

KINDS = ("random_forest", "extra_trees", "gradient_boosting", "svc")
ALIASES = {"rf": "random_forest", "et": "extra_trees", "gb": "gradient_boosting",
           "xgb": "gradient_boosting", "svm": "svc"}


def canonical_kind(kind: str) -> str:
    kind = ALIASES.get(kind.lower(), kind.lower())
    if kind not in KINDS:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {KINDS}")
    return kind


def default_hyperparameters(kind):
    kind = canonical_kind(kind)
    if kind in ("random_forest", "extra_trees"):
        return asdict(ForestParams())
    if kind == "gradient_boosting":
        return asdict(BoostingParams())
    return asdict(SVCParams())


@dataclass
class TrainedModel:
    kind: str
    estimator: object
    feature_dims: int
    param_fingerprint: str
    hyperparameters: dict
    seed: int = 0
    scaler: tuple | None = None  # (mean, std) fitted on the training split
    training_meta: dict = field(default_factory=dict)

    def _prepare(self, X, fingerprint=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if fingerprint is not None and fingerprint != self.param_fingerprint:
            raise FingerprintMismatch(
                f"features were extracted with fingerprint {fingerprint}, the model expects "
                f"{self.param_fingerprint}; re-extract features with the model's settings")
        if X.shape[1] != self.feature_dims:
            raise FingerprintMismatch(f"model expects {self.feature_dims} features, got {X.shape[1]}")
        if self.scaler is not None:
            mean, std = self.scaler
            X = (X - mean) / std
        return X

    def predict(self, X, fingerprint=None):
        return self.estimator.predict(self._prepare(X, fingerprint))


def _fit_scaler(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


def train(kind, ds, hyperparameters=None, seed=0, standardize=False, threads=1) -> TrainedModel:
    """Fit one of the four classifiers on a :class:`~deepfuse.fuse.Dataset`."""
    kind = canonical_kind(kind)
    hp = default_hyperparameters(kind)
    hp.update(hyperparameters or {})
    X = np.asarray(ds.X, dtype=np.float64)
    y = np.asarray(ds.y, dtype=np.int64)
    if len(y) == 0:
        raise DegenerateData("empty training set")
    scaler = _fit_scaler(X) if standardize else None
    if scaler is not None:
        X = (X - scaler[0]) / scaler[1]
    t0 = time.perf_counter()
    if kind in ("random_forest", "extra_trees"):
        est = Forest(kind, ForestParams(**hp), seed).fit(X, y, threads=threads)
    elif kind == "gradient_boosting":
        est = GradientBoosting(BoostingParams(**hp)).fit(X, y)
    else:
        if len(np.unique(y)) < 2:
            raise DegenerateData("SVC needs both classes in the training set")
        est = SVC(SVCParams(**hp)).fit(X, y)
    wall = time.perf_counter() - t0
    meta = {"wall_time_s": wall, "n_train": int(len(y))}
    if kind == "svc":
        meta.update(converged=est.converged, n_iter=est.n_iter)
    return TrainedModel(kind, est, X.shape[1], ds.param_fingerprint, hp, seed, scaler, meta)


def train_random_forest(ds, hp=None, seed=0, **kw):
    return train("random_forest", ds, hp, seed, **kw)


def train_extra_trees(ds, hp=None, seed=0, **kw):
    return train("extra_trees", ds, hp, seed, **kw)


def train_gradient_boosting(ds, hp=None, seed=0, **kw):
    return train("gradient_boosting", ds, hp, seed, **kw)


def train_svc(ds, hp=None, seed=0, **kw):
    return train("svc", ds, hp, seed, **kw)


def evaluate(model: TrainedModel, test) -> EvalReport:
    pred = model.predict(test.X, fingerprint=test.param_fingerprint)
    return evaluate_predictions(test.y, pred)


# -- persistence -------------------------------------------------------------

def _state(model: TrainedModel):
    return model.estimator.to_state()


def _restore(kind, hp, seed, state):
    if kind in ("random_forest", "extra_trees"):
        return Forest.from_state(kind, ForestParams(**hp), seed, state)
    if kind == "gradient_boosting":
        return GradientBoosting.from_state(BoostingParams(**hp), state)
    return SVC.from_state(SVCParams(**hp), state)


def save_model(model: TrainedModel, path) -> None:
    body = {"state": _state(model)}
    if model.scaler is not None:
        body["scaler"] = [model.scaler[0].tolist(), model.scaler[1].tolist()]
    body_text = json.dumps(body, separators=(",", ":"))
    header = {
        "kind": model.kind,
        "feature_dims": model.feature_dims,
        "param_fingerprint": model.param_fingerprint,
        "hyperparameters": model.hyperparameters,
        "seed": model.seed,
        "standardized": model.scaler is not None,
        "training_meta": model.training_meta,
        "body_sha256": hashlib.sha256(body_text.encode()).hexdigest(),
    }
    major, minor = MODEL_VERSION
    Path(path).write_text(f"{MODEL_MAGIC} {major}.{minor}\n"
                          f"{json.dumps(header, sort_keys=True)}\n{body_text}")


def load_model(path) -> TrainedModel:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise CorruptModel(f"{path}: not a text model file ({exc})") from None
    parts = text.split("\n", 2)
    if len(parts) < 3 or not parts[0].startswith(MODEL_MAGIC + " "):
        raise CorruptModel(f"{path}: missing {MODEL_MAGIC} preamble or truncated")
    try:
        major, minor = (int(v) for v in parts[0].split()[1].split("."))
    except ValueError:
        raise CorruptModel(f"{path}: bad version tag {parts[0]!r}") from None
    if major != MODEL_VERSION[0]:
        raise VersionMismatch(f"{path}: model format {major}.{minor}, this build reads "
                              f"{MODEL_VERSION[0]}.x")
    try:
        header = json.loads(parts[1])
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"{path}: unreadable header ({exc})") from None
    body_text = parts[2]
    if hashlib.sha256(body_text.encode()).hexdigest() != header.get("body_sha256"):
        raise CorruptModel(f"{path}: body checksum mismatch (truncated or edited file)")
    try:
        body = json.loads(body_text)
        kind = canonical_kind(header["kind"])
        est = _restore(kind, header["hyperparameters"], header["seed"], body["state"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{path}: cannot rebuild model ({exc})") from None
    scaler = None
    if "scaler" in body:
        scaler = (np.asarray(body["scaler"][0]), np.asarray(body["scaler"][1]))
    return TrainedModel(kind, est, int(header["feature_dims"]), header["param_fingerprint"],
                        header["hyperparameters"], header["seed"], scaler,
                        header.get("training_meta", {}))
