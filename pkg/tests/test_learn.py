import warnings

import numpy as np
import pytest

from deepfuse.errors import (ClassTooSmall, CorruptModel, DegenerateData, FingerprintMismatch,
                             VersionMismatch)
from deepfuse.fuse import Dataset
from deepfuse.learn import (SplitSpec, evaluate, evaluate_predictions, load_model, report_from_counts,
                            save_model, split_indices, stratified_split, train)
from deepfuse.learn.boosting import GradientBoosting, log_loss
from deepfuse.learn.forest import Forest, ForestParams
from deepfuse.learn.svm import SVC, SVCParams, kernel_matrix, kkt_violations
from deepfuse.learn.tree import build_tree

from oracles import blobs, depth2_tree_shatters_xor, exhaustive_best_stump, gini, linearly_separable


def dataset(X, y, fp="fp"):
    return Dataset(X, y, tuple(str(i) for i in range(len(y))), "hog", fp)


@pytest.fixture(scope="module")
def blob_data():
    X, y = blobs(seed=7, n_per_class=100, sep=4.0)
    assert linearly_separable(X, y)
    return X, y


# -- split -------------------------------------------------------------------

def test_split_exact_ratio_and_determinism():
    y = np.r_[np.zeros(100, int), np.ones(100, int)]
    tr, te = split_indices(y, SplitSpec(0.8, seed=3))
    assert np.sum(y[tr] == 0) == 80 and np.sum(y[tr] == 1) == 80
    assert np.sum(y[te] == 0) == 20 and np.sum(y[te] == 1) == 20
    assert not set(tr) & set(te) and len(tr) + len(te) == 200
    tr2, te2 = split_indices(y, SplitSpec(0.8, seed=3))
    assert np.array_equal(tr, tr2) and np.array_equal(te, te2)


def test_split_proportions_within_one_sample():
    y = np.r_[np.zeros(37, int), np.ones(11, int)]
    for frac in (0.5, 0.7, 0.8, 0.9):
        tr, _ = split_indices(y, SplitSpec(frac))
        for label, n in ((0, 37), (1, 11)):
            assert abs(np.sum(y[tr] == label) - frac * n) <= 1


def test_split_class_too_small():
    with pytest.raises(ClassTooSmall):
        split_indices([0, 0, 0, 1])
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=1.0)


def test_stratified_split_subsets_dataset():
    X, y = blobs(0, 10)
    train_ds, test_ds = stratified_split(dataset(X, y))
    assert len(train_ds) == 16 and len(test_ds) == 4
    assert set(train_ds.sources).isdisjoint(test_ds.sources)


# -- trees -------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_stump_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(10, 60), rng.integers(1, 6)
    X = np.round(rng.normal(size=(n, d)), 1)
    y = rng.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    tree = build_tree(X, y, max_depth=1)
    gain, f, thr = exhaustive_best_stump(X, y)
    assert (tree.feature[0], tree.threshold[0]) == (f, pytest.approx(thr, abs=1e-12))
    left = y[X[:, f] <= tree.threshold[0]]
    right = y[X[:, f] > tree.threshold[0]]
    got = gini(list(y)) - len(left) / n * gini(list(left)) - len(right) / n * gini(list(right))
    assert got == pytest.approx(gain, abs=1e-12)


@pytest.mark.parametrize("kind", ["random_forest", "extra_trees"])
def test_forests_fit_separable_blobs(kind, blob_data):
    X, y = blob_data
    model = train(kind, dataset(X, y), {"n_trees": 25}, seed=1)
    assert np.mean(model.predict(X) == y) >= 0.99


def test_root_threshold_in_margin_gap():
    rng = np.random.default_rng(0)
    x = np.r_[rng.uniform(-3, -1, 50), rng.uniform(1, 3, 50)]
    y = (x >= 0).astype(int)
    X = x[:, None]
    _, f, thr = exhaustive_best_stump(X, y)
    assert -1 <= thr <= 1
    forest = Forest("random_forest", ForestParams(n_trees=20), seed=4).fit(X, y)
    for tree in forest.trees:
        assert tree.feature[0] == 0
        assert x[y == 0].max() < tree.threshold[0] < x[y == 1].min()


def test_extra_trees_deterministic_and_skip_constant_feature(blob_data):
    X, y = blob_data
    X = np.column_stack([np.full(len(y), 3.0), X])
    a = Forest("extra_trees", ForestParams(n_trees=10), seed=5).fit(X, y)
    b = Forest("extra_trees", ForestParams(n_trees=10), seed=5).fit(X, y, threads=4)
    assert a.to_state() == b.to_state()
    for tree in a.trees:
        assert 0 not in set(tree.feature.tolist())


@pytest.mark.parametrize("kind", ["random_forest", "extra_trees", "gradient_boosting"])
def test_constant_label_predicts_that_label(kind):
    X = np.random.default_rng(0).normal(size=(20, 3))
    for label in (0, 1):
        model = train(kind, dataset(X, np.full(20, label)), {"n_trees": 5} if kind != "gradient_boosting" else None)
        assert np.all(model.predict(np.random.default_rng(1).normal(size=(30, 3))) == label)


def test_identical_rows_mixed_labels_predict_majority():
    X = np.ones((5, 2))
    model = train("random_forest", dataset(X, [1, 1, 1, 0, 0]), {"n_trees": 1, "max_features": None})
    assert model.predict(X).tolist() == [1] * 5
    tie = train("random_forest", dataset(np.ones((4, 2)), [1, 1, 0, 0]),
                {"n_trees": 1, "max_features": None})
    assert tie.predict(np.ones((1, 2))).tolist() == [0]


# -- boosting ----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_boosting_loss_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 4))
    y = (rng.random(80) < 0.5).astype(int)
    gb = GradientBoosting().fit(X, y)
    loss = np.array(gb.train_loss)
    assert len(loss) == 101
    assert np.all(np.diff(loss) <= 1e-12)


def test_boosting_single_class():
    X = np.random.default_rng(0).normal(size=(10, 2))
    gb = GradientBoosting().fit(X, np.ones(10))
    assert gb.trees == []
    assert gb.init_score == pytest.approx(np.log((1 - 1e-6) / 1e-6))
    assert np.all(gb.predict(X) == 1)


def test_boosting_xor():
    assert depth2_tree_shatters_xor()
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    gb = GradientBoosting().fit(X, y)
    assert np.array_equal(gb.predict(X), y)
    assert gb.train_loss[-1] < log_loss(np.zeros(4), y)


# -- svc ---------------------------------------------------------------------

def test_two_point_linear_bisector():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 5.0])
    svc = SVC(SVCParams(kernel="linear", C=10.0)).fit(np.vstack([a, b]), [0, 1])
    assert len(svc.support_vectors) == 2
    mid = 0.5 * (a + b)
    assert svc.decision_function(mid[None])[0] == pytest.approx(0.0, abs=1e-6)
    w = svc.dual_coef @ svc.support_vectors
    # w is parallel to b - a, so the boundary is perpendicular to the segment
    assert w[0] * (b - a)[1] - w[1] * (b - a)[0] == pytest.approx(0.0, abs=1e-6)
    assert svc.decision_function(np.vstack([a, b])) == pytest.approx([-1.0, 1.0], abs=1e-6)


def test_svc_rbf_blobs_held_out(blob_data):
    X, y = blob_data
    ds = dataset(X, y)
    train_ds, test_ds = stratified_split(ds, SplitSpec(seed=2))
    model = train("svc", train_ds)
    assert model.training_meta["converged"]
    assert evaluate(model, test_ds).accuracy >= 0.95


@pytest.mark.parametrize("kernel", ["linear", "rbf"])
def test_svc_kkt(kernel, blob_data):
    X, y = blob_data
    svc = SVC(SVCParams(kernel=kernel)).fit(X, y)
    assert svc.converged
    K = kernel_matrix(X, X, kernel, svc.gamma)
    assert kkt_violations(K, y, svc.alpha, svc.bias, 1.0).max() <= 1e-3


def test_svc_conflicting_duplicates():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    y = np.array([0, 1, 0, 1])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        svc = SVC().fit(X, y)
    assert svc.converged
    assert np.all(np.isfinite(svc.decision_function(X)))


def test_svc_rejects_single_class():
    with pytest.raises(DegenerateData):
        train("svc", dataset(np.zeros((3, 2)), [1, 1, 1]))


# -- metrics -----------------------------------------------------------------

def test_metric_examples():
    r = report_from_counts(tp=40, tn=45, fp=5, fn=10)
    assert r.accuracy == pytest.approx(0.85)
    assert r.precision == pytest.approx(40 / 45) and r.recall == pytest.approx(0.8)
    perfect = evaluate_predictions([0, 1, 1, 0], [0, 1, 1, 0])
    assert (perfect.accuracy, perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0, 1.0)
    real_only = evaluate_predictions([0] * 5 + [1] * 5, [0] * 10)
    assert real_only.accuracy == 0.5 and real_only.recall == 0.0
    assert real_only.precision_undefined and not real_only.recall_undefined


def test_label_flip_symmetry():
    rng = np.random.default_rng(0)
    y_true = rng.integers(0, 2, 50)
    y_pred = rng.integers(0, 2, 50)
    a = evaluate_predictions(y_true, y_pred)
    b = evaluate_predictions(1 - y_true, 1 - y_pred)
    assert a.accuracy == b.accuracy
    # with the positive class swapped, TN of one report is TP of the other
    assert (a.tp, a.tn, a.fp, a.fn) == (b.tn, b.tp, b.fn, b.fp)
    assert a.precision == pytest.approx(b.tn / (b.tn + b.fn))
    assert a.recall == pytest.approx(b.tn / (b.tn + b.fp))


# -- persistence -------------------------------------------------------------

@pytest.mark.parametrize("kind,hp", [("random_forest", {"n_trees": 5}), ("extra_trees", {"n_trees": 5}),
                                     ("gradient_boosting", {"n_rounds": 10}), ("svc", None)])
def test_model_round_trip(tmp_path, kind, hp, blob_data):
    X, y = blob_data
    model = train(kind, dataset(X, y), hp, seed=3, standardize=kind == "svc")
    path = tmp_path / "m.dfm"
    save_model(model, path)
    back = load_model(path)
    probe = np.random.default_rng(0).normal(2.0, 3.0, (1000, 2))
    assert np.array_equal(model.predict(probe), back.predict(probe))
    assert back.kind == kind and back.param_fingerprint == "fp"


def test_model_file_errors(tmp_path, blob_data):
    X, y = blob_data
    model = train("gradient_boosting", dataset(X, y), {"n_rounds": 3})
    path = tmp_path / "m.dfm"
    save_model(model, path)
    text = path.read_text()
    (tmp_path / "cut.dfm").write_text(text[:len(text) // 2])
    with pytest.raises(CorruptModel):
        load_model(tmp_path / "cut.dfm")
    (tmp_path / "new.dfm").write_text(text.replace("DEEPFUSE-MODEL 1.0", "DEEPFUSE-MODEL 2.0", 1))
    with pytest.raises(VersionMismatch):
        load_model(tmp_path / "new.dfm")
    with pytest.raises(FingerprintMismatch):
        evaluate(model, dataset(X, y, fp="other"))
    with pytest.raises(FingerprintMismatch):
        model.predict(np.zeros((1, 3)))
