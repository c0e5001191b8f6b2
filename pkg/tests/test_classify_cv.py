import json

import numpy as np
import pytest

from gazenav.classify import (LabeledPoint, cross_validate, stratified_folds,
                              train_knn)
from gazenav.gaze import TaskClass

I, N = TaskClass.INTERACTIVE, TaskClass.NON_INTERACTIVE


def mixed_data(rng, n_non, n_int):
    pts = rng.uniform(0, 1, (n_non + n_int, 2))
    labels = [N] * n_non + [I] * n_int
    return [LabeledPoint(u, v, l) for (u, v), l in zip(pts, labels)]


class ConstantModel:
    def predict(self, q):
        return N, 1.0


def constant_trainer(data):
    return ConstantModel()


def test_folds_partition_the_dataset():
    rng = np.random.default_rng(0)
    labels = np.array([0] * 37 + [1] * 63)
    folds = stratified_folds(labels, 10, seed=3)
    seen = np.concatenate(folds)
    assert sorted(seen.tolist()) == list(range(100))
    for i in range(10):
        for j in range(i + 1, 10):
            assert not set(folds[i]) & set(folds[j])
    # stratification: class counts per fold differ by at most 1
    for f in folds:
        n1 = int(labels[f].sum())
        assert n1 in (6, 7)


def test_constant_classifier_scores_class_prior_exactly():
    rng = np.random.default_rng(1)
    data = mixed_data(rng, 60, 40)  # both class counts divisible by 10 folds
    rep = cross_validate(data, constant_trainer, folds=10, seed=0)
    assert rep.mean_accuracy == 0.6
    assert rep.fold_accuracies == [0.6] * 10
    assert rep.confusion == [[60, 0], [40, 0]]


def test_confusion_totals_equal_dataset_size():
    rng = np.random.default_rng(2)
    data = mixed_data(rng, 33, 47)
    rep = cross_validate(data, "knn", {"k": 3}, folds=10, seed=1)
    assert sum(sum(row) for row in rep.confusion) == 80
    assert len(rep.fold_accuracies) == 10
    assert rep.mean_accuracy == pytest.approx(np.mean(rep.fold_accuracies))


def test_cv_reproducible_bit_exact():
    rng = np.random.default_rng(3)
    data = mixed_data(rng, 40, 40)
    a = cross_validate(data, "knn", {"k": 5}, folds=10, seed=7)
    b = cross_validate(data, "knn", {"k": 5}, folds=10, seed=7)
    assert json.dumps(a.to_dict(), sort_keys=True) == \
        json.dumps(b.to_dict(), sort_keys=True)
    c = cross_validate(data, "knn", {"k": 5}, folds=10, seed=8)
    assert a.fold_accuracies != c.fold_accuracies


def test_small_class_rejected():
    rng = np.random.default_rng(4)
    data = mixed_data(rng, 50, 6)
    with pytest.raises(ValueError, match="fewer than"):
        cross_validate(data, "knn", {"k": 3}, folds=10, seed=0)


def test_separable_data_scores_high():
    rng = np.random.default_rng(5)
    non = np.clip(rng.normal((0.25, 0.25), 0.05, (100, 2)), 0, 1)
    inter = np.clip(rng.normal((0.75, 0.75), 0.05, (100, 2)), 0, 1)
    data = ([LabeledPoint(u, v, N) for u, v in non]
            + [LabeledPoint(u, v, I) for u, v in inter])
    for kind in ("knn", "svm"):
        rep = cross_validate(data, kind, folds=10, seed=0)
        assert rep.mean_accuracy > 0.95
