import numpy as np
import pytest

from gazenav.classify import LabeledPoint, train_knn
from gazenav.gaze import TaskClass, synthesize_dataset


@pytest.fixture(scope="session")
def dataset_by_object():
    records = synthesize_dataset(["tv", "laptop", "chair"], seed=0)
    by_obj = {}
    for r in records:
        by_obj.setdefault(r.object, []).append(
            LabeledPoint(r.u, r.v, TaskClass(r.label)))
    return by_obj


@pytest.fixture(scope="session")
def knn_models(dataset_by_object):
    return {label: train_knn(points, k=10)
            for label, points in dataset_by_object.items()}
