"""Object-specific binary classifiers over the unit square: weighted KNN and
a Gaussian-kernel soft-margin SVM trained with sequential minimal
optimization, plus stratified k-fold cross-validation and model files.

Class encoding follows the intention Boolean: 0 non-interactive,
1 interactive.  Ties and boundary cases resolve to non-interactive, the safe
class for a mobility device.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .gaze import TaskClass

MODEL_FORMAT_VERSION = 1

DEFAULT_K = 10
DEFAULT_C = 1.0
DEFAULT_KERNEL_SCALE = math.sqrt(2.0) / 4.0  # "fine" preset for 2 features
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 100_000


class TrainingError(RuntimeError):
    """SVM optimizer failed to reach the KKT tolerance within the iteration cap."""

    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


class ModelFormatError(ValueError):
    """Malformed, truncated or version-incompatible model file."""


class ModelKindError(ModelFormatError):
    """Model file holds a different classifier kind than requested."""


@dataclass(frozen=True)
class LabeledPoint:
    u: float
    v: float
    label: TaskClass

    def __post_init__(self):
        if not (0.0 <= self.u <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError("labeled point outside the unit square")


def _split_points(data: Sequence[LabeledPoint]) -> tuple[np.ndarray, np.ndarray]:
    pts = np.array([[p.u, p.v] for p in data], dtype=float)
    labels = np.array([int(p.label) for p in data], dtype=int)
    return pts, labels


# --- weighted KNN -----------------------------------------------------------

@dataclass
class KnnModel:
    """Lazy learner: stores the training set verbatim.

    Neighbor ranking uses the key (distance^2, u, v, label) so predictions do
    not depend on the insertion order of training points.
    """
    points: np.ndarray  # (n, 2)
    labels: np.ndarray  # (n,)
    k: int

    kind = "knn"

    def predict(self, q) -> tuple[TaskClass, float]:
        return predict_knn(self, q)


def train_knn(data: Sequence[LabeledPoint], k: int = DEFAULT_K) -> KnnModel:
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(data) < k:
        raise ValueError(f"k={k} exceeds dataset size {len(data)}")
    pts, labels = _split_points(data)
    if len(set(labels.tolist())) < 2:
        raise ValueError("training data must contain both classes")
    return KnnModel(points=pts, labels=labels, k=int(k))


def _knn_order(points: np.ndarray, labels: np.ndarray, q: np.ndarray) -> np.ndarray:
    d2 = ((points - q) ** 2).sum(axis=1)
    return np.lexsort((labels, points[:, 1], points[:, 0], d2)), d2


def predict_knn(model: KnnModel, q) -> tuple[TaskClass, float]:
    """Inverse-squared-distance weighted vote among the k nearest neighbors.

    A zero-distance neighbor wins outright (score 1); conflicting coincident
    labels fall back to non-interactive.  Equal class weights also resolve to
    non-interactive.
    """
    q = np.asarray(q, dtype=float)
    order, d2 = _knn_order(model.points, model.labels, q)
    nearest = order[:model.k]
    zero = nearest[d2[nearest] == 0.0]
    if zero.size:
        zlabels = set(model.labels[zero].tolist())
        if zlabels == {int(TaskClass.INTERACTIVE)}:
            return TaskClass.INTERACTIVE, 1.0
        return TaskClass.NON_INTERACTIVE, 1.0
    w = 1.0 / d2[nearest]
    w_int = float(w[model.labels[nearest] == int(TaskClass.INTERACTIVE)].sum())
    total = float(w.sum())
    w_non = total - w_int
    if w_int > w_non:
        return TaskClass.INTERACTIVE, w_int / total
    return TaskClass.NON_INTERACTIVE, w_non / total


# --- Gaussian-kernel SVM ----------------------------------------------------

def gaussian_kernel(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    """K(x, y) = exp(-||x - y||^2 / (2 s^2))."""
    d2 = cdist(np.atleast_2d(a), np.atleast_2d(b), "sqeuclidean")
    return np.exp(-d2 / (2.0 * scale * scale))


@dataclass
class SvmModel:
    """Support points with signed dual weights: f(x) = sum a_i K(x, x_i) + b."""
    support_points: np.ndarray  # (m, 2)
    alphas: np.ndarray          # (m,) signed: alpha_i * y_i
    bias: float
    kernel_scale: float
    C: float

    kind = "svm"

    def decision_function(self, q) -> float:
        return decision_function(self, q)

    def predict(self, q) -> tuple[TaskClass, float]:
        return predict_svm(self, q)


def decision_function(model: SvmModel, q) -> float:
    k = gaussian_kernel(np.asarray(q, dtype=float), model.support_points,
                        model.kernel_scale)[0]
    return float(k @ model.alphas + model.bias)


def predict_svm(model: SvmModel, q) -> tuple[TaskClass, float]:
    """Interactive iff f(q) > 0; exactly 0 stays on the safe side."""
    f = decision_function(model, q)
    return (TaskClass.INTERACTIVE if f > 0 else TaskClass.NON_INTERACTIVE), f


def _smo(K: np.ndarray, y: np.ndarray, C: float, tol: float,
         max_iter: int) -> tuple[np.ndarray, float, int]:
    """Sequential minimal optimization on the soft-margin dual.

    Repeatedly optimizes the maximal-KKT-violating pair until the duality gap
    m - M drops to ``tol``.  Returns (alpha, bias, iterations).
    """
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a at a = 0
    yf = y.astype(float)
    tau = 1e-12
    for it in range(max_iter):
        h = -yf * grad
        up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
        low = ((yf < 0) & (alpha < C)) | ((yf > 0) & (alpha > 0))
        h_up = np.where(up, h, -np.inf)
        h_low = np.where(low, h, np.inf)
        i = int(np.argmax(h_up))
        j = int(np.argmin(h_low))
        m, M = h_up[i], h_low[j]
        if m - M <= tol:
            return alpha, float((m + M) / 2.0), it
        Qi = yf * (K[:, i] * yf[i])
        Qj = yf * (K[:, j] * yf[j])
        ai_old, aj_old = alpha[i], alpha[j]
        if yf[i] != yf[j]:
            quad = max(K[i, i] + K[j, j] + 2.0 * K[i, j], tau)
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    ai, aj = diff, 0.0
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if aj > C:
                    ai, aj = C + diff, C
        else:
            quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], tau)
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                elif aj > C:
                    ai, aj = total - C, C
            else:
                if aj < 0:
                    ai, aj = total, 0.0
                elif ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        grad += Qi * (ai - ai_old) + Qj * (aj - aj_old)
    h = -yf * grad
    up = ((yf > 0) & (alpha < C)) | ((yf < 0) & (alpha > 0))
    low = ((yf < 0) & (alpha < C)) | ((yf > 0) & (alpha > 0))
    residual = float(np.max(np.where(up, h, -np.inf))
                     - np.min(np.where(low, h, np.inf)))
    raise TrainingError(
        f"SMO did not converge in {max_iter} iterations (gap {residual:.3e})",
        residual)


def train_svm(data: Sequence[LabeledPoint], C: float = DEFAULT_C,
              kernel_scale: float = DEFAULT_KERNEL_SCALE,
              tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER) -> SvmModel:
    """Solve the soft-margin Gaussian-kernel dual to KKT tolerance ``tol``."""
    if C <= 0 or kernel_scale <= 0 or tol <= 0:
        raise ValueError("C, kernel_scale and tol must be positive")
    pts, labels = _split_points(data)
    classes = set(labels.tolist())
    if classes != {0, 1}:
        raise ValueError("training data must contain both classes")
    y = np.where(labels == int(TaskClass.INTERACTIVE), 1.0, -1.0)
    K = gaussian_kernel(pts, pts, kernel_scale)
    alpha, b, _ = _smo(K, y, C, tol, max_iter)
    sv = alpha > 0.0
    return SvmModel(support_points=pts[sv], alphas=alpha[sv] * y[sv],
                    bias=b, kernel_scale=kernel_scale, C=C)


def dual_objective(K: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """W(alpha) = sum(alpha) - 1/2 alpha' Q alpha (the maximized dual)."""
    q = (y * alpha) @ K @ (y * alpha)
    return float(alpha.sum() - 0.5 * q)


def kkt_residuals(model: SvmModel, data: Sequence[LabeledPoint]) -> np.ndarray:
    """Per-point violation of the soft-margin KKT conditions, >= 0.

    alpha=0 wants y f >= 1; 0<alpha<C wants y f = 1; alpha=C wants y f <= 1.
    Support-point alphas are matched back to the training points by
    coordinates (training keeps points verbatim).
    """
    pts, labels = _split_points(data)
    y = np.where(labels == int(TaskClass.INTERACTIVE), 1.0, -1.0)
    alpha = np.zeros(len(pts))
    for sp, a in zip(model.support_points, model.alphas):
        match = np.flatnonzero((pts[:, 0] == sp[0]) & (pts[:, 1] == sp[1]))
        if match.size == 0:
            raise ValueError("support point not found in training data")
        alpha[match[0]] = abs(a)
    f = gaussian_kernel(pts, model.support_points, model.kernel_scale) \
        @ model.alphas + model.bias
    margins = y * f
    res = np.zeros(len(pts))
    at_zero = alpha == 0.0
    at_c = alpha >= model.C
    free = ~at_zero & ~at_c
    res[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
    res[free] = np.abs(margins[free] - 1.0)
    res[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
    return res


# --- cross-validation -------------------------------------------------------

TrainFn = Callable[[Sequence[LabeledPoint]], object]


@dataclass
class CvReport:
    fold_accuracies: list[float]
    mean_accuracy: float
    confusion: list[list[int]]  # [true][pred], summed over folds
    n_points: int
    kind: str
    params: dict

    def to_dict(self) -> dict:
        return {"fold_accuracies": self.fold_accuracies,
                "mean_accuracy": self.mean_accuracy,
                "confusion": self.confusion,
                "n_points": self.n_points,
                "kind": self.kind,
                "params": self.params}


def _trainer_for(kind: str | TrainFn, params: dict | None) -> tuple[TrainFn, dict]:
    params = dict(params or {})
    if callable(kind):
        return kind, params
    if kind == "knn":
        k = int(params.get("k", DEFAULT_K))
        return (lambda data: train_knn(data, k=k)), {"k": k}
    if kind == "svm":
        C = float(params.get("C", DEFAULT_C))
        s = float(params.get("kernel_scale", DEFAULT_KERNEL_SCALE))
        tol = float(params.get("tol", DEFAULT_TOL))
        return (lambda data: train_svm(data, C=C, kernel_scale=s, tol=tol)), \
            {"C": C, "kernel_scale": s, "tol": tol}
    raise ValueError(f"unknown model kind {kind!r}")


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded stratified partition: index arrays of the test folds."""
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(labels), dtype=int)
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < folds:
            raise ValueError(
                f"class {cls} has {len(idx)} points, fewer than {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        assignments[idx] = np.arange(len(idx)) % folds
    return [np.flatnonzero(assignments == f) for f in range(folds)]


def cross_validate(data: Sequence[LabeledPoint], model_kind: str | TrainFn,
                   params: dict | None = None, folds: int = 10,
                   seed: int = 0) -> CvReport:
    """Stratified seeded k-fold CV; every point is tested exactly once."""
    if len(data) < folds:
        raise ValueError("fewer points than folds")
    _, labels = _split_points(data)
    trainer, norm_params = _trainer_for(model_kind, params)
    test_folds = stratified_folds(labels, folds, seed)
    accs: list[float] = []
    confusion = np.zeros((2, 2), dtype=int)
    for test_idx in test_folds:
        test_set = set(test_idx.tolist())
        train_data = [p for i, p in enumerate(data) if i not in test_set]
        model = trainer(train_data)
        correct = 0
        for i in test_idx:
            pred, _ = model.predict((data[i].u, data[i].v))
            confusion[int(data[i].label), int(pred)] += 1
            correct += int(pred == data[i].label)
        accs.append(correct / len(test_idx))
    kind_name = model_kind if isinstance(model_kind, str) else getattr(
        model_kind, "__name__", "custom")
    return CvReport(fold_accuracies=accs,
                    mean_accuracy=math.fsum(accs) / len(accs),
                    confusion=confusion.tolist(),
                    n_points=len(data),
                    kind=kind_name,
                    params=norm_params)


# --- persistence ------------------------------------------------------------

def save_model(model: KnnModel | SvmModel, path, provenance: dict | None = None) -> None:
    if isinstance(model, KnnModel):
        payload = {"u": model.points[:, 0].tolist(),
                   "v": model.points[:, 1].tolist(),
                   "label": model.labels.tolist()}
        params = {"k": model.k, "weighting": "inverse-squared-distance"}
        kind = "knn"
    elif isinstance(model, SvmModel):
        payload = {"support_u": model.support_points[:, 0].tolist(),
                   "support_v": model.support_points[:, 1].tolist(),
                   "alpha": model.alphas.tolist(),
                   "bias": model.bias}
        params = {"C": model.C, "kernel_scale": model.kernel_scale}
        kind = "svm"
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    doc = {"format_version": MODEL_FORMAT_VERSION, "kind": kind,
           "params": params, "payload": payload}
    if provenance is not None:
        doc["provenance"] = provenance
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_model(path, kind: str | None = None) -> KnnModel | SvmModel:
    """Load a model file; ``kind`` (if given) must match the stored kind."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed model file {path}: {e}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError(f"{path} is not a model file")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format_version {doc['format_version']}")
    stored = doc.get("kind")
    if kind is not None and stored != kind:
        raise ModelKindError(f"expected a {kind} model, file holds {stored!r}")
    try:
        params = doc["params"]
        payload = doc["payload"]
        if stored == "knn":
            pts = np.column_stack([np.asarray(payload["u"], dtype=float),
                                   np.asarray(payload["v"], dtype=float)])
            labels = np.asarray(payload["label"], dtype=int)
            if pts.shape[0] != labels.shape[0]:
                raise KeyError("length mismatch")
            return KnnModel(points=pts, labels=labels, k=int(params["k"]))
        if stored == "svm":
            pts = np.column_stack([np.asarray(payload["support_u"], dtype=float),
                                   np.asarray(payload["support_v"], dtype=float)])
            return SvmModel(support_points=pts,
                            alphas=np.asarray(payload["alpha"], dtype=float),
                            bias=float(payload["bias"]),
                            kernel_scale=float(params["kernel_scale"]),
                            C=float(params["C"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"corrupt model payload in {path}: {e}") from None
    raise ModelFormatError(f"unknown model kind {stored!r}")
