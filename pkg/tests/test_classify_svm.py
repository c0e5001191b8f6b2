import math
import time

import numpy as np
import pytest

from gazenav.classify import (LabeledPoint, SvmModel, TrainingError,
                              decision_function, dual_objective,
                              gaussian_kernel, kkt_residuals, predict_svm,
                              train_svm)
from gazenav.gaze import TaskClass

I, N = TaskClass.INTERACTIVE, TaskClass.NON_INTERACTIVE
TOL = 1e-3


def two_blob_data(rng, n, spread=0.06, centers=((0.3, 0.3), (0.7, 0.7))):
    data = []
    for cls, c in zip((N, I), centers):
        pts = np.clip(rng.normal(c, spread, (n // 2, 2)), 0, 1)
        data += [LabeledPoint(u, v, cls) for u, v in pts]
    return data


# --- reference QP solver (projected gradient on the dual) ----------------------

def project_feasible(z, y, C):
    """Euclidean projection onto {0 <= a <= C, y . a = 0} by bisection."""
    def balance(lam):
        return float(np.clip(z - lam * y, 0.0, C) @ y)
    lo, hi = -1e4, 1e4
    for _ in range(200):
        mid = (lo + hi) / 2
        if balance(mid) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(z - ((lo + hi) / 2) * y, 0.0, C)


def qp_reference(K, y, C, iters=40_000):
    """Slow projected-gradient ascent on the dual; global optimum of the
    concave QP to high accuracy."""
    Q = np.outer(y, y) * K
    lips = float(np.linalg.eigvalsh(Q).max())
    eta = 1.0 / max(lips, 1e-9)
    a = np.zeros(len(y))
    for _ in range(iters):
        grad = 1.0 - Q @ a
        nxt = project_feasible(a + eta * grad, y, C)
        if np.max(np.abs(nxt - a)) < 1e-14:
            return nxt
        a = nxt
    return a


def model_dual_objective(model: SvmModel) -> float:
    a = model.alphas
    K = gaussian_kernel(model.support_points, model.support_points,
                        model.kernel_scale)
    return float(np.abs(a).sum() - 0.5 * a @ K @ a)


# --- tests -------------------------------------------------------------------

def test_separable_set_reaches_full_training_accuracy():
    rng = np.random.default_rng(0)
    data = two_blob_data(rng, 20, spread=0.04)
    m = train_svm(data, tol=TOL)
    preds = [predict_svm(m, (p.u, p.v))[0] for p in data]
    assert preds == [p.label for p in data]


def test_two_points_boundary_is_perpendicular_bisector():
    data = [LabeledPoint(0.2, 0.2, N), LabeledPoint(0.8, 0.8, I)]
    m = train_svm(data, tol=1e-4)
    assert abs(decision_function(m, (0.5, 0.5))) <= 1e-4
    # points mirrored across the bisector get opposite decision values
    for d in (0.05, 0.15, 0.25):
        f_pos = decision_function(m, (0.5 + d, 0.5 + d))
        f_neg = decision_function(m, (0.5 - d, 0.5 - d))
        assert f_pos > 0 > f_neg
        assert f_pos + f_neg == pytest.approx(0.0, abs=1e-3)


def test_kkt_residuals_within_tolerance():
    rng = np.random.default_rng(1)
    for n, spread in ((40, 0.08), (120, 0.15), (80, 0.25)):
        data = two_blob_data(rng, n, spread=spread)
        m = train_svm(data, tol=TOL)
        res = kkt_residuals(m, data)
        assert float(res.max()) <= TOL


def test_dual_objective_matches_projected_gradient_reference():
    rng = np.random.default_rng(2)
    data = two_blob_data(rng, 30, spread=0.18)
    pts = np.array([[p.u, p.v] for p in data])
    y = np.array([1.0 if p.label == I else -1.0 for p in data])
    t0 = time.perf_counter()
    m = train_svm(data, tol=TOL)
    K = gaussian_kernel(pts, pts, m.kernel_scale)
    a_ref = qp_reference(K, y, m.C)
    w_ref = dual_objective(K, y, a_ref)
    w_smo = model_dual_objective(m)
    assert abs(w_smo - w_ref) <= 1e-3
    assert time.perf_counter() - t0 < 10.0


def test_flipping_labels_negates_decision_function():
    rng = np.random.default_rng(3)
    data = two_blob_data(rng, 60, spread=0.2)
    flipped = [LabeledPoint(p.u, p.v, I if p.label == N else N) for p in data]
    m_pos = train_svm(data, tol=TOL)
    m_neg = train_svm(flipped, tol=TOL)
    grid = [(u, v) for u in np.linspace(0, 1, 7) for v in np.linspace(0, 1, 7)]
    for q in grid:
        f1 = decision_function(m_pos, q)
        f2 = decision_function(m_neg, q)
        assert abs(f1 + f2) <= 10 * TOL


def test_decision_values_match_direct_kernel_sum():
    rng = np.random.default_rng(4)
    data = two_blob_data(rng, 50, spread=0.1)
    m = train_svm(data, tol=TOL)
    for q in rng.uniform(0, 1, (25, 2)):
        direct = m.bias
        for (su, sv), a in zip(m.support_points, m.alphas):
            d2 = (q[0] - su) ** 2 + (q[1] - sv) ** 2
            direct += a * math.exp(-d2 / (2 * m.kernel_scale ** 2))
        assert decision_function(m, q) == pytest.approx(direct, abs=1e-12)


def test_prediction_signs_and_boundary_rule():
    rng = np.random.default_rng(5)
    data = two_blob_data(rng, 30, spread=0.05)
    m = train_svm(data, tol=TOL)
    cls, margin = predict_svm(m, (0.7, 0.7))
    assert cls == I and margin > 0
    empty = SvmModel(support_points=np.zeros((0, 2)), alphas=np.zeros(0),
                     bias=0.0, kernel_scale=0.35, C=1.0)
    cls, margin = predict_svm(empty, (0.4, 0.4))
    assert cls == N and margin == 0.0  # f = 0 stays non-interactive


def test_alphas_respect_box_constraint():
    rng = np.random.default_rng(6)
    data = two_blob_data(rng, 80, spread=0.3)
    m = train_svm(data, C=1.0, tol=TOL)
    assert np.all(np.abs(m.alphas) > 0)
    assert np.all(np.abs(m.alphas) <= 1.0 + 1e-12)


def test_nonconvergence_is_reported_with_residual():
    rng = np.random.default_rng(7)
    data = two_blob_data(rng, 60, spread=0.25)
    with pytest.raises(TrainingError) as exc:
        train_svm(data, tol=1e-12, max_iter=3)
    assert exc.value.residual > 0


def test_training_preconditions():
    rng = np.random.default_rng(8)
    data = two_blob_data(rng, 20)
    with pytest.raises(ValueError):
        train_svm(data, C=-1.0)
    single = [LabeledPoint(0.1 * i, 0.5, N) for i in range(1, 8)]
    with pytest.raises(ValueError, match="both classes"):
        train_svm(single)
