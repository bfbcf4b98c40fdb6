import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import direct_expansion, svr_dual_qp
from svrconf.errors import SvrConfError, BadDelta, DimensionMismatch, LengthMismatch, NoConvergence
from svrconf.features import Standardizer
from svrconf.svr import (
    ConvergenceWarning,
    KernelSpec,
    SvrHyper,
    SvrModel,
    cmae,
    cmae_abs,
    gram,
    kernel_eval,
    kkt_report,
    mae,
    mean_mae,
    metric_fn,
    predict,
    predict_exact,
    train,
    train_strict,
)


def test_kernel_values():
    spec = KernelSpec(0.5)
    assert kernel_eval(spec, [1.0, 2.0], [1.0, 2.0]) == 1.0
    assert abs(kernel_eval(spec, [0, 0], [1, 1]) - 0.3678794) < 1e-7
    assert kernel_eval(KernelSpec(1e-300), [0.0], [1e3]) == 1.0
    with pytest.raises(DimensionMismatch):
        kernel_eval(spec, [0.0], [0.0, 1.0])
    with pytest.raises(SvrConfError):
        KernelSpec(0.0)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.floats(1e-3, 10))
@settings(max_examples=200, deadline=None)
def test_kernel_symmetric_bounded(x, y, g):
    spec = KernelSpec(g)
    k = kernel_eval(spec, x, y)
    assert k == kernel_eval(spec, y, x) and 0.0 <= k <= 1.0


def test_gram_is_psd(rng):
    for _ in range(10):
        X = rng.normal(size=(int(rng.integers(2, 30)), 3))
        K = gram(X, None, float(rng.uniform(0.05, 3)))
        np.linalg.cholesky(K + 1e-10 * np.eye(len(K)))
        assert np.allclose(K, K.T) and np.all(np.diag(K) == 1.0)


def test_constant_labels_fit_inside_tube(backend):
    X = np.arange(10.0)[:, None]
    m = train(X, np.full(10, 4.2), SvrHyper.of(10.0, 0.1, 0.5))
    assert m.dual_weights.size == 0
    assert m.bias == pytest.approx(4.2)
    assert np.allclose(predict(m, X), 4.2)


def test_two_point_hand_solution(backend):
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, 0.0])
    eps, g = 0.1, 0.5
    m = train(X, y, SvrHyper.of(100.0, eps, g), tol=1e-12, keep_all=True)
    k12 = math.exp(-g)
    want = (y[0] - y[1] - 2 * eps) / (2 * (1 - k12))
    assert m.dual_weights[0] == pytest.approx(want, rel=1e-10)
    assert m.dual_weights[1] == pytest.approx(-want, rel=1e-10)
    assert m.bias == pytest.approx(0.5, abs=1e-10)


def random_problem(rng, n=None):
    n = n or int(rng.integers(5, 51))
    X = rng.normal(size=(n, int(rng.integers(1, 5))))
    y = np.sin(X.sum(1)) + 0.1 * rng.normal(size=n)
    h = SvrHyper.of(float(np.exp(rng.uniform(np.log(0.1), np.log(10)))),
                    float(rng.uniform(0.01, 0.2)),
                    float(np.exp(rng.uniform(np.log(0.1), np.log(2)))))
    return X, y, h


def test_invariants_and_kkt(backend, rng):
    for _ in range(10):
        X, y, h = random_problem(rng)
        m = train(X, y, h, keep_all=True)
        assert m.converged
        assert abs(m.dual_weights.sum()) <= 1e-8
        assert np.abs(m.dual_weights).max() <= h.C + 1e-12
        assert kkt_report(m, X, y)["ok"]


def test_matches_qp_oracle(backend, rng):
    for _ in range(5):
        X, y, h = random_problem(rng)
        m = train(X, y, h, tol=1e-6)
        ref, _ = svr_dual_qp(gram(X, None, h.gamma), y, h.epsilon, h.C)
        assert m.dual_objective >= ref - 1e-9
        assert abs(m.dual_objective - ref) <= 1e-6


def test_backends_agree(rng):
    from svrconf import _accel
    X, y, h = random_problem(rng, n=40)
    prev = _accel.backend()
    try:
        out = {}
        for b in ("numpy", "numba"):
            _accel.set_backend(b)
            out[b] = train(X, y, h, tol=1e-8, keep_all=True)
    finally:
        _accel.set_backend(prev)
    assert np.allclose(out["numpy"].dual_weights, out["numba"].dual_weights, atol=1e-9)
    assert out["numpy"].n_iter == out["numba"].n_iter


def test_row_cache_path_matches_full(rng):
    X, y, h = random_problem(rng, n=60)
    full = train(X, y, h, tol=1e-8, keep_all=True)
    rows = train(X, y, h, tol=1e-8, keep_all=True, cache_mb=8 * 20 * 60 / 2**20)
    assert np.allclose(full.dual_weights, rows.dual_weights, atol=1e-9)


def test_budget_exhaustion_warns_and_strict_raises(rng):
    X, y, h = random_problem(rng, n=40)
    with pytest.warns(ConvergenceWarning):
        m = train(X, y, SvrHyper.of(100.0, 0.001, 2.0), tol=1e-12, max_passes=0)
    assert not m.converged
    with pytest.raises(NoConvergence):
        train_strict(X, y, SvrHyper.of(100.0, 0.001, 2.0), tol=1e-12, max_passes=0)


def test_training_is_deterministic(rng):
    X, y, h = random_problem(rng, n=30)
    a, b = train(X, y, h), train(X, y, h)
    assert np.array_equal(a.dual_weights, b.dual_weights) and a.bias == b.bias


def test_predict_basics():
    sc = Standardizer.identity(2)
    one = SvrModel(np.array([[1.0, 2.0]]), np.array([1.0]), 0.0, SvrHyper.of(1, 0.1, 0.7), sc)
    assert predict(one, [1.0, 2.0]) == 1.0
    zero = SvrModel(np.zeros((0, 2)), np.zeros(0), 3.5, SvrHyper.of(1, 0.1, 0.7), sc)
    assert np.all(predict(zero, np.ones((4, 2))) == 3.5)
    with pytest.raises(DimensionMismatch):
        predict(one, [1.0])


def test_predict_matches_term_by_term_and_is_lipschitz(rng):
    X, y, h = random_problem(rng, n=40)
    m = train(X, y, h, scaler=Standardizer.fit(X))
    bound = np.abs(m.dual_weights).sum() * math.sqrt(2 * h.gamma / math.e)
    for _ in range(50):
        x = rng.normal(size=X.shape[1])
        assert predict(m, x) == pytest.approx(direct_expansion(m, x), rel=1e-12, abs=1e-12)
        assert predict(m, x) == pytest.approx(predict_exact(m, x), rel=1e-12, abs=1e-12)
        dx = rng.normal(size=x.size) * 1e-3
        dist = np.linalg.norm(dx / m.scaler.scale)
        assert abs(predict(m, x + dx) - predict(m, x)) <= bound * dist + 1e-12


def test_free_support_vectors_sit_on_tube(rng):
    X, y, h = random_problem(rng, n=40)
    m = train(X, y, h, tol=1e-8, keep_all=True)
    free = (m.dual_weights != 0) & (np.abs(m.dual_weights) < h.C)
    r = np.abs(predict(m, X[free]) - y[free])
    assert np.allclose(r, h.epsilon, atol=1e-6)


def test_save_load_bit_identical(tmp_path, rng):
    X, y, h = random_problem(rng, n=30)
    m = train(X, y, h, scaler=Standardizer.fit(X), feature_names=[f"x{i}" for i in range(X.shape[1])])
    m.save(tmp_path / "m.json")
    back = SvrModel.load(tmp_path / "m.json")
    Q = rng.normal(size=(100, X.shape[1]))
    assert np.array_equal(predict(m, Q), predict(back, Q))
    assert back.feature_names == m.feature_names and back.hyper == m.hyper


def test_mae():
    assert mae([0.1, 0.9], [0.2, 0.5]) == pytest.approx(0.5)
    assert mae([0.3], [0.7]) == pytest.approx(0.4)
    assert mae([0.4, 0.2], [0.4, 0.2]) == 0.0
    assert mean_mae([0.1, 0.9], [0.2, 0.5]) == pytest.approx(0.25)
    with pytest.raises(LengthMismatch):
        mae([0.1], [0.1, 0.2])


def test_cmae_cases():
    c1 = 0.2 * (1 + 1 / (1 + math.exp(-0.2)))
    assert cmae([0.3], [0.1], 0.2) == pytest.approx(c1, abs=1e-15)
    assert abs(cmae([0.3], [0.1], 0.2) - 0.3099672) < 1e-6
    assert cmae([0.7], [0.9], 0.2) == pytest.approx(c1, abs=1e-15)
    assert cmae([0.6], [0.5], 0.2) == pytest.approx(-0.1, abs=1e-15)
    assert cmae_abs([0.6], [0.5], 0.2) == pytest.approx(0.1, abs=1e-15)
    # under-prediction near 0 and over-prediction near 1 fall through to zero
    assert cmae([0.05], [0.1], 0.2) == 0.0 and cmae([0.95], [0.9], 0.2) == 0.0
    for bad in (0.0, 0.6):
        with pytest.raises(BadDelta):
            cmae([0.1], [0.1], bad)
    assert metric_fn("cmae03")([0.3], [0.1]) == cmae([0.3], [0.1], 0.3)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.sampled_from([0.2, 0.3, 0.4, 0.5]))
@settings(max_examples=200, deadline=None)
def test_cmae_zero_on_exact_predictions(p, d):
    assert cmae(p, p, d) == 0.0


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([0.2, 0.3, 0.4]))
@settings(max_examples=300, deadline=None)
def test_cmae_outer_cases_bounded(p, pb, d):
    v = cmae([pb], [p], d)
    if (p <= d and pb > p) or (p >= 1 - d and pb < p):
        assert 0 < v <= 2 * abs(p - pb) + 1e-15
