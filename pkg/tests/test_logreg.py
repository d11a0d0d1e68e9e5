import numpy as np
import pytest

from rugguard.errors import NonFinite, SchemaMismatch, SingleClass
from rugguard.logreg import LogisticModel, objective, sigmoid, train_logreg


def random_problem(seed, n=40, d=8):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = (rng.random(n) < sigmoid(X @ w)).astype(float)
    y[:2] = [0, 1]
    return X, y, rng


def test_gradient_matches_central_differences():
    h = 1e-5
    worst = 0.0
    for seed in range(20):
        X, y, rng = random_problem(seed)
        params = rng.normal(size=X.shape[1] + 1)
        lam = float(rng.uniform(0, 0.5))
        _, g = objective(params, X, y, lam)
        fd = np.empty_like(g)
        for i in range(g.size):
            e = np.zeros_like(params)
            e[i] = h
            fd[i] = (objective(params + e, X, y, lam)[0] - objective(params - e, X, y, lam)[0]) / (2 * h)
        rel = np.abs(fd - g) / np.maximum(np.abs(g), np.abs(fd))
        worst = max(worst, float(rel.max()))
    assert worst < 1e-6


def test_loss_non_increasing_and_converges():
    X, y, _ = random_problem(3, n=200)
    m = train_logreg(X, y)
    hist = np.array(m.loss_history)
    assert np.all(np.diff(hist) <= 0)
    assert m.converged and m.iterations == len(hist) - 1


def test_separable_pair():
    m = train_logreg(np.array([[-1.0], [1.0]]), np.array([0.0, 1.0]), l2_lambda=0.1)
    assert m.weights[0] > 0
    p = m.predict_proba(np.array([[-1.0], [1.0]]))
    assert p[0] < 0.5 < p[1]


def test_huge_lambda_shrinks_to_prior():
    X, y, _ = random_problem(4, n=100)
    m = train_logreg(X, y, l2_lambda=1e9)
    assert np.max(np.abs(m.weights)) < 1e-8
    assert np.allclose(m.predict_proba(X), y.mean(), atol=1e-6)


def test_zero_model_scores_half():
    m = LogisticModel(np.zeros(3), 0.0, 0.0, np.zeros(3), np.ones(3))
    assert np.all(m.predict_proba(np.random.default_rng(0).normal(size=(5, 3))) == 0.5)


def test_positive_weight_is_monotone():
    X, y, _ = random_problem(5)
    m = train_logreg(X, y)
    j = int(np.argmax(m.weights))
    assert m.weights[j] > 0
    row = X[:1].copy()
    scores = []
    for v in np.linspace(-3, 3, 25):
        row[0, j] = v
        scores.append(m.predict_proba(row)[0])
    assert np.all(np.diff(scores) >= 0)


def test_predictions_match_direct_formula():
    X, y, rng = random_problem(6, n=80)
    m = train_logreg(X[:30], y[:30])
    rows = rng.normal(size=(50, X.shape[1]))
    for r, p in zip(rows, m.predict_proba(rows)):
        z = sum(wi * (xi - mi) / si for wi, xi, mi, si in zip(m.weights, r, m.mean, m.std)) + m.bias
        assert p == pytest.approx(1 / (1 + np.exp(-z)), rel=1e-12)


def test_standardization_uses_only_given_rows():
    X, y, _ = random_problem(7, n=60)
    m = train_logreg(X, y)
    assert np.array_equal(m.mean, X.mean(axis=0))
    assert np.array_equal(m.std, X.std(axis=0))


def test_errors():
    with pytest.raises(SingleClass):
        train_logreg(np.ones((3, 2)), np.ones(3))
    with pytest.raises(NonFinite):
        train_logreg(np.array([[0.0], [np.inf]]), np.array([0.0, 1.0]))
    m = train_logreg(np.array([[-1.0], [1.0]]), np.array([0.0, 1.0]))
    with pytest.raises(SchemaMismatch):
        m.predict_proba(np.ones((2, 3)))


def test_constant_column_is_harmless():
    X, y, _ = random_problem(8)
    X[:, 2] = 5.0
    m = train_logreg(X, y)
    assert m.std[2] == 1.0 and m.weights[2] == 0.0


def test_json_round_trip():
    X, y, _ = random_problem(9)
    m = train_logreg(X, y, columns=tuple("abcdefgh"))
    back = LogisticModel.from_json(m.to_json())
    assert np.array_equal(back.weights, m.weights) and back.bias == m.bias
    assert np.array_equal(back.predict_proba(X), m.predict_proba(X))
    assert back.columns == m.columns


def test_deterministic():
    X, y, _ = random_problem(10)
    a, b = train_logreg(X, y), train_logreg(X, y)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias
