"""L2-regularised logistic regression fitted by preconditioned gradient descent with Armijo backtracking."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoError, NonFinite, SchemaMismatch, SingleClass


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def objective(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2_lambda: float):
    """Mean negative log-likelihood + (lambda/2)||w||^2 and its gradient.

    ``params`` is ``[w_1..w_d, b]``; the bias is not penalised.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    n = X.shape[0]
    loss = np.logaddexp(0.0, z).sum() / n - (y @ z) / n + 0.5 * l2_lambda * (w @ w)
    r = sigmoid(z) - y
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r / n + l2_lambda * w
    grad[-1] = r.sum() / n
    return float(loss), grad


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    mean: np.ndarray
    std: np.ndarray
    columns: tuple[str, ...] = ()
    transform: str = "log1p"
    iterations: int = 0
    converged: bool = False
    loss_history: list[float] = field(default_factory=list, repr=False)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.weights.size:
            raise SchemaMismatch(f"expected {self.weights.size} columns, got shape {X.shape}")
        Xs = (X - self.mean) / self.std
        if not np.all(np.isfinite(Xs)):
            raise NonFinite("non-finite feature values after standardization")
        return Xs

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.standardize(X) @ self.weights + self.bias)

    def to_json(self) -> str:
        doc = {
            "weights": [repr(float(v)) for v in self.weights],
            "bias": repr(float(self.bias)),
            "l2_lambda": repr(float(self.l2_lambda)),
            "mean": [repr(float(v)) for v in self.mean],
            "std": [repr(float(v)) for v in self.std],
            "columns": list(self.columns),
            "transform": self.transform,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LogisticModel":
        doc = json.loads(text)
        arr = lambda xs: np.array([float(v) for v in xs])  # noqa: E731
        return cls(arr(doc["weights"]), float(doc["bias"]), float(doc["l2_lambda"]),
                   arr(doc["mean"]), arr(doc["std"]), tuple(doc["columns"]),
                   doc["transform"], doc["iterations"], doc["converged"])

    @classmethod
    def load(cls, path) -> "LogisticModel":
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"{path}: {exc.strerror or exc}") from None


def fit_standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and population std; constant columns get std 1."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def train_logreg(X, y, l2_lambda: float = 1e-2, tol: float = 1e-8, max_iters: int = 10000,
                 columns=(), transform: str = "log1p", c1: float = 1e-4,
                 shrink: float = 0.5) -> LogisticModel:
    """Fit on training rows only; standardization statistics come from ``X`` alone.

    Starts from zero weights. Each iteration steps along the diagonally
    preconditioned negative gradient with an Armijo-backtracked step length; the trial step grows by 2x after
    every accepted step. Stops when the gradient's max-norm falls below
    ``tol``, after ``max_iters`` iterations, or when no decreasing step exists
    at working precision.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise SchemaMismatch(f"X shape {X.shape} does not match {y.size} labels")
    if X.shape[0] < 2 or np.all(y == y[0]):
        raise SingleClass("training needs at least two rows covering both classes")
    if not np.all(np.isfinite(X)):
        raise NonFinite("training features contain non-finite values")
    mean, std = fit_standardization(X)
    Xs = (X - mean) / std
    if not np.all(np.isfinite(Xs)):
        raise NonFinite("non-finite feature values after standardization")

    # Jacobi preconditioner: curvature bound 0.25 * mean(x^2) + lambda per
    # weight, 0.25 for the unpenalised bias. Keeps the bias moving when a
    # large lambda makes the weight directions very stiff.
    precond = np.append(0.25 * np.mean(Xs * Xs, axis=0) + l2_lambda, 0.25)
    precond[precond <= 0] = 1.0

    params = np.zeros(X.shape[1] + 1)
    loss, grad = objective(params, Xs, y, l2_lambda)
    history = [loss]
    step = 1.0
    while len(history) <= max_iters and np.max(np.abs(grad)) >= tol:
        direction = -grad / precond
        slope = grad @ direction
        t = step
        candidate = params + t * direction
        new_loss, new_grad = objective(candidate, Xs, y, l2_lambda)
        while new_loss > loss + c1 * t * slope and t > 1e-20:
            t *= shrink
            candidate = params + t * direction
            new_loss, new_grad = objective(candidate, Xs, y, l2_lambda)
        if new_loss > loss + c1 * t * slope:
            break  # no sufficient decrease representable
        params, loss, grad = candidate, new_loss, new_grad
        history.append(loss)
        step = min(2.0 * t, 1e6)
    converged = bool(np.max(np.abs(grad)) < tol)
    it = len(history) - 1

    return LogisticModel(params[:-1].copy(), float(params[-1]), float(l2_lambda), mean, std,
                         tuple(columns), transform, it, converged, history)
