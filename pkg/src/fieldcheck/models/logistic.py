"""L2-regularised logistic regression fitted by full-batch gradient descent.

Weight vectors carry the intercept in position 0; the penalty skips it.
The objective is ``mean(log-loss) + l2/2 * ||w[1:]||^2``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def logistic_loss(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    w = np.asarray(weights, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    z = _design(X) @ w
    data = np.mean(np.logaddexp(0.0, z) - y * z) if len(y) else 0.0
    return float(data + 0.5 * l2 * np.dot(w[1:], w[1:]))


def logistic_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Analytic gradient of :func:`logistic_loss`."""
    w = np.asarray(weights, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = _design(X)
    grad = A.T @ (expit(A @ w) - y) / len(y) if len(y) else np.zeros_like(w)
    grad[1:] += l2 * w[1:]
    return grad


def fit_logistic(
    X: np.ndarray, y: np.ndarray, learning_rate: float, epochs: int, l2: float
) -> tuple[np.ndarray, list[float]]:
    """Return fitted weights and the loss before each epoch plus the final loss."""
    w = np.zeros(X.shape[1] + 1)
    losses = [logistic_loss(w, X, y, l2)]
    for _ in range(epochs):
        w = w - learning_rate * logistic_gradient(w, X, y, l2)
        losses.append(logistic_loss(w, X, y, l2))
    return w, losses


def predict_logistic(weights: np.ndarray, X: np.ndarray) -> np.ndarray:
    return expit(_design(X) @ weights)
