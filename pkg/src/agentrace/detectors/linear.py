"""Logistic regression (Newton with backtracking) and Gaussian naive Bayes."""

from __future__ import annotations

from typing import Any

import numpy as np

from .base import DetectorKind, DetectorModel, StandardScaler, check_binary, check_matrix
from .trees import sigmoid


def logistic_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss plus ``l2/2 * |w|^2``; returns (loss, grad_w, grad_b)."""
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    n = X.shape[0]
    return float(loss), X.T @ r / n + l2 * w, float(r.sum() / n)


class LogisticRegression(DetectorModel):
    kind = DetectorKind.LOGISTIC

    def __init__(self, weights: np.ndarray, bias: float, converged: bool, n_iter: int, **common: Any):
        super().__init__(**common)
        self.weights = np.asarray(weights, dtype=float)
        self.bias = float(bias)
        self.converged = bool(converged)
        self.n_iter = int(n_iter)

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        return sigmoid(Z @ self.weights + self.bias)

    def _state(self) -> dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> LogisticRegression:
        return cls(np.array(state["weights"]), state["bias"], state["converged"], state["n_iter"], **common)


LOGISTIC_DEFAULTS = {"l2": 1e-3, "max_iter": 100, "tol": 1e-8}


def fit_logistic(X: Any, y: Any, params: dict[str, Any] | None = None) -> LogisticRegression:
    """L2-regularized logistic regression on standardized features.

    Damped Newton iterations run until the gradient norm drops below ``tol``;
    if ``max_iter`` is reached first the model is returned with
    ``converged=False``.
    """
    p = {**LOGISTIC_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    y = check_binary(X, y).astype(float)
    scaler = StandardScaler.fit(X)
    Z = scaler.transform(X)
    n, d = Z.shape
    l2, tol = float(p["l2"]), float(p["tol"])
    A = np.column_stack([Z, np.ones(n)])
    theta = np.zeros(d + 1)
    reg = np.r_[np.full(d, l2), 0.0]

    def obj(th: np.ndarray):
        loss, gw, gb = logistic_objective(th[:d], th[d], Z, y, l2)
        return loss, np.r_[gw, gb]

    loss, grad = obj(theta)
    converged = False
    it = 0
    for it in range(1, int(p["max_iter"]) + 1):
        if np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        s = sigmoid(A @ theta)
        H = (A * (s * (1 - s))[:, None]).T @ A / n + np.diag(reg)
        H[np.diag_indices_from(H)] += 1e-12
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            c_loss, c_grad = obj(cand)
            if c_loss <= loss - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        theta, loss, grad = cand, c_loss, c_grad
    else:
        converged = bool(np.linalg.norm(grad) < tol)
    return LogisticRegression(
        theta[:d], theta[d], converged, it,
        params=p, n_features=d, scaler=scaler, decision_threshold=0.5,
    )


class GaussianNaiveBayes(DetectorModel):
    kind = DetectorKind.NAIVE_BAYES

    def __init__(self, means: np.ndarray, variances: np.ndarray, priors: np.ndarray, **common: Any):
        super().__init__(**common)
        self.means = np.asarray(means, dtype=float)  # (2, d), row = class
        self.variances = np.asarray(variances, dtype=float)
        self.priors = np.asarray(priors, dtype=float)

    def joint_log_likelihood(self, Z: np.ndarray) -> np.ndarray:
        ll = -0.5 * (
            np.log(2 * np.pi * self.variances)[None, :, :]
            + (Z[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]
        ).sum(axis=2)
        return ll + np.log(self.priors)[None, :]

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        jll = self.joint_log_likelihood(Z)
        # P(anomaly | x) = sigmoid(jll_1 - jll_0)
        return sigmoid(jll[:, 1] - jll[:, 0])

    def _state(self) -> dict[str, Any]:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> GaussianNaiveBayes:
        return cls(np.array(state["means"]), np.array(state["variances"]), np.array(state["priors"]), **common)


NB_DEFAULTS = {"var_floor": 1e-9, "standardize": True}


def fit_naive_bayes(X: Any, y: Any, params: dict[str, Any] | None = None) -> GaussianNaiveBayes:
    p = {**NB_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    y = check_binary(X, y)
    scaler = StandardScaler.fit(X) if p["standardize"] else None
    Z = scaler.transform(X) if scaler is not None else X
    means = np.vstack([Z[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.vstack([Z[y == c].var(axis=0) for c in (0, 1)])
    variances = np.maximum(variances, float(p["var_floor"]))
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    return GaussianNaiveBayes(
        means, variances, priors, params=p, n_features=X.shape[1], scaler=scaler, decision_threshold=0.5
    )
