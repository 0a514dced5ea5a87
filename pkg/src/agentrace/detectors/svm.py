"""Kernel machines trained with SMO-style pairwise updates.

Both solvers minimise a quadratic over box constraints and one linear equality
using maximal-violating-pair selection with second-order working-set choice.
"""

from __future__ import annotations

import warnings
from typing import Any

import numpy as np

from .base import DetectorKind, DetectorModel, FitError, StandardScaler, check_binary, check_matrix

TAU = 1e-12


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise FitError(f"unknown kernel {kernel!r}")


def resolve_gamma(gamma: Any, Z: np.ndarray) -> float:
    if gamma in (None, "scale"):
        var = Z.var()
        return 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
    g = float(gamma)
    if g <= 0:
        raise FitError("gamma must be positive")
    return g


# ---------------------------------------------------------------- C-SVM


def solve_csvm(K: np.ndarray, y: np.ndarray, C: float, eps: float, max_iter: int):
    """Dual C-SVM with labels in {-1, +1}.

    Returns ``(alpha, b, n_iter, converged)``; the decision value is
    ``sum_j alpha_j y_j K(x_j, x) + b``.
    """
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 0.5 a'Qa - e'a with Q = yy'K
    diag = np.diag(K).copy()
    converged = False
    it = 0
    for it in range(max_iter):
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        m = yG[i]
        M = yG[low].min()
        if m - M < eps:
            converged = True
            break
        cand = low & (yG < m)
        b_it = m - yG[cand]
        a_it = diag[i] + diag[cand] - 2.0 * K[i, cand]
        a_it = np.where(a_it > 0, a_it, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b_it**2) / a_it)])

        Ki, Kj = K[:, i], K[:, j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * K[i, j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        di, dj = alpha[i] - ai, alpha[j] - aj
        G += y * (y[i] * Ki * di + y[j] * Kj * dj)

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yG[free].mean()
    else:
        at_ub, at_lb = alpha >= C, alpha <= 0
        ub_set = (at_ub & (y < 0)) | (at_lb & (y > 0))
        lb_set = (at_ub & (y > 0)) | (at_lb & (y < 0))
        ub = yG[ub_set].min() if ub_set.any() else np.inf
        lb = yG[lb_set].max() if lb_set.any() else -np.inf
        rho = (ub + lb) / 2.0 if np.isfinite(ub + lb) else (ub if np.isfinite(ub) else lb)
    return alpha, -rho, it, converged


def csvm_kkt_residuals(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, b: float, C: float) -> np.ndarray:
    """Per-variable violation of the soft-margin KKT conditions."""
    margin = y * (K @ (alpha * y) + b)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    res = np.zeros_like(alpha)
    res[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    res[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    res[free] = np.abs(margin[free] - 1.0)
    return res


class SupportVectorMachine(DetectorModel):
    kind = DetectorKind.SVM

    def __init__(self, support: np.ndarray, coef: np.ndarray, bias: float, kernel: str,
                 gamma: float, converged: bool, **common: Any):
        super().__init__(**common)
        self.support = np.asarray(support, dtype=float).reshape(-1, common["n_features"])
        self.coef = np.asarray(coef, dtype=float)  # alpha_j * y_j
        self.bias = float(bias)
        self.kernel = kernel
        self.gamma = float(gamma)
        self.converged = converged

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        if self.coef.size == 0:
            return np.full(Z.shape[0], self.bias)
        return kernel_matrix(Z, self.support, self.kernel, self.gamma) @ self.coef + self.bias

    def _state(self) -> dict[str, Any]:
        return {
            "kernel": self.kernel,
            "gamma": self.gamma,
            "bias": self.bias,
            "converged": self.converged,
            "support_vectors": [
                {"x": sv.tolist(), "coef": float(c)} for sv, c in zip(self.support, self.coef)
            ],
        }

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> SupportVectorMachine:
        svs = state["support_vectors"]
        return cls(
            np.array([s["x"] for s in svs]), np.array([s["coef"] for s in svs]),
            state["bias"], state["kernel"], state["gamma"], state["converged"], **common,
        )


SVM_DEFAULTS = {"C": 1.0, "kernel": "rbf", "gamma": "scale", "tol": 1e-4, "max_iter": 200_000}


def fit_svm(X: Any, y: Any, params: dict[str, Any] | None = None) -> SupportVectorMachine:
    """Soft-margin SVM on standardized features; score = signed decision value."""
    p = {**SVM_DEFAULTS, **(params or {})}
    X = check_matrix(X)
    y01 = check_binary(X, y)
    C = float(p["C"])
    if C <= 0:
        raise FitError("C must be positive")
    scaler = StandardScaler.fit(X)
    Z = scaler.transform(X)
    gamma = resolve_gamma(p["gamma"], Z)
    K = kernel_matrix(Z, Z, p["kernel"], gamma)
    ys = np.where(y01 == 1, 1.0, -1.0)
    alpha, b, _, converged = solve_csvm(K, ys, C, float(p["tol"]), int(p["max_iter"]))
    sv = alpha > 0
    model = SupportVectorMachine(
        Z[sv], alpha[sv] * ys[sv], b, p["kernel"], gamma, converged,
        params=p, n_features=X.shape[1], scaler=scaler, decision_threshold=0.0,
    )
    model.train_alpha = alpha
    return model


# ------------------------------------------------------------------ SVDD


def solve_svdd(K: np.ndarray, C: float, eps: float, max_iter: int):
    """Minimise a'Ka - diag(K)'a subject to sum(a) = 1, 0 <= a <= C.

    Returns ``(alpha, n_iter, converged)``.
    """
    n = K.shape[0]
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    remaining = 1.0
    for i in range(n):
        if remaining <= 0:
            break
        alpha[i] = min(C, remaining)
        remaining -= alpha[i]
    G = 2.0 * K @ alpha - diag
    converged = False
    it = 0
    for it in range(max_iter):
        up = alpha < C
        low = alpha > 0
        if not up.any() or not low.any():
            converged = True
            break
        negG = -G
        i = int(np.flatnonzero(up)[np.argmax(negG[up])])
        m = negG[i]
        M = negG[low].min()
        if m - M < eps:
            converged = True
            break
        cand = low & (negG < m)
        b_it = m - negG[cand]
        a_it = 2.0 * (diag[i] + diag[cand] - 2.0 * K[i, cand])
        a_it = np.where(a_it > 0, a_it, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b_it**2) / a_it)])

        quad = max(2.0 * (diag[i] + diag[j] - 2.0 * K[i, j]), TAU)
        # Shift mass from j to i, clipped to the box.
        delta = (G[j] - G[i]) / quad
        delta = min(delta, C - alpha[i], alpha[j])
        alpha[i] += delta
        alpha[j] -= delta
        if alpha[j] < 0:
            alpha[j] = 0.0
        G += 2.0 * delta * (K[:, i] - K[:, j])
    return alpha, it, converged


def svdd_distances(K_cross: np.ndarray, k_self: np.ndarray, alpha: np.ndarray, aKa: float) -> np.ndarray:
    """Squared feature-space distance to the centre for each query row."""
    return k_self - 2.0 * K_cross @ alpha + aKa


def svdd_radius2(d2: np.ndarray, alpha: np.ndarray, C: float, tol: float = 1e-12) -> float:
    free = (alpha > tol) & (alpha < C - tol)
    if free.any():
        return float(d2[free].mean())
    inside = alpha <= tol
    at_c = alpha >= C - tol
    lo = d2[inside].max() if inside.any() else None
    hi = d2[at_c].min() if at_c.any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2.0)


def svdd_kkt_residuals(d2: np.ndarray, alpha: np.ndarray, R2: float, C: float) -> np.ndarray:
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    res = np.zeros_like(alpha)
    res[at_zero] = np.maximum(0.0, d2[at_zero] - R2)
    res[at_c] = np.maximum(0.0, R2 - d2[at_c])
    res[free] = np.abs(d2[free] - R2)
    return res


class SVDD(DetectorModel):
    """Minimum enclosing ball in RBF feature space; score = d^2 - R^2."""

    kind = DetectorKind.SVDD

    def __init__(self, support: np.ndarray, alpha: np.ndarray, radius2: float, aKa: float,
                 gamma: float, converged: bool, **common: Any):
        super().__init__(**common)
        self.support = np.asarray(support, dtype=float).reshape(-1, common["n_features"])
        self.alpha = np.asarray(alpha, dtype=float)
        self.radius2 = float(radius2)
        self.aKa = float(aKa)
        self.gamma = float(gamma)
        self.converged = converged

    def _raw_score(self, Z: np.ndarray) -> np.ndarray:
        Kx = kernel_matrix(Z, self.support, "rbf", self.gamma)
        return svdd_distances(Kx, np.ones(Z.shape[0]), self.alpha, self.aKa) - self.radius2

    def _state(self) -> dict[str, Any]:
        return {
            "gamma": self.gamma,
            "radius2": self.radius2,
            "center_norm2": self.aKa,
            "converged": self.converged,
            "support_vectors": [
                {"x": sv.tolist(), "alpha": float(a)} for sv, a in zip(self.support, self.alpha)
            ],
        }

    @classmethod
    def _from_state(cls, state: dict[str, Any], **common: Any) -> SVDD:
        svs = state["support_vectors"]
        return cls(
            np.array([s["x"] for s in svs]), np.array([s["alpha"] for s in svs]),
            state["radius2"], state["center_norm2"], state["gamma"], state["converged"], **common,
        )


SVDD_DEFAULTS = {"C": 0.05, "gamma": "scale", "tol": 1e-8, "max_iter": 500_000}


def fit_svdd(X_normal: Any, params: dict[str, Any] | None = None) -> SVDD:
    """Fit the enclosing sphere on normal rows only (standardized, RBF kernel)."""
    p = {**SVDD_DEFAULTS, **(params or {})}
    X = check_matrix(X_normal)
    n = X.shape[0]
    if n == 0:
        raise FitError("SVDD needs at least one training row")
    C = float(p["C"])
    if C * n < 1.0:
        warnings.warn(f"SVDD C={C} infeasible for n={n}; raising C to 1/n", stacklevel=2)
        C = 1.0 / n
    C = min(C, 1.0)
    scaler = StandardScaler.fit(X)
    Z = scaler.transform(X)
    gamma = resolve_gamma(p["gamma"], Z)
    K = kernel_matrix(Z, Z, "rbf", gamma)
    alpha, _, converged = solve_svdd(K, C, float(p["tol"]), int(p["max_iter"]))
    aKa = float(alpha @ K @ alpha)
    d2 = svdd_distances(K, np.diag(K), alpha, aKa)
    R2 = svdd_radius2(d2, alpha, C)
    sv = alpha > 0
    model = SVDD(
        Z[sv], alpha[sv], R2, aKa, gamma, converged,
        params={**p, "C_effective": C}, n_features=X.shape[1], scaler=scaler, decision_threshold=0.0,
    )
    model.train_alpha = alpha
    model.train_d2 = d2
    model.C_effective = C
    return model
