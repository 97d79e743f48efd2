"""Soft-margin SVM trained with SMO (second-order working-set selection)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonConvergenceWarning

TAU = 1e-12


def auto_gamma(X):
    """1 / (n_features * mean per-feature variance); 1.0 for constant data."""
    X = np.asarray(X, dtype=np.float64)
    v = float(np.mean(X.var(axis=0)))
    return 1.0 / (X.shape[1] * v) if v > 0 else 1.0


def kernel_matrix(A, B, kernel, gamma):
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T))
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass
class SVCParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | None = None  # None: auto_gamma on the training set
    tol: float = 1e-3
    max_iter: int = 1_000_000


@dataclass
class SVC:
    params: SVCParams = field(default_factory=SVCParams)
    gamma: float = 1.0
    support_vectors: np.ndarray | None = None
    dual_coef: np.ndarray | None = None  # alpha_i * y_i for each support vector
    bias: float = 0.0
    converged: bool = True
    n_iter: int = 0
    alpha: np.ndarray | None = None

    def fit(self, X, y):
        """``y`` in {0, 1}; class 1 is the +1 side of the decision function."""
        X = np.asarray(X, dtype=np.float64)
        ys = np.where(np.asarray(y) > 0, 1.0, -1.0)
        p = self.params
        self.gamma = p.gamma if p.gamma is not None else auto_gamma(X)
        K = kernel_matrix(X, X, p.kernel, self.gamma)
        alpha, bias, converged, n_iter = smo(K, ys, p.C, p.tol, p.max_iter)
        if not converged:
            warnings.warn(f"SMO stopped after {n_iter} updates without meeting tol={p.tol}",
                          NonConvergenceWarning, stacklevel=2)
        sv = alpha > 0
        self.alpha = alpha
        self.support_vectors = X[sv]
        self.dual_coef = alpha[sv] * ys[sv]
        self.bias = bias
        self.converged = converged
        self.n_iter = n_iter
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.support_vectors is None or len(self.support_vectors) == 0:
            return np.full(X.shape[0], self.bias)
        K = kernel_matrix(X, self.support_vectors, self.params.kernel, self.gamma)
        return K @ self.dual_coef + self.bias

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def to_state(self):
        return {"gamma": self.gamma, "support_vectors": self.support_vectors.tolist(),
                "dual_coef": self.dual_coef.tolist(), "bias": self.bias,
                "converged": self.converged, "n_iter": self.n_iter}

    @classmethod
    def from_state(cls, params, state):
        sv = np.asarray(state["support_vectors"], dtype=np.float64)
        return cls(params, state["gamma"], sv.reshape(len(state["dual_coef"]), -1),
                   np.asarray(state["dual_coef"], dtype=np.float64), state["bias"],
                   state["converged"], state["n_iter"])


def smo(K, y, C, tol=1e-3, max_iter=1_000_000):
    """Solve min 1/2 a'Qa - e'a s.t. 0 <= a <= C, y'a = 0 with Q = yy' * K.

    Working pairs follow the maximal-violating / second-order rule; stops when
    the violation gap m(a) - M(a) drops below ``tol``.  Returns
    (alpha, bias, converged, iterations) with decision f(x) = sum a_i y_i K(x_i, x) + bias.
    """
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    qd = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    converged = False
    it = 0
    while it < max_iter:
        yg = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        yg_up = np.where(up, yg, -np.inf)
        i = int(np.argmax(yg_up))
        m = yg_up[i]
        M = float(np.min(np.where(low, yg, np.inf)))
        if m - M < tol:
            converged = True
            break
        b = m - yg
        cand = low & (b > 0)
        a = qd[i] + qd - 2.0 * y[i] * y * Q[i]  # K_ii + K_tt - 2 K_it
        a = np.where(a > 0, a, TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        old_i, old_j = alpha[i], alpha[j]
        _update_pair(alpha, G, Q, y, i, j, C)
        di, dj = alpha[i] - old_i, alpha[j] - old_j
        G += Q[i] * di + Q[j] * dj
        it += 1
    bias = -_rho(alpha, G, y, C)
    return alpha, float(bias), converged, it


def _update_pair(alpha, G, Q, y, i, j, C):
    qii, qjj, qij = Q[i, i], Q[j, j], Q[i, j]
    if y[i] != y[j]:
        quad = qii + qjj + 2.0 * qij
        if quad <= 0:
            quad = TAU
        delta = (-G[i] - G[j]) / quad
        diff = alpha[i] - alpha[j]
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
        quad = qii + qjj - 2.0 * qij
        if quad <= 0:
            quad = TAU
        delta = (G[i] - G[j]) / quad
        total = alpha[i] + alpha[j]
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


def _rho(alpha, G, y, C):
    yg = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    # rho lies between the bounds implied by the bounded variables
    ub = np.min(np.where(up, yg, np.inf)) if up.any() else np.inf
    lb = np.max(np.where(low, yg, -np.inf)) if low.any() else -np.inf
    if np.isfinite(ub) and np.isfinite(lb):
        return 0.5 * (ub + lb)
    return float(ub if np.isfinite(ub) else lb if np.isfinite(lb) else 0.0)


def kkt_violations(K, y01, alpha, bias, C):
    """Largest violation of the box-constrained KKT conditions per sample,
    measured on y_i f(x_i) - 1."""
    y = np.where(np.asarray(y01) > 0, 1.0, -1.0)
    f = K @ (alpha * y) + bias
    margin = y * f - 1.0
    viol = np.zeros_like(margin)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    viol[at_zero] = np.maximum(0.0, -margin[at_zero])
    viol[at_c] = np.maximum(0.0, margin[at_c])
    viol[free] = np.abs(margin[free])
    return viol
