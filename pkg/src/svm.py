""" Soft-margin RBF support vector machine trained by sequential minimal optimization.

The dual is

    max_a  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= C,  sum(a_i y_i) = 0

and every step updates the maximal-violating pair picked with second-order
information, as LIBSVM does.
"""
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from sklearn.metrics.pairwise import rbf_kernel

from src.utils import EvaluationError
from src.utils import NumericalError
from src.utils import ValidationError

KKT_TOL = 1e-3
MAX_ITER = 100_000
CURVATURE_FLOOR = 1e-12

Gamma = Union[str, float]


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # a_i * y_i of each support vector
    bias: float
    gamma: float
    C: float
    alpha: np.ndarray  # every training point's dual variable
    kkt_residual: float
    n_iter: int
    dual_objective: float

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return rbf_kernel(X, self.support_vectors, gamma=self.gamma) @ self.dual_coef + self.bias


def resolve_gamma(X: np.ndarray, gamma: Gamma = 'scale') -> float:
    """ 'scale' means 1 / (n_features * var(X)) over all entries, 1 when X has no spread. """
    if isinstance(gamma, str):
        if gamma != 'scale':
            raise ValidationError(f'gamma must be \'scale\' or a positive number. Got {gamma!r}.')
        variance = float(np.var(X))
        return 1. / (X.shape[1] * variance) if variance > 0 else 1.
    if not float(gamma) > 0:
        raise ValidationError(f'gamma must be positive. Got {gamma} instead.')
    return float(gamma)


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    weighted = alpha * y
    return float(np.sum(alpha) - 0.5 * weighted @ K @ weighted)


def _check_inputs(X: np.ndarray, y: np.ndarray):
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError(f'X must be (n, d) with one label per row. Got X {X.shape}, y {y.shape}.')
    if not np.all(np.isfinite(X)):
        raise ValidationError('X has non-finite entries.')
    if not np.all(np.isin(y, (-1, 1))):
        raise ValidationError('labels must be -1 or +1.')
    if np.unique(y).size < 2:
        raise EvaluationError('training data hold a single class.')


def _bias(alpha: np.ndarray, y: np.ndarray, G: np.ndarray, C: float) -> float:
    # rho from the free support vectors, else the middle of the feasible interval
    minus_yg = -y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = -float(np.mean(minus_yg[free]))
    else:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        # points that bound rho from above and from below
        ub_mask = ((y == 1) & at_lower) | ((y == -1) & at_upper)
        lb_mask = ((y == 1) & at_upper) | ((y == -1) & at_lower)
        ub = float(np.min(y[ub_mask] * G[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(y[lb_mask] * G[lb_mask])) if np.any(lb_mask) else -np.inf
        if np.isinf(ub) or np.isinf(lb):
            rho = lb if np.isinf(ub) else ub
        else:
            rho = (ub + lb) / 2.
    return -rho


def svm_train(
        X: np.ndarray,
        y: np.ndarray,
        C: float = 1.0,
        gamma: Gamma = 'scale',
        tol: float = KKT_TOL,
        max_iter: int = MAX_ITER,
) -> SvmModel:
    """ Fit the dual by SMO until the maximal KKT violation drops below tol.

    :param X: (n, d) features.
    :param y: n labels in {-1, +1}.
    :param C: box constraint on every dual variable.
    :param gamma: RBF width, a positive number or 'scale'.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).reshape(-1).astype(float)
    _check_inputs(X, y)
    if not C > 0:
        raise ValidationError(f'C must be positive. Got {C} instead.')
    gamma = resolve_gamma(X, gamma)

    n = X.shape[0]
    K = rbf_kernel(X, X, gamma=gamma)
    Q = np.outer(y, y) * K
    diagonal = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient of 1/2 a'Qa - sum(a)

    residual = np.inf
    iteration = 0
    for iteration in range(max_iter):
        up = ((y == 1) & (alpha < C)) | ((y == -1) & (alpha > 0))
        low = ((y == 1) & (alpha > 0)) | ((y == -1) & (alpha < C))
        minus_yg = -y * G
        up_idx, low_idx = np.flatnonzero(up), np.flatnonzero(low)
        i = int(up_idx[np.argmax(minus_yg[up_idx])])
        m, M = minus_yg[i], float(np.min(minus_yg[low_idx]))
        residual = m - M
        if residual < tol:
            break

        candidates = low_idx[minus_yg[low_idx] < m]
        gaps = m - minus_yg[candidates]
        curvature = diagonal[i] + diagonal[candidates] - 2. * K[i, candidates]
        curvature = np.where(curvature > 0, curvature, CURVATURE_FLOOR)
        j = int(candidates[np.argmax(gaps ** 2 / curvature)])

        old_i, old_j = alpha[i], alpha[j]
        quad = max(K[i, i] + K[j, j] - 2. * K[i, j], CURVATURE_FLOOR)
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0 and alpha[j] < 0:
                alpha[j], alpha[i] = 0., diff
            elif diff <= 0 and alpha[i] < 0:
                alpha[i], alpha[j] = 0., -diff
            if diff > 0 and alpha[i] > C:
                alpha[i], alpha[j] = C, C - diff
            elif diff <= 0 and alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C and alpha[i] > C:
                alpha[i], alpha[j] = C, total - C
            elif total <= C and alpha[j] < 0:
                alpha[j], alpha[i] = 0., total
            if total > C and alpha[j] > C:
                alpha[j], alpha[i] = C, total - C
            elif total <= C and alpha[i] < 0:
                alpha[i], alpha[j] = 0., total

        G += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
    else:
        iteration = max_iter

    if not residual < tol:
        raise NumericalError(f'SMO stopped after {iteration} iterations with KKT residual {residual:.3g} >= {tol}.')
    logging.debug(f'SMO converged in {iteration} iterations, KKT residual {residual:.3g}.')

    support = alpha > 0
    return SvmModel(
        support_vectors=X[support],
        dual_coef=(alpha * y)[support],
        bias=_bias(alpha, y, G, C),
        gamma=gamma,
        C=float(C),
        alpha=alpha,
        kkt_residual=float(residual),
        n_iter=iteration,
        dual_objective=dual_objective(alpha, y, K),
    )


def svm_decision(model: SvmModel, x: np.ndarray) -> Union[float, np.ndarray]:
    """ Signed decision value; positive means the +1 class. """
    x = np.asarray(x, dtype=float)
    values = model.decision_function(x)
    return float(values[0]) if x.ndim == 1 else values
