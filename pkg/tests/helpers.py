"""Independent oracles shared by the test modules.

These deliberately avoid the package's own recursions: the joint of the
latent chain and data is built densely from first principles, expectations
of quadratics use sigma-point integration (exact for polynomials of degree
<= 3), and gradients use central finite differences.
"""

import numpy as np

from blocksmooth import LatticeLGModel, ModelParams, kalman_filter


def dense_joint_x_cov(model: LatticeLGModel, T: int) -> np.ndarray:
    """Covariance of the stacked latent path ``(X_1, ..., X_T)``."""
    V = model.num_vertices
    A = model.transition_matrix
    sx2 = model.sigma_x**2
    diag = [np.eye(V)]
    for _ in range(1, T):
        diag.append(A @ diag[-1] @ A.T + sx2 * np.eye(V))
    C = np.zeros((T * V, T * V))
    for t in range(T):
        C[t * V : (t + 1) * V, t * V : (t + 1) * V] = diag[t]
        cross = diag[t]
        for s in range(t + 1, T):
            cross = A @ cross  # Cov(X_s, X_t) = A^{s-t} Cov(X_t, X_t)
            C[s * V : (s + 1) * V, t * V : (t + 1) * V] = cross
            C[t * V : (t + 1) * V, s * V : (s + 1) * V] = cross.T
    return C


def dense_loglik(model: LatticeLGModel, y: np.ndarray) -> float:
    """Joint-Gaussian log density of ``y_{1:T}`` (Y = X + noise)."""
    T, V = y.shape
    Cy = dense_joint_x_cov(model, T) + model.sigma_y**2 * np.eye(T * V)
    yv = y.ravel()
    _, logdet = np.linalg.slogdet(Cy)
    return float(-0.5 * (T * V * np.log(2 * np.pi) + logdet + yv @ np.linalg.solve(Cy, yv)))


def dense_posterior(model: LatticeLGModel, y: np.ndarray):
    """Exact smoothing posterior ``X_{1:T} | y`` as (mean, cov) of the stack."""
    T, V = y.shape
    Cx = dense_joint_x_cov(model, T)
    Cy = Cx + model.sigma_y**2 * np.eye(T * V)
    gain = Cx @ np.linalg.inv(Cy)
    mean = gain @ y.ravel()
    cov = Cx - gain @ Cx
    return mean, 0.5 * (cov + cov.T)


def fd_loglik_gradient(model: LatticeLGModel, y: np.ndarray, h: float = 1e-5) -> np.ndarray:
    theta = model.params.to_vector()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (
            kalman_filter(model.with_params(ModelParams.from_vector(up)), y).loglik
            - kalman_filter(model.with_params(ModelParams.from_vector(dn)), y).loglik
        ) / (2 * h)
    return grad


def sigma_point_expectation(fn, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Exact Gaussian expectation of a quadratic function via the unscented
    sigma-point rule (exact for polynomial degree <= 3).

    ``fn`` maps a batch ``(n, d)`` to ``(n, D)``.
    """
    d = mean.size
    kappa = 1.0
    scale = np.sqrt(d + kappa)
    L = np.linalg.cholesky(cov + 1e-12 * np.eye(d))
    points = [mean]
    weights = [kappa / (d + kappa)]
    for i in range(d):
        points.append(mean + scale * L[:, i])
        points.append(mean - scale * L[:, i])
        weights += [0.5 / (d + kappa)] * 2
    values = fn(np.asarray(points))
    return np.asarray(weights) @ values


def random_model(rng: np.random.Generator, V: int, radius: int = 1, stable: bool = True) -> LatticeLGModel:
    """Random parameters with a stable transition matrix by default."""
    from blocksmooth import make_model

    a = rng.uniform(0.1, 0.6, size=radius + 1)
    if stable:
        a = a / (2.2 * a.sum())  # spectral radius of banded Toeplitz < sum of |coefs|
        a = a + rng.uniform(0.05, 0.25)
        a = a / max(1.0, 1.25 * (a[0] + 2 * a[1:].sum()))
    log_sx, log_sy = rng.uniform(-0.4, 0.4, size=2)
    return make_model(V, ModelParams(tuple(a), float(log_sx), float(log_sy)))
