"""Linear-Gaussian lattice state-space model.

The latent chain lives on a 1-D lattice of ``V`` sites:

* initial law: standard normal, independent across sites;
* transition: ``X_t | X_{t-1} = z ~ N(A z, sigma_x^2 I)`` with ``A`` a
  symmetric banded Toeplitz matrix, diagonals ``a_0..a_b``;
* observation: ``Y_t | X_t = x ~ N(x, sigma_y^2 I)``.

Per vertex the transition factorises as ``N(x_v; mu_v(z), sigma_x^2)``
with ``mu_v(z) = sum_r a_r sum_{u in B_r(v)} z_u``, so a component only
reads its radius-``b`` neighbourhood at the previous step.  At the lattice
edges the ring sums simply run over fewer terms, matching the banded
``A``.  All density evaluation is in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice import SpatialGraph

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ModelParams:
    """Parameter vector ``theta = (a_0..a_b, log sigma_x, log sigma_y)``."""

    a: tuple
    log_sigma_x: float
    log_sigma_y: float

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in np.atleast_1d(self.a)))
        if len(self.a) < 1:
            raise ValueError("need at least the main diagonal coefficient a_0")

    @property
    def radius(self) -> int:
        return len(self.a) - 1

    @property
    def sigma_x(self) -> float:
        return float(np.exp(self.log_sigma_x))

    @property
    def sigma_y(self) -> float:
        return float(np.exp(self.log_sigma_y))

    def to_vector(self) -> np.ndarray:
        return np.array([*self.a, self.log_sigma_x, self.log_sigma_y])

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size < 3:
            raise ValueError("parameter vector must be (a_0..a_b, log sx, log sy)")
        return cls(tuple(vec[:-2]), float(vec[-2]), float(vec[-1]))


def gaussian_log_pdf(x, mean, var):
    """Elementwise scalar normal log density."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


@dataclass(frozen=True)
class LatticeLGModel:
    """Lattice topology plus linear-Gaussian dynamics."""

    graph: SpatialGraph
    params: ModelParams

    def __post_init__(self):
        if self.params.radius != self.graph.radius:
            raise ValueError(
                f"coefficient vector has radius {self.params.radius} "
                f"but the graph radius is {self.graph.radius}"
            )

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    @property
    def sigma_x(self) -> float:
        return self.params.sigma_x

    @property
    def sigma_y(self) -> float:
        return self.params.sigma_y

    @cached_property
    def transition_matrix(self) -> np.ndarray:
        """Dense ``A``: ``A[i, j] = a_r`` when ``|i - j| = r <= b``, else 0."""
        V = self.num_vertices
        A = np.zeros((V, V))
        for r, coef in enumerate(self.params.a):
            idx = np.arange(V - r)
            A[idx, idx + r] = coef
            A[idx + r, idx] = coef
        return A

    def with_params(self, params: ModelParams) -> "LatticeLGModel":
        return LatticeLGModel(self.graph, params)

    def coupling(self, rows, cols) -> np.ndarray:
        """Submatrix ``A[rows, cols]`` (weights of cols onto rows' means)."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        return self.transition_matrix[np.ix_(rows, cols)]

    def transition_mean(self, z) -> np.ndarray:
        """``A z`` for one state or a batch of states (last axis = vertex)."""
        return np.asarray(z, dtype=float) @ self.transition_matrix.T

    def local_transition_mean(self, z, v: int) -> float:
        """``mu_v(z) = sum_r a_r sum_{u in B_r(v)} z_u`` for a full state ``z``."""
        z = np.asarray(z, dtype=float)
        total = 0.0
        for r, coef in enumerate(self.params.a):
            total += coef * z[self.graph.ring(v, r)].sum()
        return float(total)

    def local_transition_mean_from_neighborhood(self, z_neigh, v: int) -> float:
        """``mu_v`` given ``z`` restricted to ``N(v)`` (in vertex order)."""
        neigh = self.graph.neighborhood(v)
        weights = self.coupling([v], neigh)[0]
        return float(np.asarray(z_neigh, dtype=float) @ weights)

    # log densities ------------------------------------------------------

    def log_initial(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(gaussian_log_pdf(x, 0.0, 1.0).sum())

    def log_initial_v(self, x_v) -> float:
        return float(gaussian_log_pdf(x_v, 0.0, 1.0))

    def log_transition(self, z, x) -> float:
        """``log p(z, x) = sum_v log p_v(z_{N(v)}, x_v)``."""
        mu = self.transition_mean(z)
        return float(gaussian_log_pdf(np.asarray(x, float), mu, self.sigma_x**2).sum())

    def log_transition_v(self, z_neigh, x_v, v: int) -> float:
        """``log p_v`` given values of ``z`` on ``N(v)`` (in vertex order)."""
        mu = self.local_transition_mean_from_neighborhood(z_neigh, v)
        return float(gaussian_log_pdf(x_v, mu, self.sigma_x**2))

    def log_observation(self, x, y) -> float:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float(gaussian_log_pdf(y, x, self.sigma_y**2).sum())

    def log_observation_v(self, x_v, y_v) -> float:
        return float(gaussian_log_pdf(y_v, x_v, self.sigma_y**2))

    # samplers -----------------------------------------------------------

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.num_vertices))

    def sample_transition(self, z, rng: np.random.Generator) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        mu = self.transition_mean(z)
        return mu + self.sigma_x * rng.standard_normal(mu.shape)

    def sample_observation(self, x, rng: np.random.Generator) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + self.sigma_y * rng.standard_normal(x.shape)

    def simulate(self, num_steps: int, rng: np.random.Generator):
        """Exact forward draw of ``(x_{1:T}, y_{1:T})``; arrays ``(T, V)``."""
        V = self.num_vertices
        x = np.empty((num_steps, V))
        x[0] = self.sample_initial(1, rng)[0]
        for t in range(1, num_steps):
            x[t] = self.sample_transition(x[t - 1], rng)[0]
        y = self.sample_observation(x, rng)
        return x, y


def make_model(num_vertices: int, params: ModelParams) -> LatticeLGModel:
    return LatticeLGModel(SpatialGraph(num_vertices, params.radius), params)
