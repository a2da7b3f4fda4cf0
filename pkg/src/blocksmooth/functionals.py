"""Additive functionals and the maps turning smoothed statistics into
score vectors and EM updates.

An additive functional decomposes over time and space,

    S_T(x_{1:T}) = sum_t sum_{v in K} psi_{t,v}(x_{t-1, N(v)}, x_{t,v}),

and every functional tracked here has per-step terms of the separable form

    s_d(z, x) = const_d + curr_d(x) + prev_d(z) + sum_j f_j(x) g_j(z),

which is what lets the forward-smoothing recursion run on matrix products
instead of materialising N x N x D arrays.  ``StepTerms`` carries one
step's decomposition; smoothers consume it via ``paired_eval`` (backward
sampling) or the cross-term arrays directly (forward smoothing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MStepError
from .lattice import SpatialGraph
from .model import LatticeLGModel, ModelParams


def _positions(scope: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Column positions of ``vertices`` inside the sorted ``scope`` array."""
    pos = np.searchsorted(scope, vertices)
    if np.any(pos >= scope.size) or np.any(scope[pos] != vertices):
        raise ValueError("functional vertices outside the provided scope")
    return pos


def ring_indicator(graph: SpatialGraph, vertices: np.ndarray, scope: np.ndarray, r: int) -> np.ndarray:
    """Matrix ``R`` with ``R[i, j] = 1`` iff ``|vertices[i] - scope[j]| = r``.

    ``z_scope @ R.T`` then computes the ring sums ``sum_{u in B_r(v)} z_u``.
    """
    return (np.abs(vertices[:, None] - scope[None, :]) == r).astype(float)


@dataclass
class StepTerms:
    """Separable decomposition of one time step's additive term.

    ``curr``/``prev`` map a particle batch restricted to the corresponding
    scope to ``(n, D)`` arrays; ``cross_curr``/``cross_prev`` to ``(n, J)``
    with ``cross_index[j]`` naming the functional each product feeds.
    """

    dim: int
    const: np.ndarray | None = None
    curr: object = None
    prev: object = None
    cross_curr: object = None
    cross_prev: object = None
    cross_index: np.ndarray | None = None

    def paired_eval(self, z_prev: np.ndarray | None, x_curr: np.ndarray) -> np.ndarray:
        """Evaluate ``s(z_m, x_m)`` along paired batches; returns ``(n, D)``."""
        n = x_curr.shape[0]
        out = np.zeros((n, self.dim))
        if self.const is not None:
            out += self.const
        if self.curr is not None:
            out += self.curr(x_curr)
        if self.prev is not None:
            out += self.prev(z_prev)
        if self.cross_curr is not None:
            prod = self.cross_curr(x_curr) * self.cross_prev(z_prev)
            np.add.at(out, (slice(None), self.cross_index), prod)
        return out


class AdditiveFunctional:
    """Base class: a ``dim``-vector of additive statistics over a vertex set."""

    dim: int = 0

    def step_terms(self, t: int, prev_scope: np.ndarray | None, curr_scope: np.ndarray) -> StepTerms | None:
        """Terms of step ``t`` (0-based; ``t = 0`` has no previous state).

        Returns None when the step contributes nothing.
        """
        raise NotImplementedError


class ZeroFunctional(AdditiveFunctional):
    """Identically-zero functional (placeholder for blocks that own nothing)."""

    def __init__(self, dim: int):
        self.dim = dim

    def step_terms(self, t, prev_scope, curr_scope):
        return None


class ComponentSumFunctional(AdditiveFunctional):
    """Per-vertex time sums ``sum_t x_{t,v}``.

    The output vector is indexed by ``index_vertices``; only the
    ``tracked`` subset contributes (other coordinates stay zero), so
    block-restricted instances of a common index set add up across blocks.
    """

    def __init__(self, index_vertices, tracked=None):
        self.index_vertices = np.asarray(index_vertices, dtype=int)
        self.tracked = self.index_vertices if tracked is None else np.asarray(tracked, dtype=int)
        self.dim = self.index_vertices.size
        self._out_pos = _positions(self.index_vertices, self.tracked)

    def step_terms(self, t, prev_scope, curr_scope):
        pos = _positions(curr_scope, self.tracked)
        out_pos = self._out_pos

        def curr(X):
            out = np.zeros((X.shape[0], self.dim))
            out[:, out_pos] = X[:, pos]
            return out

        return StepTerms(dim=self.dim, curr=curr)


class LocalStateFunctional(AdditiveFunctional):
    """Single component ``x_{t0, v0}`` (a spatially and temporally local probe)."""

    dim = 1

    def __init__(self, t0: int, v0: int):
        self.t0 = t0
        self.v0 = v0

    def step_terms(self, t, prev_scope, curr_scope):
        if t != self.t0:
            return None
        pos = _positions(curr_scope, np.array([self.v0]))
        return StepTerms(dim=1, curr=lambda X: X[:, pos])


class PairProductFunctional(AdditiveFunctional):
    """The smoothing target ``sum_{t<T} sum_v x_{t+1,v} sum_{u in B_r(v)} x_{t,u}``.

    ``vertices`` restricts the spatial sum to one block.
    """

    dim = 1

    def __init__(self, graph: SpatialGraph, vertices, r: int = 1):
        self.graph = graph
        self.vertices = np.asarray(vertices, dtype=int)
        self.r = r

    def step_terms(self, t, prev_scope, curr_scope):
        if t == 0:
            return None
        pos = _positions(curr_scope, self.vertices)
        ring = ring_indicator(self.graph, self.vertices, prev_scope, self.r)
        idx = np.zeros(self.vertices.size, dtype=int)
        return StepTerms(
            dim=1,
            cross_curr=lambda X: X[:, pos],
            cross_prev=lambda Z: Z @ ring.T,
            cross_index=idx,
        )


@dataclass
class SuffStats:
    """Smoothed sufficient statistics of the lattice model.

    ``t1`` is the (b+1)x(b+1) matrix of ring-sum cross moments, ``t2`` the
    length-(b+1) vector of next-state/ring-sum moments, ``t3`` the total
    second moment, ``t3_first`` its time-1 part, ``t4`` the state-data
    moment.  ``t3_first`` is carried explicitly because both the score and
    the EM update subtract it.
    """

    t1: np.ndarray
    t2: np.ndarray
    t3: float
    t3_first: float
    t4: float

    @property
    def radius(self) -> int:
        return self.t2.size - 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.t1.ravel(), self.t2, [self.t3, self.t3_first, self.t4]])

    @classmethod
    def from_vector(cls, vec: np.ndarray, radius: int) -> "SuffStats":
        b1 = radius + 1
        vec = np.asarray(vec, dtype=float)
        if vec.size != b1 * b1 + b1 + 3:
            raise ValueError("statistic vector has the wrong length")
        t1 = vec[: b1 * b1].reshape(b1, b1)
        t1 = 0.5 * (t1 + t1.T)  # estimated versions are symmetrised
        t2 = vec[b1 * b1 : b1 * b1 + b1]
        t3, t3_first, t4 = vec[-3:]
        return cls(t1=t1, t2=t2.copy(), t3=float(t3), t3_first=float(t3_first), t4=float(t4))

    @staticmethod
    def vector_dim(radius: int) -> int:
        b1 = radius + 1
        return b1 * b1 + b1 + 3

    @staticmethod
    def component_names(radius: int) -> list:
        b1 = radius + 1
        names = [f"t1_{r}{q}" for r in range(b1) for q in range(b1)]
        names += [f"t2_{r}" for r in range(b1)]
        names += ["t3", "t3_first", "t4"]
        return names


class SuffStatFunctional(AdditiveFunctional):
    """Additive evaluators of the four statistic families plus ``t3_first``.

    Component layout matches ``SuffStats.to_vector``.  The ring--ring
    products feed ``t1`` (previous state only), the next-state/ring
    products feed ``t2`` (cross terms), squares and data products feed
    ``t3``/``t4`` at every step, ``t3_first`` only at the first.
    """

    def __init__(self, model: LatticeLGModel, y: np.ndarray, vertices):
        self.graph = model.graph
        self.y = np.asarray(y, dtype=float)
        self.vertices = np.asarray(vertices, dtype=int)
        b1 = model.params.radius + 1
        self.b1 = b1
        self.dim = SuffStats.vector_dim(model.params.radius)
        self.i_t1 = 0
        self.i_t2 = b1 * b1
        self.i_t3 = b1 * b1 + b1
        self.i_t3_first = self.i_t3 + 1
        self.i_t4 = self.i_t3 + 2

    def step_terms(self, t, prev_scope, curr_scope):
        pos = _positions(curr_scope, self.vertices)
        y_t = self.y[t, self.vertices]
        b1 = self.b1

        def curr(X, pos=pos, y_t=y_t, t=t):
            n = X.shape[0]
            out = np.zeros((n, self.dim))
            sq = (X[:, pos] ** 2).sum(axis=1)
            out[:, self.i_t3] = sq
            if t == 0:
                out[:, self.i_t3_first] = sq
            out[:, self.i_t4] = X[:, pos] @ y_t
            return out

        if t == 0:
            return StepTerms(dim=self.dim, curr=curr)

        rings = [ring_indicator(self.graph, self.vertices, prev_scope, r) for r in range(b1)]

        def prev(Z, rings=rings):
            n = Z.shape[0]
            out = np.zeros((n, self.dim))
            sums = [Z @ R.T for R in rings]  # each (n, |K|)
            for r in range(b1):
                for q in range(b1):
                    out[:, self.i_t1 + r * b1 + q] = (sums[q] * sums[r]).sum(axis=1)
            return out

        nv = self.vertices.size
        cross_index = np.concatenate([np.full(nv, self.i_t2 + r) for r in range(b1)])
        ring_stack = np.vstack(rings)  # (b1 * |K|, |prev_scope|)

        return StepTerms(
            dim=self.dim,
            curr=curr,
            prev=prev,
            cross_curr=lambda X: np.tile(X[:, pos], b1),
            cross_prev=lambda Z: Z @ ring_stack.T,
            cross_index=cross_index,
        )


class ScoreFunctional(AdditiveFunctional):
    """Closed-form gradient terms ``grad_theta log[p_v g_v]`` (and of
    ``m_v g_v`` at the first step) summed over a vertex set.

    Components follow the parameter ordering ``(a_0..a_b, log sx, log sy)``.
    The initial law carries no parameters, so step one only contributes to
    the observation-noise coordinate.
    """

    def __init__(self, model: LatticeLGModel, y: np.ndarray, vertices):
        self.model = model
        self.graph = model.graph
        self.y = np.asarray(y, dtype=float)
        self.vertices = np.asarray(vertices, dtype=int)
        self.b1 = model.params.radius + 1
        self.dim = self.b1 + 2
        self.i_sx = self.b1
        self.i_sy = self.b1 + 1

    def step_terms(self, t, prev_scope, curr_scope):
        pos = _positions(curr_scope, self.vertices)
        y_t = self.y[t, self.vertices]
        sy2 = self.model.sigma_y**2
        nv = self.vertices.size

        const = np.zeros(self.dim)
        const[self.i_sy] = -nv

        def curr_obs(X, pos=pos, y_t=y_t):
            out = np.zeros((X.shape[0], self.dim))
            out[:, self.i_sy] = ((y_t - X[:, pos]) ** 2 / sy2).sum(axis=1)
            return out

        if t == 0:
            return StepTerms(dim=self.dim, const=const, curr=curr_obs)

        sx2 = self.model.sigma_x**2
        const = const.copy()
        const[self.i_sx] = -nv

        rings = [ring_indicator(self.graph, self.vertices, prev_scope, r) for r in range(self.b1)]
        mu_w = self.model.coupling(self.vertices, prev_scope)  # (|K|, |scope|)

        def curr(X, pos=pos, y_t=y_t):
            out = curr_obs(X)
            out[:, self.i_sx] = (X[:, pos] ** 2).sum(axis=1) / sx2
            return out

        def prev(Z, rings=rings, mu_w=mu_w):
            out = np.zeros((Z.shape[0], self.dim))
            mu = Z @ mu_w.T  # (n, |K|)
            for r, R in enumerate(rings):
                out[:, r] = -(mu * (Z @ R.T)).sum(axis=1) / sx2
            out[:, self.i_sx] = (mu**2).sum(axis=1) / sx2
            return out

        # cross products: x_v * S_r(z)_v / sx2 into coordinate r, and
        # -2 x_v * mu_v(z) / sx2 into the log-sigma_x coordinate.
        ring_stack = np.vstack(rings + [mu_w])
        cross_index = np.concatenate(
            [np.full(nv, r) for r in range(self.b1)] + [np.full(nv, self.i_sx)]
        )

        def cross_curr(X, pos=pos):
            base = X[:, pos] / sx2
            return np.concatenate([np.tile(base, self.b1), -2.0 * base], axis=1)

        return StepTerms(
            dim=self.dim,
            const=const,
            curr=curr,
            prev=prev,
            cross_curr=cross_curr,
            cross_prev=lambda Z: Z @ ring_stack.T,
            cross_index=cross_index,
        )


def suffstat_functionals(model: LatticeLGModel, y: np.ndarray, vertices=None) -> SuffStatFunctional:
    """Sufficient-statistic evaluators restricted to ``vertices`` (default all)."""
    if vertices is None:
        vertices = model.graph.vertices
    return SuffStatFunctional(model, y, vertices)


def score_functionals(model: LatticeLGModel, y: np.ndarray, vertices=None) -> ScoreFunctional:
    """Score evaluators restricted to ``vertices`` (default all)."""
    if vertices is None:
        vertices = model.graph.vertices
    return ScoreFunctional(model, y, vertices)


# ---------------------------------------------------------------------------
# Gradient and EM maps
# ---------------------------------------------------------------------------


def psi_map(theta: ModelParams, stats: SuffStats, y_sq: float, V: int, T: int) -> np.ndarray:
    """Score vector from smoothed statistics.

    The ``a`` block is ``exp(-2 log sx) (t2 - t1 a)``; the noise
    coordinates pair the quadratic forms with their ``-V(T-1)`` and
    ``-V T`` offsets.
    """
    if T <= 1:
        raise ValueError("the score map needs T > 1")
    a = np.array(theta.a)
    inv_sx2 = np.exp(-2.0 * theta.log_sigma_x)
    inv_sy2 = np.exp(-2.0 * theta.log_sigma_y)
    out = np.empty(a.size + 2)
    out[: a.size] = inv_sx2 * (stats.t2 - stats.t1 @ a)
    out[a.size] = (
        inv_sx2 * (stats.t3 - stats.t3_first - 2.0 * a @ stats.t2 + a @ stats.t1 @ a)
        - V * (T - 1)
    )
    out[a.size + 1] = inv_sy2 * (stats.t3 - 2.0 * stats.t4 + y_sq) - V * T
    return out


def lambda_map(stats: SuffStats, y_sq: float, V: int, T: int) -> ModelParams:
    """Closed-form EM M-step for the lattice model."""
    if T <= 1:
        raise ValueError("the EM update needs T > 1")
    try:
        a_new = np.linalg.solve(stats.t1, stats.t2)
    except np.linalg.LinAlgError as exc:
        raise MStepError("singular ring-moment matrix in M-step", value=stats.t1) from exc
    var_x = (stats.t3 - stats.t3_first - stats.t2 @ a_new) / (V * (T - 1))
    if not var_x > 0:
        raise MStepError("nonpositive transition-variance argument in M-step", value=var_x)
    var_y = (stats.t3 - 2.0 * stats.t4 + y_sq) / (V * T)
    if not var_y > 0:
        raise MStepError("nonpositive observation-variance argument in M-step", value=var_y)
    return ModelParams(tuple(a_new), 0.5 * float(np.log(var_x)), 0.5 * float(np.log(var_y)))
