"""Forward smoothing and backward sampling, standard and blocked.

Everything runs through one per-block engine.  A block ``K`` with
enlargement ``K_hat = N_i(K)`` reads particle coordinates on the scope
``N(K_hat)`` only; the backward kernel reweights the time-``t`` cloud by
the block transition factor ``prod_{v in K_hat} p_v``.  The standard
algorithms are the single-block case (``K = K_hat = scope = V``), which
makes the single-block reduction invariants hold bit-for-bit.

Kernel rows are computed lazily per time step and never stored across
steps; within a row the reduction order is fixed (particle-index order),
so results do not depend on scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, WeightDegeneracyError
from .filtering import FilterProvider, resample_categorical
from .functionals import AdditiveFunctional, _positions
from .lattice import BlockPartition
from .model import LOG_2PI, LatticeLGModel
from .rng import STREAM_BACKWARD, RngKey


def _pairwise_sq_dists(X: np.ndarray, Mu: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of ``X`` and ``Mu``."""
    x2 = np.einsum("ij,ij->i", X, X)
    m2 = np.einsum("ij,ij->i", Mu, Mu)
    d2 = x2[:, None] + m2[None, :] - 2.0 * (X @ Mu.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def transition_log_density_matrix(
    model: LatticeLGModel,
    Z: np.ndarray,
    X: np.ndarray,
    x_vertices: np.ndarray,
    z_scope: np.ndarray,
) -> np.ndarray:
    """``sum_{v in x_vertices} log p_v(Z_m, X_n[v])`` for all pairs.

    ``Z`` is a batch restricted to ``z_scope`` (which must contain the
    neighbourhood of every ``x`` vertex), ``X`` a batch of the ``x``
    coordinates only.  Returns ``(len(X), len(Z))``.
    """
    W = model.coupling(x_vertices, z_scope)
    mu = Z @ W.T
    d2 = _pairwise_sq_dists(X, mu)
    sx = model.sigma_x
    k = len(x_vertices)
    return -0.5 * d2 / sx**2 - k * (np.log(sx) + 0.5 * LOG_2PI)


def _normalize_rows(log_rows: np.ndarray, t=None, block=None) -> np.ndarray:
    m = log_rows.max(axis=1)
    if not np.all(np.isfinite(m)):
        if np.any(np.isnan(m)) or np.any(m == np.inf):
            raise NumericalFailure(f"non-finite backward-kernel rows at t={t}")
        raise WeightDegeneracyError(
            f"backward kernel row degenerate at t={t}"
            + (f", block={list(block)}" if block is not None else ""),
            t=t,
            block=block,
        )
    log_rows -= m[:, None]
    np.exp(log_rows, out=log_rows)
    log_rows /= log_rows.sum(axis=1, keepdims=True)
    return log_rows


def _normalized_kernel_rows(model, Z, log_w, X_sub, k_hat, scope, t=None):
    """Row-normalised backward-kernel probabilities ``(n, m)``.

    Terms constant within a row drop out under normalisation, so only the
    cross product ``X A^T Z^T / sx^2`` and the per-particle bias
    ``log w - |mu|^2 / (2 sx^2)`` are formed (one GEMM plus a softmax).
    """
    W = model.coupling(k_hat, scope)
    mu = Z @ W.T  # (m, k)
    sx2 = model.sigma_x**2
    bias = log_w - 0.5 * np.einsum("ij,ij->i", mu, mu) / sx2
    rows = X_sub @ mu.T
    rows /= sx2
    rows += bias[None, :]
    return _normalize_rows(rows, t=t, block=k_hat)


def backward_kernel_row(model, particles_t: np.ndarray, weights_t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Backward-kernel probabilities ``probs[n] propto W^n p(X_t^n, x)``."""
    particles_t = np.asarray(particles_t, dtype=float)
    x = np.asarray(x, dtype=float)
    scope = np.arange(particles_t.shape[1])
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(weights_t, dtype=float))
    rows = log_w[None, :] + transition_log_density_matrix(
        model, particles_t, x[None, :], scope, scope
    )
    return _normalize_rows(rows)[0]


def blocked_backward_kernel_row(
    model,
    particles_scope: np.ndarray,
    weights: np.ndarray,
    x: np.ndarray,
    k_hat,
    scope,
) -> np.ndarray:
    """Blocked kernel row: reweight by the block transition factor only.

    ``particles_scope`` holds the time-``t`` particles restricted to
    ``scope`` (the neighbourhood of ``k_hat``), ``x`` the query values on
    ``k_hat``.
    """
    k_hat = np.asarray(k_hat, dtype=int)
    scope = np.asarray(scope, dtype=int)
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(weights, dtype=float))
    rows = log_w[None, :] + transition_log_density_matrix(
        model, np.asarray(particles_scope, dtype=float), np.asarray(x, dtype=float)[None, :], k_hat, scope
    )
    return _normalize_rows(rows)[0]


@dataclass
class BlockedSmoothingResult:
    """Per-block estimates ``S_{T,K}`` and their total ``S_T = sum_K S_{T,K}``."""

    per_block: np.ndarray  # (num_blocks, D)
    total: np.ndarray      # (D,)
    paths: list | None = None  # backward sampling only: per block, per time


def _block_scopes(model, partition, k):
    K = partition.block(k)
    K_hat = partition.enlarged_block(k, model.graph)
    scope = model.graph.neighborhood_of_set(K_hat)
    return K, K_hat, scope


def _apply_step_terms(terms, B, alpha, Z, X):
    """alpha'[n] = sum_m B[n,m] (alpha[m] + s(Z_m, X_n))."""
    out = B @ alpha
    if terms is None:
        return out
    if terms.const is not None:
        out += terms.const
    if terms.curr is not None:
        out += terms.curr(X)
    if terms.prev is not None:
        out += B @ terms.prev(Z)
    if terms.cross_curr is not None:
        prod = terms.cross_curr(X) * (B @ terms.cross_prev(Z))
        np.add.at(out, (slice(None), terms.cross_index), prod)
    return out


def _forward_pass(model, provider, functional, K_hat, scope):
    T = provider.num_steps
    N = provider.num_particles
    khat_pos = _positions(scope, K_hat)

    X = provider.states_at(0, scope)
    terms = functional.step_terms(0, None, scope)
    alpha = np.zeros((N, functional.dim))
    if terms is not None:
        alpha += terms.paired_eval(None, X)

    for t in range(T - 1):
        Z = provider.states_at(t, scope)
        log_w = provider.log_weights(t, scope)
        X = provider.states_at(t + 1, scope)
        B = _normalized_kernel_rows(model, Z, log_w, X[:, khat_pos], K_hat, scope, t=t)
        terms = functional.step_terms(t + 1, scope, scope)
        alpha = _apply_step_terms(terms, B, alpha, Z, X)

    w_final = provider.weights(T - 1, K_hat)
    return w_final @ alpha


def _backward_pass(model, provider, functional, K_hat, scope, num_paths, gen):
    T = provider.num_steps
    N = provider.num_particles
    khat_pos = _positions(scope, K_hat)

    paths = [None] * T
    w_final = provider.weights(T - 1, K_hat)
    idx = resample_categorical(w_final, num_paths, gen)
    paths[T - 1] = provider.states_at(T - 1, K_hat)[idx]

    for t in range(T - 2, -1, -1):
        Z = provider.states_at(t, scope)
        log_w = provider.log_weights(t, scope)
        x_query = paths[t + 1] if t + 1 == T - 1 else paths[t + 1][:, khat_pos]
        P = _normalized_kernel_rows(model, Z, log_w, x_query, K_hat, scope, t=t)
        cdf = np.cumsum(P, axis=1)
        u = gen.random((num_paths, 1))
        idx = np.minimum((cdf <= u).sum(axis=1), N - 1)
        paths[t] = Z[idx]

    values = np.zeros((num_paths, functional.dim))
    first_scope = scope if T > 1 else K_hat
    terms = functional.step_terms(0, None, first_scope)
    if terms is not None:
        values += terms.paired_eval(None, paths[0])
    for t in range(1, T):
        curr_scope = K_hat if t == T - 1 else scope
        terms = functional.step_terms(t, scope, curr_scope)
        if terms is not None:
            values += terms.paired_eval(paths[t - 1], paths[t])
    return values.mean(axis=0), paths


def blocked_forward_smoothing(
    model: LatticeLGModel,
    partition: BlockPartition,
    provider: FilterProvider,
    functional_factory,
    y=None,
) -> BlockedSmoothingResult:
    """Blocked forward smoothing: one additive recursion per block, run on
    the enlarged block's scope, summed over blocks at the end.

    ``functional_factory(vertices)`` builds the block-restricted additive
    functional; every block must produce the same dimension.
    """
    per_block = []
    for k in range(partition.num_blocks):
        K, K_hat, scope = _block_scopes(model, partition, k)
        functional = functional_factory(K)
        per_block.append(_forward_pass(model, provider, functional, K_hat, scope))
    per_block = np.asarray(per_block)
    return BlockedSmoothingResult(per_block=per_block, total=per_block.sum(axis=0))


def blocked_backward_sampling(
    model: LatticeLGModel,
    partition: BlockPartition,
    provider: FilterProvider,
    functional_factory,
    y,
    num_paths: int,
    key: RngKey,
) -> BlockedSmoothingResult:
    """Blocked backward sampling: per block, draw ``num_paths`` reverse
    trajectories through the blocked kernels and average the additive sums.

    Each block uses its own random stream, so blocks are independent.
    """
    if num_paths < 1:
        raise ValueError("need at least one backward path")
    per_block = []
    paths_all = []
    for k in range(partition.num_blocks):
        K, K_hat, scope = _block_scopes(model, partition, k)
        functional = functional_factory(K)
        gen = key.child(STREAM_BACKWARD, k).generator()
        value, paths = _backward_pass(model, provider, functional, K_hat, scope, num_paths, gen)
        per_block.append(value)
        paths_all.append(paths)
    per_block = np.asarray(per_block)
    return BlockedSmoothingResult(per_block=per_block, total=per_block.sum(axis=0), paths=paths_all)


def forward_smoothing(
    model: LatticeLGModel,
    provider: FilterProvider,
    functional: AdditiveFunctional,
    y=None,
) -> np.ndarray:
    """Standard forward smoothing: the single-block case over the full state."""
    partition = BlockPartition.single_block(provider.num_vertices)
    result = blocked_forward_smoothing(model, partition, provider, lambda _: functional, y)
    return result.total


def backward_sampling(
    model: LatticeLGModel,
    provider: FilterProvider,
    functional: AdditiveFunctional,
    y,
    num_paths: int,
    key: RngKey,
):
    """Standard backward sampling; returns the estimate and the sampled
    paths as an ``(M, T, V)`` array."""
    partition = BlockPartition.single_block(provider.num_vertices)
    result = blocked_backward_sampling(
        model, partition, provider, lambda _: functional, y, num_paths, key
    )
    paths = np.stack(result.paths[0], axis=1)
    return result.total, paths
