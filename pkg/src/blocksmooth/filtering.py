"""Particle filtering: the standard filter, the blocked filter, proposal
kernels, multinomial resampling and the filter-approximation providers the
smoothers consume.

Weights live in the log domain throughout; block log-weights are sums of
per-vertex log-weights.  Randomness is drawn from streams keyed by
``(purpose, t)`` for proposals and ``(purpose, t, block)`` for per-block
resampling, with particle/vertex indices fixed by array position.  Two
consequences the tests rely on: the blocked filter with a single block is
bit-identical to the standard filter, and a block's weights at time ``t``
do not react to observation changes outside its neighbourhood.

Degenerate weights (every particle at -inf within a scope) abort the run
with the offending time and block rather than being silently uniformised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, WeightDegeneracyError
from .gaussian import kalman_filter, sample_gaussian, tilde_filter
from .lattice import BlockPartition
from .model import LatticeLGModel, gaussian_log_pdf
from .rng import (
    STREAM_FILTER,
    STREAM_IID,
    STREAM_PROPOSAL,
    STREAM_RESAMPLE,
    STREAM_SUBSAMPLE,
    RngKey,
)


class ProposalKind(str, enum.Enum):
    BOOTSTRAP = "bootstrap"
    LOCALLY_OPTIMAL = "locally_optimal"


class FilterKind(str, enum.Enum):
    """Filter approximations: full-distribution kinds feed the standard
    smoothers, marginal kinds feed the blocked smoothers."""

    STANDARD_PF = "standard_pf"
    BPF_SUBSAMPLED = "bpf_subsampled"
    IID_EXACT = "iid_exact"
    IID_TILDE = "iid_tilde"
    LOCAL_WEIGHT_PF = "local_weight_pf"
    BPF_MARGINAL = "bpf_marginal"
    IID_EXACT_MARGINAL = "iid_exact_marginal"
    IID_TILDE_MARGINAL = "iid_tilde_marginal"

    @property
    def is_marginal(self) -> bool:
        return self in (
            FilterKind.LOCAL_WEIGHT_PF,
            FilterKind.BPF_MARGINAL,
            FilterKind.IID_EXACT_MARGINAL,
            FilterKind.IID_TILDE_MARGINAL,
        )


def normalize_log_weights(log_w: np.ndarray, t=None, block=None) -> np.ndarray:
    """Log-sum-exp normalisation; errors out on degenerate scopes."""
    log_w = np.asarray(log_w, dtype=float)
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise NumericalFailure(f"non-finite log-weights at t={t}, block={block}")
    m = log_w.max()
    if m == -np.inf:
        where = f"t={t}" + (f", block={list(block)}" if block is not None else "")
        raise WeightDegeneracyError(f"all weights vanished at {where}", t=t, block=block)
    w = np.exp(log_w - m)
    return w / w.sum()


def resample_categorical(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` IID categorical draws (multinomial resampling).

    Inverse-CDF with one uniform per draw; cumulative sums run in particle
    index order, which pins tie-breaking for reproducibility.
    """
    weights = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise NumericalFailure("weights must be finite and nonnegative")
    total = weights.sum()
    if total <= 0:
        raise WeightDegeneracyError("all resampling weights are zero")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must be normalized (sum = {total!r})")
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return np.minimum(idx, weights.size - 1).astype(np.int64)


@dataclass(frozen=True)
class ParticleCloud:
    """Output of one filter run.

    ``states`` and per-vertex log-weights are ``(T, N, V)``; ``ancestors``
    holds the per-block resampling indices ``(T-1, N, num_blocks)`` (a
    standard filter is the single-block case).
    """

    states: np.ndarray
    log_weights_by_vertex: np.ndarray
    ancestors: np.ndarray
    partition: BlockPartition

    @property
    def num_steps(self) -> int:
        return self.states.shape[0]

    @property
    def num_particles(self) -> int:
        return self.states.shape[1]

    def log_block_weights(self, t: int, vertices=None) -> np.ndarray:
        """Unnormalised log-weights over a vertex scope (default: all)."""
        lw = self.log_weights_by_vertex[t]
        if vertices is None:
            return lw.sum(axis=1)
        return lw[:, np.asarray(vertices, dtype=int)].sum(axis=1)

    def weights(self, t: int, vertices=None) -> np.ndarray:
        return normalize_log_weights(self.log_block_weights(t, vertices), t=t, block=vertices)

    def estimate(self, t: int, values: np.ndarray, vertices=None) -> np.ndarray:
        """Self-normalised estimate ``sum_n W_t^n f(X_t^n)`` given per-particle values."""
        return self.weights(t, vertices) @ np.asarray(values, dtype=float)


def _proposal_step(model, prior_mu, prior_var, y_t, noise, proposal):
    """One proposal/weighting step shared by all times.

    ``prior_mu`` is the per-particle conditional prior mean (zeros at the
    first step, ``A x_prev`` afterwards), ``prior_var`` its variance.
    Returns proposed states and per-vertex log incremental weights.
    """
    sy2 = model.sigma_y**2
    if proposal == ProposalKind.BOOTSTRAP:
        x = prior_mu + np.sqrt(prior_var) * noise
        log_w = gaussian_log_pdf(y_t[None, :], x, sy2)
    elif proposal == ProposalKind.LOCALLY_OPTIMAL:
        post_var = 1.0 / (1.0 / prior_var + 1.0 / sy2)
        m = post_var * (prior_mu / prior_var + y_t[None, :] / sy2)
        x = m + np.sqrt(post_var) * noise
        # predictive density of the observation; independent of the draw
        log_w = gaussian_log_pdf(y_t[None, :], prior_mu, prior_var + sy2)
    else:
        raise ValueError(f"unknown proposal {proposal!r}")
    return x, log_w


def local_log_weight(model, proposal, z_prev, x_v, y_tv, v: int, t: int) -> float:
    """Log incremental weight ``log G_{t,v}`` for one particle component.

    ``t`` is 0-based; at ``t = 0`` the conditional prior is the standard
    normal initial law and ``z_prev`` is ignored.  Bootstrap weights are
    the local observation density; locally optimal weights are the local
    predictive density of ``y_{t,v}``, independent of ``x_v``.
    """
    if not 0 <= v < model.num_vertices or t < 0:
        raise ValueError(f"invalid vertex/time ({v}, {t})")
    if not np.all(np.isfinite(np.atleast_1d(x_v))) or not np.isfinite(y_tv):
        raise ValueError("non-finite inputs to local weight")
    if t == 0:
        prior_mu, prior_var = 0.0, 1.0
    else:
        prior_mu = model.local_transition_mean_from_neighborhood(z_prev, v)
        prior_var = model.sigma_x**2
    sy2 = model.sigma_y**2
    if proposal == ProposalKind.BOOTSTRAP:
        return float(gaussian_log_pdf(y_tv, x_v, sy2))
    return float(gaussian_log_pdf(y_tv, prior_mu, prior_var + sy2))


def propose_locally_optimal(model, z_prev, y_tv, v: int, rng: np.random.Generator, t: int = 1) -> float:
    """One draw from the locally optimal proposal ``q propto p_v g_v``."""
    if t == 0:
        prior_mu, prior_var = 0.0, 1.0
    else:
        prior_mu = model.local_transition_mean_from_neighborhood(z_prev, v)
        prior_var = model.sigma_x**2
    sy2 = model.sigma_y**2
    post_var = 1.0 / (1.0 / prior_var + 1.0 / sy2)
    m = post_var * (prior_mu / prior_var + y_tv / sy2)
    return float(m + np.sqrt(post_var) * rng.standard_normal())


def run_bpf(
    model: LatticeLGModel,
    partition: BlockPartition,
    y: np.ndarray,
    num_particles: int,
    proposal: ProposalKind,
    key: RngKey,
) -> ParticleCloud:
    """Blocked particle filter: per-block multinomial resampling, blockwise
    concatenation of ancestors, then a shared proposal/weighting step."""
    y = np.asarray(y, dtype=float)
    T, V = y.shape
    if V != model.num_vertices:
        raise ValueError("observation dimension does not match the model")
    if partition.num_vertices != V:
        raise ValueError("partition does not match the model dimension")
    if num_particles < 1:
        raise ValueError("need at least one particle")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations contain non-finite values")

    N = num_particles
    A = model.transition_matrix
    sx2 = model.sigma_x**2
    blocks = [partition.block(k) for k in range(partition.num_blocks)]

    states = np.empty((T, N, V))
    log_w = np.empty((T, N, V))
    ancestors = np.zeros((max(T - 1, 0), N, len(blocks)), dtype=np.int64)

    for t in range(T):
        if t == 0:
            prior_mu = np.zeros((N, V))
            prior_var = 1.0
        else:
            xbar = np.empty((N, V))
            for k, K in enumerate(blocks):
                w = normalize_log_weights(log_w[t - 1][:, K].sum(axis=1), t=t - 1, block=K)
                idx = resample_categorical(
                    w, N, key.child(STREAM_RESAMPLE, t, k).generator()
                )
                ancestors[t - 1, :, k] = idx
                xbar[:, K] = states[t - 1][idx][:, K]
            prior_mu = xbar @ A.T
            prior_var = sx2
        noise = key.child(STREAM_PROPOSAL, t).generator().standard_normal((N, V))
        states[t], log_w[t] = _proposal_step(model, prior_mu, prior_var, y[t], noise, proposal)
        for k, K in enumerate(blocks):
            normalize_log_weights(log_w[t][:, K].sum(axis=1), t=t, block=K)
    return ParticleCloud(states, log_w, ancestors, partition)


def run_pf(
    model: LatticeLGModel,
    y: np.ndarray,
    num_particles: int,
    proposal: ProposalKind,
    key: RngKey,
) -> ParticleCloud:
    """Standard particle filter: the single-block case of the blocked one
    (global categorical resampling, global weights)."""
    partition = BlockPartition.single_block(model.num_vertices)
    return run_bpf(model, partition, y, num_particles, proposal, key)


class FilterProvider:
    """Per-time weighted-sample source consumed by the smoothers.

    ``policy`` fixes the weight semantics: ``global`` providers weight by
    the full product over all vertices regardless of the queried scope
    (standard smoothing), ``scope`` providers weight by the product over
    the queried scope (marginal approximations), ``uniform`` providers are
    equally weighted (subsampled and IID kinds).
    """

    def __init__(self, kind: FilterKind, states: np.ndarray, log_w_by_vertex, policy: str):
        self.kind = kind
        self._states = states
        self._log_w = log_w_by_vertex
        self._policy = policy
        self._full = np.arange(states.shape[2])

    @property
    def num_steps(self) -> int:
        return self._states.shape[0]

    @property
    def num_particles(self) -> int:
        return self._states.shape[1]

    @property
    def num_vertices(self) -> int:
        return self._states.shape[2]

    def states_at(self, t: int, scope=None) -> np.ndarray:
        scope = self._full if scope is None else np.asarray(scope, dtype=int)
        return self._states[t][:, scope]

    def log_weights(self, t: int, scope=None) -> np.ndarray:
        if self._policy == "uniform":
            return np.zeros(self.num_particles)
        if self._policy == "global" or scope is None:
            scope = self._full
        return self._log_w[t][:, np.asarray(scope, dtype=int)].sum(axis=1)

    def weights(self, t: int, scope=None) -> np.ndarray:
        return normalize_log_weights(self.log_weights(t, scope), t=t, block=scope)


def make_filter_provider(
    kind: FilterKind,
    model: LatticeLGModel,
    partition: BlockPartition,
    y: np.ndarray,
    num_particles: int,
    key: RngKey,
    proposal: ProposalKind = ProposalKind.LOCALLY_OPTIMAL,
) -> FilterProvider:
    """Build the filter approximation named by ``kind``.

    Particle kinds run the corresponding filter; the subsampled kind draws
    each block's coordinates independently from the per-block categorical;
    IID kinds draw Gaussians from the oracle beliefs.
    """
    kind = FilterKind(kind)
    y = np.asarray(y, dtype=float)
    T, V = y.shape
    N = num_particles

    if kind in (FilterKind.STANDARD_PF, FilterKind.LOCAL_WEIGHT_PF):
        cloud = run_pf(model, y, N, proposal, key.child(STREAM_FILTER))
        policy = "global" if kind == FilterKind.STANDARD_PF else "scope"
        return FilterProvider(kind, cloud.states, cloud.log_weights_by_vertex, policy)

    if kind == FilterKind.BPF_MARGINAL:
        cloud = run_bpf(model, partition, y, N, proposal, key.child(STREAM_FILTER))
        return FilterProvider(kind, cloud.states, cloud.log_weights_by_vertex, "scope")

    if kind == FilterKind.BPF_SUBSAMPLED:
        cloud = run_bpf(model, partition, y, N, proposal, key.child(STREAM_FILTER))
        states = np.empty((T, N, V))
        for t in range(T):
            for k in range(partition.num_blocks):
                K = partition.block(k)
                w = cloud.weights(t, K)
                idx = resample_categorical(
                    w, N, key.child(STREAM_SUBSAMPLE, t, k).generator()
                )
                states[t][:, K] = cloud.states[t][idx][:, K]
        return FilterProvider(kind, states, None, "uniform")

    if kind in (FilterKind.IID_EXACT, FilterKind.IID_EXACT_MARGINAL):
        kf = kalman_filter(model, y)
        beliefs = [(kf.means[t], kf.covs[t]) for t in range(T)]
    elif kind in (FilterKind.IID_TILDE, FilterKind.IID_TILDE_MARGINAL):
        tf = tilde_filter(model, partition, y)
        beliefs = [(b.mean, b.cov) for b in tf]
    else:
        raise ValueError(f"unknown filter kind {kind!r}")

    states = np.empty((T, N, V))
    for t, (mean, cov) in enumerate(beliefs):
        states[t] = sample_gaussian(mean, cov, N, key.child(STREAM_IID, t).generator())
    return FilterProvider(kind, states, None, "uniform")
