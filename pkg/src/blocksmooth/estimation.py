"""Offline parameter estimation: gradient ascent and EM drivers.

Both loops consume a per-iterate estimator of a smoothed quantity (score
vector or sufficient statistics) evaluated at the current parameters.
Estimators can be exact (oracle-backed, for tests and small problems) or
particle-based (any smoother/filter combination).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalFailure
from .filtering import FilterKind, ProposalKind, make_filter_provider
from .functionals import (
    SuffStats,
    lambda_map,
    score_functionals,
    suffstat_functionals,
)
from .gaussian import exact_score, exact_suff_stats
from .lattice import BlockPartition, SpatialGraph
from .model import LatticeLGModel, ModelParams
from .rng import RngKey
from .smoothing import (
    backward_sampling,
    blocked_backward_sampling,
    blocked_forward_smoothing,
    forward_smoothing,
)


class SmootherKind(str, enum.Enum):
    STD_FS = "std_fs"
    STD_BS = "std_bs"
    BLK_FS = "blk_fs"
    BLK_BS = "blk_bs"

    @property
    def is_blocked(self) -> bool:
        return self in (SmootherKind.BLK_FS, SmootherKind.BLK_BS)

    @property
    def is_backward_sampling(self) -> bool:
        return self in (SmootherKind.STD_BS, SmootherKind.BLK_BS)


@dataclass(frozen=True)
class Method:
    """A smoother paired with its filter approximation."""

    smoother: SmootherKind
    filter_kind: FilterKind

    def __post_init__(self):
        object.__setattr__(self, "smoother", SmootherKind(self.smoother))
        object.__setattr__(self, "filter_kind", FilterKind(self.filter_kind))
        if self.smoother.is_blocked and not self.filter_kind.is_marginal:
            raise ConfigError(
                f"blocked smoother {self.smoother.value} needs a marginal "
                f"filter kind, got {self.filter_kind.value}"
            )
        if not self.smoother.is_blocked and self.filter_kind.is_marginal:
            raise ConfigError(
                f"standard smoother {self.smoother.value} needs a "
                f"full-distribution filter kind, got {self.filter_kind.value}"
            )

    @property
    def label(self) -> str:
        return f"{self.smoother.value}/{self.filter_kind.value}"


def estimate_smoothed_functional(
    model: LatticeLGModel,
    partition: BlockPartition,
    y: np.ndarray,
    method: Method,
    functional_factory,
    num_particles: int,
    num_paths: int,
    key: RngKey,
    proposal: ProposalKind = ProposalKind.LOCALLY_OPTIMAL,
) -> np.ndarray:
    """Run one (smoother, filter) method on one dataset.

    ``functional_factory(vertices)`` builds the additive functional for a
    vertex set; standard smoothers get the full vertex set.
    """
    provider = make_filter_provider(
        method.filter_kind, model, partition, y, num_particles, key, proposal
    )
    if method.smoother == SmootherKind.STD_FS:
        return forward_smoothing(model, provider, functional_factory(model.graph.vertices), y)
    if method.smoother == SmootherKind.STD_BS:
        value, _ = backward_sampling(
            model, provider, functional_factory(model.graph.vertices), y, num_paths, key
        )
        return value
    if method.smoother == SmootherKind.BLK_FS:
        return blocked_forward_smoothing(model, partition, provider, functional_factory, y).total
    return blocked_backward_sampling(
        model, partition, provider, functional_factory, y, num_paths, key
    ).total


@dataclass
class EstimationTrace:
    """Parameter iterates plus per-iterate diagnostics."""

    thetas: list
    diagnostics: list

    @property
    def num_iterations(self) -> int:
        return len(self.thetas) - 1

    def errors_against(self, theta_true: ModelParams) -> np.ndarray:
        ref = theta_true.to_vector()
        return np.array([np.abs(th.to_vector() - ref) for th in self.thetas])


def _tag_iterate(exc: NumericalFailure, p: int):
    msg = exc.args[0] if exc.args else ""
    exc.args = (f"estimation iterate {p}: {msg}",) + exc.args[1:]


def gradient_ascent(
    score_estimator,
    theta0: ModelParams,
    num_iterations: int,
    step_exponent: float = 0.8,
    normalize: bool = True,
) -> EstimationTrace:
    """Stochastic gradient ascent with steps ``gamma[p] = p^{-exponent}``.

    The whole estimated gradient is normalised by its L2 norm (no
    per-coordinate scaling); a zero estimate leaves the iterate unchanged.
    """
    thetas = [theta0]
    diagnostics = []
    for p in range(1, num_iterations + 1):
        start = time.perf_counter()
        try:
            grad = np.asarray(score_estimator(thetas[-1], p), dtype=float)
        except NumericalFailure as exc:
            _tag_iterate(exc, p)
            raise
        norm = float(np.linalg.norm(grad))
        direction = grad / norm if (normalize and norm > 0.0) else grad
        step = p**-step_exponent
        thetas.append(ModelParams.from_vector(thetas[-1].to_vector() + step * direction))
        diagnostics.append(
            {"grad_norm": norm, "step": step, "runtime_ms": 1e3 * (time.perf_counter() - start)}
        )
    return EstimationTrace(thetas, diagnostics)


def em_loop(
    stats_estimator,
    y_sq: float,
    num_vertices: int,
    num_steps: int,
    theta0: ModelParams,
    num_iterations: int,
) -> EstimationTrace:
    """EM: estimate the smoothed statistics at the current iterate, then
    apply the closed-form M-step."""
    thetas = [theta0]
    diagnostics = []
    for p in range(1, num_iterations + 1):
        start = time.perf_counter()
        try:
            stats = stats_estimator(thetas[-1], p)
            thetas.append(lambda_map(stats, y_sq, num_vertices, num_steps))
        except NumericalFailure as exc:
            _tag_iterate(exc, p)
            raise
        diagnostics.append({"runtime_ms": 1e3 * (time.perf_counter() - start)})
    return EstimationTrace(thetas, diagnostics)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def make_exact_score_estimator(graph: SpatialGraph, y: np.ndarray):
    def estimator(theta: ModelParams, p: int) -> np.ndarray:
        return exact_score(LatticeLGModel(graph, theta), y)

    return estimator


def make_exact_stats_estimator(graph: SpatialGraph, y: np.ndarray):
    def estimator(theta: ModelParams, p: int) -> SuffStats:
        return exact_suff_stats(LatticeLGModel(graph, theta), y)

    return estimator


def make_particle_score_estimator(
    graph: SpatialGraph,
    y: np.ndarray,
    partition: BlockPartition,
    method: Method,
    num_particles: int,
    num_paths: int,
    key: RngKey,
    proposal: ProposalKind = ProposalKind.LOCALLY_OPTIMAL,
):
    """Score estimator running the configured smoother at each iterate."""

    def estimator(theta: ModelParams, p: int) -> np.ndarray:
        model = LatticeLGModel(graph, theta)
        return estimate_smoothed_functional(
            model,
            partition,
            y,
            method,
            lambda verts: score_functionals(model, y, verts),
            num_particles,
            num_paths,
            key.child(p),
            proposal,
        )

    return estimator


def make_particle_stats_estimator(
    graph: SpatialGraph,
    y: np.ndarray,
    partition: BlockPartition,
    method: Method,
    num_particles: int,
    num_paths: int,
    key: RngKey,
    proposal: ProposalKind = ProposalKind.LOCALLY_OPTIMAL,
):
    """Sufficient-statistic estimator for particle EM (symmetrised)."""

    def estimator(theta: ModelParams, p: int) -> SuffStats:
        model = LatticeLGModel(graph, theta)
        vec = estimate_smoothed_functional(
            model,
            partition,
            y,
            method,
            lambda verts: suffstat_functionals(model, y, verts),
            num_particles,
            num_paths,
            key.child(p),
            proposal,
        )
        return SuffStats.from_vector(vec, theta.radius)

    return estimator


def random_theta_init(radius: int, rng: np.random.Generator) -> ModelParams:
    """Uniform draw from the default initialisation box."""
    a = rng.uniform(0.0, 0.8, size=radius + 1)
    log_sx, log_sy = rng.uniform(-0.7, 0.7, size=2)
    return ModelParams(tuple(a), float(log_sx), float(log_sy))
