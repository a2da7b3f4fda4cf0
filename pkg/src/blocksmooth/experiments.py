"""Experiment runners behind the CLI: data simulation, smoothing-error
sweeps, parameter-estimation runs and oracle queries.

Output is CSV with a fixed header; floats are printed as their shortest
round-trip decimal.  Replicates are distributed over a thread pool, but
every replicate's work is a pure function of ``(config, replicate)`` and
rows are emitted in a fixed order, so output bytes do not depend on the
thread count.  BLAS pools are pinned to one thread inside the runners for
the same reason.  Per-replicate failures become rows carrying an error
tag; a sweep never dies because one run degenerated.

Wall-clock timings are nondeterministic by nature, so the ``runtime_ms``
column is only populated when timing is explicitly requested.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, NumericalFailure
from .estimation import (
    em_loop,
    estimate_smoothed_functional,
    gradient_ascent,
    make_particle_score_estimator,
    make_particle_stats_estimator,
    random_theta_init,
)
from .functionals import (
    ComponentSumFunctional,
    PairProductFunctional,
    SuffStats,
    score_functionals,
    suffstat_functionals,
)
from .gaussian import exact_score, exact_suff_stats, kalman_filter, rts_smoother, tilde_filter
from .lattice import BlockPartition, SpatialGraph
from .model import LatticeLGModel, ModelParams
from .rng import STREAM_DATA, STREAM_INIT, STREAM_RUN, RngKey

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


def _blas_single_thread():
    return threadpool_limits(1) if threadpool_limits is not None else nullcontext()


def fmt(value) -> str:
    """Shortest round-trip decimal for floats; empty for None."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path_or_buffer, header, rows):
    own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
    fh = open(path_or_buffer, "w", newline="", encoding="utf-8") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def _model(config: ExperimentConfig, V: int, theta: ModelParams | None = None) -> LatticeLGModel:
    theta = config.theta_true if theta is None else theta
    return LatticeLGModel(SpatialGraph(V, theta.radius), theta)


def _partition(config: ExperimentConfig, V: int) -> BlockPartition:
    size = config.block_size if config.block_size is not None else V
    return BlockPartition.contiguous(V, size, config.enlargement_radius)


def simulate_dataset(config: ExperimentConfig, V: int, replicate: int):
    """Exact forward draw for one replicate, keyed by (seed, V, replicate)."""
    gen = RngKey(config.seed).child(STREAM_DATA, V, replicate).generator()
    return _model(config, V).simulate(config.T, gen)


DATA_HEADER = ("t", "v", "x", "y")


def run_simulate(config: ExperimentConfig, out) -> None:
    """Write one simulated dataset (replicate 0, first configured V)."""
    V = config.V_values[0]
    x, y = simulate_dataset(config, V, 0)
    rows = [(t, v, x[t, v], y[t, v]) for t in range(config.T) for v in range(V)]
    write_csv(out, DATA_HEADER, rows)


def read_dataset(path, V: int, T: int):
    """Read a data CSV back into ``(x, y)`` arrays."""
    x = np.full((T, V), np.nan)
    y = np.full((T, V), np.nan)
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "v", "x", "y"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"data file is missing columns {sorted(missing)}")
        for row in reader:
            t, v = int(row["t"]), int(row["v"])
            x[t, v] = float(row["x"])
            y[t, v] = float(row["y"])
    if np.any(np.isnan(y)):
        raise ValueError("data file does not cover every (t, v) pair")
    return x, y


# ---------------------------------------------------------------------------
# Smoothing-error experiment (RMSE rows)
# ---------------------------------------------------------------------------

RESULT_HEADER = (
    "replicate",
    "V",
    "method",
    "block_size",
    "enlargement_radius",
    "N",
    "M",
    "functional_id",
    "estimate",
    "exact_value",
    "squared_error",
    "runtime_ms",
    "seed",
    "config_hash",
    "error",
)


def _functional_ids(config: ExperimentConfig, V: int) -> list:
    if config.functional == "pair_product":
        return [f"pair_product_r{config.functional_ring}_per_vertex"]
    if config.functional == "suffstats":
        return SuffStats.component_names(config.theta_true.radius)
    if config.functional == "score":
        return [f"score_{i}" for i in range(config.theta_true.radius + 3)]
    return [f"mean_v{v}" for v in range(V)]


def _functional_factory(config: ExperimentConfig, model: LatticeLGModel, y: np.ndarray):
    if config.functional == "pair_product":
        return lambda K: PairProductFunctional(model.graph, K, config.functional_ring)
    if config.functional == "suffstats":
        return lambda K: suffstat_functionals(model, y, K)
    if config.functional == "score":
        return lambda K: score_functionals(model, y, K)
    return lambda K: ComponentSumFunctional(model.graph.vertices, K)


def _exact_values(config: ExperimentConfig, model: LatticeLGModel, y: np.ndarray) -> np.ndarray:
    if config.functional == "pair_product":
        stats = exact_suff_stats(model, y)
        return np.array([stats.t2[config.functional_ring]])
    if config.functional == "suffstats":
        return exact_suff_stats(model, y).to_vector()
    if config.functional == "score":
        return exact_score(model, y)
    return rts_smoother(model, y).means.sum(axis=0)


def _estimate_scale(config: ExperimentConfig, V: int) -> float:
    # Fig.2-style runs report S_T / V; other functionals are raw.
    return 1.0 / V if config.functional == "pair_product" else 1.0


def _smoothing_replicate(config: ExperimentConfig, V: int, replicate: int, timing: bool):
    rows = []
    model = _model(config, V)
    partition = _partition(config, V)
    _, y = simulate_dataset(config, V, replicate)
    exact = _exact_values(config, model, y) * _estimate_scale(config, V)
    ids = _functional_ids(config, V)
    factory = _functional_factory(config, model, y)
    chash = config.config_hash()
    base = dict(
        replicate=replicate,
        V=V,
        block_size=config.block_size if config.block_size is not None else V,
        i=config.enlargement_radius,
        N=config.N,
        M=config.M,
    )
    for mi, method in enumerate(config.methods):
        key = RngKey(config.seed).child(STREAM_RUN, V, replicate, mi)
        start = time.perf_counter()
        try:
            est = estimate_smoothed_functional(
                model, partition, y, method, factory, config.N, config.M, key, config.proposal
            ) * _estimate_scale(config, V)
            runtime = 1e3 * (time.perf_counter() - start) if timing else None
            for d, fid in enumerate(ids):
                rows.append(
                    (
                        base["replicate"], base["V"], method.label, base["block_size"],
                        base["i"], base["N"], base["M"], fid,
                        est[d], exact[d], (est[d] - exact[d]) ** 2,
                        runtime, config.seed, chash, "",
                    )
                )
        except NumericalFailure as exc:
            runtime = 1e3 * (time.perf_counter() - start) if timing else None
            rows.append(
                (
                    base["replicate"], base["V"], method.label, base["block_size"],
                    base["i"], base["N"], base["M"], ids[0] if ids else "",
                    None, None, None, runtime, config.seed, chash, str(exc),
                )
            )
    return rows


def run_smoothing_experiment(config: ExperimentConfig, out, threads: int = 1, timing: bool = False) -> None:
    """One row per (replicate, method, functional component), across all
    configured dimensions.  Replicate failures become error rows."""
    if not config.methods:
        raise ConfigError("the experiment needs at least one entry in 'methods'")
    tasks = [(V, r) for V in config.V_values for r in range(config.replicates)]
    with _blas_single_thread():
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(
                    pool.map(lambda vr: _smoothing_replicate(config, vr[0], vr[1], timing), tasks)
                )
        else:
            chunks = [_smoothing_replicate(config, V, r, timing) for V, r in tasks]
    rows = [row for chunk in chunks for row in chunk]
    write_csv(out, RESULT_HEADER, rows)


# ---------------------------------------------------------------------------
# Parameter-estimation experiment (trace rows)
# ---------------------------------------------------------------------------


def trace_header(radius: int):
    dim = radius + 3
    return (
        ("method", "replicate", "p")
        + tuple(f"theta_{i}" for i in range(dim))
        + tuple(f"err_{i}" for i in range(dim))
        + ("seed", "config_hash", "error")
    )


def _estimation_run(config: ExperimentConfig, algorithm: str, mi: int, replicate: int):
    method = config.methods[mi]
    V = config.V_values[0]
    graph = SpatialGraph(V, config.theta_true.radius)
    partition = _partition(config, V)
    _, y = simulate_dataset(config, V, replicate)
    label = f"{algorithm}/{method.label}"
    chash = config.config_hash()
    key = RngKey(config.seed).child(STREAM_RUN, V, replicate, mi, 0 if algorithm == "gradient_ascent" else 1)

    if config.theta_init is not None:
        theta0 = config.theta_init
    else:
        theta0 = random_theta_init(
            config.theta_true.radius,
            RngKey(config.seed).child(STREAM_INIT, V, replicate).generator(),
        )

    ref = config.theta_true.to_vector()
    rows = []

    def emit(p, theta):
        vec = theta.to_vector()
        rows.append((label, replicate, p, *vec, *np.abs(vec - ref), config.seed, chash, ""))

    error = None
    try:
        if algorithm == "gradient_ascent":
            estimator = make_particle_score_estimator(
                graph, y, partition, method, config.N, config.M, key, config.proposal
            )
            trace = gradient_ascent(estimator, theta0, config.iterations)
        else:
            estimator = make_particle_stats_estimator(
                graph, y, partition, method, config.N, config.M, key, config.proposal
            )
            trace = em_loop(
                estimator, float((y**2).sum()), V, config.T, theta0, config.iterations
            )
        for p, theta in enumerate(trace.thetas):
            emit(p, theta)
    except NumericalFailure as exc:
        error = str(exc)
        rows.append((label, replicate, "", *[None] * (2 * ref.size), config.seed, chash, error))
    return rows


def run_estimation_experiment(config: ExperimentConfig, out, threads: int = 1) -> None:
    """Per-iterate parameter traces for each (algorithm, method, replicate)."""
    if not config.methods:
        raise ConfigError("the experiment needs at least one entry in 'methods'")
    tasks = [
        (alg, mi, r)
        for alg in config.algorithms
        for mi in range(len(config.methods))
        for r in range(config.replicates)
    ]
    with _blas_single_thread():
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(
                    pool.map(lambda amr: _estimation_run(config, amr[0], amr[1], amr[2]), tasks)
                )
        else:
            chunks = [_estimation_run(config, alg, mi, r) for alg, mi, r in tasks]
    rows = [row for chunk in chunks for row in chunk]
    write_csv(out, trace_header(config.theta_true.radius), rows)


# ---------------------------------------------------------------------------
# Oracle queries
# ---------------------------------------------------------------------------

ORACLE_HEADER = ("quantity", "i", "j", "value")
ORACLE_QUERIES = ("loglik", "means", "suffstats", "score", "tilde")


def run_oracle(config: ExperimentConfig, query: str, out, data_path=None) -> None:
    """Expose the exact-oracle quantities for one dataset as CSV rows."""
    if query not in ORACLE_QUERIES:
        raise ConfigError(f"unknown oracle query {query!r}; expected one of {ORACLE_QUERIES}")
    V = config.V_values[0]
    model = _model(config, V)
    if data_path is None:
        _, y = simulate_dataset(config, V, 0)
    else:
        _, y = read_dataset(data_path, V, config.T)

    rows = []
    if query == "loglik":
        rows.append(("loglik", "", "", kalman_filter(model, y).loglik))
    elif query == "means":
        moments = rts_smoother(model, y)
        rows += [("smoothed_mean", t, v, moments.means[t, v]) for t in range(config.T) for v in range(V)]
    elif query == "suffstats":
        stats = exact_suff_stats(model, y)
        b1 = config.theta_true.radius + 1
        rows += [("t1", r, q, stats.t1[r, q]) for r in range(b1) for q in range(b1)]
        rows += [("t2", r, "", stats.t2[r]) for r in range(b1)]
        rows += [("t3", "", "", stats.t3), ("t3_first", "", "", stats.t3_first), ("t4", "", "", stats.t4)]
    elif query == "score":
        score = exact_score(model, y)
        rows += [("score", i, "", score[i]) for i in range(score.size)]
    else:
        beliefs = tilde_filter(model, _partition(config, V), y)
        for t, belief in enumerate(beliefs):
            rows += [("tilde_mean", t, v, belief.mean[v]) for v in range(V)]
            rows += [("tilde_var", t, v, belief.cov[v, v]) for v in range(V)]
    write_csv(out, ORACLE_HEADER, rows)
