import numpy as np
import pytest

from blocksmooth import (
    MStepError,
    ModelParams,
    SuffStats,
    exact_score,
    exact_suff_stats,
    kalman_filter,
    lambda_map,
    make_model,
    psi_map,
    rts_smoother,
    score_functionals,
    suffstat_functionals,
)
from blocksmooth.functionals import ComponentSumFunctional, PairProductFunctional

from helpers import sigma_point_expectation

PARAMS = ModelParams((0.5, 0.2), 0.0, 0.0)


def smoothed_expectation_of_functional(model, y, functional):
    """Integrate an additive functional against the exact smoother using
    sigma points on the pairwise joints (exact for quadratic terms)."""
    moments = rts_smoother(model, y)
    T, V = y.shape
    scope = model.graph.vertices
    total = np.zeros(functional.dim)

    terms = functional.step_terms(0, None, scope)
    if terms is not None:
        total += sigma_point_expectation(
            lambda pts: terms.paired_eval(None, pts), moments.means[0], moments.covs[0]
        )
    for t in range(1, T):
        terms = functional.step_terms(t, scope, scope)
        if terms is None:
            continue
        mean = np.concatenate([moments.means[t - 1], moments.means[t]])
        cov = np.block(
            [
                [moments.covs[t - 1], moments.lag1[t - 1].T],
                [moments.lag1[t - 1], moments.covs[t]],
            ]
        )
        total += sigma_point_expectation(
            lambda pts: terms.paired_eval(pts[:, :V], pts[:, V:]), mean, cov
        )
    return total


class TestSuffStatFunctionals:
    def test_ring_zero_term_is_plain_product(self):
        # psi^(2,0) at (t+1, v) is x_{t+1,v} * x_{t,v}
        model = make_model(5, PARAMS)
        y = np.zeros((3, 5))
        f = suffstat_functionals(model, y, vertices=[2])
        scope = model.graph.vertices
        terms = f.step_terms(1, scope, scope)
        z = np.arange(5.0)[None, :]
        x = 10.0 + np.arange(5.0)[None, :]
        vals = terms.paired_eval(z, x)
        assert vals[0, f.i_t2 + 0] == pytest.approx(x[0, 2] * z[0, 2])

    def test_ring_one_all_ones_interior(self):
        # psi^(1,1,1) at an interior vertex with all-ones state is (|B_1(v)|)^2 = 4
        model = make_model(5, PARAMS)
        y = np.zeros((3, 5))
        f = suffstat_functionals(model, y, vertices=[2])
        scope = model.graph.vertices
        terms = f.step_terms(1, scope, scope)
        vals = terms.paired_eval(np.ones((1, 5)), np.ones((1, 5)))
        assert vals[0, f.i_t1 + 1 * 2 + 1] == pytest.approx(4.0)

    def test_first_step_tracks_t3_first_only(self):
        model = make_model(4, PARAMS)
        y = np.ones((2, 4))
        f = suffstat_functionals(model, y)
        scope = model.graph.vertices
        x = np.arange(4.0)[None, :]
        vals = f.step_terms(0, None, scope).paired_eval(None, x)
        assert vals[0, f.i_t3] == vals[0, f.i_t3_first] == pytest.approx((x**2).sum())
        assert np.allclose(vals[0, f.i_t1 : f.i_t2 + 2], 0.0)
        later = f.step_terms(1, scope, scope).paired_eval(x, x)
        assert later[0, f.i_t3_first] == 0.0

    def test_integrated_evaluators_match_exact_stats(self):
        # same statistics, two code paths: matrix formulas vs additive
        # evaluators integrated under the exact smoother
        model = make_model(5, ModelParams((0.4, 0.15), -0.1, 0.2))
        _, y = model.simulate(5, np.random.default_rng(0))
        f = suffstat_functionals(model, y)
        integrated = smoothed_expectation_of_functional(model, y, f)
        exact = exact_suff_stats(model, y).to_vector()
        np.testing.assert_allclose(integrated, exact, rtol=1e-9, atol=1e-9)


class TestScoreFunctionals:
    def test_integrated_evaluators_match_exact_score(self):
        model = make_model(4, ModelParams((0.45, 0.18), 0.1, -0.2))
        _, y = model.simulate(5, np.random.default_rng(1))
        f = score_functionals(model, y)
        integrated = smoothed_expectation_of_functional(model, y, f)
        exact = exact_score(model, y)
        np.testing.assert_allclose(integrated, exact, rtol=1e-6)

    def test_observation_noise_component_at_zero_residual(self):
        model = make_model(3, PARAMS)
        y = np.full((2, 3), 0.7)
        f = score_functionals(model, y, vertices=[1])
        scope = model.graph.vertices
        x = np.full((1, 3), 0.7)  # x_v = y_{t,v}: d/dlog sy [-log sy - 0] = -1
        vals = f.step_terms(1, scope, scope).paired_eval(np.zeros((1, 3)), x)
        assert vals[0, f.i_sy] == pytest.approx(-1.0)

    def test_per_step_terms_match_finite_differences(self):
        rng = np.random.default_rng(2)
        graph_v = 5
        y = rng.standard_normal((3, graph_v))
        z = rng.standard_normal(graph_v)
        x = rng.standard_normal(graph_v)
        theta0 = np.array([0.5, 0.2, -0.1, 0.15])
        v, t = 2, 1

        def log_pv_gv(theta_vec):
            model = make_model(graph_v, ModelParams.from_vector(theta_vec))
            neigh = model.graph.neighborhood(v)
            return model.log_transition_v(z[neigh], x[v], v) + model.log_observation_v(
                x[v], y[t, v]
            )

        h = 1e-6
        fd = np.zeros(4)
        for i in range(4):
            up, dn = theta0.copy(), theta0.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (log_pv_gv(up) - log_pv_gv(dn)) / (2 * h)

        model = make_model(graph_v, ModelParams.from_vector(theta0))
        f = score_functionals(model, y, vertices=[v])
        scope = model.graph.vertices
        vals = f.step_terms(t, scope, scope).paired_eval(z[None, :], x[None, :])
        np.testing.assert_allclose(vals[0], fd, rtol=1e-6, atol=1e-6)


class TestPairProductFunctional:
    def test_matches_exact_cross_stat(self):
        model = make_model(6, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(3))
        f = PairProductFunctional(model.graph, model.graph.vertices, r=1)
        integrated = smoothed_expectation_of_functional(model, y, f)
        assert integrated[0] == pytest.approx(exact_suff_stats(model, y).t2[1], rel=1e-9)


class TestComponentSumFunctional:
    def test_blockwise_padding_adds_up(self):
        model = make_model(5, PARAMS)
        scope = model.graph.vertices
        x = np.arange(5.0)[None, :]
        full = ComponentSumFunctional(scope)
        left = ComponentSumFunctional(scope, tracked=[0, 1])
        right = ComponentSumFunctional(scope, tracked=[2, 3, 4])
        total = left.step_terms(0, None, scope).paired_eval(None, x) + right.step_terms(
            0, None, scope
        ).paired_eval(None, x)
        np.testing.assert_array_equal(total, full.step_terms(0, None, scope).paired_eval(None, x))


class TestPsiMap:
    def test_degenerate_inputs(self):
        stats = SuffStats(np.zeros((2, 2)), np.zeros(2), 0.0, 0.0, 0.0)
        psi = psi_map(PARAMS, stats, 0.0, V=7, T=5)
        np.testing.assert_allclose(psi[:2], 0.0)
        assert psi[2] == -7 * 4 and psi[3] == -7 * 5

    def test_stationary_a_block(self):
        theta = ModelParams((0.3, 0.25), 0.0, 0.4)
        stats = SuffStats(np.eye(2), np.array(theta.a), 5.0, 1.0, 2.0)
        psi = psi_map(theta, stats, 3.0, V=2, T=3)
        np.testing.assert_allclose(psi[:2], 0.0, atol=1e-15)

    def test_matches_finite_differences_via_exact_stats(self):
        from helpers import fd_loglik_gradient

        model = make_model(3, ModelParams((0.4, 0.2), 0.1, -0.1))
        _, y = model.simulate(6, np.random.default_rng(4))
        stats = exact_suff_stats(model, y)
        psi = psi_map(model.params, stats, float((y**2).sum()), 3, 6)
        fd = fd_loglik_gradient(model, y)
        np.testing.assert_allclose(psi, fd, rtol=1e-4)

    def test_pure_function(self):
        stats = SuffStats(np.eye(2), np.array([0.1, 0.2]), 5.0, 1.0, 2.0)
        a = psi_map(PARAMS, stats, 3.0, 2, 3)
        b = psi_map(PARAMS, stats, 3.0, 2, 3)
        np.testing.assert_array_equal(a, b)


class TestLambdaMap:
    def test_identity_ring_matrix_returns_target(self):
        theta_star = np.array([0.35, 0.15])
        stats = SuffStats(np.eye(2), theta_star, 50.0, 5.0, 20.0)
        out = lambda_map(stats, 30.0, V=3, T=4)
        np.testing.assert_allclose(out.a, theta_star)

    def test_unit_observation_variance(self):
        stats = SuffStats(np.eye(2), np.zeros(2), 10.0, 1.0, 4.0)
        # t3 - 2 t4 + y^2 = V T  ->  log sigma_y = 0
        out = lambda_map(stats, y_sq=10.0, V=3, T=4)
        assert out.log_sigma_y == pytest.approx(0.0)

    def test_em_update_increases_loglik(self):
        model = make_model(4, ModelParams((0.3, 0.1), 0.3, 0.2))
        _, y = model.simulate(6, np.random.default_rng(5))
        theta = model.params
        prev = kalman_filter(model, y).loglik
        for _ in range(10):
            stats = exact_suff_stats(model.with_params(theta), y)
            theta = lambda_map(stats, float((y**2).sum()), 4, 6)
            curr = kalman_filter(model.with_params(theta), y).loglik
            assert curr >= prev - 1e-9
            prev = curr

    def test_singular_matrix_rejected(self):
        stats = SuffStats(np.zeros((2, 2)), np.ones(2), 10.0, 1.0, 2.0)
        with pytest.raises(MStepError):
            lambda_map(stats, 3.0, 2, 3)

    def test_nonpositive_variance_rejected(self):
        stats = SuffStats(np.eye(2), np.zeros(2), 1.0, 1.0, 0.0)
        with pytest.raises(MStepError) as info:
            lambda_map(stats, 0.0, V=2, T=3)  # t3 - t3_first - 0 = 0
        assert info.value.value is not None
