import numpy as np
import pytest

from blocksmooth import (
    BlockPartition,
    FilterKind,
    ModelParams,
    ProposalKind,
    RngKey,
    backward_kernel_row,
    backward_sampling,
    blocked_backward_kernel_row,
    blocked_backward_sampling,
    blocked_forward_smoothing,
    forward_smoothing,
    kalman_filter,
    make_filter_provider,
    make_model,
    rts_smoother,
)
from blocksmooth.filtering import FilterProvider
from blocksmooth.functionals import (
    AdditiveFunctional,
    ComponentSumFunctional,
    PairProductFunctional,
    StepTerms,
    suffstat_functionals,
)

PARAMS = ModelParams((0.5, 0.2), 0.0, 0.0)


class ConstantFunctional(AdditiveFunctional):
    """s_{t,K} identically equal to c: the estimate must be c*T exactly."""

    dim = 1

    def __init__(self, c):
        self.c = c

    def step_terms(self, t, prev_scope, curr_scope):
        return StepTerms(dim=1, const=np.array([self.c]))


def _pair_factory(model, r=1):
    return lambda K: PairProductFunctional(model.graph, K, r)


class TestBackwardKernelRow:
    def test_constant_transition_gives_weights(self):
        model = make_model(2, ModelParams((0.0,), 0.0, 0.0))  # p(z, x) constant in z
        particles = np.array([[0.3, -0.2], [1.5, 0.7]])
        row = backward_kernel_row(model, particles, np.array([0.5, 0.5]), np.zeros(2))
        np.testing.assert_allclose(row, [0.5, 0.5], atol=1e-14)

    def test_point_mass_weights_dominate(self):
        model = make_model(2, PARAMS)
        particles = np.random.default_rng(0).standard_normal((2, 2))
        row = backward_kernel_row(model, particles, np.array([1.0, 0.0]), np.zeros(2))
        np.testing.assert_array_equal(row, [1.0, 0.0])

    def test_matches_direct_evaluation(self):
        model = make_model(2, PARAMS)
        rng = np.random.default_rng(1)
        particles = rng.standard_normal((3, 2))
        weights = np.array([0.2, 0.5, 0.3])
        x = rng.standard_normal(2)
        row = backward_kernel_row(model, particles, weights, x)
        direct = weights * np.array(
            [np.exp(model.log_transition(particles[n], x)) for n in range(3)]
        )
        direct /= direct.sum()
        np.testing.assert_allclose(row, direct, atol=1e-12)

    def test_row_sums_to_one(self):
        model = make_model(3, PARAMS)
        rng = np.random.default_rng(2)
        row = backward_kernel_row(
            model, rng.standard_normal((50, 3)), np.full(50, 0.02), rng.standard_normal(3)
        )
        assert abs(row.sum() - 1.0) < 1e-12


class TestBlockedBackwardKernelRow:
    def test_full_block_equals_standard(self):
        model = make_model(4, PARAMS)
        rng = np.random.default_rng(3)
        particles = rng.standard_normal((5, 4))
        weights = np.full(5, 0.2)
        x = rng.standard_normal(4)
        scope = np.arange(4)
        blocked = blocked_backward_kernel_row(model, particles, weights, x, scope, scope)
        standard = backward_kernel_row(model, particles, weights, x)
        np.testing.assert_array_equal(blocked, standard)

    def test_decoupled_singleton_depends_only_on_own_coordinate(self):
        model = make_model(3, ModelParams((0.5,), 0.0, 0.0))
        rng = np.random.default_rng(4)
        particles = rng.standard_normal((4, 1))  # scope = {1} when A is diagonal
        weights = np.full(4, 0.25)
        row = blocked_backward_kernel_row(
            model, particles, weights, np.array([0.7]), k_hat=[1], scope=[1]
        )
        assert abs(row.sum() - 1.0) < 1e-12
        assert np.all(row > 0)

    def test_matches_direct_evaluation(self):
        model = make_model(4, PARAMS)
        rng = np.random.default_rng(5)
        k_hat = np.array([1, 2])
        scope = model.graph.neighborhood_of_set(k_hat)  # {0,1,2,3}
        particles = rng.standard_normal((3, scope.size))
        weights = np.array([0.3, 0.3, 0.4])
        x = rng.standard_normal(2)
        row = blocked_backward_kernel_row(model, particles, weights, x, k_hat, scope)
        direct = np.empty(3)
        for n in range(3):
            lp = 0.0
            for j, v in enumerate(k_hat):
                neigh = model.graph.neighborhood(v)
                pos = np.searchsorted(scope, neigh)
                lp += model.log_transition_v(particles[n, pos], x[j], v)
            direct[n] = weights[n] * np.exp(lp)
        direct /= direct.sum()
        np.testing.assert_allclose(row, direct, atol=1e-12)


def _provider(model, y, kind, N, key, partition=None, proposal=ProposalKind.LOCALLY_OPTIMAL):
    partition = partition or BlockPartition.single_block(model.num_vertices)
    return make_filter_provider(kind, model, partition, y, N, key, proposal)


class TestForwardSmoothing:
    def test_single_particle_accumulates_along_path(self):
        model = make_model(3, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(6))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 1, RngKey(7))
        f = PairProductFunctional(model.graph, model.graph.vertices, 1)
        est = forward_smoothing(model, prov, f, y)
        manual = 0.0
        for t in range(1, 4):
            x_prev, x = prov.states_at(t - 1)[0], prov.states_at(t)[0]
            for v in range(3):
                manual += x[v] * x_prev[model.graph.ring(v, 1)].sum()
        assert est[0] == pytest.approx(manual, rel=1e-12)

    def test_constant_functional_exact(self):
        model = make_model(4, PARAMS)
        _, y = model.simulate(5, np.random.default_rng(8))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 32, RngKey(9))
        est = forward_smoothing(model, prov, ConstantFunctional(2.5), y)
        # exact up to roundoff: kernel rows are normalised, so the constant
        # only picks up float error from the row sums
        assert est[0] == pytest.approx(2.5 * 5, rel=1e-13)

    def test_iid_provider_matches_kalman_smoother(self):
        model = make_model(1, ModelParams((0.5,), 0.0, 0.0))
        _, y = model.simulate(4, np.random.default_rng(10))
        exact = rts_smoother(model, y).means.sum()
        estimates = []
        for rep in range(30):
            prov = _provider(model, y, FilterKind.IID_EXACT, 1000, RngKey(11, rep))
            estimates.append(
                forward_smoothing(model, prov, ComponentSumFunctional([0]), y)[0]
            )
        estimates = np.array(estimates)
        se = estimates.std(ddof=1) / np.sqrt(estimates.size)
        assert abs(estimates.mean() - exact) < 4 * se

    def test_deterministic_given_cloud(self):
        model = make_model(3, PARAMS)
        _, y = model.simulate(3, np.random.default_rng(12))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 64, RngKey(13))
        f = PairProductFunctional(model.graph, model.graph.vertices, 1)
        np.testing.assert_array_equal(
            forward_smoothing(model, prov, f, y), forward_smoothing(model, prov, f, y)
        )


class TestBackwardSampling:
    def test_single_particle_deterministic(self):
        model = make_model(2, PARAMS)
        _, y = model.simulate(3, np.random.default_rng(14))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 1, RngKey(15))
        f = PairProductFunctional(model.graph, model.graph.vertices, 1)
        fs = forward_smoothing(model, prov, f, y)
        bs, paths = backward_sampling(model, prov, f, y, 5, RngKey(16))
        np.testing.assert_allclose(bs, fs, rtol=1e-12)
        assert paths.shape == (5, 3, 2)

    def test_rao_blackwellisation(self):
        # FS is the conditional expectation of BS given the cloud
        model = make_model(2, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(17))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 100, RngKey(18))
        f = PairProductFunctional(model.graph, model.graph.vertices, 1)
        fs = forward_smoothing(model, prov, f, y)
        reps = 300
        estimates = np.array(
            [backward_sampling(model, prov, f, y, 10, RngKey(19, rep))[0][0] for rep in range(reps)]
        )
        se = estimates.std(ddof=1) / np.sqrt(reps)
        assert abs(estimates.mean() - fs[0]) < 4 * se
        assert estimates.std(ddof=1) > 0

    def test_matches_kalman_smoothed_functional(self):
        model = make_model(1, ModelParams((0.5,), 0.0, 0.0))
        _, y = model.simulate(3, np.random.default_rng(20))
        exact = rts_smoother(model, y).means.sum()
        estimates = []
        for rep in range(30):
            prov = _provider(model, y, FilterKind.IID_EXACT, 2000, RngKey(21, rep))
            est, _ = backward_sampling(
                model, prov, ComponentSumFunctional([0]), y, 500, RngKey(22, rep)
            )
            estimates.append(est[0])
        estimates = np.array(estimates)
        se = estimates.std(ddof=1) / np.sqrt(estimates.size)
        assert abs(estimates.mean() - exact) < 4 * se

    def test_path_states_come_from_forward_particles(self):
        model = make_model(2, PARAMS)
        _, y = model.simulate(3, np.random.default_rng(23))
        prov = _provider(model, y, FilterKind.STANDARD_PF, 16, RngKey(24))
        f = ComponentSumFunctional(model.graph.vertices)
        _, paths = backward_sampling(model, prov, f, y, 8, RngKey(25))
        for t in range(3):
            cloud_t = prov.states_at(t)
            for m in range(8):
                assert any(np.array_equal(paths[m, t], cloud_t[n]) for n in range(16))


class TestBlockedSmoothers:
    def test_single_block_bitwise_equals_standard_fs(self):
        rng = np.random.default_rng(26)
        for trial in range(4):
            V = int(rng.integers(2, 6))
            T = int(rng.integers(2, 5))
            model = make_model(V, PARAMS)
            _, y = model.simulate(T, np.random.default_rng(100 + trial))
            part = BlockPartition.single_block(V)
            prov = _provider(model, y, FilterKind.LOCAL_WEIGHT_PF, 32, RngKey(27, trial))
            f = PairProductFunctional(model.graph, model.graph.vertices, 1)
            std = forward_smoothing(model, prov, f, y)
            blk = blocked_forward_smoothing(model, part, prov, _pair_factory(model), y)
            np.testing.assert_array_equal(std, blk.total)

    def test_single_block_bs_bitwise_equals_standard_bs(self):
        model = make_model(3, PARAMS)
        _, y = model.simulate(3, np.random.default_rng(28))
        part = BlockPartition.single_block(3)
        prov = _provider(model, y, FilterKind.LOCAL_WEIGHT_PF, 32, RngKey(29))
        f = PairProductFunctional(model.graph, model.graph.vertices, 1)
        std, _ = backward_sampling(model, prov, f, y, 12, RngKey(30))
        blk = blocked_backward_sampling(model, part, prov, _pair_factory(model), y, 12, RngKey(30))
        np.testing.assert_array_equal(std, blk.total)

    def test_constant_functional_exact_per_block(self):
        model = make_model(6, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(31))
        part = BlockPartition.contiguous(6, 2, enlargement_radius=1)
        prov = _provider(model, y, FilterKind.BPF_MARGINAL, 64, RngKey(32), partition=part)
        res = blocked_forward_smoothing(model, part, prov, lambda K: ConstantFunctional(1.5), y)
        np.testing.assert_allclose(res.per_block, np.full((3, 1), 1.5 * 4), rtol=1e-13)
        assert res.total[0] == pytest.approx(1.5 * 4 * 3, rel=1e-13)

    def test_blocked_bs_converges_to_blocked_fs(self):
        model = make_model(4, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(33))
        part = BlockPartition.contiguous(4, 2, enlargement_radius=0)
        prov = _provider(model, y, FilterKind.BPF_MARGINAL, 80, RngKey(34), partition=part)
        fs = blocked_forward_smoothing(model, part, prov, _pair_factory(model), y)
        reps = 300
        draws = np.array(
            [
                blocked_backward_sampling(
                    model, part, prov, _pair_factory(model), y, 10, RngKey(35, rep)
                ).per_block[:, 0]
                for rep in range(reps)
            ]
        )
        for k in range(part.num_blocks):
            se = draws[:, k].std(ddof=1) / np.sqrt(reps)
            assert abs(draws[:, k].mean() - fs.per_block[k, 0]) < 4 * se

    def test_blocked_estimate_tracks_exact_value(self):
        model = make_model(6, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(36))
        part = BlockPartition.contiguous(6, 2, enlargement_radius=1)
        exact = rts_smoother(model, y).means.sum(axis=0)
        estimates = []
        for rep in range(20):
            prov = _provider(
                model, y, FilterKind.IID_EXACT_MARGINAL, 800, RngKey(37, rep), partition=part
            )
            res = blocked_forward_smoothing(
                model, part, prov, lambda K: ComponentSumFunctional(model.graph.vertices, K), y
            )
            estimates.append(res.total)
        estimates = np.array(estimates)
        mean = estimates.mean(axis=0)
        se = estimates.std(axis=0, ddof=1) / np.sqrt(estimates.shape[0])
        # small blocking bias allowed on top of Monte Carlo error
        assert np.all(np.abs(mean - exact) < 4 * se + 0.05 * np.abs(exact).max() + 0.02)

    def test_block_locality(self):
        # block output depends only on particle coordinates in N(K_hat)
        model = make_model(9, PARAMS)
        _, y = model.simulate(3, np.random.default_rng(38))
        part = BlockPartition.contiguous(9, 3, enlargement_radius=1)
        prov = _provider(model, y, FilterKind.BPF_MARGINAL, 32, RngKey(39), partition=part)
        K = part.block(0)
        K_hat = part.enlarged_block(0, model.graph)
        scope = model.graph.neighborhood_of_set(K_hat)  # {0..5}

        states = prov._states.copy()
        tampered = states.copy()
        tampered[:, :, scope.max() + 1 :] = 123.456  # garbage far from the block
        prov_tampered = FilterProvider(prov.kind, tampered, prov._log_w, "scope")

        f = _pair_factory(model)
        a = blocked_forward_smoothing(model, part, prov, f, y).per_block[0]
        b = blocked_forward_smoothing(model, part, prov_tampered, f, y).per_block[0]
        np.testing.assert_array_equal(a, b)

        a_bs = blocked_backward_sampling(model, part, prov, f, y, 6, RngKey(40)).per_block[0]
        b_bs = blocked_backward_sampling(model, part, prov_tampered, f, y, 6, RngKey(40)).per_block[0]
        np.testing.assert_array_equal(a_bs, b_bs)

    def test_suffstat_factory_runs_blocked(self):
        model = make_model(6, PARAMS)
        _, y = model.simulate(4, np.random.default_rng(41))
        part = BlockPartition.contiguous(6, 3, enlargement_radius=1)
        prov = _provider(model, y, FilterKind.BPF_MARGINAL, 64, RngKey(42), partition=part)
        res = blocked_forward_smoothing(
            model, part, prov, lambda K: suffstat_functionals(model, y, K), y
        )
        assert res.total.shape == (9,)
        assert np.all(np.isfinite(res.total))
