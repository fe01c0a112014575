"""Tests for distortion, TD errors, quantile losses and action selection."""
import numpy as np
import pytest

from driqn.distrl import (
    action_values, adaptive_eta, adaptive_spec, distort, dqn_loss, epsilon_at, huber, huber_quantile,
    iqn_loss, select_action, sync_target, td_error_matrix,
)
from driqn.qnet import NetworkParams, NetworkSpec, forward, init_params
from driqn.types import GREEDY, Batch, ContractViolation, DistortionKind, DistortionSpec, Observation


def constant_net(values, obs_dim: int = 2, distributional: bool = True) -> NetworkParams:
    """A network whose output is `values` for every observation and tau."""
    spec = NetworkSpec(obs_dim=obs_dim, n_actions=len(values), hidden=4, n_cos=4,
                       distributional=distributional)
    params = init_params(spec, np.random.default_rng(0), zero_output=True)
    params.view("output.b")[:] = values
    return params


def one_transition(action=0, reward=1.0, done=False, obs_dim=2) -> Batch:
    return Batch(obs=np.ones((1, obs_dim)), actions=np.array([action]), rewards=np.array([reward]),
                 next_obs=np.ones((1, obs_dim)), dones=np.array([float(done)]))


def random_batch(rng, size=6, obs_dim=3) -> Batch:
    return Batch(obs=rng.normal(size=(size, obs_dim)), actions=rng.integers(9, size=size),
                 rewards=rng.normal(size=size), next_obs=rng.normal(size=(size, obs_dim)),
                 dones=(rng.random(size) < 0.3).astype(np.float64))


def central_difference(fn, theta, eps=1e-6):
    grad = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = eps
        grad[i] = (fn(theta + e) - fn(theta - e)) / (2.0 * eps)
    return grad


def lidar_obs(lidar) -> Observation:
    return Observation(velocity=np.zeros(2), goal_rel=np.array([10.0, 0.0]), lidar=np.asarray(lidar, dtype=float))


class TestDistortion:
    def test_identity(self):
        assert distort(0.8, GREEDY) == 0.8

    def test_cvar_scales(self):
        assert distort(0.8, DistortionSpec(DistortionKind.CVAR, 0.25)) == pytest.approx(0.2)
        assert distort(0.0, DistortionSpec(DistortionKind.CVAR, 0.5)) == 0.0

    def test_out_of_range(self):
        with pytest.raises(ContractViolation):
            distort(1.2, GREEDY)

    def test_adaptive_eta(self):
        assert adaptive_eta(lidar_obs(np.ones(8))) == 1.0
        assert adaptive_eta(lidar_obs([0.0] + [1.0] * 7)) == 0.25
        assert adaptive_eta(lidar_obs([0.5] + [1.0] * 7)) == pytest.approx(0.625)

    def test_adaptive_spec_open_water_is_greedy(self):
        assert adaptive_spec(lidar_obs(np.ones(8))) is GREEDY
        spec = adaptive_spec(lidar_obs([0.5] * 8))
        assert spec.kind is DistortionKind.CVAR
        assert spec.eta == pytest.approx(0.625)


class TestTdErrors:
    def test_single_entry(self):
        assert td_error_matrix(1.0, 0.9, np.array([2.0]), np.array([1.0])) == pytest.approx(np.array([[1.8]]))

    def test_terminal_collapse(self):
        assert td_error_matrix(5.0, 0.9, np.array([100.0]), np.array([5.0]), done=True) == pytest.approx(np.array([[0.0]]))

    def test_constant_return_fixed_point(self):
        c, gamma = 3.0, 0.9
        out = td_error_matrix(c * (1 - gamma), gamma, np.array([c]), np.array([c]))
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_rows_index_current_quantiles(self):
        out = td_error_matrix(0.0, 1.0, np.array([1.0, 2.0]), np.array([0.0, 2.0]))
        assert np.array_equal(out, np.array([[1.0, 2.0], [-1.0, 0.0]]))

    def test_batched(self):
        out = td_error_matrix(np.array([0.0, 1.0]), 1.0, np.zeros((2, 3)), np.zeros((2, 4)))
        assert out.shape == (2, 4, 3)
        assert np.all(out[1] == 1.0)


class TestHuber:
    def test_zero_error(self):
        for tau in (0.1, 0.5, 0.9):
            assert huber_quantile(0.0, tau, 1.0) == 0.0

    def test_quadratic_branch(self):
        assert huber_quantile(1.0, 0.5, 1.0) == pytest.approx(0.25)

    def test_linear_branch_negative(self):
        assert huber_quantile(-2.0, 0.25, 1.0) == pytest.approx(1.125)

    def test_kappa_must_be_positive(self):
        with pytest.raises(ContractViolation):
            huber_quantile(1.0, 0.5, 0.0)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(0)
        for u, tau, kappa in zip(rng.normal(scale=3.0, size=200), rng.random(200), rng.uniform(0.1, 2.0, 200)):
            whole = float(huber(u, kappa)) / kappa
            assert huber_quantile(u, tau, kappa) + huber_quantile(-u, tau, kappa) == pytest.approx(whole, rel=1e-9)
            assert huber_quantile(u, tau, kappa) + huber_quantile(u, 1.0 - tau, kappa) == pytest.approx(whole, rel=1e-9)
            assert huber_quantile(-u, 1.0 - tau, kappa) == pytest.approx(huber_quantile(u, tau, kappa), rel=1e-9)

    @pytest.mark.parametrize("kappa", [0.5, 1.0, 2.0])
    def test_continuous_at_branch_points(self, kappa):
        for tau in (0.1, 0.5, 0.9):
            for point in (-kappa, 0.0, kappa):
                left = huber_quantile(point - 1e-9, tau, kappa)
                right = huber_quantile(point + 1e-9, tau, kappa)
                assert abs(left - right) < 1e-8
                assert abs(huber_quantile(point, tau, kappa) - left) < 1e-8

    def test_non_negative(self):
        u = np.linspace(-5.0, 5.0, 101)
        assert np.all(huber_quantile(u, 0.3, 1.0) >= 0.0)

    def test_plain_huber(self):
        assert np.allclose(huber(np.array([0.5, -3.0]), 1.0), [0.125, 2.5])


class TestIqnLoss:
    def test_single_quantile_value(self):
        online, target = constant_net([1.0, 0.0]), constant_net([2.0, 2.0])
        ev = iqn_loss(one_transition(), online, target, 1, 1, kappa=1.0, gamma=0.9,
                      taus=np.array([[0.5]]), target_taus=np.array([[0.3]]))
        assert ev.loss == pytest.approx(0.65)

    def test_terminal_self_consistent(self):
        online = constant_net([5.0, 0.0])
        ev = iqn_loss(one_transition(reward=5.0, done=True), online, constant_net([9.0, 9.0]), 4, 4,
                      kappa=1.0, gamma=0.99, rng=np.random.default_rng(0))
        assert ev.loss == 0.0
        assert np.all(ev.gradient().flat == 0.0)

    def test_empty_batch(self):
        empty = Batch(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros(0), np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ContractViolation):
            iqn_loss(empty, constant_net([0.0]), constant_net([0.0]), 2, 2, 1.0, 0.9, np.random.default_rng(0))

    def test_minimum_at_interpolating_quantiles(self):
        # One-state MDP: terminal reward 1.0, online net outputs a scalar bias b for every tau.
        batch = one_transition(reward=1.0, done=True)
        taus = np.array([[0.2, 0.5, 0.8]])
        sweep = np.linspace(0.0, 2.0, 201)
        losses = []
        for b in sweep:
            online = constant_net([b, 0.0])
            losses.append(iqn_loss(batch, online, online, 3, 3, 1.0, 0.9, taus=taus,
                                   target_taus=taus).loss)
        assert sweep[int(np.argmin(losses))] == pytest.approx(1.0)

    def test_gradient_matches_finite_differences(self):
        spec = NetworkSpec(obs_dim=3, hidden=5, n_cos=4)
        for seed in range(50):
            rng = np.random.default_rng(seed)
            online = init_params(spec, rng)
            target = init_params(spec, rng)
            assert online.d <= 500
            batch = random_batch(rng)
            taus, target_taus = rng.random((6, 4)), rng.random((6, 3))
            ev = iqn_loss(batch, online, target, 4, 3, 1.0, 0.99, taus=taus, target_taus=target_taus)

            def objective(theta):
                return iqn_loss(batch, NetworkParams(spec, theta), target, 4, 3, 1.0, 0.99,
                                taus=taus, target_taus=target_taus).loss

            fd = central_difference(objective, online.theta)
            grad = ev.gradient().flat
            assert np.linalg.norm(grad - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)

    def test_duplicated_batch_same_loss(self):
        spec = NetworkSpec(obs_dim=3, hidden=5, n_cos=4)
        rng = np.random.default_rng(3)
        online, target = init_params(spec, rng), init_params(spec, rng)
        batch = random_batch(rng)
        taus, target_taus = rng.random((6, 4)), rng.random((6, 4))
        single = iqn_loss(batch, online, target, 4, 4, 1.0, 0.99, taus=taus, target_taus=target_taus)
        double = iqn_loss(Batch.concat([batch, batch]), online, target, 4, 4, 1.0, 0.99,
                          taus=np.vstack([taus, taus]), target_taus=np.vstack([target_taus, target_taus]))
        assert double.loss == pytest.approx(single.loss, rel=1e-12)
        assert np.allclose(double.gradient().flat, single.gradient().flat, atol=1e-12)

    def test_two_state_cycle_converges(self):
        # s0 -> s1 -> s0 forever with reward 1 and gamma 0.5: every return quantile is 2.
        spec = NetworkSpec(obs_dim=2, hidden=16, n_cos=4)
        rng = np.random.default_rng(0)
        online = init_params(spec, rng)
        target = sync_target(online)
        eye = np.eye(2)
        obs = np.repeat(eye, 9, axis=0)
        batch = Batch(obs=obs, actions=np.tile(np.arange(9), 2), rewards=np.ones(18),
                      next_obs=obs[::-1].copy(), dones=np.zeros(18))
        for update in range(20_000):
            ev = iqn_loss(batch, online, target, 8, 8, 1.0, 0.5, rng)
            online.theta -= 0.05 * ev.gradient().flat
            if (update + 1) % 100 == 0:
                target = sync_target(online)
        z = forward(online, eye, np.array([0.1, 0.5, 0.9]))
        assert np.allclose(z, 2.0, rtol=0.01, atol=0.0)


class TestDqnLoss:
    def test_linear_branch(self):
        online = constant_net([1.0, 0.0], distributional=False)
        target = constant_net([2.0, 0.5], distributional=False)
        ev = dqn_loss(one_transition(), online, target, gamma=0.9)
        assert ev.loss == pytest.approx(1.3)

    def test_fixed_point(self):
        online = constant_net([2.0, 2.0], distributional=False)
        assert dqn_loss(one_transition(reward=1.0), online, online, gamma=0.5).loss == 0.0

    def test_terminal(self):
        online = constant_net([3.0, 0.0], distributional=False)
        assert dqn_loss(one_transition(reward=3.0, done=True), online, constant_net([7.0, 7.0], distributional=False),
                        gamma=0.9).loss == 0.0

    def test_gradient_matches_finite_differences(self):
        spec = NetworkSpec(obs_dim=3, hidden=5, distributional=False)
        for seed in range(50):
            rng = np.random.default_rng(seed)
            online, target = init_params(spec, rng), init_params(spec, rng)
            batch = random_batch(rng)
            ev = dqn_loss(batch, online, target, 0.99)
            fd = central_difference(lambda th: dqn_loss(batch, NetworkParams(spec, th), target, 0.99).loss,
                                    online.theta)
            assert np.linalg.norm(ev.gradient().flat - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)


class TestActing:
    def test_argmax(self):
        params = constant_net([2.0, 2.5])
        assert select_action(params, np.ones((1, 2)), 8, GREEDY, np.random.default_rng(0)) == 1

    def test_ties_go_to_lowest_index(self):
        params = constant_net([0.0] * 9)
        assert select_action(params, np.ones((1, 2)), 8, GREEDY, np.random.default_rng(0)) == 0

    def test_scalar_head(self):
        params = constant_net([0.0, 1.0, 0.5], distributional=False)
        assert select_action(params, np.ones((1, 2)), 1, GREEDY, np.random.default_rng(0)) == 1

    @pytest.mark.parametrize("spec", [GREEDY, DistortionSpec(DistortionKind.CVAR, 0.4)])
    def test_constant_shift_keeps_action(self, spec):
        params = init_params(NetworkSpec(obs_dim=4, hidden=8, n_cos=4), np.random.default_rng(3))
        obs_rng = np.random.default_rng(4)
        for _ in range(20):
            obs = obs_rng.normal(size=(1, 4))
            base = select_action(params, obs, 8, spec, np.random.default_rng(5))
            for shift in (-100.0, 0.5, 37.0):
                shifted = params.copy()
                shifted.view("output.b")[:] += shift
                assert select_action(shifted, obs, 8, spec, np.random.default_rng(5)) == base

    def test_k_must_be_positive(self):
        with pytest.raises(ContractViolation):
            select_action(constant_net([0.0]), np.ones((1, 2)), 0, GREEDY, np.random.default_rng(0))

    def test_cvar_values_match_dense_grid(self):
        spec = NetworkSpec(obs_dim=4, hidden=8, n_cos=4)
        params = init_params(spec, np.random.default_rng(1))
        eta = 0.3
        grid = (np.arange(10_000) + 0.5) / 10_000 * eta
        rng = np.random.default_rng(2)
        for _ in range(20):
            obs = rng.normal(size=(1, 4))
            dense = forward(params, obs, grid)[0].mean(axis=0)
            sampled = action_values(params, obs, 10_000, DistortionSpec(DistortionKind.CVAR, eta), rng)
            assert np.allclose(sampled, dense, atol=0.01 * max(1.0, np.abs(dense).max()))

    def test_epsilon_schedule(self):
        assert epsilon_at(0, 1000) == 1.0
        assert epsilon_at(100, 1000) == pytest.approx(0.525)
        assert epsilon_at(200, 1000) == 0.05
        assert epsilon_at(900, 1000) == 0.05
