import numpy as np
import pytest

from sekit.core import Domain
from sekit.mdp import (NonPositiveQ, TabularMDP, exact_policy_gradient,
                       f_reward, grad_q_logits, policy_value, q_function,
                       visitation)
from sekit.models import ConditionalSoftmaxModel
from sekit.oracles import finite_difference_gradient, reinforce_gradient


def random_policy(mdp, rng, scale=0.3):
    return ConditionalSoftmaxModel(
        rng.normal(size=(mdp.n_states, mdp.n_actions)) * scale, mdp.domain())


class TestTabularMDP:
    def test_validation(self, small_mdp):
        with pytest.raises(ValueError):
            TabularMDP(small_mdp.transitions, small_mdp.rewards, 1.0, small_mdp.p0)
        bad_p = small_mdp.transitions.copy()
        bad_p[0, 0, 0] += 0.5
        with pytest.raises(ValueError):
            TabularMDP(bad_p, small_mdp.rewards, 0.9, small_mdp.p0)

    def test_json_roundtrip(self, small_mdp):
        again = TabularMDP.from_json(small_mdp.to_json())
        assert np.max(np.abs(again.transitions - small_mdp.transitions)) <= 1e-15
        assert np.max(np.abs(again.rewards - small_mdp.rewards)) <= 1e-15
        assert again.gamma == small_mdp.gamma

    def test_domain(self, small_mdp):
        dom = small_mdp.domain()
        assert dom.size == 8
        assert dom.factor_sizes == (4, 2)


class TestQFunction:
    def test_bellman_residual(self, small_mdp, rng):
        table = q_function(small_mdp, random_policy(small_mdp, rng))
        assert table.bellman_residual() <= 1e-8

    def test_matches_value_iteration(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        table = q_function(small_mdp, policy)
        pi = policy.probs()
        q = np.zeros_like(table.q)
        for _ in range(5000):
            v = (pi * q).sum(axis=1)
            q = small_mdp.rewards + small_mdp.gamma * small_mdp.transitions @ v
        assert np.max(np.abs(q - table.q)) <= 1e-9


class TestVisitation:
    def test_mass_is_geometric_series(self, small_mdp, rng):
        mu = visitation(small_mdp, random_policy(small_mdp, rng))
        assert mu.sum() == pytest.approx(1.0 / (1.0 - small_mdp.gamma), rel=1e-10)

    def test_fixed_point(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        mu = visitation(small_mdp, policy)
        pi = policy.probs()
        T = np.einsum("ij,ijk->ik", pi, small_mdp.transitions)
        assert np.max(np.abs(mu - (small_mdp.p0 + small_mdp.gamma * T.T @ mu))) <= 1e-10


class TestPolicyGradient:
    def test_matches_finite_difference(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        g = exact_policy_gradient(small_mdp, policy)
        fd = finite_difference_gradient(
            lambda t: policy_value(small_mdp,
                                   ConditionalSoftmaxModel(t, small_mdp.domain())),
            policy.theta)
        assert np.max(np.abs(g - fd)) <= 1e-6

    def test_matches_reinforce_oracle(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        g = exact_policy_gradient(small_mdp, policy)
        g_oracle = reinforce_gradient(small_mdp.transitions, small_mdp.rewards,
                                      small_mdp.gamma, small_mdp.p0, policy.theta)
        assert np.max(np.abs(g - g_oracle)) <= 1e-8


class TestGradQ:
    def test_matches_finite_difference(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        tensor = grad_q_logits(small_mdp, policy)
        S, A = 4, 2
        for s, a in ((0, 0), (2, 1), (3, 0)):
            fd = finite_difference_gradient(
                lambda t: q_function(
                    small_mdp, ConditionalSoftmaxModel(t, small_mdp.domain())
                ).q[s, a],
                policy.theta)
            assert np.max(np.abs(tensor[s, a] - fd)) <= 1e-6


class TestFReward:
    def test_q_mode_values(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        f = f_reward(small_mdp, "q")
        assert np.max(np.abs(f.values(policy) -
                             q_function(small_mdp, policy).q.ravel())) <= 1e-12

    def test_log_mode_offset(self, rng):
        g = np.random.default_rng(1)
        P = g.dirichlet(np.ones(3), size=(3, 2))
        rewards = g.random((3, 2)) - 2.0  # strictly negative Q territory
        mdp = TabularMDP(P, rewards, 0.9, np.ones(3) / 3)
        policy = ConditionalSoftmaxModel.zeros(mdp.domain())
        f = f_reward(mdp, "log_q")
        v = f.values(policy)
        assert np.all(np.isfinite(v))
        c = f.diagnostics["reward_offset"]
        assert c > 0
        shifted = q_function(mdp, policy).q + c / (1.0 - mdp.gamma)
        assert np.max(np.abs(np.exp(v) - shifted.ravel())) <= 1e-8

    def test_bad_offset_raises(self, small_mdp, rng):
        g = np.random.default_rng(1)
        P = g.dirichlet(np.ones(3), size=(3, 2))
        mdp = TabularMDP(P, g.random((3, 2)) - 5.0, 0.9, np.ones(3) / 3)
        policy = ConditionalSoftmaxModel.zeros(mdp.domain())
        f = f_reward(mdp, "log_q", offset=1e-9)
        with pytest.raises(NonPositiveQ):
            f.values(policy)

    def test_intrinsic_mode(self, small_mdp, rng):
        policy = random_policy(small_mdp, rng)
        intrinsic = np.full((4, 2), 0.2)
        f = f_reward(small_mdp, "q_plus_intrinsic", intrinsic_rewards=intrinsic)
        v = f.values(policy)
        q_ex = q_function(small_mdp, policy).q
        in_mdp = TabularMDP(small_mdp.transitions, intrinsic, small_mdp.gamma,
                            small_mdp.p0)
        q_in = q_function(in_mdp, policy).q
        total = q_ex + q_in + f.diagnostics["reward_offset"] / (1 - small_mdp.gamma)
        assert np.max(np.abs(np.exp(v) - total.ravel())) <= 1e-8

    def test_unknown_mode(self, small_mdp):
        with pytest.raises(ValueError):
            f_reward(small_mdp, "nonsense")
