import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pglab.chain import (
    average_reward,
    check_stochastic,
    discounted_value,
    exact_grad_eta,
    grad_beta_eta,
    grad_j_beta,
    grad_pi,
    likelihood_ratios,
    make_constant_chain,
    make_softmax_table_chain,
    stationary_distribution,
)
from pglab.errors import (
    DimensionMismatch,
    InvalidDiscount,
    NonUniqueStationary,
    ValidationError,
)
from pglab.numdiff import central_difference, relative_error

from factories import fast_mixing_chain, random_table_chain
from oracles import central_diff, neumann_value, power_iteration_pi

# two-state chain whose rows both equal [1/3, 2/3]; with rewards [0, 1] the
# long-run quantities have short closed forms used as hand oracles below
LAZY_P = np.array([[1 / 3, 2 / 3], [1 / 3, 2 / 3]])
LAZY_R = np.array([0.0, 1.0])


def lazy_chain(beta_free: bool = False):
    return make_constant_chain(LAZY_P, LAZY_R)


class TestStationaryDistribution:
    def test_two_state_swap_is_half_half(self):
        # symmetry: exchanging the states leaves the chain unchanged
        pi = stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(pi, [0.5, 0.5], atol=1e-14)

    def test_identical_rows_reproduce_the_row(self):
        # every state redraws from the same distribution, so that row is
        # stationary by inspection
        pi = stationary_distribution(LAZY_P)
        assert np.allclose(pi, [1 / 3, 2 / 3], atol=1e-12)

    def test_matches_power_iteration(self):
        # independent oracle: power iteration from the uniform vector
        rng = np.random.default_rng(5)
        P = rng.dirichlet(np.full(5, 2.0), size=5)
        pi = stationary_distribution(P)
        assert np.linalg.norm(pi - power_iteration_pi(P)) < 1e-8

    def test_residual_and_normalization(self):
        rng = np.random.default_rng(8)
        P = rng.dirichlet(np.full(6, 1.5), size=6)
        pi = stationary_distribution(P)
        assert abs(pi.sum() - 1.0) < 1e-12
        assert (pi > 0).all()
        assert np.abs(pi @ P - pi).max() < 1e-10

    def test_reducible_chain_rejected(self):
        # two disconnected blocks admit a continuum of stationary vectors
        P = np.array(
            [
                [0.5, 0.5, 0.0, 0.0],
                [0.5, 0.5, 0.0, 0.0],
                [0.0, 0.0, 0.5, 0.5],
                [0.0, 0.0, 0.5, 0.5],
            ]
        )
        with pytest.raises(NonUniqueStationary):
            stationary_distribution(P)


class TestCheckStochastic:
    def test_rejects_bad_row_sum(self):
        with pytest.raises(ValidationError):
            check_stochastic(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_rejects_negative_entry(self):
        with pytest.raises(ValidationError):
            check_stochastic(np.array([[1.1, -0.1], [0.5, 0.5]]))

    def test_accepts_and_returns_array(self):
        P = np.array([[0.25, 0.75], [0.6, 0.4]])
        assert np.array_equal(check_stochastic(P), P)


class TestAverageReward:
    def test_constant_rewards(self):
        rng = np.random.default_rng(2)
        P = rng.dirichlet(np.full(4, 2.0), size=4)
        assert abs(average_reward(P, np.full(4, 2.5)) - 2.5) < 1e-12

    def test_lazy_chain_value(self):
        # hand value: (1/3) * 0 + (2/3) * 1
        assert abs(average_reward(LAZY_P, LAZY_R) - 2 / 3) < 1e-12

    def test_single_state(self):
        assert average_reward(np.array([[1.0]]), np.array([3.25])) == pytest.approx(
            3.25, abs=1e-15
        )


class TestDiscountedValue:
    def test_constant_rewards_geometric_series(self):
        rng = np.random.default_rng(3)
        P = rng.dirichlet(np.full(3, 2.0), size=3)
        J = discounted_value(P, np.full(3, 2.0), 0.75)
        assert np.allclose(J, 8.0, atol=1e-12)

    def test_lazy_chain_closed_form(self):
        # solving the two equations by hand: J(1) = 2a/(3(1-a)), J(2) = 1 + J(1)
        for alpha in (0.0, 0.25, 0.5, 0.75, 0.99):
            J = discounted_value(LAZY_P, LAZY_R, alpha)
            j1 = 2 * alpha / (3 * (1 - alpha))
            assert abs(J[0] - j1) < 1e-12
            assert abs(J[1] - (1 + j1)) < 1e-12

    def test_lazy_chain_at_three_fifths(self):
        assert np.allclose(discounted_value(LAZY_P, LAZY_R, 0.6), [1.0, 2.0], atol=1e-12)

    def test_matches_neumann_series(self):
        # independent oracle: summing beta^t P^t r directly
        rng = np.random.default_rng(4)
        P = rng.dirichlet(np.full(4, 1.5), size=4)
        r = rng.uniform(-1, 1, 4)
        J = discounted_value(P, r, 0.9)
        assert np.abs(J - neumann_value(P, r, 0.9)).max() < 1e-10

    def test_bellman_residual_and_bound(self):
        rng = np.random.default_rng(6)
        P = rng.dirichlet(np.full(5, 2.0), size=5)
        r = rng.uniform(-2, 2, 5)
        beta = 0.95
        J = discounted_value(P, r, beta)
        assert np.abs(J - r - beta * P @ J).max() < 1e-10
        assert np.abs(J).max() <= np.abs(r).max() / (1 - beta) + 1e-9

    @pytest.mark.parametrize("beta", [-0.1, 1.0, 1.5])
    def test_invalid_discount(self, beta):
        with pytest.raises(InvalidDiscount):
            discounted_value(LAZY_P, LAZY_R, beta)


class TestGradPi:
    def test_parameter_free_chain_is_zero(self):
        chain = make_constant_chain(LAZY_P, LAZY_R, theta=np.zeros(3))
        assert np.array_equal(grad_pi(chain), np.zeros((3, 2)))

    def test_matches_finite_differences(self):
        chain = random_table_chain(3, seed=10)

        def pi_of(th):
            return stationary_distribution(chain.with_theta(th).transition())

        fd = central_diff(pi_of, chain.theta)
        assert relative_error(grad_pi(chain), fd) < 1e-6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_rows_sum_to_zero(self, seed):
        # the stationary vector always sums to 1, so its derivative sums to 0
        chain = random_table_chain(4, seed=seed)
        assert np.abs(grad_pi(chain).sum(axis=1)).max() < 1e-10


class TestExactGradEta:
    def test_parameter_free_chain_is_zero(self):
        chain = make_constant_chain(LAZY_P, LAZY_R, theta=np.zeros(2))
        assert np.array_equal(exact_grad_eta(chain), np.zeros(2))

    def test_matches_finite_differences(self):
        chain = random_table_chain(5, seed=11)

        def eta_of(th):
            c = chain.with_theta(th)
            return average_reward(c.transition(), c.rewards)

        fd = central_diff(eta_of, chain.theta)
        assert relative_error(exact_grad_eta(chain), fd) < 1e-6

    @pytest.mark.parametrize("seed", [3, 4])
    def test_consistent_with_grad_pi(self, seed):
        chain = random_table_chain(4, seed=seed)
        assert np.abs(exact_grad_eta(chain) - grad_pi(chain) @ chain.rewards).max() < 1e-10


class TestGradBetaEta:
    def test_beta_zero_reduces_to_reward_weighting(self):
        chain = random_table_chain(4, seed=12)
        pi = stationary_distribution(chain.transition())
        expected = np.einsum("i,kij,j->k", pi, chain.grad_transition(), chain.rewards)
        assert np.abs(grad_beta_eta(chain, 0.0) - expected).max() < 1e-12

    def test_angle_shrinks_toward_true_gradient(self):
        chain = fast_mixing_chain(seed=1)
        ge = exact_grad_eta(chain)

        def angle(beta):
            gb = grad_beta_eta(chain, beta)
            return float(
                np.arccos(
                    np.clip(ge @ gb / (np.linalg.norm(ge) * np.linalg.norm(gb)), -1, 1)
                )
            )

        angles = [angle(b) for b in (0.5, 0.9, 0.99, 0.999)]
        assert all(a > b for a, b in zip(angles, angles[1:]))

    def test_parameter_free_chain_is_zero(self):
        chain = make_constant_chain(LAZY_P, LAZY_R, theta=np.zeros(2))
        assert np.array_equal(grad_beta_eta(chain, 0.9), np.zeros(2))

    def test_invalid_discount(self):
        with pytest.raises(InvalidDiscount):
            grad_beta_eta(random_table_chain(3, seed=0), 1.0)


class TestGradJBeta:
    def test_parameter_free_chain_is_zero(self):
        chain = make_constant_chain(LAZY_P, LAZY_R, theta=np.zeros(2))
        assert np.array_equal(grad_j_beta(chain, 0.8), np.zeros((2, 2)))

    def test_beta_zero_is_zero(self):
        chain = random_table_chain(3, seed=13)
        assert np.abs(grad_j_beta(chain, 0.0)).max() < 1e-14

    def test_matches_finite_differences(self):
        chain = random_table_chain(3, seed=14)
        beta = 0.9

        def j_of(th):
            c = chain.with_theta(th)
            return discounted_value(c.transition(), c.rewards, beta)

        fd = central_diff(j_of, chain.theta)
        assert relative_error(grad_j_beta(chain, beta), fd) < 1e-6

    @pytest.mark.parametrize("seed,beta", [(0, 0.5), (1, 0.9), (2, 0.99)])
    def test_stationary_weighting_identity(self, seed, beta):
        # both sides computed through different solves
        chain = random_table_chain(4, seed=seed)
        pi = stationary_distribution(chain.transition())
        lhs = (1 - beta) * (grad_j_beta(chain, beta) @ pi)
        rhs = beta * grad_beta_eta(chain, beta)
        assert np.abs(lhs - rhs).max() < 1e-10


class TestDecompositionIdentity:
    @pytest.mark.parametrize("seed", [0, 5, 9])
    def test_average_gradient_splits_into_discounted_parts(self, seed):
        # exact_grad_eta against the independently computed two-term split
        rng = np.random.default_rng(seed)
        chain = random_table_chain(4, seed=seed + 100)
        beta = rng.uniform(0.1, 0.99)
        J = discounted_value(chain.transition(), chain.rewards, beta)
        lhs = exact_grad_eta(chain)
        rhs = (1 - beta) * (grad_pi(chain) @ J) + beta * grad_beta_eta(chain, beta)
        assert np.abs(lhs - rhs).max() < 1e-9


class TestSoftmaxTableChain:
    def test_ratio_identities(self):
        # own-logit ratio is 1 - p, cross-logit ratio is -p of the crossed column
        chain = random_table_chain(3, seed=15)
        P = chain.transition()
        ratios = chain.ratios()
        n = 3
        for i in range(n):
            for j in range(n):
                for l in range(n):
                    k = i * n + l
                    expected = (1.0 if l == j else 0.0) - P[i, l]
                    assert ratios[k, i, j] == pytest.approx(expected, abs=1e-12)

    def test_other_rows_unaffected(self):
        chain = random_table_chain(3, seed=16)
        G = chain.grad_transition()
        n = 3
        for i in range(n):
            for l in range(n):
                k = i * n + l
                rows = np.delete(np.arange(n), i)
                assert np.abs(G[k][rows]).max() == 0.0

    def test_zero_logits_give_uniform_rows(self):
        chain = make_softmax_table_chain(np.zeros(16), np.zeros(4))
        assert np.allclose(chain.transition(), 0.25, atol=1e-15)

    def test_declared_ratio_bound_holds(self):
        chain = random_table_chain(4, seed=17, logit_scale=2.0)
        assert chain.ratio_bound == 1.0
        assert np.abs(chain.ratios()).max() <= 1.0

    def test_second_derivatives_match_finite_differences(self):
        chain = random_table_chain(3, seed=18)

        def grad_of(th):
            return chain.with_theta(th).grad_fn(th)

        fd = central_diff(grad_of, chain.theta)  # (K, K, n, n)
        assert relative_error(chain.hess_transition(), fd) < 1e-6

    def test_validate_passes(self):
        random_table_chain(5, seed=19).validate()

    @given(st.integers(0, 2**32 - 1))
    @settings(deadline=None, max_examples=25)
    def test_gradient_rows_sum_to_zero(self, seed):
        chain = random_table_chain(3, seed=seed)
        G = chain.grad_transition()
        assert np.abs(G.sum(axis=2)).max() < 1e-10


class TestConstantChain:
    def test_transition_and_gradients(self):
        chain = make_constant_chain(LAZY_P, LAZY_R, theta=np.zeros(4))
        assert np.array_equal(chain.transition(), LAZY_P)
        assert np.array_equal(chain.grad_transition(), np.zeros((4, 2, 2)))
        assert np.array_equal(chain.hess_transition(), np.zeros((4, 4, 2, 2)))

    def test_defaults_to_no_parameters(self):
        chain = make_constant_chain(LAZY_P, LAZY_R)
        assert chain.num_params == 0

    def test_validate_rejects_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            make_constant_chain(LAZY_P, np.zeros(3)).validate()


class TestLikelihoodRatios:
    def test_zero_over_zero_is_zero(self):
        num = np.array([[[0.5, -0.5], [0.0, 0.0]]])
        den = np.array([[0.5, 0.5], [1.0, 0.0]])
        out = likelihood_ratios(num, den)
        assert out[0, 1, 1] == 0.0
        assert out[0, 0, 0] == 1.0

    def test_with_theta_rejects_wrong_length(self):
        chain = random_table_chain(3, seed=20)
        with pytest.raises(DimensionMismatch):
            chain.with_theta(np.zeros(4))
