import numpy as np
import pytest

from pglab.analysis import (
    appendix_a_scenario,
    bias_angle_deg,
    bias_variance_sweep,
    check_bound,
    grad_sqrt_pi,
    spectral_report,
    td1_fixed_point,
)
from pglab.chain import (
    ParamChain,
    make_constant_chain,
    stationary_distribution,
)
from pglab.errors import (
    DegenerateFeatures,
    DegenerateGradient,
    InvalidDiscount,
    NotDistinct,
    ValidationError,
)
from pglab.estimators import simulate_chain_states
from pglab.numdiff import relative_error

from factories import fast_mixing_chain, random_pomdp, random_table_chain
from oracles import central_diff


def shared_row_chain(logits=(0.4, -0.3, 0.1)):
    """All rows equal softmax(logits): rank-1 transitions, repeated zero
    eigenvalues, but a live gradient since the shared row moves with theta."""
    logits = np.asarray(logits, dtype=float)
    n = logits.shape[0]

    def transition(th):
        q = np.exp(th - th.max())
        q = q / q.sum()
        return np.tile(q, (n, 1))

    def grad(th):
        q = np.exp(th - th.max())
        q = q / q.sum()
        dq = np.diag(q) - np.outer(q, q)  # (l, j) -> d q_j / d th_l
        return np.repeat(dq[:, None, :], n, axis=1)

    return ParamChain(
        theta=logits,
        rewards=np.linspace(-1.0, 1.0, n),
        transition_fn=transition,
        grad_fn=grad,
        ratio_bound=1.0,
    )


class TestSpectralReport:
    def test_identical_rows_are_rank_one(self):
        # every spectral direction except the stationary one dies in one step
        chain = shared_row_chain()
        rep = spectral_report(chain.transition())
        assert abs(rep.eigenvalues[0] - 1.0) < 1e-9
        assert np.abs(rep.eigenvalues[1:]).max() < 1e-12
        assert rep.lambda2_mag < 1e-12
        assert not rep.distinct  # zero is a repeated eigenvalue for n >= 3

    def test_two_state_identical_rows_distinct(self):
        rep = spectral_report(np.array([[1 / 3, 2 / 3], [1 / 3, 2 / 3]]))
        assert np.allclose(sorted(np.abs(rep.eigenvalues)), [0.0, 1.0], atol=1e-12)
        assert rep.distinct

    def test_swap_matrix_spectrum(self):
        rep = spectral_report(np.array([[0.0, 1.0], [1.0, 0.0]]))
        vals = sorted(rep.eigenvalues.real)
        assert abs(vals[0] + 1.0) < 1e-12 and abs(vals[1] - 1.0) < 1e-12
        assert rep.lambda2_mag == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_reconstruction_residual(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.dirichlet(np.full(5, 1.5), size=5)
        rep = spectral_report(P)
        resid = np.abs(rep.S @ np.diag(rep.eigenvalues) @ rep.S_inv - P).max()
        assert resid < 1e-8

    def test_normalization_contract(self):
        P = random_table_chain(4, seed=60).transition()
        rep = spectral_report(P)
        # first right eigenvector is the all-ones vector, and the matching
        # left row is then forced to be the stationary distribution
        assert np.allclose(rep.S[:, 0], 1.0, atol=1e-12)
        assert np.allclose(rep.S_inv[0].real, stationary_distribution(P), atol=1e-8)
        assert np.abs(rep.S_inv[0].imag).max() < 1e-10
        norms = np.linalg.norm(rep.S[:, 1:], axis=0)
        assert np.allclose(norms, 1.0, atol=1e-12)

    def test_kappa2_at_least_one(self):
        for seed in range(4):
            P = random_table_chain(3, seed=seed + 70).transition()
            assert spectral_report(P).kappa2 >= 1.0

    def test_rejects_non_stochastic_input(self):
        with pytest.raises(ValidationError):
            spectral_report(np.array([[0.5, 0.4], [0.5, 0.5]]))


class TestGradSqrtPi:
    def test_matches_finite_differences(self):
        chain = random_table_chain(3, seed=61)

        def sqrt_pi_of(th):
            return np.sqrt(stationary_distribution(chain.with_theta(th).transition()))

        fd = central_diff(sqrt_pi_of, chain.theta)
        assert relative_error(grad_sqrt_pi(chain), fd) < 1e-6


class TestCheckBound:
    @pytest.mark.parametrize("beta", [0.5, 0.9, 0.99])
    def test_holds_on_random_chains(self, beta):
        held = 0
        for seed in range(20):
            chain = random_table_chain(4, seed=seed + 200)
            rep = check_bound(chain, beta)
            assert rep.holds, f"seed {seed}: lhs {rep.lhs} > rhs {rep.rhs}"
            held += 1
        assert held == 20

    def test_rhs_scales_linearly_with_one_minus_beta(self):
        # dividing out the discount-to-mixing ratio must leave a constant
        chain = fast_mixing_chain(seed=6)
        reps = [check_bound(chain, b) for b in (0.5, 0.9, 0.99, 0.999)]
        consts = [r.rhs / r.discount_mixing_ratio for r in reps]
        assert np.ptp(consts) < 1e-10
        rhss = [r.rhs for r in reps]
        assert all(a > b for a, b in zip(rhss, rhss[1:]))

    def test_lhs_vanishes_as_beta_approaches_one(self):
        chain = fast_mixing_chain(seed=7)
        lhs_mid = check_bound(chain, 0.9).lhs
        lhs_hi = check_bound(chain, 0.9999).lhs
        assert abs(lhs_hi) < abs(lhs_mid)
        assert abs(lhs_hi) < 1e-3

    def test_degenerate_gradient_rejected(self):
        chain = make_constant_chain(
            np.array([[0.3, 0.7], [0.6, 0.4]]), np.array([1.0, 2.0]), theta=np.zeros(2)
        )
        with pytest.raises(DegenerateGradient):
            check_bound(chain, 0.9)

    def test_repeated_eigenvalues_rejected(self):
        with pytest.raises(NotDistinct):
            check_bound(shared_row_chain(), 0.9)

    def test_invalid_discount(self):
        with pytest.raises(InvalidDiscount):
            check_bound(random_table_chain(3, seed=62), 1.0)

    def test_reported_terms_recompose_the_rhs(self):
        rep = check_bound(random_table_chain(4, seed=63), 0.9)
        recomposed = (
            rep.kappa2
            * (2.0 * rep.grad_sqrt_pi_norm / rep.grad_eta_norm)
            * rep.rms_reward
            * rep.discount_mixing_ratio
        )
        assert rep.rhs == pytest.approx(recomposed, rel=1e-12)


class TestStationaryRewardPower:
    def test_rms_reward_matches_long_run_average(self):
        # the squared-reward weighting must equal what a long stationary
        # trajectory actually averages; batch means give the standard error
        chain = fast_mixing_chain(seed=8)
        rep = check_bound(chain, 0.9)
        states = simulate_chain_states(chain, 200_000, seed=5, burn_in=2_000)
        samples = chain.rewards[states[1:]] ** 2
        batches = samples.reshape(50, -1).mean(axis=1)
        se = batches.std(ddof=1) / np.sqrt(50)
        assert abs(batches.mean() - rep.rms_reward**2) < 3 * se


class TestBiasAngle:
    def test_reference_angles(self):
        assert bias_angle_deg([1, 0], [0, 1]) == pytest.approx(90.0, abs=1e-10)
        assert bias_angle_deg([1, 1], [2, 2]) == pytest.approx(0.0, abs=1e-5)
        assert bias_angle_deg([1, 0], [-1, 0]) == pytest.approx(180.0, abs=1e-10)

    def test_zero_vector_gives_nan(self):
        assert np.isnan(bias_angle_deg([0, 0], [1, 0]))


class TestBiasVarianceSweep:
    def test_angle_non_increasing_on_fast_mixer(self):
        chain = fast_mixing_chain(seed=9)
        records = bias_variance_sweep(
            chain, (0.5, 0.9, 0.99), steps=2_000, seeds=range(3)
        )
        angles = [r.bias_angle_deg for r in records]
        assert all(a >= b for a, b in zip(angles, angles[1:]))

    def test_variance_grows_with_beta(self):
        chain = fast_mixing_chain(seed=10)
        records = bias_variance_sweep(
            chain, (0.5, 0.99), steps=5_000, seeds=range(30)
        )
        v_low = records[0].estimator_variance_per_coordinate.mean()
        v_high = records[1].estimator_variance_per_coordinate.mean()
        assert v_high > v_low

    def test_parameter_free_chain_flagged_degenerate(self):
        chain = make_constant_chain(
            np.array([[0.3, 0.7], [0.6, 0.4]]), np.array([1.0, 2.0]), theta=np.zeros(2)
        )
        records = bias_variance_sweep(chain, (0.5, 0.9), steps=500, seeds=range(3))
        for rec in records:
            assert rec.degenerate
            assert np.isnan(rec.bias_angle_deg)
            assert rec.estimator_variance_per_coordinate.max() == 0.0

    def test_pomdp_target_accepted(self):
        model, policy = random_pomdp(3, 2, 2, seed=64)
        records = bias_variance_sweep(
            (model, policy), (0.9,), steps=1_000, seeds=range(2)
        )
        assert len(records) == 1
        assert records[0].seeds_used == 2

    def test_bad_inputs(self):
        chain = fast_mixing_chain(seed=11)
        with pytest.raises(InvalidDiscount):
            bias_variance_sweep(chain, (1.0,), steps=100, seeds=range(2))
        with pytest.raises(TypeError):
            bias_variance_sweep("nope", (0.5,), steps=100, seeds=range(2))


class TestTd1FixedPoint:
    def test_closed_form_weight(self):
        # normal-equation oracle evaluated by hand for the two-state setup:
        # w* = (pi1 phi1 J1 + pi2 phi2 J2) / (pi1 phi1^2 + pi2 phi2^2)
        pi = np.array([1 / 3, 2 / 3])
        phi = np.array([2.0, 1.0])
        for alpha in (0.0, 0.25, 0.5, 0.75, 0.99):
            j1 = 2 * alpha / (3 * (1 - alpha))
            J = np.array([j1, 1 + j1])
            expected = (3 + alpha) / (9 * (1 - alpha))
            assert td1_fixed_point(alpha, phi, pi, J) == pytest.approx(expected, abs=1e-12)

    def test_three_fifths_gives_unit_weight(self):
        pi = np.array([1 / 3, 2 / 3])
        assert td1_fixed_point(0.6, [2.0, 1.0], pi, [1.0, 2.0]) == pytest.approx(1.0, abs=1e-12)

    def test_matches_weighted_least_squares_oracle(self):
        rng = np.random.default_rng(65)
        pi = rng.dirichlet(np.full(4, 2.0))
        phi = rng.normal(size=4)
        v = rng.normal(size=4)
        w = td1_fixed_point(0.5, phi, pi, v)
        lstsq = np.linalg.lstsq(
            (np.sqrt(pi) * phi)[:, None], np.sqrt(pi) * v, rcond=None
        )[0][0]
        assert w == pytest.approx(lstsq, abs=1e-12)

    def test_proportional_features_recover_the_constant(self):
        pi = np.array([0.25, 0.25, 0.5])
        J = np.array([1.0, -2.0, 0.5])
        assert td1_fixed_point(0.3, J / 4.0, pi, J) == pytest.approx(4.0, abs=1e-12)

    def test_degenerate_features(self):
        with pytest.raises(DegenerateFeatures):
            td1_fixed_point(0.5, np.zeros(3), np.full(3, 1 / 3), np.ones(3))


class TestScenarioReport:
    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 0.75, 0.99])
    def test_hand_computed_quantities(self, alpha):
        rep = appendix_a_scenario(alpha)
        assert np.abs(rep.pi - [1 / 3, 2 / 3]).max() < 1e-12
        j1 = 2 * alpha / (3 * (1 - alpha))
        assert abs(rep.j_alpha[0] - j1) < 1e-12
        assert abs(rep.j_alpha[1] - (1 + j1)) < 1e-12
        assert abs(rep.w_star - (3 + alpha) / (9 * (1 - alpha))) < 1e-12
        assert rep.w_star > 0
        assert rep.greedy_suboptimal

    def test_features_recorded(self):
        assert np.array_equal(appendix_a_scenario(0.5).features, [2.0, 1.0])

    def test_wrong_sign_verdict_is_the_point(self):
        # the true values rank state 2 above state 1, but any positive
        # weight on features [2, 1] ranks state 1 above state 2
        rep = appendix_a_scenario(0.6)
        assert rep.j_alpha[1] > rep.j_alpha[0]
        fitted = rep.w_star * rep.features
        assert fitted[0] > fitted[1]
