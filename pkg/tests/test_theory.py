"""Theory engine: bias prediction, limiting distribution, MSE decomposition."""

import numpy as np
import pytest

from gfsa import (
    ExpNorm,
    GainSequence,
    NoiseModel,
    Quadratic,
    RegimeError,
    RngStream,
    ShiftedAckley,
    SkewedQuartic,
    asymptotic_distribution,
    bernoulli,
    gaussian,
    moments,
    mse_decomposition,
    mse_ratio,
    predict_bias,
    predict_mse,
    prop3_predicate,
    sample_batch,
    sigma_eff2_from_noise,
    spherical,
    ushape,
    z_study,
)
from gfsa.losses import DerivativeUnavailable
from gfsa.theory import MseDecomposition

from conftest import fd_third_tensor

KNIFE_EDGE = GainSequence(a=0.12, c=0.8, alpha=0.606, gamma=0.101, A=10)
PLAIN = GainSequence(a=0.05, c=0.3, alpha=0.602, gamma=0.101)


class TestPredictBias:
    def test_zero_for_quadratic(self, make_rng):
        loss = Quadratic.identity(4)
        for dist in (bernoulli(), ushape(), gaussian(), spherical()):
            b = predict_bias(loss, np.array([1.0, -2.0, 0.5, 3.0]), 0.2, dist)
            assert np.all(b == 0.0)

    def test_matches_independent_tensor_oracle(self):
        # rebuild the bias from the full finite-difference third tensor
        loss = SkewedQuartic(3)
        theta = np.array([0.4, -0.1, 0.3])
        tensor = fd_third_tensor(loss.value, theta)
        c = 0.1
        for dist, w4, w22 in ((gaussian(), 3.0, 1.0), (spherical(), 9.0 / 5.0, 3.0 / 5.0)):
            expected = np.empty(3)
            for m in range(3):
                expected[m] = (c**2 / 6.0) * (
                    w4 * tensor[m, m, m]
                    + 3.0 * w22 * sum(tensor[i, i, m] for i in range(3) if i != m)
                )
            assert np.allclose(predict_bias(loss, theta, c, dist), expected, rtol=1e-3)

    def test_difference_family_uses_second_moment(self):
        loss = SkewedQuartic(4)
        theta = np.full(4, 0.2)
        b_bern = predict_bias(loss, theta, 0.1, bernoulli())
        b_ushape = predict_bias(loss, theta, 0.1, ushape())
        xi2 = moments(ushape(), 4).xi2
        assert np.allclose(b_ushape, xi2 * b_bern, rtol=1e-12)

    @pytest.mark.parametrize("dist", [gaussian(), spherical()])
    def test_monte_carlo_validation(self, dist, make_rng):
        # quartic polynomials make the c^2 bias formula exact, so the MC mean
        # must match the prediction up to pure sampling error
        loss = SkewedQuartic(3)
        theta = np.array([0.4, -0.1, 0.3])
        c = 0.2
        n = 2_000_000
        draws = sample_batch(dist, 3, n, make_rng(404))
        y_plus = loss.value_batch(theta + c * draws)
        y_minus = loss.value_batch(theta - c * draws)
        ests = ((y_plus - y_minus) / (2 * c))[:, None] * draws
        bias_mc = ests.mean(axis=0) - loss.gradient(theta)
        se = ests.std(axis=0, ddof=1) / np.sqrt(n)
        predicted = predict_bias(loss, theta, c, dist)
        assert np.all(np.abs(bias_mc - predicted) < 5 * se)


class TestAsymptoticDistribution:
    def test_quadratic_has_zero_mean_any_regime(self):
        loss = Quadratic.identity(3)
        for gains in (KNIFE_EDGE, PLAIN):
            params = asymptotic_distribution(loss, gains, gaussian(), 0.02)
            assert np.all(params.mu == 0.0)

    def test_regime_branches(self):
        loss = SkewedQuartic(5)
        on_edge = asymptotic_distribution(loss, KNIFE_EDGE, gaussian(), 0.02)
        assert np.linalg.norm(on_edge.mu) > 0.0
        off_edge = asymptotic_distribution(loss, PLAIN, gaussian(), 0.02)
        assert np.all(off_edge.mu == 0.0)
        assert off_edge.beta == pytest.approx(0.4)

    def test_rejects_negative_regime(self):
        bad = GainSequence(a=1.0, c=1.0, alpha=0.9, gamma=0.1)  # 3g - a/2 < 0
        with pytest.raises(RegimeError):
            asymptotic_distribution(Quadratic.identity(2), bad, gaussian(), 0.02)

    def test_rejects_nonpositive_beta(self):
        bad = GainSequence(a=1.0, c=1.0, alpha=0.602, gamma=0.35)
        with pytest.raises(RegimeError):
            asymptotic_distribution(Quadratic.identity(2), bad, gaussian(), 0.02)

    def test_unit_alpha_beta_plus_condition(self):
        gains = GainSequence(a=1.0, c=1.0, alpha=1.0, gamma=1.0 / 6.0)
        params = asymptotic_distribution(Quadratic.identity(2), gains, gaussian(), 0.02)
        assert params.beta_plus == pytest.approx(2.0 / 3.0)
        small = GainSequence(a=0.1, c=1.0, alpha=1.0, gamma=1.0 / 6.0)
        with pytest.raises(RegimeError, match="beta"):
            asymptotic_distribution(Quadratic.identity(2), small, gaussian(), 0.02)

    def test_m_diag_formula(self):
        loss = Quadratic(np.diag([1.0, 4.0]))
        gains = PLAIN
        params = asymptotic_distribution(loss, gains, gaussian(), 0.02)
        lambdas = gains.a * np.array([2.0, 8.0])
        expected = (gains.a**2 * 0.02 / (4 * gains.c**2)) / (2 * lambdas)
        assert np.allclose(np.sort(params.m_diag), np.sort(expected), rtol=1e-12)

    def test_difference_family_trace_scaling(self):
        # matched gains: the difference-family covariance is the direction
        # family's scaled by the inverse second moment
        loss = SkewedQuartic(6)
        rd = asymptotic_distribution(loss, KNIFE_EDGE, gaussian(), 0.02)
        sp = asymptotic_distribution(loss, KNIFE_EDGE, ushape(), 0.02)
        rho2 = moments(ushape(), 6).rho2
        assert sp.trace_m == pytest.approx(rho2 * rd.trace_m, rel=1e-12)

    def test_sigma_eff_convention(self):
        assert sigma_eff2_from_noise(NoiseModel(sigma2=0.01)) == 0.02
        assert sigma_eff2_from_noise(NoiseModel.off()) == 0.0


def quartic_closed_forms(p: int, c: float) -> dict:
    """Independent closed forms for the quartic's quadratic-form values.

    Derived from the triangular structure: the scaled-Hessian inverse maps
    the diagonal-third-derivative vector to the last basis vector and the
    cross vector to an all-ones-but-last vector, collapsing each form to a
    one-line expression. Invariant in the update gain a.
    """
    return {
        "u1su1": 0.01 * c**4 / (4 * p**2),
        "u1su2": 0.0,
        "u2su2": 0.09 * c**4 * (p - 1) / (4 * p**2),
        "q1": (0.09 * p - 0.08) * c**4 / (4 * p**2),
        "q2": 0.09 * c**4 / (4 * p),
        "predicate": 0.01 * c**4 / (2 * p**2),
    }


class TestMseDecomposition:
    @pytest.mark.parametrize("p", [2, 5, 10, 30])
    @pytest.mark.parametrize("c", [0.5, 1.0])
    def test_quartic_closed_forms(self, p, c):
        dec = mse_decomposition(SkewedQuartic(p), a=1.0, c=c, beta_plus=0.0, sigma_eff2=0.02)
        ref = quartic_closed_forms(p, c)
        assert dec.quadratic_form(1, 0) == pytest.approx(ref["u1su1"], rel=1e-8)
        assert float(dec.u1 @ dec.s @ dec.u2) == pytest.approx(0.0, abs=1e-8 * ref["u1su1"])
        assert dec.quadratic_form(0, 1) == pytest.approx(ref["u2su2"], rel=1e-8)
        assert dec.q1 == pytest.approx(ref["q1"], rel=1e-8)
        assert dec.q2 == pytest.approx(ref["q2"], rel=1e-8)

    def test_example_values_p2(self):
        dec = mse_decomposition(SkewedQuartic(2), a=1.0, c=1.0, beta_plus=0.0, sigma_eff2=0.02)
        assert dec.q2 == pytest.approx(0.01125, rel=1e-10)
        assert dec.q1 == pytest.approx(0.00625, rel=1e-10)

    @pytest.mark.parametrize("a", [0.25, 1.0, 4.0])
    def test_forms_invariant_in_update_gain(self, a):
        # u vectors scale with a while S scales with 1/a^2: the forms cancel
        dec = mse_decomposition(SkewedQuartic(5), a=a, c=0.8, beta_plus=0.0, sigma_eff2=0.02)
        ref = quartic_closed_forms(5, 0.8)
        assert dec.q1 == pytest.approx(ref["q1"], rel=1e-10)
        assert dec.q2 == pytest.approx(ref["q2"], rel=1e-10)

    def test_variance_trace_dual_route(self):
        # trace of the limiting covariance equals the closed form written
        # in terms of the eigenvalues of H/a
        loss = SkewedQuartic(7)
        a, c, sig_eff2 = 0.12, 0.8, 0.02
        dec = mse_decomposition(loss, a=a, c=c, beta_plus=0.0, sigma_eff2=sig_eff2)
        eig_scaled = np.linalg.eigvalsh(loss.hessian(loss.theta_star)) / a
        alt = (sig_eff2 / (8 * c**2)) * np.sum(1.0 / eig_scaled)
        assert dec.d == pytest.approx(alt, rel=1e-12)

    def test_quadratic_loss_has_no_bias_terms(self):
        dec = mse_decomposition(Quadratic.identity(4), a=0.5, c=0.4, beta_plus=0.0, sigma_eff2=0.02)
        assert dec.q1 == 0.0 and dec.q2 == 0.0
        assert np.all(dec.u1 == 0.0) and np.all(dec.u2 == 0.0)
        assert dec.d > 0.0

    def test_rejects_nonpositive_shifted_hessian(self):
        with pytest.raises(RegimeError):
            mse_decomposition(Quadratic.identity(2), a=0.1, c=1.0, beta_plus=1.0, sigma_eff2=0.02)

    def test_ackley_has_no_theory(self):
        with pytest.raises(DerivativeUnavailable):
            mse_decomposition(ShiftedAckley(3, shift=1.0), a=0.1, c=0.5, beta_plus=0.0, sigma_eff2=0.02)


class TestPredictMse:
    def setup_method(self):
        self.loss = SkewedQuartic(10)
        self.dec = mse_decomposition(self.loss, a=0.12, c=0.8, beta_plus=0.0, sigma_eff2=0.02)

    def test_two_point_law_is_q1_plus_d(self):
        assert predict_mse(self.dec, bernoulli(), 10) == pytest.approx(
            self.dec.q1 + self.dec.d, rel=1e-14
        )

    def test_gaussian_is_q2_plus_d(self):
        assert predict_mse(self.dec, gaussian(), 10) == pytest.approx(
            self.dec.q2 + self.dec.d, rel=1e-14
        )

    def test_ushape_coefficients(self):
        m = moments(ushape(), 10)
        expected = m.xi2**2 * self.dec.q1 + m.rho2 * self.dec.d
        assert predict_mse(self.dec, ushape(), 10) == pytest.approx(expected, rel=1e-14)
        assert m.xi2**2 == pytest.approx(1.3417, abs=2e-4)
        assert m.rho2 == pytest.approx(0.8928, abs=2e-4)

    def test_spherical_squared_projection(self):
        p = 10
        coeff = (p / (p + 2)) ** 2
        expected = coeff * self.dec.q2 + self.dec.d
        assert predict_mse(self.dec, spherical(), p) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("p", [1, 2, 5, 20, 50])
    def test_spherical_dominates_gaussian(self, p):
        dec = mse_decomposition(SkewedQuartic(p), a=0.1, c=0.5, beta_plus=0.0, sigma_eff2=0.02)
        assert predict_mse(dec, spherical(), p) <= predict_mse(dec, gaussian(), p)

    @pytest.mark.parametrize("p", [2, 5, 30])
    def test_two_point_law_beats_gaussian_on_quartic(self, p):
        dec = mse_decomposition(SkewedQuartic(p), a=0.1, c=0.5, beta_plus=0.0, sigma_eff2=0.02)
        assert predict_mse(dec, bernoulli(), p) < predict_mse(dec, gaussian(), p)

    def test_no_cross_terms_favors_difference_family(self):
        # separable loss: u2 = 0, so any difference-family law with
        # xi2 < phi and rho < 1 wins against any direction-family law
        p = 30
        dec = mse_decomposition(ExpNorm(p), a=0.05, c=0.3, beta_plus=0.0, sigma_eff2=0.02)
        assert np.all(dec.u2 == 0.0)
        for sp in (bernoulli(), ushape()):
            for rd in (gaussian(), spherical()):
                assert predict_mse(dec, sp, p) < predict_mse(dec, rd, p)
                assert mse_ratio(dec, rd, sp, p) > 1.0

    def test_consistency_with_limiting_distribution(self):
        # the decomposition route and the distribution route must agree on
        # mu^T mu + tr(M) in the bias-active regime
        loss = SkewedQuartic(6)
        sig_eff2 = 0.02
        for dist in (bernoulli(), ushape(), gaussian(), spherical()):
            params = asymptotic_distribution(loss, KNIFE_EDGE, dist, sig_eff2)
            dec = mse_decomposition(
                loss, KNIFE_EDGE.a, KNIFE_EDGE.c, params.beta_plus, sig_eff2
            )
            assert predict_mse(dec, dist, 6) == pytest.approx(params.mse, rel=1e-10)


class TestProp3Predicate:
    def test_quartic_closed_form(self):
        for p in (2, 5, 10, 30):
            dec = mse_decomposition(SkewedQuartic(p), a=1.0, c=0.9, beta_plus=0.0, sigma_eff2=0.02)
            holds, value = prop3_predicate(dec)
            assert holds
            assert value == pytest.approx(quartic_closed_forms(p, 0.9)["predicate"], rel=1e-8)

    def test_quadratic_boundary(self):
        dec = mse_decomposition(Quadratic.identity(3), a=0.5, c=0.5, beta_plus=0.0, sigma_eff2=0.02)
        holds, value = prop3_predicate(dec)
        assert holds and value == 0.0

    def test_predicate_implies_ordering_over_random_tensors(self):
        # 500 random (u1, u2, S) triples: whenever the predicate holds, the
        # two-point law cannot lose to Gaussian directions
        rng = np.random.default_rng(7)
        held = 0
        for _ in range(500):
            p = int(rng.integers(1, 8))
            u1 = rng.normal(size=p)
            u2 = rng.normal(size=p) * rng.uniform(0, 3)
            r = rng.normal(size=(p, p))
            s = r @ r.T + 1e-3 * np.eye(p)
            v1, v2 = u1 + u2, 3 * u1 + u2
            dec = MseDecomposition(
                u1=u1, u2=u2, s=s,
                q1=float(v1 @ s @ v1), q2=float(v2 @ s @ v2),
                d=float(rng.uniform(0, 5)),
            )
            holds, _ = prop3_predicate(dec)
            if holds:
                held += 1
                assert predict_mse(dec, bernoulli(), p) <= predict_mse(dec, gaussian(), p) + 1e-12
        assert held > 100  # the predicate is not vacuously false


class TestZStudy:
    def test_dimension_one_reference_value(self, make_rng):
        res = z_study(p=1, a_range=100.0, n_trials=100_000, rng=make_rng(11))
        assert res.p_z_leq_0 == pytest.approx(0.125, abs=0.005)
        assert res.chebyshev_bound == pytest.approx(41.0 / 61.0)

    def test_dimension_five(self, make_rng):
        res = z_study(p=5, a_range=100.0, n_trials=100_000, rng=make_rng(12))
        assert res.chebyshev_bound == pytest.approx(41.0 / 141.0)
        assert res.p_z_leq_0 <= res.chebyshev_bound
        assert res.p_z_leq_0 == pytest.approx(7e-4, abs=6e-4)

    def test_expected_value_formula(self, make_rng):
        res = z_study(p=4, a_range=2.5, n_trials=10, rng=make_rng())
        assert res.expected_z == pytest.approx(8 * 2.5**2 * 4 / 3)

    def test_bound_dominates_for_all_small_dims(self, make_rng):
        for p in range(1, 11):
            res = z_study(p=p, a_range=100.0, n_trials=100_000, rng=make_rng(40 + p))
            assert res.p_z_leq_0 <= res.chebyshev_bound

    def test_probability_scale_free(self, make_rng):
        a = z_study(p=3, a_range=1.0, n_trials=50_000, rng=make_rng(77))
        b = z_study(p=3, a_range=100.0, n_trials=50_000, rng=make_rng(77))
        assert a.p_z_leq_0 == b.p_z_leq_0

    def test_tiny_sample_is_valid(self, make_rng):
        res = z_study(p=1, a_range=100.0, n_trials=10, rng=make_rng())
        assert 0.0 <= res.p_z_leq_0 <= 1.0
