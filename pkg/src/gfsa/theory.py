"""Asymptotic analysis engine.

Predicts, from analytic loss derivatives and exact perturbation moments, the
leading gradient-estimate bias, the limiting normal distribution of the
scaled error k^(beta/2) (theta_k - theta*), and the resulting asymptotic
mean-square error split into a bias quadratic form plus a variance trace.
All quantities here use sigma_eff2, the limit of E[(eps+ - eps-)^2]; with
the independent per-measurement noise convention used by the estimators
that equals 2 * sigma2 (see :func:`sigma_eff2_from_noise`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, GainSequence, NoiseModel, RngStream, as_theta
from .losses import Loss
from .perturb import PerturbationDist, moments

#: tolerance for classifying the exponent regime 3*gamma - alpha/2 == 0
REGIME_TOL = 1e-12


class RegimeError(ConfigError):
    """Gain exponents outside the range covered by the asymptotic theory."""


def sigma_eff2_from_noise(noise: NoiseModel) -> float:
    """Limit of E[(eps+ - eps-)^2] under independent two-sided noise draws."""
    return 2.0 * noise.sigma2


def predict_bias(loss: Loss, theta, c_k: float, dist: PerturbationDist) -> np.ndarray:
    """Leading O(c^2) bias of the two-measurement gradient estimate at ``theta``.

    Component m is (c^2/6) * [phi * L'''_mmm + 3 upsilon * sum_{i!=m} L'''_iim]
    for direction-family perturbations; difference-family perturbations
    substitute xi^2 for both fourth-moment factors.
    """
    theta = as_theta(theta, loss.p)
    if not c_k > 0:
        raise ConfigError(f"c_k must be > 0, got {c_k}")
    mom = moments(dist, loss.p)
    diag = loss.third_diag(theta)
    cross = loss.third_cross(theta)
    if dist.family == "rd":
        core = mom.phi * diag + 3.0 * mom.upsilon * cross
    else:
        core = mom.xi2 * (diag + 3.0 * cross)
    return (c_k**2 / 6.0) * core


@dataclass(frozen=True)
class AsymptoticParams:
    """Parameters of the limiting normal law of the scaled error.

    lambdas are the eigenvalues of a*H(theta*); m_diag is the diagonal of
    the limiting covariance in that eigenbasis; mu is the asymptotic mean
    in the original coordinates (zero unless 3*gamma - alpha/2 == 0).
    """

    beta: float
    beta_plus: float
    lambdas: np.ndarray
    mu: np.ndarray
    m_diag: np.ndarray
    sigma_eff2: float

    @property
    def trace_m(self) -> float:
        return float(np.sum(self.m_diag))

    @property
    def mse(self) -> float:
        """Asymptotic normalized MSE: mu^T mu + tr(M)."""
        return float(self.mu @ self.mu + self.trace_m)


def asymptotic_distribution(
    loss: Loss, gains: GainSequence, dist: PerturbationDist, sigma_eff2: float
) -> AsymptoticParams:
    """Limiting normal parameters for the recursion under ``dist``.

    Requires beta = alpha - 2*gamma > 0 and gamma >= alpha/6; with alpha = 1
    additionally beta < 2*min(lambda). The asymptotic mean is nonzero only
    in the knife-edge regime 3*gamma - alpha/2 == 0 (tested to
    ``REGIME_TOL`` since typical exponent choices hit zero only in exact
    arithmetic).
    """
    if sigma_eff2 < 0:
        raise ConfigError(f"sigma_eff2 must be >= 0, got {sigma_eff2}")
    beta = gains.alpha - 2.0 * gains.gamma
    if not beta > 0:
        raise RegimeError(f"alpha - 2*gamma = {beta:.6g} must be > 0")
    regime = 3.0 * gains.gamma - gains.alpha / 2.0
    if regime < -REGIME_TOL:
        raise RegimeError(
            f"3*gamma - alpha/2 = {regime:.6g} < 0: asymptotic mean undefined in this regime"
        )

    theta_star = loss.theta_star
    hess = loss.hessian(theta_star)
    eigvals, eigvecs = np.linalg.eigh(hess)
    if eigvals[0] <= 0:
        raise ConfigError("Hessian at the minimizer must be positive definite")
    lambdas = gains.a * eigvals

    if gains.alpha == 1.0:
        beta_plus = beta
        if not beta_plus < 2.0 * lambdas.min():
            raise RegimeError(
                f"alpha = 1 requires beta < 2*min(lambda) = {2 * lambdas.min():.6g}, "
                f"got beta = {beta_plus:.6g}"
            )
    else:
        beta_plus = 0.0

    m_diag = (gains.a**2 * sigma_eff2 / (4.0 * gains.c**2)) / (2.0 * lambdas - beta_plus)
    if dist.family == "sp":
        # componentwise division by the perturbation inflates the noise
        # covariance by the inverse second moment
        m_diag = moments(dist, loss.p).rho2 * m_diag

    if abs(regime) <= REGIME_TOL:
        t_vec = _bias_drift(loss, theta_star, gains.a, gains.c, dist)
        shifted = gains.a * hess - 0.5 * beta_plus * np.eye(loss.p)
        mu = np.linalg.solve(shifted, t_vec)
    else:
        mu = np.zeros(loss.p)

    return AsymptoticParams(
        beta=beta,
        beta_plus=beta_plus,
        lambdas=lambdas,
        mu=mu,
        m_diag=m_diag,
        sigma_eff2=sigma_eff2,
    )


def _bias_drift(loss: Loss, theta_star, a: float, c: float, dist: PerturbationDist) -> np.ndarray:
    """Drift vector T entering the asymptotic mean: -a * (leading bias at c=1) * c^2."""
    mom = moments(dist, loss.p)
    diag = loss.third_diag(theta_star)
    cross = loss.third_cross(theta_star)
    if dist.family == "rd":
        core = mom.phi * diag + 3.0 * mom.upsilon * cross
    else:
        core = mom.xi2 * (diag + 3.0 * cross)
    return -(a * c**2 / 6.0) * core


@dataclass(frozen=True)
class MseDecomposition:
    """Building blocks of the asymptotic MSE at fixed gains.

    u1/u2 collect diagonal and cross third derivatives at the minimizer, S
    is the squared inverse of the shifted scaled Hessian, q1/q2 are the two
    canonical bias quadratic forms and d is the common variance trace.
    """

    u1: np.ndarray
    u2: np.ndarray
    s: np.ndarray
    q1: float
    q2: float
    d: float

    def quadratic_form(self, weight_diag: float, weight_cross: float) -> float:
        """(w1*u1 + w2*u2)^T S (w1*u1 + w2*u2)."""
        v = weight_diag * self.u1 + weight_cross * self.u2
        return float(v @ self.s @ v)


def mse_decomposition(
    loss: Loss, a: float, c: float, beta_plus: float, sigma_eff2: float
) -> MseDecomposition:
    """Exact u1, u2, S, q1, q2 and d from the analytic tensors at the minimizer."""
    if not a > 0 or not c > 0:
        raise ConfigError("gains a and c must be > 0")
    if sigma_eff2 < 0:
        raise ConfigError(f"sigma_eff2 must be >= 0, got {sigma_eff2}")
    theta_star = loss.theta_star
    u1 = a * c**2 * loss.third_diag(theta_star) / 6.0
    u2 = a * c**2 * loss.third_cross(theta_star) / 2.0

    hess = loss.hessian(theta_star)
    eigvals, eigvecs = np.linalg.eigh(hess)
    shifted = a * eigvals - 0.5 * beta_plus
    if shifted[0] <= 0:
        raise RegimeError(
            f"a*H - (beta_plus/2) I must be positive definite; "
            f"smallest shifted eigenvalue is {shifted[0]:.6g}"
        )
    s = (eigvecs / shifted**2) @ eigvecs.T

    v1 = u1 + u2
    v2 = 3.0 * u1 + u2
    q1 = float(v1 @ s @ v1)
    q2 = float(v2 @ s @ v2)
    d = float((a**2 * sigma_eff2 / (4.0 * c**2)) * np.sum(1.0 / (2.0 * a * eigvals - beta_plus)))
    return MseDecomposition(u1=u1, u2=u2, s=s, q1=q1, q2=q2, d=d)


def predict_mse(dec: MseDecomposition, dist: PerturbationDist, p: int) -> float:
    """Asymptotic normalized MSE under ``dist``: bias form plus variance trace.

    Computed from first principles by substituting the distribution's exact
    moments into mu^T mu + tr(M) in the bias-active exponent regime; the
    familiar special cases (q1 + d for the symmetric two-point law,
    q2 + d for Gaussian directions) fall out rather than being hard-coded.
    """
    mom = moments(dist, p)
    if dist.family == "sp":
        return float(mom.xi2**2 * dec.q1 + mom.rho2 * dec.d)
    bias_sq = dec.quadratic_form(mom.phi, mom.upsilon)
    return float(bias_sq + dec.d)


def mse_ratio(
    dec: MseDecomposition, rd_dist: PerturbationDist, sp_dist: PerturbationDist, p: int
) -> float:
    """Ratio of direction-family to difference-family asymptotic MSE."""
    return predict_mse(dec, rd_dist, p) / predict_mse(dec, sp_dist, p)


def prop3_predicate(dec: MseDecomposition) -> tuple[bool, float]:
    """Sign condition certifying the two-point law beats Gaussian directions.

    Returns (holds, value) with value = 2 u1^T S u1 + u1^T S u2. When it
    holds, q1 <= q2 follows (q2 - q1 = 4 * value), hence the predicted MSE
    ordering.
    """
    value = float(2.0 * dec.u1 @ dec.s @ dec.u1 + dec.u1 @ dec.s @ dec.u2)
    holds = value >= 0.0
    if holds:
        # q2 - q1 = 4 * value up to rounding; the ordering must follow
        assert dec.q1 <= dec.q2 + 1e-12 * max(1.0, abs(dec.q2)), (dec.q1, dec.q2, value)
    return holds, value


@dataclass(frozen=True)
class ZStudyResult:
    """Monte Carlo comparison of the two bias quadratic forms under random tensors."""

    p: int
    n_trials: int
    a_range: float
    p_z_leq_0: float
    chebyshev_bound: float
    expected_z: float
    mc_standard_error: float


def z_study(p: int, a_range: float, n_trials: int, rng: RngStream) -> ZStudyResult:
    """Estimate P(z <= 0) for z = q2 - q1 = 4 x^T (2x + y) with identity S
    and u1, u2 entries i.i.d. uniform on (-a_range, a_range).

    Also returns the one-sided Chebyshev bound 41/(41+20p) and the exact
    mean E[z] = 8 * a_range^2 * p / 3. The event probability is scale-free
    in a_range.
    """
    if p < 1:
        raise ConfigError(f"dimension must be >= 1, got {p}")
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    if not a_range > 0:
        raise ConfigError(f"a_range must be > 0, got {a_range}")
    gen = rng.generator
    hits = 0
    remaining = n_trials
    chunk_size = max(1, min(250_000, n_trials))
    while remaining > 0:
        n = min(chunk_size, remaining)
        x = a_range * (2.0 * gen.random((n, p)) - 1.0)
        y = a_range * (2.0 * gen.random((n, p)) - 1.0)
        z = 4.0 * (2.0 * (x * x).sum(axis=1) + (x * y).sum(axis=1))
        hits += int(np.count_nonzero(z <= 0.0))
        remaining -= n
    q = hits / n_trials
    return ZStudyResult(
        p=p,
        n_trials=n_trials,
        a_range=a_range,
        p_z_leq_0=q,
        chebyshev_bound=41.0 / (41.0 + 20.0 * p),
        expected_z=8.0 * a_range**2 * p / 3.0,
        mc_standard_error=float(np.sqrt(max(q * (1.0 - q), 1e-300) / n_trials)),
    )
