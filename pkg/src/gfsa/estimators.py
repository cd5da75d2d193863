"""Gradient estimators and the stochastic-approximation recursion driver.

Three estimators share the same two-sided measurement structure: the
simultaneous-perturbation form divides one random difference componentwise
(2 measurements), the random-direction form multiplies it back onto the
direction (2 measurements), and the per-axis central difference uses 2p.
``run_sa`` iterates theta <- theta - a_k * g_hat and is reproducible bit for
bit from its stream key on a fixed backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend, _pykernel
from .core import ConfigError, GainSequence, GfsaError, RngStream, as_theta
from .losses import DerivativeUnavailable, Loss
from .perturb import PerturbationDist, sample

METHODS = ("spsa", "rdsa", "fdsa")
_METHOD_CODES = {"spsa": _pykernel.METHOD_SPSA, "rdsa": _pykernel.METHOD_RDSA, "fdsa": _pykernel.METHOD_FDSA}
_DIST_CODES = {
    "bernoulli": _pykernel.DIST_BERNOULLI,
    "ushape": _pykernel.DIST_USHAPE,
    "gaussian": _pykernel.DIST_GAUSSIAN,
    "spherical": _pykernel.DIST_SPHERICAL,
}


class DivergenceError(GfsaError):
    """The recursion left the configured norm bound (boundedness diagnostic)."""

    def __init__(self, iteration: int, norm: float, bound: float) -> None:
        self.iteration = iteration
        self.norm = norm
        self.bound = bound
        super().__init__(
            f"iterate diverged at iteration {iteration}: ||theta|| = {norm:.3e} "
            f"exceeds bound {bound:.3e}"
        )


@dataclass(frozen=True)
class GradEstimate:
    """One gradient estimate: value, measurement count, and the draw used."""

    g_hat: np.ndarray
    measurements_used: int
    perturbation: np.ndarray | None


@dataclass(frozen=True)
class Trajectory:
    """Output of ``run_sa``: final iterate plus optional recordings."""

    theta_final: np.ndarray
    iterates: np.ndarray | None  # (K+1, p) when recorded in full
    loss_evals: int
    iterations: int
    method: str
    seed: int
    stream_id: int
    backend: str
    error_curve: np.ndarray | None = None  # squared error to the reference, last W iterates
    diverged_at: int | None = None  # iteration whose update left the bound, if any


def _check_method_dist(method: str, dist: PerturbationDist | None) -> None:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r} (expected one of {METHODS})")
    if method == "fdsa":
        if dist is not None:
            raise ConfigError("fdsa uses deterministic axis perturbations; dist must be None")
        return
    if dist is None:
        raise ConfigError(f"{method} requires a perturbation distribution")
    wanted = "sp" if method == "spsa" else "rd"
    if dist.family != wanted:
        raise ConfigError(
            f"{method} needs a {wanted!r}-family distribution, got {dist.kind!r} "
            f"({dist.family!r}-family)"
        )


def spsa_gradient(
    loss: Loss, theta, c_k: float, dist: PerturbationDist, rng: RngStream
) -> GradEstimate:
    """Two-measurement estimate dividing the difference by each perturbation entry."""
    _check_method_dist("spsa", dist)
    theta = as_theta(theta, loss.p)
    if not c_k > 0:
        raise ConfigError(f"c_k must be > 0, got {c_k}")
    delta = sample(dist, loss.p, rng)
    if np.any(delta == 0.0):
        raise GfsaError("zero perturbation component in a difference-family draw")
    y_plus = loss.evaluate(theta + c_k * delta, noisy=True, rng=rng)
    y_minus = loss.evaluate(theta - c_k * delta, noisy=True, rng=rng)
    g = (y_plus - y_minus) / (2.0 * c_k * delta)
    return GradEstimate(g, 2, delta)


def rdsa_gradient(
    loss: Loss, theta, c_k: float, dist: PerturbationDist, rng: RngStream
) -> GradEstimate:
    """Two-measurement estimate projecting the difference back on the direction."""
    _check_method_dist("rdsa", dist)
    theta = as_theta(theta, loss.p)
    if not c_k > 0:
        raise ConfigError(f"c_k must be > 0, got {c_k}")
    direction = sample(dist, loss.p, rng)
    y_plus = loss.evaluate(theta + c_k * direction, noisy=True, rng=rng)
    y_minus = loss.evaluate(theta - c_k * direction, noisy=True, rng=rng)
    g = ((y_plus - y_minus) / (2.0 * c_k)) * direction
    return GradEstimate(g, 2, direction)


def fdsa_gradient(loss: Loss, theta, c_k: float, rng: RngStream) -> GradEstimate:
    """Central finite difference along every axis; 2p measurements."""
    theta = as_theta(theta, loss.p)
    if not c_k > 0:
        raise ConfigError(f"c_k must be > 0, got {c_k}")
    p = loss.p
    g = np.empty(p)
    for i in range(p):
        e = np.zeros(p)
        e[i] = c_k
        y_plus = loss.evaluate(theta + e, noisy=True, rng=rng)
        y_minus = loss.evaluate(theta - e, noisy=True, rng=rng)
        g[i] = (y_plus - y_minus) / (2.0 * c_k)
    return GradEstimate(g, 2 * p, None)


def run_sa(
    loss: Loss,
    theta0,
    gains: GainSequence,
    method: str,
    dist: PerturbationDist | None,
    iterations: int,
    rng: RngStream,
    record: str = "final",
    divergence_bound: float = 1e6,
    error_reference=None,
    curve_window: int = 0,
    raise_on_divergence: bool = True,
) -> Trajectory:
    """Run the decaying-gain recursion for ``iterations`` steps.

    record: "final" keeps only the last iterate (memory-light for large
    batteries); "full" additionally stores every iterate. When
    ``error_reference`` is given with ``curve_window`` > 0, the squared
    distance to the reference is recorded for the last ``curve_window``
    iterates. Divergence past ``divergence_bound`` raises
    :class:`DivergenceError` unless ``raise_on_divergence`` is False, in
    which case a truncated trajectory is returned (NaN-padded recordings).
    """
    _check_method_dist(method, dist)
    theta0 = as_theta(theta0, loss.p)
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    if record not in ("final", "full"):
        raise ConfigError(f"record must be 'final' or 'full', got {record!r}")
    if curve_window < 0 or curve_window > iterations:
        raise ConfigError("curve_window must be in [0, iterations]")

    p = loss.p
    iterates = np.empty((iterations + 1, p)) if record == "full" else None
    err_ref = None if error_reference is None else as_theta(error_reference, p)
    err_out = np.empty(curve_window) if (curve_window > 0 and err_ref is not None) else None
    theta_out = np.empty(p)

    dist_code = _pykernel.DIST_NONE if dist is None else _DIST_CODES[dist.kind]
    ushape_exp = 1.0 / (dist.d + 1) if dist is not None and dist.kind == "ushape" else 0.0
    ushape_cmax = dist.cmax if dist is not None and dist.kind == "ushape" else 0.0
    sigma = loss.noise.sigma if loss.noise.active else 0.0
    gen = rng.generator

    backend = "python"
    kargs = None
    if _backend.HAVE_COMPILED:
        try:
            kargs = loss.kernel_args()
        except DerivativeUnavailable:
            kargs = None  # callback losses always run on the python backend
    if kargs is not None:
        backend = "cython"
        code, vec, mat, s1, s2, s3 = kargs
        diverged_at, n_evals = _backend.compiled_kernel.run_trajectory(
            code, vec, np.ascontiguousarray(mat), s1, s2, s3,
            sigma, _METHOD_CODES[method], dist_code, ushape_exp, ushape_cmax,
            theta0, iterations,
            gains.a, gains.A, gains.alpha, gains.c, gains.gamma,
            gen.bit_generator, divergence_bound,
            iterates, err_ref, err_out, theta_out,
        )
    else:
        diverged_at, n_evals = _pykernel.run_trajectory(
            loss, sigma, _METHOD_CODES[method], dist_code, ushape_exp, ushape_cmax,
            theta0, iterations,
            gains.a, gains.A, gains.alpha, gains.c, gains.gamma,
            gen, divergence_bound,
            iterates, err_ref, err_out, theta_out,
        )

    if diverged_at >= 0 and raise_on_divergence:
        raise DivergenceError(diverged_at, float(np.linalg.norm(theta_out)), divergence_bound)

    return Trajectory(
        theta_final=theta_out,
        iterates=iterates,
        loss_evals=int(n_evals),
        iterations=iterations,
        method=method,
        seed=rng.seed,
        stream_id=rng.stream_id,
        backend=backend,
        error_curve=err_out,
        diverged_at=int(diverged_at) if diverged_at >= 0 else None,
    )
