"""Pure-numpy trajectory runner.

This is the reference implementation of the iteration/draw protocol; the
compiled kernel in ``_kernel.pyx`` consumes the identical random-variate
sequence (same draws, same order) from the same bit generator, so both
backends are interchangeable up to floating-point summation order.

Protocol per iteration k = 0..K-1:
  1. a_k = a/(k+1+A)^alpha, c_k = c/(k+1)^gamma
  2. perturbation draw (spsa/rdsa only), see ``perturb`` module docstring
  3. measurement y+ (one noise normal if sigma > 0), then y-
     (fdsa: per axis i, y+_i then y-_i)
  4. update theta <- theta - a_k * g_hat
  5. divergence check on ||theta||
"""

from __future__ import annotations

import numpy as np

from .core import GfsaError

METHOD_SPSA = 0
METHOD_RDSA = 1
METHOD_FDSA = 2

DIST_BERNOULLI = 0
DIST_USHAPE = 1
DIST_GAUSSIAN = 2
DIST_SPHERICAL = 3
DIST_NONE = -1


def _draw_perturbation(dist_code, ushape_exp, ushape_cmax, p, gen):
    if dist_code == DIST_BERNOULLI:
        return np.where(gen.random(p) < 0.5, 1.0, -1.0)
    if dist_code == DIST_USHAPE:
        t = 2.0 * gen.random(p) - 1.0
        return ushape_cmax * np.sign(t) * np.abs(t) ** ushape_exp
    if dist_code == DIST_GAUSSIAN:
        return gen.standard_normal(p)
    if dist_code == DIST_SPHERICAL:
        z = gen.standard_normal(p)
        norm = np.linalg.norm(z)
        if norm == 0.0:
            raise GfsaError("degenerate zero draw while sampling the sphere")
        return z * (np.sqrt(p) / norm)
    raise GfsaError(f"unknown distribution code {dist_code}")


def run_trajectory(
    loss,
    sigma: float,
    method: int,
    dist_code: int,
    ushape_exp: float,
    ushape_cmax: float,
    theta0: np.ndarray,
    iterations: int,
    a: float,
    big_a: float,
    alpha: float,
    c: float,
    gamma: float,
    gen: np.random.Generator,
    divergence_bound: float,
    iterates_out: np.ndarray | None,
    err_ref: np.ndarray | None,
    err_out: np.ndarray | None,
    theta_out: np.ndarray,
) -> tuple[int, int]:
    """Run the recursion; returns (diverged_at, loss_evals).

    diverged_at is -1 for a completed run, else the iteration index whose
    update left the divergence bound. ``err_out`` (length W) receives the
    squared distance to ``err_ref`` for the last W iterates; entries not
    reached stay NaN.
    """
    p = theta0.size
    theta = theta0.astype(float).copy()
    bound2 = divergence_bound * divergence_bound
    n_evals = 0
    window = 0
    if err_out is not None:
        err_out.fill(np.nan)
        window = err_out.size
    if iterates_out is not None:
        iterates_out.fill(np.nan)
        iterates_out[0] = theta

    diverged_at = -1
    for k in range(iterations):
        a_k = a / (k + 1 + big_a) ** alpha
        c_k = c / (k + 1) ** gamma

        if method == METHOD_FDSA:
            g = np.empty(p)
            noise = gen.standard_normal(2 * p) if sigma > 0.0 else None
            for i in range(p):
                ti = theta[i]
                theta[i] = ti + c_k
                yp = loss.value(theta)
                theta[i] = ti - c_k
                ym = loss.value(theta)
                theta[i] = ti
                if noise is not None:
                    yp += sigma * noise[2 * i]
                    ym += sigma * noise[2 * i + 1]
                g[i] = (yp - ym) / (2.0 * c_k)
            n_evals += 2 * p
        else:
            delta = _draw_perturbation(dist_code, ushape_exp, ushape_cmax, p, gen)
            if method == METHOD_SPSA and np.any(delta == 0.0):
                raise GfsaError("zero perturbation component in a difference-family draw")
            yp = loss.value(theta + c_k * delta)
            ym = loss.value(theta - c_k * delta)
            if sigma > 0.0:
                noise = gen.standard_normal(2)
                yp += sigma * noise[0]
                ym += sigma * noise[1]
            n_evals += 2
            dq = (yp - ym) / (2.0 * c_k)
            g = dq / delta if method == METHOD_SPSA else dq * delta

        theta = theta - a_k * g

        if iterates_out is not None:
            iterates_out[k + 1] = theta
        nsq = float(theta @ theta)
        if not np.isfinite(nsq) or nsq > bound2:
            diverged_at = k
            break
        if err_ref is not None and window > 0 and (k + 1) > iterations - window:
            d = theta - err_ref
            err_out[(k + 1) - (iterations - window) - 1] = d @ d

    theta_out[:] = theta
    return diverged_at, n_evals
