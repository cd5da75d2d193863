# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory runner.

Consumes the identical random-variate sequence as ``_pykernel`` (uniforms via
the bit generator's next_double, normals via numpy's ziggurat sampler), so a
given (seed, stream) produces the same draws on either backend. Loss
evaluation is inlined for the four compiled-in loss kinds.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, exp, isfinite, pow, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()

# codes mirrored from _pykernel / losses
cdef enum:
    METHOD_SPSA = 0
    METHOD_RDSA = 1
    METHOD_FDSA = 2

cdef enum:
    DIST_BERNOULLI = 0
    DIST_USHAPE = 1
    DIST_GAUSSIAN = 2
    DIST_SPHERICAL = 3

cdef enum:
    LOSS_QUADRATIC = 0
    LOSS_SKEWED_QUARTIC = 1
    LOSS_EXPNORM = 2
    LOSS_ACKLEY = 3

cdef double EULER_E = 2.718281828459045235360287


cdef inline double _loss_value(
    int code,
    const double[::1] vec,
    const double[:, ::1] mat,
    double s1, double s2, double s3,
    const double[::1] theta,
    int p,
) noexcept nogil:
    cdef int i, j
    cdef double acc = 0.0, acc2 = 0.0, s, u, r, m, row
    if code == LOSS_QUADRATIC:
        for i in range(p):
            row = 0.0
            for j in range(p):
                row += mat[i, j] * theta[j]
            acc += theta[i] * row
        return acc
    if code == LOSS_SKEWED_QUARTIC:
        # s_i = (1/p) * suffix sum of theta; quadratic + cubic + quartic terms
        s = 0.0
        for i in range(p - 1, -1, -1):
            s += theta[i]
            u = s / p
            acc += u * u * (1.0 + 0.1 * u + 0.01 * u * u)
        return acc
    if code == LOSS_EXPNORM:
        for i in range(p):
            acc += theta[i] * theta[i] + exp(theta[i] / p)
        return acc
    # LOSS_ACKLEY: s1=a, s2=b, s3=c, vec=shift
    for i in range(p):
        u = theta[i] - vec[i]
        acc += u * u
        acc2 += cos(s3 * u)
    r = sqrt(acc / p)
    m = acc2 / p
    return -s1 * exp(-s2 * r) - exp(m) + s1 + EULER_E


cdef inline int _draw_perturbation(
    int dist_code, double ushape_exp, double ushape_cmax,
    double[::1] delta, int p, bitgen_t *rng,
) noexcept nogil:
    """Fill delta; returns 1 on a degenerate draw (exact zero), else 0."""
    cdef int i
    cdef double t, norm
    if dist_code == DIST_BERNOULLI:
        for i in range(p):
            delta[i] = 1.0 if rng.next_double(rng.state) < 0.5 else -1.0
        return 0
    if dist_code == DIST_USHAPE:
        for i in range(p):
            t = 2.0 * rng.next_double(rng.state) - 1.0
            if t > 0.0:
                delta[i] = ushape_cmax * pow(t, ushape_exp)
            elif t < 0.0:
                delta[i] = -ushape_cmax * pow(-t, ushape_exp)
            else:
                delta[i] = 0.0
                return 1
        return 0
    if dist_code == DIST_GAUSSIAN:
        for i in range(p):
            delta[i] = random_standard_normal(rng)
        return 0
    # DIST_SPHERICAL
    norm = 0.0
    for i in range(p):
        delta[i] = random_standard_normal(rng)
        norm += delta[i] * delta[i]
    norm = sqrt(norm)
    if norm == 0.0:
        return 1
    t = sqrt(<double> p) / norm
    for i in range(p):
        delta[i] *= t
    return 0


def run_trajectory(
    int loss_code,
    const double[::1] loss_vec,
    const double[:, ::1] loss_mat,
    double loss_s1, double loss_s2, double loss_s3,
    double sigma,
    int method,
    int dist_code,
    double ushape_exp,
    double ushape_cmax,
    const double[::1] theta0,
    int iterations,
    double a, double big_a, double alpha, double c, double gamma,
    object bit_generator,
    double divergence_bound,
    iterates_out,
    err_ref,
    err_out,
    double[::1] theta_out,
):
    """Compiled counterpart of ``_pykernel.run_trajectory`` (same contract)."""
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )
    cdef int p = theta0.shape[0]
    cdef bint record_full = iterates_out is not None
    cdef int window = 0
    cdef double[:, ::1] iterates_mv = None
    cdef double[::1] err_mv = None
    cdef double[::1] ref_mv = None
    if record_full:
        iterates_out.fill(np.nan)
        iterates_mv = iterates_out
    if err_out is not None and err_ref is not None:
        err_out.fill(np.nan)
        err_mv = err_out
        ref_mv = err_ref
        window = err_mv.shape[0]

    theta_arr = np.array(theta0, dtype=np.float64)
    work_arr = np.empty(p, dtype=np.float64)
    delta_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] theta = theta_arr
    cdef double[::1] work = work_arr
    cdef double[::1] delta = delta_arr

    cdef double bound2 = divergence_bound * divergence_bound
    cdef long n_evals = 0
    cdef int diverged_at = -1
    cdef bint zero_draw = False
    cdef int k, i
    cdef double a_k, c_k, yp, ym, dq, ti, nsq, d

    if record_full:
        for i in range(p):
            iterates_mv[0, i] = theta[i]

    with nogil:
        for k in range(iterations):
            a_k = a / pow(k + 1 + big_a, alpha)
            c_k = c / pow(k + 1, gamma)

            if method == METHOD_FDSA:
                for i in range(p):
                    ti = theta[i]
                    theta[i] = ti + c_k
                    yp = _loss_value(loss_code, loss_vec, loss_mat,
                                     loss_s1, loss_s2, loss_s3, theta, p)
                    theta[i] = ti - c_k
                    ym = _loss_value(loss_code, loss_vec, loss_mat,
                                     loss_s1, loss_s2, loss_s3, theta, p)
                    theta[i] = ti
                    if sigma > 0.0:
                        yp += sigma * random_standard_normal(rng)
                        ym += sigma * random_standard_normal(rng)
                    work[i] = (yp - ym) / (2.0 * c_k)
                n_evals += 2 * p
                for i in range(p):
                    theta[i] -= a_k * work[i]
            else:
                if _draw_perturbation(dist_code, ushape_exp, ushape_cmax,
                                      delta, p, rng):
                    zero_draw = True
                    break
                for i in range(p):
                    work[i] = theta[i] + c_k * delta[i]
                yp = _loss_value(loss_code, loss_vec, loss_mat,
                                 loss_s1, loss_s2, loss_s3, work, p)
                for i in range(p):
                    work[i] = theta[i] - c_k * delta[i]
                ym = _loss_value(loss_code, loss_vec, loss_mat,
                                 loss_s1, loss_s2, loss_s3, work, p)
                if sigma > 0.0:
                    yp += sigma * random_standard_normal(rng)
                    ym += sigma * random_standard_normal(rng)
                n_evals += 2
                dq = (yp - ym) / (2.0 * c_k)
                if method == METHOD_SPSA:
                    for i in range(p):
                        theta[i] -= a_k * dq / delta[i]
                else:
                    for i in range(p):
                        theta[i] -= a_k * dq * delta[i]

            if record_full:
                for i in range(p):
                    iterates_mv[k + 1, i] = theta[i]
            nsq = 0.0
            for i in range(p):
                nsq += theta[i] * theta[i]
            if not isfinite(nsq) or nsq > bound2:
                diverged_at = k
                break
            if window > 0 and (k + 1) > iterations - window:
                d = 0.0
                for i in range(p):
                    d += (theta[i] - ref_mv[i]) * (theta[i] - ref_mv[i])
                err_mv[(k + 1) - (iterations - window) - 1] = d

    if zero_draw:
        from .core import GfsaError
        if dist_code == DIST_SPHERICAL:
            raise GfsaError("degenerate zero draw while sampling the sphere")
        raise GfsaError("zero perturbation component in a difference-family draw")

    for i in range(p):
        theta_out[i] = theta[i]
    return diverged_at, n_evals
