"""Backend speed comparison on a representative workload.

Times the same seeded battery (ill-conditioned quartic, two-measurement
estimator) on the pure-python runner and, when built, the compiled kernel.
Both consume identical random draws, so the timing difference is pure
execution overhead.
"""

from __future__ import annotations

import time

import numpy as np

from . import _backend, _pykernel
from .core import RngStream
from .losses import SkewedQuartic, NoiseModel


def _time_backend(use_compiled: bool, p: int, iterations: int, trials: int) -> float:
    loss = SkewedQuartic(p, NoiseModel(sigma2=0.01))
    theta0 = np.ones(p)
    theta_out = np.empty(p)
    start = time.perf_counter()
    for trial in range(trials):
        gen = RngStream(1234, trial).generator
        args = (
            0.01**0.5,
            _pykernel.METHOD_SPSA,
            _pykernel.DIST_BERNOULLI,
            0.0,
            0.0,
            theta0,
            iterations,
            0.12, 10.0, 0.606, 0.8, 0.101,
        )
        if use_compiled:
            code, vec, mat, s1, s2, s3 = loss.kernel_args()
            _backend.compiled_kernel.run_trajectory(
                code, vec, mat, s1, s2, s3, *args,
                gen.bit_generator, 1e6, None, None, None, theta_out,
            )
        else:
            _pykernel.run_trajectory(
                loss, *args, gen, 1e6, None, None, None, theta_out,
            )
    return time.perf_counter() - start


def compare_backends(p: int = 30, iterations: int = 4000, trials: int = 5) -> list[dict]:
    """Run the workload on every available backend; returns timing rows."""
    rows = [{"backend": "python", "seconds": _time_backend(False, p, iterations, trials)}]
    if _backend.HAVE_COMPILED:
        rows.append({"backend": "cython", "seconds": _time_backend(True, p, iterations, trials)})
    base = rows[0]["seconds"]
    for row in rows:
        row["iterations_per_second"] = iterations * trials / row["seconds"]
        row["speedup"] = base / row["seconds"]
    return rows
