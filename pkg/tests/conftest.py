"""Shared test helpers: independent finite-difference oracles and stream makers."""

from __future__ import annotations

import numpy as np
import pytest

from gfsa import RngStream


def fd_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient, independent of any production derivative code."""
    p = theta.size
    out = np.empty(p)
    for i in range(p):
        e = np.zeros(p)
        e[i] = h
        out[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return out


def fd_hessian(f, theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    p = theta.size
    out = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        for j in range(p):
            ej = np.zeros(p)
            ej[j] = h
            out[i, j] = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * h * h)
    return out


def fd_third_tensor(f, theta: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Full third-derivative tensor by differencing fd_hessian (slow; small p only)."""
    p = theta.size
    out = np.empty((p, p, p))
    for k in range(p):
        ek = np.zeros(p)
        ek[k] = h
        out[:, :, k] = (fd_hessian(f, theta + ek, h) - fd_hessian(f, theta - ek, h)) / (2.0 * h)
    return out


@pytest.fixture
def make_rng():
    def _make(seed: int = 12345, stream_id: int = 0) -> RngStream:
        return RngStream(seed, stream_id)

    return _make
