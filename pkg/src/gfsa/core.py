"""Shared numeric primitives: parameter vectors, gain schedules, noise, RNG streams.

Parameter vectors are plain 1-D float64 numpy arrays throughout the package;
``as_theta`` is the single validation choke point (fixed length, finite
entries). Everything in this module is immutable after construction except
``RngStream``, which is a single-owner stateful stream: never share one
instance across threads, split by stream id instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GfsaError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GfsaError):
    """Invalid configuration value or combination."""


def as_theta(values, p: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a finite 1-D float64 vector, optionally of length ``p``.

    A scalar is broadcast to a constant vector when ``p`` is given.
    """
    if np.isscalar(values) or (isinstance(values, np.ndarray) and values.ndim == 0):
        if p is None:
            raise ConfigError("scalar parameter vector needs an explicit dimension")
        theta = np.full(p, float(values))
    else:
        theta = np.asarray(values, dtype=float).copy()
    if theta.ndim != 1 or theta.size < 1:
        raise ConfigError(f"parameter vector must be 1-D and non-empty, got shape {theta.shape}")
    if p is not None and theta.size != p:
        raise ConfigError(f"parameter vector has length {theta.size}, expected {p}")
    if not np.all(np.isfinite(theta)):
        raise ConfigError("parameter vector contains non-finite entries")
    return theta


@dataclass(frozen=True)
class GainSequence:
    """Power-law gain schedule a_k = a/(k+1+A)^alpha, c_k = c/(k+1)^gamma.

    The stability offset A applies to the update gain only, never to the
    perturbation gain.
    """

    a: float
    c: float
    alpha: float = 0.602
    gamma: float = 0.101
    A: float = 0.0

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ConfigError(f"gain a must be > 0, got {self.a}")
        if not self.c > 0:
            raise ConfigError(f"gain c must be > 0, got {self.c}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.A < 0:
            raise ConfigError(f"offset A must be >= 0, got {self.A}")

    def gain_at(self, k: int) -> tuple[float, float]:
        """Return (a_k, c_k) for iteration index k >= 0."""
        if k < 0:
            raise ConfigError(f"iteration index must be >= 0, got {k}")
        return (
            self.a / (k + 1 + self.A) ** self.alpha,
            self.c / (k + 1) ** self.gamma,
        )

    def validate_a1(self) -> tuple[bool, str]:
        """Sufficiency test for the summability conditions on (a_k, c_k).

        For this power-law family, sum(a_k) diverges iff alpha <= 1 and
        sum((a_k/c_k)^2) converges iff 2*(alpha - gamma) > 1. Returns
        (ok, diagnostic); the diagnostic names the violated clause.
        """
        if not self.alpha > 0.5:
            return False, (
                f"alpha={self.alpha} <= 0.5: sum a_k^2/c_k^2 divergence risk"
            )
        if not self.alpha - self.gamma > 0.5:
            return False, (
                f"alpha-gamma={self.alpha - self.gamma:.6g} <= 0.5: "
                "sum a_k^2/c_k^2 divergence risk"
            )
        return True, "ok"

    @property
    def satisfies_a1(self) -> bool:
        return self.validate_a1()[0]


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise: Gaussian with variance sigma2, or none.

    A zero-variance model never consumes random draws, so noise-free runs
    are draw-for-draw identical whether configured as 'none' or as Gaussian
    with sigma2 = 0.
    """

    sigma2: float = 0.0
    kind: str = "gaussian"

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "none"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.kind == "none" and self.sigma2 != 0.0:
            raise ConfigError("noise kind 'none' requires sigma2 = 0")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(sigma2=0.0, kind="none")

    @property
    def sigma(self) -> float:
        """Noise standard deviation; 0 means no draws are consumed."""
        return float(np.sqrt(self.sigma2))

    @property
    def active(self) -> bool:
        return self.kind == "gaussian" and self.sigma2 > 0.0

    def draw(self, rng: "RngStream", n: int | None = None):
        """Draw noise sample(s); returns 0.0 / zeros when inactive."""
        if not self.active:
            return 0.0 if n is None else np.zeros(n)
        if n is None:
            return self.sigma * rng.generator.standard_normal()
        return self.sigma * rng.generator.standard_normal(n)


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Two instances constructed with equal keys reproduce identical draw
    sequences; distinct stream ids give statistically independent streams.
    The underlying generator is stateful: a stream has a single owner, and
    parallel work must split streams with :meth:`spawn`.
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence((self.seed, self.stream_id))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream_id: int) -> "RngStream":
        """Fresh independent stream under the same seed."""
        return RngStream(self.seed, stream_id)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
