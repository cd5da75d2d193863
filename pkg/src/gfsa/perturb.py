"""Perturbation distributions for the two-measurement gradient estimators.

Difference-family ("sp") perturbations divide the measurement difference
componentwise and therefore need a finite inverse second moment; direction-
family ("rd") perturbations multiply it and need unit second moments. Each
distribution carries exact analytic moments used by the theory engine.

Draw protocol (shared verbatim with the compiled kernel, do not reorder):
  bernoulli  p uniforms;  +1 when u < 0.5, else -1
  ushape     p uniforms;  t = 2u-1, x = cmax * sign(t) * |t|^(1/(d+1))
  gaussian   p standard normals
  spherical  p standard normals, rescaled to squared norm exactly p
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, GfsaError, RngStream

SP_KINDS = ("bernoulli", "ushape")
RD_KINDS = ("gaussian", "spherical")


class PerturbationError(GfsaError):
    """Invalid perturbation distribution for the requested family."""


@dataclass(frozen=True)
class MomentSet:
    """Exact moments; fields not meaningful for the family are None.

    phi = E[x^4] and upsilon = E[x_i^2 x_j^2] (i != j) for direction-family
    members; xi2 = E[x^2] and rho2 = E[x^-2] for difference-family members.
    """

    phi: float | None = None
    upsilon: float | None = None
    xi2: float | None = None
    rho2: float | None = None


@dataclass(frozen=True)
class PerturbationDist:
    """A perturbation law tagged with the estimator family it serves."""

    kind: str
    family: str
    d: int = 10
    cmax: float = 1.17

    def __post_init__(self) -> None:
        if self.family not in ("sp", "rd"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.kind not in SP_KINDS + RD_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if self.family == "sp" and self.kind in RD_KINDS:
            raise PerturbationError(
                f"{self.kind} has infinite inverse second moment: "
                "invalid simultaneous-perturbation distribution"
            )
        if self.family == "rd" and self.kind in SP_KINDS:
            raise PerturbationError(
                f"{self.kind} does not have unit second moment: "
                "not a supported random-direction distribution"
            )
        if self.kind == "ushape":
            if self.d < 2 or self.d % 2 != 0:
                raise ConfigError(f"ushape order d must be an even integer >= 2, got {self.d}")
            if not self.cmax > 0:
                raise ConfigError(f"ushape halfwidth must be > 0, got {self.cmax}")

    def label(self) -> str:
        if self.kind == "ushape":
            return f"ushape(d={self.d},cmax={self.cmax:g})"
        return self.kind


def bernoulli() -> PerturbationDist:
    """Symmetric +-1 perturbation (difference family)."""
    return PerturbationDist("bernoulli", "sp")


def ushape(d: int = 10, cmax: float = 1.17) -> PerturbationDist:
    """Density (d+1)|x|^d / (2 cmax^(d+1)) on [-cmax, cmax] (difference family).

    Larger d concentrates mass at +-cmax, approaching the Bernoulli law.
    """
    return PerturbationDist("ushape", "sp", d=d, cmax=cmax)


def gaussian() -> PerturbationDist:
    """I.i.d. standard normal directions (direction family)."""
    return PerturbationDist("gaussian", "rd")


def spherical() -> PerturbationDist:
    """Uniform on the sphere of squared radius p (direction family)."""
    return PerturbationDist("spherical", "rd")


def parse_dist(spec: str) -> PerturbationDist:
    """Parse a distribution config string.

    Accepts "bernoulli", "gaussian", "spherical", "ushape" and
    "ushape:d=10,cmax=1.17".
    """
    name, _, argstr = spec.partition(":")
    name = name.strip().lower()
    kwargs: dict[str, float] = {}
    if argstr:
        for item in argstr.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if not val:
                raise ConfigError(f"malformed distribution argument {item!r} in {spec!r}")
            try:
                kwargs[key] = float(val)
            except ValueError:
                raise ConfigError(f"non-numeric value in distribution spec {spec!r}") from None
    if name == "bernoulli":
        _reject_args(name, kwargs)
        return bernoulli()
    if name == "gaussian":
        _reject_args(name, kwargs)
        return gaussian()
    if name == "spherical":
        _reject_args(name, kwargs)
        return spherical()
    if name == "ushape":
        extra = set(kwargs) - {"d", "cmax"}
        if extra:
            raise ConfigError(f"unknown ushape argument(s) {sorted(extra)} in {spec!r}")
        d = kwargs.get("d", 10.0)
        if d != int(d):
            raise ConfigError(f"ushape order d must be an integer, got {d}")
        return ushape(d=int(d), cmax=kwargs.get("cmax", 1.17))
    raise ConfigError(f"unknown perturbation distribution {name!r}")


def _reject_args(name: str, kwargs: dict) -> None:
    if kwargs:
        raise ConfigError(f"distribution {name!r} takes no arguments, got {sorted(kwargs)}")


def moments(dist: PerturbationDist, p: int) -> MomentSet:
    """Exact analytic moments of ``dist`` in dimension ``p``.

    The spherical moments depend on p; all others do not. For p = 1 the
    spherical upsilon is vacuous (no distinct index pair) but the p/(p+2)
    formula is still returned for uniformity.
    """
    if p < 1:
        raise ConfigError(f"dimension must be >= 1, got {p}")
    if dist.kind == "bernoulli":
        return MomentSet(xi2=1.0, rho2=1.0)
    if dist.kind == "ushape":
        d, cmax = dist.d, dist.cmax
        return MomentSet(
            xi2=(d + 1) / (d + 3) * cmax**2,
            rho2=(d + 1) / (d - 1) / cmax**2,
        )
    if dist.kind == "gaussian":
        return MomentSet(phi=3.0, upsilon=1.0)
    if dist.kind == "spherical":
        return MomentSet(phi=3.0 * p / (p + 2), upsilon=float(p) / (p + 2))
    raise ConfigError(f"unknown perturbation kind {dist.kind!r}")


def sample(dist: PerturbationDist, p: int, rng: RngStream) -> np.ndarray:
    """Draw one perturbation vector of dimension p."""
    return _draw(dist, p, None, rng.generator)


def sample_batch(dist: PerturbationDist, p: int, n: int, rng: RngStream) -> np.ndarray:
    """Draw n perturbation vectors as an (n, p) array.

    Row i equals the i-th successive :func:`sample` call on the same stream.
    """
    return _draw(dist, p, n, rng.generator)


def _draw(dist: PerturbationDist, p: int, n: int | None, gen: np.random.Generator) -> np.ndarray:
    if p < 1:
        raise ConfigError(f"dimension must be >= 1, got {p}")
    shape = p if n is None else (n, p)
    if dist.kind == "bernoulli":
        return np.where(gen.random(shape) < 0.5, 1.0, -1.0)
    if dist.kind == "ushape":
        t = 2.0 * gen.random(shape) - 1.0
        return dist.cmax * np.sign(t) * np.abs(t) ** (1.0 / (dist.d + 1))
    if dist.kind == "gaussian":
        return gen.standard_normal(shape)
    if dist.kind == "spherical":
        z = gen.standard_normal(shape)
        norms = np.linalg.norm(z, axis=-1, keepdims=n is not None)
        if np.any(norms == 0.0):
            raise GfsaError("degenerate zero draw while sampling the sphere")
        return z * (np.sqrt(p) / norms)
    raise ConfigError(f"unknown perturbation kind {dist.kind!r}")
