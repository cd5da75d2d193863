"""Benchmark loss functions with analytic derivative structure.

Four compiled-in kinds (quadratic form, skewed quartic, exp-norm, shifted
Ackley) plus a host-language callback seam (:class:`CustomLoss`). Analytic
gradients/Hessians/third-derivative slices are provided wherever the theory
engine needs them; the shifted Ackley is not three-times differentiable at
its minimizer, so its higher derivatives fall back to finite differences
away from that point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ConfigError, GfsaError, NoiseModel, RngStream, as_theta


class DerivativeUnavailable(GfsaError):
    """The loss does not expose the requested derivative."""


@dataclass(frozen=True)
class DerivativeBundle:
    """Derivatives at a point: gradient, Hessian, and third-derivative slices.

    third_diag[l]  = d^3 L / d theta_l^3
    third_cross[l] = sum over i != l of d^3 L / d theta_i^2 d theta_l
    """

    gradient: np.ndarray
    hessian: np.ndarray
    third_diag: np.ndarray
    third_cross: np.ndarray


class Loss:
    """Base class: a p-dimensional loss with an attached noise model."""

    #: kernel codes understood by the trajectory backends
    KERNEL_NONE = -1
    KERNEL_QUADRATIC = 0
    KERNEL_SKEWED_QUARTIC = 1
    KERNEL_EXPNORM = 2
    KERNEL_ACKLEY = 3

    kind = "base"

    def __init__(self, p: int, noise: NoiseModel | None = None) -> None:
        if p < 1:
            raise ConfigError(f"dimension must be >= 1, got {p}")
        self.p = int(p)
        self.noise = noise if noise is not None else NoiseModel.off()
        self._minimizer: tuple[np.ndarray, float] | None = None

    # -- evaluation ---------------------------------------------------------

    def value(self, theta: np.ndarray) -> float:
        """Noise-free loss value."""
        raise NotImplementedError

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Noise-free values for an (n, p) batch of points."""
        return np.array([self.value(t) for t in thetas])

    def evaluate(self, theta, noisy: bool = False, rng: RngStream | None = None) -> float:
        """Loss value plus one fresh noise draw when ``noisy``."""
        theta = as_theta(theta, self.p)
        y = self.value(theta)
        if noisy and self.noise.active:
            if rng is None:
                raise ConfigError("noisy evaluation requires an RngStream")
            y += self.noise.draw(rng)
        return float(y)

    # -- derivatives --------------------------------------------------------

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        raise DerivativeUnavailable(f"{self.kind} loss has no analytic gradient")

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        raise DerivativeUnavailable(f"{self.kind} loss has no analytic Hessian")

    def third_diag(self, theta: np.ndarray) -> np.ndarray:
        raise DerivativeUnavailable(f"{self.kind} loss has no third derivatives")

    def third_cross(self, theta: np.ndarray) -> np.ndarray:
        raise DerivativeUnavailable(f"{self.kind} loss has no third derivatives")

    def derivatives(self, theta) -> DerivativeBundle:
        """Gradient, Hessian, and third-derivative slices at ``theta``."""
        theta = as_theta(theta, self.p)
        return DerivativeBundle(
            gradient=self.gradient(theta),
            hessian=self.hessian(theta),
            third_diag=self.third_diag(theta),
            third_cross=self.third_cross(theta),
        )

    # -- minimizer ----------------------------------------------------------

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def minimizer(self) -> tuple[np.ndarray, float]:
        """Return (theta_star, L_star); computed once and cached."""
        if self._minimizer is None:
            theta_star, l_star = self._solve_minimizer()
            self._minimizer = (theta_star, float(l_star))
        return self._minimizer

    @property
    def theta_star(self) -> np.ndarray:
        return self.minimizer()[0]

    @property
    def l_star(self) -> float:
        return self.minimizer()[1]

    # -- backend plumbing ----------------------------------------------------

    def kernel_args(self) -> tuple[int, np.ndarray, np.ndarray, float, float, float]:
        """(code, vec, mat, s1, s2, s3) encoding for the trajectory kernels."""
        raise DerivativeUnavailable(
            f"{self.kind} loss is not kernel-encodable; the pure-python runner is used"
        )

    def config_string(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} p={self.p}>"


_DUMMY_VEC = np.zeros(1)
_DUMMY_MAT = np.zeros((1, 1))


class Quadratic(Loss):
    """L(theta) = theta^T H theta with H symmetric positive definite."""

    kind = "quadratic"

    def __init__(self, h: np.ndarray, noise: NoiseModel | None = None) -> None:
        h = np.asarray(h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ConfigError(f"H must be a square matrix, got shape {h.shape}")
        if not np.allclose(h, h.T, rtol=0, atol=1e-12):
            raise ConfigError("H must be symmetric")
        if np.linalg.eigvalsh(h)[0] <= 0:
            raise ConfigError("H must be positive definite")
        super().__init__(h.shape[0], noise)
        self.h = np.ascontiguousarray(h)

    @classmethod
    def identity(cls, p: int, noise: NoiseModel | None = None) -> "Quadratic":
        return cls(np.eye(p), noise)

    def value(self, theta: np.ndarray) -> float:
        return float(theta @ self.h @ theta)

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        return np.einsum("ni,ij,nj->n", thetas, self.h, thetas)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return 2.0 * self.h @ theta

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        return 2.0 * self.h

    def third_diag(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros(self.p)

    def third_cross(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros(self.p)

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        return np.zeros(self.p), 0.0

    def kernel_args(self):
        return self.KERNEL_QUADRATIC, _DUMMY_VEC, self.h, 0.0, 0.0, 0.0

    def config_string(self) -> str:
        return f"quadratic:p={self.p}"


class SkewedQuartic(Loss):
    """Ill-conditioned quartic: s = B theta with B = upper-triangular ones / p,
    L = sum(s^2) + 0.1 sum(s^3) + 0.01 sum(s^4).

    The cubic term makes the gradient estimators biased at order c^2 with
    nonzero cross third derivatives, which is what the asymptotic analysis
    exercises.
    """

    kind = "skewed_quartic"

    def __init__(self, p: int, noise: NoiseModel | None = None) -> None:
        super().__init__(p, noise)
        self.b = np.triu(np.ones((p, p))) / p

    def _s(self, theta: np.ndarray) -> np.ndarray:
        # B theta without the matmul: s_i = (1/p) * sum_{j >= i} theta_j
        return np.cumsum(theta[::-1])[::-1] / self.p

    def value(self, theta: np.ndarray) -> float:
        s = self._s(theta)
        return float((s @ s) + 0.1 * np.sum(s**3) + 0.01 * np.sum(s**4))

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        s = np.cumsum(thetas[:, ::-1], axis=1)[:, ::-1] / self.p
        return (s * s).sum(axis=1) + 0.1 * (s**3).sum(axis=1) + 0.01 * (s**4).sum(axis=1)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        s = self._s(theta)
        return self.b.T @ (2.0 * s + 0.3 * s**2 + 0.04 * s**3)

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        s = self._s(theta)
        w = 2.0 + 0.6 * s + 0.12 * s**2
        return self.b.T @ (w[:, None] * self.b)

    def third_diag(self, theta: np.ndarray) -> np.ndarray:
        w = self._third_weights(theta)
        return np.einsum("i,il->l", w, self.b**3)

    def third_cross(self, theta: np.ndarray) -> np.ndarray:
        # sum_{j != l} of sum_i w_i B_ij^2 B_il
        w = self._third_weights(theta)
        b2_row = (self.b**2).sum(axis=1)
        total = np.einsum("i,i,il->l", w, b2_row, self.b)
        return total - self.third_diag(theta)

    def _third_weights(self, theta: np.ndarray) -> np.ndarray:
        return 0.6 + 0.24 * self._s(theta)

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        # Per component of s: s^2 + 0.1 s^3 + 0.01 s^4 >= 0 with the unique
        # root at s = 0, so theta* = 0 exactly.
        return np.zeros(self.p), 0.0

    def kernel_args(self):
        return self.KERNEL_SKEWED_QUARTIC, _DUMMY_VEC, _DUMMY_MAT, 0.0, 0.0, 0.0

    def config_string(self) -> str:
        return f"skewed_quartic:p={self.p}"


class ExpNorm(Loss):
    """L(theta) = ||theta||^2 + sum_i exp(theta_i / p).

    Separable and strictly convex with no cross third derivatives; the
    minimizer is computed per component by bisection on the stationarity
    condition 2t + exp(t/p)/p = 0.
    """

    kind = "expnorm"

    def __init__(self, p: int, noise: NoiseModel | None = None) -> None:
        super().__init__(p, noise)

    def value(self, theta: np.ndarray) -> float:
        return float(theta @ theta + np.sum(np.exp(theta / self.p)))

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        return (thetas * thetas).sum(axis=1) + np.exp(thetas / self.p).sum(axis=1)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        return 2.0 * theta + np.exp(theta / self.p) / self.p

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        return np.diag(2.0 + np.exp(theta / self.p) / self.p**2)

    def third_diag(self, theta: np.ndarray) -> np.ndarray:
        return np.exp(theta / self.p) / self.p**3

    def third_cross(self, theta: np.ndarray) -> np.ndarray:
        return np.zeros(self.p)

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        # All components share the same scalar stationarity equation.
        t = _bisect(lambda t: 2.0 * t + math.exp(t / self.p) / self.p, -1.0, 0.0)
        theta_star = np.full(self.p, t)
        return theta_star, self.value(theta_star)

    def kernel_args(self):
        return self.KERNEL_EXPNORM, _DUMMY_VEC, _DUMMY_MAT, 0.0, 0.0, 0.0

    def config_string(self) -> str:
        return f"expnorm:p={self.p}"


class ShiftedAckley(Loss):
    """Ackley's multimodal benchmark, translated so the minimum sits at ``shift``.

    L(u) = -a exp(-b sqrt(mean(u^2))) - exp(mean(cos(c u))) + a + e with
    u = theta - shift; L(shift) = 0. The surface has a cone point at the
    minimizer: the gradient is discontinuous there (we return 0 by
    convention) and second/third derivatives do not exist at that point, so
    they are approximated by central finite differences and are only
    meaningful away from the minimizer.
    """

    kind = "ackley"

    def __init__(
        self,
        p: int,
        a: float = 20.0,
        b: float = 0.2,
        c: float = 2.0 * math.pi,
        shift=1.0,
        noise: NoiseModel | None = None,
    ) -> None:
        super().__init__(p, noise)
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self.shift = as_theta(shift, p)

    def value(self, theta: np.ndarray) -> float:
        u = theta - self.shift
        r = math.sqrt(float(u @ u) / self.p)
        m = float(np.mean(np.cos(self.c * u)))
        return -self.a * math.exp(-self.b * r) - math.exp(m) + self.a + math.e

    def value_batch(self, thetas: np.ndarray) -> np.ndarray:
        u = thetas - self.shift
        r = np.sqrt((u * u).mean(axis=1))
        m = np.cos(self.c * u).mean(axis=1)
        return -self.a * np.exp(-self.b * r) - np.exp(m) + self.a + math.e

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        u = theta - self.shift
        r = math.sqrt(float(u @ u) / self.p)
        m = float(np.mean(np.cos(self.c * u)))
        osc = (self.c / self.p) * math.exp(m) * np.sin(self.c * u)
        if r == 0.0:
            return osc  # cone point: radial part defined as 0
        radial = (self.a * self.b / (self.p * r)) * math.exp(-self.b * r) * u
        return radial + osc

    def hessian(self, theta: np.ndarray) -> np.ndarray:
        self._reject_cusp(theta, "Hessian")
        return _fd_hessian(self.value, theta)

    def third_diag(self, theta: np.ndarray) -> np.ndarray:
        self._reject_cusp(theta, "third derivatives")
        return _fd_third(self.value, theta)[0]

    def third_cross(self, theta: np.ndarray) -> np.ndarray:
        self._reject_cusp(theta, "third derivatives")
        return _fd_third(self.value, theta)[1]

    def _reject_cusp(self, theta: np.ndarray, what: str) -> None:
        if np.array_equal(theta, self.shift):
            raise DerivativeUnavailable(
                f"ackley {what} do not exist at the cone point (the minimizer)"
            )

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        return self.shift.copy(), 0.0

    def kernel_args(self):
        return self.KERNEL_ACKLEY, self.shift, _DUMMY_MAT, self.a, self.b, self.c

    def config_string(self) -> str:
        shift = self.shift
        if np.all(shift == shift[0]):
            return f"ackley:p={self.p},shift={shift[0]:g}"
        return f"ackley:p={self.p},shift=<vector>"


class CustomLoss(Loss):
    """Callback seam: wrap an arbitrary python callable as a loss.

    Only evaluation is supported (no analytic derivatives, no compiled
    kernel); trajectory runs on a custom loss always use the pure-python
    backend. ``theta_star`` may be supplied when known so error metrics
    work.
    """

    kind = "custom"

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        p: int,
        noise: NoiseModel | None = None,
        theta_star=None,
        l_star: float | None = None,
    ) -> None:
        super().__init__(p, noise)
        self.fn = fn
        if theta_star is not None:
            star = as_theta(theta_star, p)
            self._minimizer = (star, float(l_star) if l_star is not None else float(fn(star)))

    def value(self, theta: np.ndarray) -> float:
        return float(self.fn(theta))

    def _solve_minimizer(self) -> tuple[np.ndarray, float]:
        raise ConfigError("custom loss has no known minimizer; pass theta_star explicitly")

    def config_string(self) -> str:
        return f"custom:p={self.p}"


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-15) -> float:
    """Plain bisection to near machine precision; f(lo), f(hi) must bracket a root."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise GfsaError(f"bisection interval [{lo}, {hi}] does not bracket a root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0 or (hi - lo) < tol * max(1.0, abs(mid)):
            return mid
        if flo * fmid < 0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def _fd_hessian(f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    p = theta.size
    out = np.empty((p, p))
    f0 = f(theta)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        out[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h**2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = h
            val = (
                f(theta + ei + ej) - f(theta + ei - ej) - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * h**2)
            out[i, j] = out[j, i] = val
    return out


def _fd_third(
    f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-3
) -> tuple[np.ndarray, np.ndarray]:
    """Central finite differences for the two third-derivative slices."""
    p = theta.size
    diag = np.empty(p)
    cross = np.zeros(p)
    for l in range(p):
        el = np.zeros(p)
        el[l] = h
        diag[l] = (f(theta + 2 * el) - 2 * f(theta + el) + 2 * f(theta - el) - f(theta - 2 * el)) / (
            2.0 * h**3
        )
    for l in range(p):
        el = np.zeros(p)
        el[l] = h
        for i in range(p):
            if i == l:
                continue
            ei = np.zeros(p)
            ei[i] = h
            # d^3 L / d theta_i^2 d theta_l by differencing the i-diagonal second difference
            plus = (f(theta + ei + el) - 2 * f(theta + el) + f(theta - ei + el)) / h**2
            minus = (f(theta + ei - el) - 2 * f(theta - el) + f(theta - ei - el)) / h**2
            cross[l] += (plus - minus) / (2.0 * h)
    return diag, cross


_LOSS_KINDS = ("skewed_quartic", "expnorm", "ackley", "quadratic")


def parse_loss(spec: str, noise: NoiseModel | None = None) -> Loss:
    """Build a loss from a config string.

    Examples: "skewed_quartic:p=10", "expnorm:p=30",
    "ackley:p=30,shift=1.0", "quadratic:p=5".
    """
    name, _, argstr = spec.partition(":")
    name = name.strip().lower()
    if name not in _LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {name!r} (expected one of {_LOSS_KINDS})")
    kwargs: dict[str, float] = {}
    if argstr:
        for item in argstr.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ConfigError(f"malformed loss argument {item!r} in {spec!r}")
            try:
                kwargs[key.strip()] = float(val)
            except ValueError:
                raise ConfigError(f"non-numeric value in loss spec {spec!r}") from None
    if "p" not in kwargs:
        raise ConfigError(f"loss spec {spec!r} must set p")
    p = kwargs.pop("p")
    if p != int(p) or p < 1:
        raise ConfigError(f"loss dimension must be a positive integer, got {p}")
    p = int(p)
    if name == "skewed_quartic":
        _reject_extra(spec, kwargs)
        return SkewedQuartic(p, noise)
    if name == "expnorm":
        _reject_extra(spec, kwargs)
        return ExpNorm(p, noise)
    if name == "quadratic":
        _reject_extra(spec, kwargs)
        return Quadratic.identity(p, noise)
    # ackley
    allowed = {"a", "b", "c", "shift"}
    extra = set(kwargs) - allowed
    if extra:
        raise ConfigError(f"unknown ackley argument(s) {sorted(extra)} in {spec!r}")
    return ShiftedAckley(
        p,
        a=kwargs.get("a", 20.0),
        b=kwargs.get("b", 0.2),
        c=kwargs.get("c", 2.0 * math.pi),
        shift=kwargs.get("shift", 1.0),
        noise=noise,
    )


def _reject_extra(spec: str, kwargs: dict) -> None:
    if kwargs:
        raise ConfigError(f"unknown argument(s) {sorted(kwargs)} in loss spec {spec!r}")
