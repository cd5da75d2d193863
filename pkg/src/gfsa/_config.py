"""One JSON config schema shared by every CLI command.

Parsing is strict: unknown keys are rejected with their dotted path (and the
line where the key appears), so a typo never silently changes an experiment.
The same document can describe a battery run, a theory evaluation, a gain
grid search, and a z-study; each command reads the sections it needs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ConfigError, GainSequence, NoiseModel, as_theta
from .experiments import MethodDist, TrialBattery
from .losses import Loss, parse_loss
from .perturb import PerturbationDist, parse_dist

_TOP_KEYS = {
    "loss", "noise", "gains", "theta0", "iterations", "trials", "pairs",
    "seed", "curve_window", "divergence_bound", "mse_reference", "parallel",
    "out", "grid", "zstudy",
}
_NOISE_KEYS = {"kind", "sigma2"}
_GAINS_KEYS = {"a", "c", "alpha", "gamma", "A"}
_PAIR_KEYS = {"method", "dist"}
_GRID_KEYS = {
    "a_min", "a_max", "a_step", "c_min", "c_max", "c_step",
    "trials_per_point", "iterations", "pair",
}
_ZSTUDY_KEYS = {"p", "trials", "a_range"}


def load_config(path: str | Path) -> tuple[dict, str]:
    """Read and syntax-check a JSON config; returns (document, text)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc, text


def config_hash(doc: dict) -> str:
    """Stable hash of the canonical serialized config."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _key_line(text: str | None, key: str) -> str:
    if not text:
        return ""
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f" (line {lineno})"
    return ""


def _check_keys(section: dict, allowed: set[str], where: str, text: str | None) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        key = unknown[0]
        raise ConfigError(
            f"unknown config key {where}{key!r}{_key_line(text, key)}; "
            f"allowed keys: {sorted(allowed)}"
        )


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required config key {where}{key!r}")
    return section[key]


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    doc: dict
    hash: str
    loss: Loss
    noise: NoiseModel
    gains: GainSequence
    theta0: np.ndarray | None
    iterations: int
    n_trials: int
    pairs: tuple[MethodDist, ...]
    seed: int
    curve_window: int
    divergence_bound: float
    mse_reference: np.ndarray | None
    parallel: int
    out: str | None
    grid: dict | None
    zstudy: dict | None

    def battery(self) -> TrialBattery:
        if self.theta0 is None:
            raise ConfigError("missing required config key 'theta0'")
        return TrialBattery(
            loss=self.loss,
            pairs=self.pairs,
            gains=self.gains,
            theta0=self.theta0,
            iterations=self.iterations,
            n_trials=self.n_trials,
            base_seed=self.seed,
            curve_window=self.curve_window,
            divergence_bound=self.divergence_bound,
            mse_reference=self.mse_reference,
        )


def build_pair(method: str, dist_spec: str | None) -> MethodDist:
    """Build a (method, dist) pair, attaching the family implied by the method.

    The family check is what rejects e.g. a Gaussian perturbation for the
    difference-quotient estimator.
    """
    if method not in ("spsa", "rdsa", "fdsa"):
        raise ConfigError(f"unknown method {method!r}")
    if method == "fdsa":
        if dist_spec is not None:
            raise ConfigError("fdsa takes no perturbation distribution")
        return MethodDist("fdsa", None)
    if dist_spec is None:
        raise ConfigError(f"method {method!r} requires a 'dist' entry")
    parsed = parse_dist(dist_spec)
    family = "sp" if method == "spsa" else "rd"
    # re-tag with the family demanded by the method; invalid combinations
    # raise PerturbationError here, before any trajectory runs
    dist = PerturbationDist(parsed.kind, family, d=parsed.d, cmax=parsed.cmax)
    return MethodDist(method, dist)


def validate_config(doc: dict, text: str | None = None) -> ExperimentConfig:
    """Validate the shared schema and build typed objects."""
    _check_keys(doc, _TOP_KEYS, "", text)

    noise_doc = doc.get("noise", {"kind": "none", "sigma2": 0.0})
    if not isinstance(noise_doc, dict):
        raise ConfigError("'noise' must be an object")
    _check_keys(noise_doc, _NOISE_KEYS, "noise.", text)
    noise = NoiseModel(
        sigma2=_number(noise_doc.get("sigma2", 0.0), "noise.sigma2"),
        kind=noise_doc.get("kind", "gaussian"),
    )

    loss_spec = _require(doc, "loss", "")
    if not isinstance(loss_spec, str):
        raise ConfigError("'loss' must be a config string like 'expnorm:p=30'")
    loss = parse_loss(loss_spec, noise)

    gains_doc = _require(doc, "gains", "")
    if not isinstance(gains_doc, dict):
        raise ConfigError("'gains' must be an object")
    _check_keys(gains_doc, _GAINS_KEYS, "gains.", text)
    gains = GainSequence(
        a=_number(_require(gains_doc, "a", "gains."), "gains.a"),
        c=_number(_require(gains_doc, "c", "gains."), "gains.c"),
        alpha=_number(gains_doc.get("alpha", 0.602), "gains.alpha"),
        gamma=_number(gains_doc.get("gamma", 0.101), "gains.gamma"),
        A=_number(gains_doc.get("A", 0.0), "gains.A"),
    )

    theta0 = doc.get("theta0")
    if theta0 is not None:
        theta0 = as_theta(theta0, loss.p)

    pairs_doc = doc.get("pairs", [])
    if not isinstance(pairs_doc, list):
        raise ConfigError("'pairs' must be a list of {method, dist} objects")
    pairs = []
    for i, pair_doc in enumerate(pairs_doc):
        if not isinstance(pair_doc, dict):
            raise ConfigError(f"pairs[{i}] must be an object")
        _check_keys(pair_doc, _PAIR_KEYS, f"pairs[{i}].", text)
        pairs.append(build_pair(_require(pair_doc, "method", f"pairs[{i}]."), pair_doc.get("dist")))

    grid_doc = doc.get("grid")
    if grid_doc is not None:
        if not isinstance(grid_doc, dict):
            raise ConfigError("'grid' must be an object")
        _check_keys(grid_doc, _GRID_KEYS, "grid.", text)
        if "pair" in grid_doc:
            pair_doc = grid_doc["pair"]
            if not isinstance(pair_doc, dict):
                raise ConfigError("grid.pair must be an object")
            _check_keys(pair_doc, _PAIR_KEYS, "grid.pair.", text)

    zstudy_doc = doc.get("zstudy")
    if zstudy_doc is not None:
        if not isinstance(zstudy_doc, dict):
            raise ConfigError("'zstudy' must be an object")
        _check_keys(zstudy_doc, _ZSTUDY_KEYS, "zstudy.", text)

    mse_reference = doc.get("mse_reference")
    if mse_reference is not None:
        mse_reference = as_theta(mse_reference, loss.p)

    return ExperimentConfig(
        doc=doc,
        hash=config_hash(doc),
        loss=loss,
        noise=noise,
        gains=gains,
        theta0=theta0,
        iterations=_integer(doc.get("iterations", 1000), "iterations"),
        n_trials=_integer(doc.get("trials", 1), "trials"),
        pairs=tuple(pairs),
        seed=_integer(doc.get("seed", 0), "seed"),
        curve_window=_integer(doc.get("curve_window", 0), "curve_window"),
        divergence_bound=_number(doc.get("divergence_bound", 1e6), "divergence_bound"),
        mse_reference=mse_reference,
        parallel=_integer(doc.get("parallel", 1), "parallel"),
        out=doc.get("out"),
        grid=grid_doc,
        zstudy=zstudy_doc,
    )


def load_experiment(path: str | Path) -> ExperimentConfig:
    doc, text = load_config(path)
    return validate_config(doc, text)
