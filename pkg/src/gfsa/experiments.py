"""Monte Carlo trial batteries, MSE statistics, Welch tests, and gain grid search.

A battery runs n_trials independent trajectories per (method, distribution)
pair, each on its own derived random stream, and summarizes terminal squared
errors with a mean and a normal-approximation 95% confidence interval.
Reduction order is fixed by trial index, so reports are byte-stable under
any parallelism degree.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from ._backend import backend_name
from .core import ConfigError, GainSequence, RngStream, as_theta
from .estimators import run_sa
from .losses import Loss
from .perturb import PerturbationDist

_TRIAL_STREAM_STRIDE = 1 << 32  # stream ids: pair_index * stride + trial_index


@dataclass(frozen=True)
class MethodDist:
    """One estimator/perturbation combination to benchmark."""

    method: str
    dist: PerturbationDist | None = None

    def label(self) -> str:
        if self.dist is None:
            return self.method
        return f"{self.method}:{self.dist.label()}"


@dataclass(frozen=True)
class TrialBattery:
    """Definition of one Monte Carlo comparison experiment."""

    loss: Loss
    pairs: tuple[MethodDist, ...]
    gains: GainSequence
    theta0: np.ndarray
    iterations: int
    n_trials: int
    base_seed: int
    curve_window: int = 0
    divergence_bound: float = 1e6
    # optional alternate reference point for the error metric; the error to
    # the true minimizer is always reported alongside
    mse_reference: np.ndarray | None = None
    # base offset for derived stream ids (used by the grid search to keep
    # every grid point on disjoint streams)
    stream_offset: int = 0

    def __post_init__(self) -> None:
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not self.pairs:
            raise ConfigError("battery needs at least one (method, dist) pair")

    def reference_point(self) -> np.ndarray:
        if self.mse_reference is not None:
            return as_theta(self.mse_reference, self.loss.p)
        return self.loss.theta_star


@dataclass
class PairResult:
    """Per-(method, dist) battery summary."""

    label: str
    method: str
    dist_label: str | None
    mean_mse: float
    ci95: tuple[float, float]
    per_trial_mse: np.ndarray  # NaN at diverged trials
    diverged_trials: list[int]
    mean_mse_vs_minimizer: float
    curve: np.ndarray | None  # mean squared error per iterate, last W iterations

    @property
    def n_diverged(self) -> int:
        return len(self.diverged_trials)


@dataclass
class MseReport:
    """Full battery output: per-pair statistics plus pairwise Welch tests."""

    pairs: list[PairResult]
    welch: list[dict]
    theta_star: np.ndarray
    l_star: float
    reference_point: np.ndarray
    n_trials: int
    iterations: int
    base_seed: int
    backend: str
    curve_iterations: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def pair(self, label_prefix: str) -> PairResult:
        """Look up a pair result by label (exact or unique prefix)."""
        matches = [r for r in self.pairs if r.label == label_prefix]
        if not matches:
            matches = [r for r in self.pairs if r.label.startswith(label_prefix)]
        if len(matches) != 1:
            raise KeyError(f"pair {label_prefix!r} not found or ambiguous")
        return matches[0]


def _summary_stats(values: np.ndarray) -> tuple[float, tuple[float, float]]:
    mean = float(np.mean(values))
    if values.size > 1:
        half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(values.size)
    else:
        half = 0.0
    return mean, (mean - half, mean + half)


def _run_one_trial(battery: TrialBattery, pair_index: int, trial: int) -> dict:
    pair = battery.pairs[pair_index]
    rng = RngStream(
        battery.base_seed,
        battery.stream_offset + pair_index * _TRIAL_STREAM_STRIDE + trial,
    )
    traj = run_sa(
        battery.loss,
        battery.theta0,
        battery.gains,
        pair.method,
        pair.dist,
        battery.iterations,
        rng,
        record="final",
        divergence_bound=battery.divergence_bound,
        error_reference=battery.reference_point(),
        curve_window=battery.curve_window,
        raise_on_divergence=False,
    )
    return {
        "pair": pair_index,
        "trial": trial,
        "theta_final": traj.theta_final,
        "diverged_at": traj.diverged_at,
        "curve": traj.error_curve,
    }


def _star_args(args):
    return _run_one_trial(*args)


def run_battery(battery: TrialBattery, parallelism: int = 1) -> MseReport:
    """Execute every pair's trials and reduce to an :class:`MseReport`.

    Diverged trials are reported (never silently dropped) and excluded from
    means and confidence intervals.
    """
    n_pairs = len(battery.pairs)
    tasks = [(battery, i, t) for i in range(n_pairs) for t in range(battery.n_trials)]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            raw = list(pool.map(_star_args, tasks, chunksize=8))
    else:
        raw = [_run_one_trial(*t) for t in tasks]

    reference = battery.reference_point()
    theta_star = battery.loss.theta_star
    results: list[PairResult] = []
    per_pair_clean: list[np.ndarray] = []
    for i, pair in enumerate(battery.pairs):
        rows = sorted((r for r in raw if r["pair"] == i), key=lambda r: r["trial"])
        per_trial = np.full(battery.n_trials, np.nan)
        per_trial_min = np.full(battery.n_trials, np.nan)
        diverged: list[int] = []
        curve_sum = None
        n_curves = 0
        for r in rows:
            if r["diverged_at"] is not None:
                diverged.append(r["trial"])
                continue
            err = r["theta_final"] - reference
            per_trial[r["trial"]] = float(err @ err)
            err_min = r["theta_final"] - theta_star
            per_trial_min[r["trial"]] = float(err_min @ err_min)
            if r["curve"] is not None:
                curve_sum = r["curve"] if curve_sum is None else curve_sum + r["curve"]
                n_curves += 1
        clean = per_trial[~np.isnan(per_trial)]
        if clean.size == 0:
            mean, ci = math.inf, (math.inf, math.inf)
            mean_min = math.inf
        else:
            mean, ci = _summary_stats(clean)
            mean_min = float(np.mean(per_trial_min[~np.isnan(per_trial_min)]))
        results.append(
            PairResult(
                label=pair.label(),
                method=pair.method,
                dist_label=pair.dist.label() if pair.dist is not None else None,
                mean_mse=mean,
                ci95=ci,
                per_trial_mse=per_trial,
                diverged_trials=diverged,
                mean_mse_vs_minimizer=mean_min,
                curve=None if curve_sum is None else curve_sum / n_curves,
            )
        )
        per_pair_clean.append(clean)

    welch = []
    for i in range(n_pairs):
        for j in range(i + 1, n_pairs):
            if per_pair_clean[i].size >= 2 and per_pair_clean[j].size >= 2:
                t, dof, p_val = welch_t_test(per_pair_clean[i], per_pair_clean[j])
                welch.append(
                    {
                        "pair_a": results[i].label,
                        "pair_b": results[j].label,
                        "t": t,
                        "dof": dof,
                        "p_value": p_val,
                    }
                )

    curve_iters = None
    if battery.curve_window > 0:
        w = min(battery.curve_window, battery.iterations)
        curve_iters = np.arange(battery.iterations - w + 1, battery.iterations + 1)

    return MseReport(
        pairs=results,
        welch=welch,
        theta_star=theta_star,
        l_star=battery.loss.l_star,
        reference_point=reference,
        n_trials=battery.n_trials,
        iterations=battery.iterations,
        base_seed=battery.base_seed,
        backend=backend_name(),
        curve_iterations=curve_iters,
    )


def welch_t_test(x, y) -> tuple[float, float, float]:
    """Welch's unequal-variance two-sample test.

    Returns (t, dof, two-sided p); dof by the Welch-Satterthwaite formula.
    Two zero-variance samples give p = 1 for equal means, p = 0 otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ConfigError("welch_t_test needs at least two observations per sample")
    mx, my = float(np.mean(x)), float(np.mean(y))
    vx, vy = float(np.var(x, ddof=1)), float(np.var(y, ddof=1))
    nx, ny = x.size, y.size
    se2 = vx / nx + vy / ny
    if se2 == 0.0:
        if mx == my:
            return 0.0, float(nx + ny - 2), 1.0
        return math.copysign(math.inf, mx - my), float(nx + ny - 2), 0.0
    t = (mx - my) / math.sqrt(se2)
    dof = se2**2 / ((vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1))
    p_value = 2.0 * float(_scipy_stats.t.sf(abs(t), dof))
    return t, dof, p_value


@dataclass
class GridResult:
    """Gain grid-search outcome: the winning point plus the full surface."""

    a_star: float
    c_star: float
    mse_star: float
    rows: list[tuple[float, float, float, int]]  # (a, c, mean_mse, n_diverged)


def grid_values(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid, robust to floating-point endpoint error."""
    n = int(round((hi - lo) / step)) + 1
    vals = lo + step * np.arange(n)
    return vals[vals <= hi + 1e-12]


def grid_search(
    loss: Loss,
    pair: MethodDist,
    a_values,
    c_values,
    big_a: float,
    alpha: float,
    gamma: float,
    trials_per_point: int,
    iterations: int,
    base_seed: int,
    theta0,
    divergence_bound: float = 1e6,
    mse_reference=None,
    parallelism: int = 1,
) -> GridResult:
    """Mean terminal MSE over a grid of (a, c) gain coefficients.

    Scores points by the mean over completed trials; a point whose trials
    all diverge scores +inf. Ties break toward smaller a, then smaller c.
    """
    a_values = np.asarray(list(a_values), dtype=float)
    c_values = np.asarray(list(c_values), dtype=float)
    if a_values.size == 0 or c_values.size == 0:
        raise ConfigError("grid must be non-empty")
    points = [(a, c) for a in a_values for c in c_values]

    def _point_battery(index: int) -> TrialBattery:
        a, c = points[index]
        return TrialBattery(
            loss=loss,
            pairs=(pair,),
            gains=GainSequence(a=a, c=c, alpha=alpha, gamma=gamma, A=big_a),
            theta0=as_theta(theta0, loss.p),
            iterations=iterations,
            n_trials=trials_per_point,
            base_seed=base_seed,
            divergence_bound=divergence_bound,
            mse_reference=mse_reference,
            stream_offset=index * _TRIAL_STREAM_STRIDE,
        )

    rows: list[tuple[float, float, float, int]] = []
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            reports = list(
                pool.map(_grid_point_task, [(_point_battery(i),) for i in range(len(points))])
            )
    else:
        reports = [run_battery(_point_battery(i)) for i in range(len(points))]
    for (a, c), report in zip(points, reports):
        res = report.pairs[0]
        rows.append((float(a), float(c), res.mean_mse, res.n_diverged))

    best = min(rows, key=lambda r: (r[2], r[0], r[1]))
    return GridResult(a_star=best[0], c_star=best[1], mse_star=best[2], rows=rows)


def _grid_point_task(args):
    (battery,) = args
    return run_battery(battery)
