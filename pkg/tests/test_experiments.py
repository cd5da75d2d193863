"""Battery runner, Welch test, confidence intervals, grid search."""

import math

import numpy as np
import pytest

from gfsa import (
    ConfigError,
    GainSequence,
    MethodDist,
    NoiseModel,
    Quadratic,
    SkewedQuartic,
    TrialBattery,
    bernoulli,
    gaussian,
    grid_search,
    run_battery,
    welch_t_test,
)
from gfsa.experiments import _summary_stats, grid_values

GAINS = GainSequence(a=0.5, c=0.2, alpha=0.602, gamma=0.101)


def small_battery(n_trials=10, iterations=150, seed=99, **kwargs):
    loss = Quadratic.identity(3, NoiseModel(sigma2=0.01))
    defaults = dict(
        loss=loss,
        pairs=(MethodDist("spsa", bernoulli()), MethodDist("rdsa", gaussian())),
        gains=GAINS,
        theta0=np.ones(3),
        iterations=iterations,
        n_trials=n_trials,
        base_seed=seed,
    )
    defaults.update(kwargs)
    return TrialBattery(**defaults)


class TestWelch:
    def test_identical_samples(self):
        t, dof, p = welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0 and p == 1.0

    def test_hand_example(self):
        # means 3 and 4, both variances 2.5, n=5 each: se=1, dof=8
        t, dof, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0, rel=1e-12)
        assert dof == pytest.approx(8.0, rel=1e-12)
        assert p == pytest.approx(0.3466, abs=2e-4)

    def test_antisymmetry(self):
        rng = np.random.default_rng(5)
        x, y = rng.normal(size=20), rng.normal(1.0, 2.0, size=25)
        t_xy, dof_xy, p_xy = welch_t_test(x, y)
        t_yx, dof_yx, p_yx = welch_t_test(y, x)
        assert t_xy == pytest.approx(-t_yx)
        assert dof_xy == pytest.approx(dof_yx)
        assert p_xy == pytest.approx(p_yx)

    def test_degenerate_zero_variance(self):
        t, _, p = welch_t_test([2.0, 2.0], [3.0, 3.0])
        assert math.isinf(t) and p == 0.0

    def test_rejects_tiny_samples(self):
        with pytest.raises(ConfigError):
            welch_t_test([1.0], [1.0, 2.0])

    def test_unequal_variances_against_scipy(self):
        from scipy import stats

        rng = np.random.default_rng(11)
        x = rng.normal(0, 1, size=12)
        y = rng.normal(0.5, 3, size=40)
        t, dof, p = welch_t_test(x, y)
        ref = stats.ttest_ind(x, y, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-12)


class TestConfidenceInterval:
    def test_coverage_on_synthetic_errors(self):
        # iid gaussian per-trial errors with a known mean: the 95% interval
        # must cover it about 95% of the time
        rng = np.random.default_rng(123)
        true_mean, sigma, n = 2.0, 0.7, 30
        covered = 0
        reps = 1000
        for _ in range(reps):
            sample = rng.normal(true_mean, sigma, size=n)
            _, (lo, hi) = _summary_stats(sample)
            covered += lo <= true_mean <= hi
        assert covered / reps == pytest.approx(0.95, abs=0.02)

    def test_interval_formula(self):
        vals = np.array([1.0, 2.0, 3.0, 4.0])
        mean, (lo, hi) = _summary_stats(vals)
        half = 1.96 * vals.std(ddof=1) / 2.0
        assert mean == 2.5
        assert lo == pytest.approx(2.5 - half) and hi == pytest.approx(2.5 + half)


class TestRunBattery:
    def test_reproducible_bitwise(self):
        r1 = run_battery(small_battery())
        r2 = run_battery(small_battery())
        for a, b in zip(r1.pairs, r2.pairs):
            assert np.array_equal(a.per_trial_mse, b.per_trial_mse)
            assert a.mean_mse == b.mean_mse and a.ci95 == b.ci95

    def test_seed_changes_results(self):
        r1 = run_battery(small_battery(seed=1))
        r2 = run_battery(small_battery(seed=2))
        assert not np.array_equal(r1.pairs[0].per_trial_mse, r2.pairs[0].per_trial_mse)

    def test_pairs_use_disjoint_streams(self):
        battery = small_battery(
            pairs=(MethodDist("spsa", bernoulli()), MethodDist("spsa", bernoulli()))
        )
        report = run_battery(battery)
        assert not np.array_equal(report.pairs[0].per_trial_mse, report.pairs[1].per_trial_mse)

    def test_parallel_matches_serial(self):
        serial = run_battery(small_battery(n_trials=6, iterations=80))
        parallel = run_battery(small_battery(n_trials=6, iterations=80), parallelism=2)
        for a, b in zip(serial.pairs, parallel.pairs):
            assert np.array_equal(a.per_trial_mse, b.per_trial_mse)

    def test_welch_entries_cover_all_pairs(self):
        report = run_battery(small_battery())
        assert len(report.welch) == 1
        assert report.welch[0]["pair_a"] == "spsa:bernoulli"
        assert 0.0 <= report.welch[0]["p_value"] <= 1.0

    def test_curve_emission(self):
        report = run_battery(small_battery(curve_window=25))
        assert report.curve_iterations.shape == (25,)
        assert report.curve_iterations[-1] == 150
        for pair in report.pairs:
            assert pair.curve.shape == (25,)
            assert np.all(np.isfinite(pair.curve))

    def test_divergent_trials_reported_not_dropped(self):
        wild = small_battery(
            gains=GainSequence(a=1e9, c=0.2, alpha=0.602, gamma=0.101),
            divergence_bound=1e4,
        )
        report = run_battery(wild)
        for pair in report.pairs:
            assert pair.n_diverged == wild.n_trials
            assert math.isinf(pair.mean_mse)
            assert np.all(np.isnan(pair.per_trial_mse))
            assert pair.diverged_trials == list(range(wild.n_trials))

    def test_reference_point_changes_metric_only(self):
        base = run_battery(small_battery())
        shifted = run_battery(small_battery(mse_reference=np.full(3, 0.5)))
        # same trajectories, different yardstick
        assert shifted.pairs[0].mean_mse > base.pairs[0].mean_mse
        assert shifted.pairs[0].mean_mse_vs_minimizer == pytest.approx(
            base.pairs[0].mean_mse, rel=1e-12
        )

    def test_noise_free_at_minimum_is_exact_zero(self):
        loss = Quadratic.identity(3)
        battery = small_battery(loss=loss, theta0=np.zeros(3), n_trials=5)
        report = run_battery(battery)
        for pair in report.pairs:
            assert pair.mean_mse == 0.0


class TestOrderingStability:
    def test_strong_signal_ordering_survives_reseeding(self):
        """The two-point-vs-Gaussian ordering on the multimodal benchmark must
        hold in at least 95 of 100 independently re-seeded batteries.

        Implemented as one run of 1600 disjoint-stream trials per arm sliced
        into 100 batteries of 16; the per-battery separation at this size is
        already several sigma, so 16 trials per battery keeps the runtime
        tolerable without weakening the conclusion.
        """
        from dataclasses import replace
        from pathlib import Path

        from gfsa._config import load_experiment

        cfg = load_experiment(Path(__file__).resolve().parent.parent / "configs" / "table5.json")
        battery = cfg.battery()
        pairs = tuple(p for p in battery.pairs if p.label() in ("spsa:bernoulli", "rdsa:gaussian"))
        report = run_battery(replace(battery, pairs=pairs, n_trials=1600))
        bern = report.pair("spsa:bernoulli").per_trial_mse.reshape(100, 16).mean(axis=1)
        gauss = report.pair("rdsa:gaussian").per_trial_mse.reshape(100, 16).mean(axis=1)
        assert int((bern < gauss).sum()) >= 95


class TestGridSearch:
    def test_single_point(self):
        loss = Quadratic.identity(2, NoiseModel(sigma2=0.01))
        res = grid_search(
            loss, MethodDist("spsa", bernoulli()), [0.3], [0.2],
            big_a=0.0, alpha=0.602, gamma=0.101,
            trials_per_point=4, iterations=50, base_seed=3, theta0=np.ones(2),
        )
        assert (res.a_star, res.c_star) == (0.3, 0.2)
        assert len(res.rows) == 1

    def test_matches_deterministic_recursion_oracle(self):
        # noise-free axis differences on a quadratic: every grid point's MSE
        # is a deterministic function of a alone, replayed in closed form
        loss = Quadratic.identity(1)
        a_vals = [0.1, 0.3, 0.5, 0.7]
        c_vals = [0.2, 0.6]
        res = grid_search(
            loss, MethodDist("fdsa", None), a_vals, c_vals,
            big_a=0.0, alpha=0.602, gamma=0.101,
            trials_per_point=2, iterations=60, base_seed=1, theta0=[1.0],
        )

        def oracle(a):
            theta = 1.0
            for k in range(60):
                theta *= 1.0 - 2.0 * a / (k + 1) ** 0.602
            return theta**2

        by_point = {(a, c): mse for a, c, mse, _ in res.rows}
        for a in a_vals:
            for c in c_vals:
                assert by_point[(a, c)] == pytest.approx(oracle(a), rel=1e-10)
        assert res.a_star == min(a_vals, key=oracle)

    def test_exact_ties_break_to_smaller_gains(self):
        # starting at the minimum with no noise, every point scores exactly 0
        loss = Quadratic.identity(2)
        res = grid_search(
            loss, MethodDist("fdsa", None), [0.4, 0.2], [0.5, 0.3],
            big_a=0.0, alpha=0.602, gamma=0.101,
            trials_per_point=2, iterations=10, base_seed=1, theta0=np.zeros(2),
        )
        assert all(mse == 0.0 for _, _, mse, _ in res.rows)
        assert (res.a_star, res.c_star) == (0.2, 0.3)

    def test_all_divergent_point_scores_inf(self):
        loss = Quadratic.identity(2, NoiseModel(sigma2=0.01))
        res = grid_search(
            loss, MethodDist("spsa", bernoulli()), [1e9, 0.2], [0.2],
            big_a=0.0, alpha=0.602, gamma=0.101,
            trials_per_point=3, iterations=40, base_seed=5, theta0=np.ones(2),
            divergence_bound=1e4,
        )
        scores = {a: mse for a, _, mse, _ in res.rows}
        assert math.isinf(scores[1e9])
        assert res.a_star == 0.2

    def test_grid_points_use_disjoint_streams(self):
        loss = Quadratic.identity(2, NoiseModel(sigma2=0.01))
        res = grid_search(
            loss, MethodDist("spsa", bernoulli()), [0.3, 0.3 + 1e-12], [0.2],
            big_a=0.0, alpha=0.602, gamma=0.101,
            trials_per_point=4, iterations=50, base_seed=3, theta0=np.ones(2),
        )
        # near-identical gains but different streams: scores must differ
        assert res.rows[0][2] != res.rows[1][2]

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            grid_search(
                Quadratic.identity(2), MethodDist("spsa", bernoulli()), [], [0.2],
                big_a=0.0, alpha=0.602, gamma=0.101,
                trials_per_point=1, iterations=10, base_seed=0, theta0=np.ones(2),
            )


class TestGridValues:
    def test_standard_search_range_cardinality(self):
        vals = grid_values(0.1, 1.0, 0.02)
        assert len(vals) == 46
        assert vals[0] == pytest.approx(0.1) and vals[-1] == pytest.approx(1.0)

    def test_non_divisible_endpoint(self):
        vals = grid_values(0.1, 0.25, 0.1)
        assert np.allclose(vals, [0.1, 0.2])
