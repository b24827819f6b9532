"""
Tests for the simulation generator, the error metrics and the benchmark runner
"""

import itertools

import numpy as np
import pandas as pd
import pytest

from core.simbench import (
    BenchmarkRunner,
    corruption_level,
    format_tables,
    hungarian,
    make_truth,
    mse_beta,
    pe,
    rpe,
    run_benchmark,
    sample,
    summarize,
    true_conditional_mean,
    write_reports_csv,
)
from models.regression import ExpertModel
from models.simulation import SimulationConfig
from utils.exceptions import TooLarge, ValidationError, ZeroDenominator


def experts_from(rows):
    return [ExpertModel(beta0=r[0], beta=r[1:]) for r in rows]


def tiny_sim(**changes):
    settings = dict(k=2, p=1, n_labeled=120, n_test=300, seed=11, d_range=(0.2, 0.3))
    settings.update(changes)
    return SimulationConfig(**settings)


class TestHungarian:
    """Test cases for minimum-cost matching"""

    def test_hand_case(self):
        """Test a 2 x 2 matrix where the anti-diagonal wins"""
        perm, cost = hungarian(np.array([[4.0, 1.0], [2.0, 3.0]]))
        np.testing.assert_array_equal(perm, [1, 0])
        assert cost == 3.0

    @pytest.mark.parametrize("k", range(1, 8))
    def test_matches_brute_force(self, k):
        """Test the optimum against every permutation on 200 random matrices"""
        perms = np.array(list(itertools.permutations(range(k))))
        rows = np.arange(k)
        gen = np.random.default_rng(k)
        for _ in range(200):
            cost = gen.uniform(size=(k, k))
            perm, total = hungarian(cost)
            best = cost[rows, perms].sum(axis=1).min()
            assert total == pytest.approx(best, abs=1e-12)
            assert sorted(perm.tolist()) == list(range(k))
            assert total == pytest.approx(cost[rows, perm].sum())

    def test_too_large(self):
        """Test that more than 64 labels are refused"""
        with pytest.raises(TooLarge):
            hungarian(np.zeros((65, 65)))

    def test_not_square(self):
        """Test that a rectangular matrix is rejected"""
        with pytest.raises(ValidationError):
            hungarian(np.zeros((2, 3)))


class TestMetrics:
    """Test cases for MSE and prediction errors"""

    def test_mse_hand_case(self):
        """Test the matched, expert-averaged coefficient error"""
        truth = experts_from([[0.0, 0.0], [1.0, 1.0]])
        estimated = experts_from([[1.0, 1.0], [0.0, 2.0]])
        assert mse_beta(estimated, truth) == pytest.approx(1.0)

    def test_mse_zero_for_truth(self, small_truth):
        """Test that the truth has zero error"""
        assert mse_beta(small_truth.experts, small_truth.experts) == 0.0

    def test_mse_ignores_labels(self, rng):
        """Test invariance under permutation of the estimated experts"""
        truth = experts_from(rng.normal(size=(4, 3)))
        estimated = experts_from(rng.normal(size=(4, 3)))
        base = mse_beta(estimated, truth)
        for order in ([1, 0, 3, 2], [3, 2, 1, 0]):
            shuffled = [estimated[i] for i in order]
            assert mse_beta(shuffled, truth) == pytest.approx(base, rel=1e-12)

    def test_mse_shape_mismatch(self):
        """Test that different expert counts are rejected"""
        with pytest.raises(ValidationError):
            mse_beta(experts_from([[0.0, 0.0]]), experts_from([[0.0, 0.0]] * 2))

    def test_prediction_errors(self):
        """Test PE and RPE on hand values"""
        y = np.array([1.0, 2.0, 3.0])
        assert pe(y, np.array([1.0, 2.0, 5.0])) == pytest.approx(4.0 / 3.0)
        mean = np.array([1.5, 2.0, 2.5])
        assert rpe(y, mean, mean) == 1.0
        assert rpe(y, np.array([1.0, 2.0, 5.0]), mean) == pytest.approx(4.0 / 0.5)

    def test_zero_denominator(self):
        """Test RPE when the true mean is exact"""
        y = np.array([1.0, 2.0])
        with pytest.raises(ZeroDenominator):
            rpe(y, y + 1.0, y)


class TestGenerator:
    """Test cases for the synthetic model and sampler"""

    def test_grid_parameters(self, small_truth, small_sim):
        """Test means, coefficients, covariances and transition of the truth"""
        np.testing.assert_allclose(small_truth.gmm.means[:, 0], [-3.0, 0.0, 3.0])
        np.testing.assert_allclose(small_truth.gmm.means[:, 1], [-3.0, 0.0, 3.0])
        coefs = np.stack([e.coefficients for e in small_truth.experts])
        np.testing.assert_allclose(coefs[:, 0], [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(coefs[:, 2], [-1.0, 0.0, 1.0])
        for cov in small_truth.gmm.covariances:
            eigen = np.linalg.eigvalsh(cov)
            assert np.all(eigen >= 0.2 - 1e-12)
            assert np.all(eigen <= 0.3 + 1e-12)
        np.testing.assert_allclose(np.diag(small_truth.transition.pi), 0.8)
        assert all(e.sigma == small_sim.sigma for e in small_truth.experts)

    def test_single_cluster(self):
        """Test that K = 1 centres everything at the middle of the range"""
        truth = make_truth(SimulationConfig(k=1, p=2))
        np.testing.assert_array_equal(truth.gmm.means, [[0.0, 0.0]])
        np.testing.assert_array_equal(truth.experts[0].coefficients, [0.0, 0.0, 0.0])

    def test_random_rules(self):
        """Test that random rules stay within their ranges"""
        truth = make_truth(
            SimulationConfig(k=4, p=2, mu_rule="random", beta_rule="random")
        )
        assert np.all(np.abs(truth.gmm.means) <= 3.0)
        coefs = np.stack([e.coefficients for e in truth.experts])
        assert np.all(np.abs(coefs) <= 1.0)

    def test_sample_moments(self, small_truth):
        """Test label frequencies and the noise level of a large draw"""
        draw = sample(small_truth, 30000, rng=8)
        freq = np.bincount(draw.tilde_z, minlength=3) / draw.n
        np.testing.assert_allclose(freq, 1.0 / 3.0, atol=0.015)
        agree = np.mean(draw.z == draw.tilde_z)
        assert agree == pytest.approx(0.8, abs=0.015)
        coef = np.stack([e.coefficients for e in small_truth.experts])
        resid = draw.y - coef[draw.z, 0] - np.sum(draw.x * coef[draw.z, 1:], axis=1)
        assert np.std(resid) == pytest.approx(0.1, abs=0.005)
        for k in range(3):
            members = draw.x[draw.tilde_z == k]
            np.testing.assert_allclose(
                members.mean(axis=0), small_truth.gmm.means[k], atol=0.03
            )

    def test_clean_labels(self):
        """Test that p0 = 1 makes both labels agree"""
        truth = make_truth(tiny_sim(k=3, p0=1.0))
        draw = sample(truth, 500, rng=3)
        np.testing.assert_array_equal(draw.z, draw.tilde_z)

    def test_sample_is_reproducible(self, small_truth):
        """Test that equal seeds draw equal samples"""
        first = sample(small_truth, 50, rng=6)
        second = sample(small_truth, 50, rng=6)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.y, second.y)

    def test_corruption_level(self, small_truth):
        """Test the percentage of disagreeing labels"""
        assert corruption_level(small_truth) == pytest.approx(20.0)

    def test_true_conditional_mean(self, small_truth):
        """Test E(Y | x) at a cluster centre"""
        centre = small_truth.gmm.means[:1]
        pi = small_truth.transition.pi
        expert_means = np.array([e.mean(centre[0]) for e in small_truth.experts])
        expected = pi[:, 0] @ expert_means
        np.testing.assert_allclose(
            true_conditional_mean(small_truth, centre), [expected], rtol=1e-9
        )

    def test_config_validation(self):
        """Test invalid generator settings"""
        with pytest.raises(ValidationError):
            SimulationConfig(p0=1.5)
        with pytest.raises(ValidationError):
            SimulationConfig(k=2, tilde_z_weights=[0.2, 0.2])
        with pytest.raises(ValidationError):
            SimulationConfig.from_dict({"clusters": 3})


class TestBenchmarkRunner:
    """Test cases for the Monte-Carlo runner"""

    def test_report_layout(self):
        """Test the order and content of the replication reports"""
        runner = BenchmarkRunner(
            sim=tiny_sim(), grid=[1.0, 0.8], methods=["noisyss", "moess"], reps=2
        )
        reports, summary = runner.run()
        keys = [(r.grid_value, r.replication, r.method) for r in reports]
        assert keys == [
            (g, rep, m)
            for g in (1.0, 0.8)
            for rep in range(2)
            for m in ("noisyss", "moess")
        ]
        assert all(r.ok for r in reports)
        assert all(np.isfinite(r.mse) and r.rpe > 0 for r in reports)
        assert list(summary["n_ok"]) == [2, 2, 2, 2]
        assert reports[0].corruption == pytest.approx(0.0)
        assert reports[-1].corruption == pytest.approx(20.0)

    def test_deterministic_and_thread_invariant(self):
        """Test that seeds fix the results whatever the thread count"""
        kwargs = dict(grid=[0.9], methods=["noisyss", "moess"], reps=3)
        serial, _ = BenchmarkRunner(sim=tiny_sim(), n_jobs=1, **kwargs).run()
        threaded, _ = BenchmarkRunner(sim=tiny_sim(), n_jobs=3, **kwargs).run()
        assert [r.to_dict() for r in serial] == [r.to_dict() for r in threaded]

    def test_row_depends_on_seed_and_replication(self):
        """Test that a report row is fixed by its base seed and replication"""
        kwargs = dict(grid=[0.8], methods=["noisyss", "moess"])
        short, _ = BenchmarkRunner(sim=tiny_sim(), reps=2, **kwargs).run()
        long, _ = BenchmarkRunner(sim=tiny_sim(), reps=4, **kwargs).run()
        assert [r.to_dict() for r in short] == [r.to_dict() for r in long[:4]]
        assert all(r.seed == 11 for r in long)
        assert long[4].mse != long[0].mse

    def test_paired_draws_across_grid(self):
        """Test that the same replication uses the same sizes across p0"""
        reports, _ = BenchmarkRunner(
            sim=tiny_sim(), grid=[1.0, 0.7], methods=["moess"], reps=1
        ).run()
        assert reports[0].n_labeled == reports[1].n_labeled == 120

    def test_sample_size_grid(self):
        """Test a grid over the labeled sample size"""
        reports, summary = run_benchmark(
            grid=[60, 120],
            methods=["moess"],
            reps=1,
            seed=2,
            grid_kind="n",
            sim=tiny_sim(),
        )
        assert [r.n_labeled for r in reports] == [60, 120]
        assert list(summary["grid_kind"]) == ["n", "n"]
        text = format_tables(summary)
        assert "120" in text
        assert "%" not in text

    def test_failures_are_recorded(self):
        """Test that a failing method does not stop the run"""
        reports, summary = BenchmarkRunner(
            sim=tiny_sim(n_labeled=5), grid=[0.9], methods=["moeline"], reps=2
        ).run()
        assert all(r.status == "failed" for r in reports)
        assert all("ValidationError" in r.error for r in reports)
        assert int(summary["n_failed"].iloc[0]) == 2
        assert np.isnan(summary["mse_mean"].iloc[0])

    def test_single_replication_summary(self):
        """Test that one replication has zero standard error"""
        _, summary = BenchmarkRunner(
            sim=tiny_sim(), grid=[0.9], methods=["moess"], reps=1
        ).run()
        assert summary["mse_se"].iloc[0] == 0.0
        assert summary["rpe_se"].iloc[0] == 0.0

    def test_csv_is_byte_identical(self, tmp_path):
        """Test that two runs write the same results file"""
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            reports, _ = run_benchmark(
                grid=[0.8], methods=["moess"], reps=2, seed=4, sim=tiny_sim()
            )
            write_reports_csv(reports, path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        header = paths[0].read_text().splitlines()[0]
        assert header.startswith("grid_kind,grid_value,replication,seed,method")
        assert "elapsed" not in header

    def test_format_tables(self):
        """Test the text tables of a corruption grid"""
        _, summary = BenchmarkRunner(
            sim=tiny_sim(), grid=[1.0, 0.8], methods=["moess"], reps=1
        ).run()
        text = format_tables(summary)
        assert text.startswith("MSE")
        assert "RPE" in text
        assert "20%" in text and "0%" in text
        assert format_tables(summarize([])) == "(no results)"

    def test_runner_validation(self):
        """Test invalid runner settings"""
        with pytest.raises(ValidationError):
            BenchmarkRunner(methods=["lasso"])
        with pytest.raises(ValidationError):
            BenchmarkRunner(grid_kind="sigma")
        with pytest.raises(ValidationError):
            BenchmarkRunner(reps=0)


DESK_SEED = 2024
DESK_REPS = 10


def desk_sim(**changes):
    """Ten clusters in three dimensions, 2000 labeled points, true mixture"""
    settings = dict(k=10, p=3, n_labeled=2000, n_test=20000, seed=DESK_SEED)
    settings.update(changes)
    return SimulationConfig(**settings)


@pytest.fixture(scope="module")
def corruption_sweep():
    """Summary indexed by (corruption percent, method)"""
    _, summary = run_benchmark(
        grid=[1.0 - c / 100.0 for c in (0, 10, 20, 30, 40, 60)],
        methods=["noisyss", "moess"],
        reps=DESK_REPS,
        seed=DESK_SEED,
        sim=desk_sim(),
        n_jobs=4,
    )
    percent = np.rint(100.0 * (1.0 - summary["grid_value"])).astype(int)
    return summary.assign(corruption=percent).set_index(["corruption", "method"])


@pytest.fixture(scope="module")
def size_sweep():
    """NoisySS coefficient error per replication (rows) and labeled size"""
    reports, _ = run_benchmark(
        grid=[300, 600, 1000, 2000],
        methods=["noisyss"],
        reps=DESK_REPS,
        seed=DESK_SEED,
        grid_kind="n",
        sim=desk_sim(p0=0.8),
        n_jobs=4,
    )
    frame = pd.DataFrame([r.to_dict() for r in reports])
    return frame.pivot(index="replication", columns="n_labeled", values="mse")


@pytest.mark.slow
class TestDeskScaleBenchmark:
    """Test cases for the estimator comparison at the reference scale"""

    @pytest.mark.parametrize("corruption", [10, 20, 30, 40])
    def test_noisyss_under_moderate_corruption(self, corruption_sweep, corruption):
        """Test small coefficient error and near-oracle prediction error"""
        row = corruption_sweep.loc[(corruption, "noisyss")]
        assert row["n_ok"] == DESK_REPS
        assert row["mse_mean"] <= 0.05
        assert row["rpe_mean"] <= 1.02

    @pytest.mark.parametrize("corruption", [10, 20, 30, 40])
    def test_moess_prediction_error(self, corruption_sweep, corruption):
        """Test that untrimmed experts still predict close to the oracle"""
        row = corruption_sweep.loc[(corruption, "moess")]
        assert 1.0 <= row["rpe_mean"] <= 1.05

    def test_noisyss_breaks_down_at_sixty_percent(self, corruption_sweep):
        """Test the breakdown once most labels are corrupted"""
        assert corruption_sweep.loc[(60, "noisyss"), "mse_mean"] >= 1.0

    def test_moess_degrades_at_thirty_percent(self, corruption_sweep):
        """Test the gap between trimmed and untrimmed experts"""
        assert corruption_sweep.loc[(30, "moess"), "mse_mean"] >= 2.0
        assert corruption_sweep.loc[(30, "noisyss"), "mse_mean"] <= 0.05

    def test_moess_is_competitive_without_corruption(self, corruption_sweep):
        """Test that trimming costs little when no label is corrupted"""
        moess = corruption_sweep.loc[(0, "moess"), "mse_mean"]
        noisyss = corruption_sweep.loc[(0, "noisyss"), "mse_mean"]
        assert moess <= noisyss + 0.01

    def test_noisyss_error_falls_with_sample_size(self, size_sweep):
        """Test strictly decreasing error over 300, 600, 1000, 2000 points"""
        assert list(size_sweep.columns) == [300, 600, 1000, 2000]
        decreasing = (size_sweep.diff(axis=1).iloc[:, 1:] < 0).all(axis=1)
        assert int(decreasing.sum()) >= 9
