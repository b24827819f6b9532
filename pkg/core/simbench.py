"""
Simulation Benchmark
====================

Synthetic noisy mixture-of-experts generator, coefficient and prediction
error metrics, label matching, and the Monte-Carlo runner that compares
the estimators over a grid of corruption levels or sample sizes
"""

import dataclasses
import logging
import math
import time
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from core.baselines import fit_moe_em, fit_moess, predict_moe, predict_moess
from core.gmm import fit_gmm, posterior_matrix
from core.moe import expert_means_for, fit_noisy_moe, predict_many
from core.transition import corruption_transition
from models.gmm_model import GmmFitConfig, GmmModel
from models.mixture import GateKind, MoeEmConfig, NoisyMoeConfig
from models.regression import ExpertModel
from models.simulation import (
    RULE_GRID,
    ReplicationReport,
    SampleDraw,
    SimulationConfig,
    TruthModel,
)
from utils.exceptions import TooLarge, ValidationError, ZeroDenominator
from utils.helpers import RandomStreams, ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

METHODS = ("noisyss", "moess", "moeline", "moequad")
GRID_P0 = "p0"
GRID_N = "n"
HUNGARIAN_LIMIT = 64

DEFAULT_CORRUPTION_GRID = (0, 10, 20, 30, 40, 50, 60)
DEFAULT_N_GRID = (300, 600, 1000, 2000)

# stream offsets under [seed, replication]
TRUTH_STREAM = 0
LABELED_STREAM = 1
TEST_STREAM = 2
UNLABELED_STREAM = 3
METHOD_STREAM = 4


def _spaced(k: int, low: float, high: float) -> np.ndarray:
    if k == 1:
        return np.array([0.5 * (low + high)])
    return low + np.arange(k) * (high - low) / (k - 1)


def make_truth(
    cfg: SimulationConfig, rng: Optional[np.random.Generator] = None
) -> TruthModel:
    """
    Build the data-generating model

    Mean entries of cluster k are -3 + 6k/(K-1) and every coefficient of
    expert k is -1 + 2k/(K-1) under the grid rules. Each covariance is
    R D R^T with R an orthogonalised Gaussian matrix and D drawn uniformly
    from d_range. The transition has p0 on its diagonal.

    Args:
        cfg (SimulationConfig): Generator settings
        rng (np.random.Generator, optional): Source of R, D and random-rule
            draws; defaults to the stream of cfg.seed

    Returns:
        TruthModel: True mixture, experts and transition
    """
    rng = rng if rng is not None else RandomStreams.stream(cfg.seed, TRUTH_STREAM)
    k, p = cfg.k, cfg.p

    if cfg.mu_rule == RULE_GRID:
        means = np.repeat(_spaced(k, -3.0, 3.0)[:, np.newaxis], p, axis=1)
    else:
        means = rng.uniform(-3.0, 3.0, size=(k, p))
    if cfg.beta_rule == RULE_GRID:
        coefs = np.repeat(_spaced(k, -1.0, 1.0)[:, np.newaxis], p + 1, axis=1)
    else:
        coefs = rng.uniform(-1.0, 1.0, size=(k, p + 1))

    covariances = np.empty((k, p, p))
    for j in range(k):
        q, r = np.linalg.qr(rng.standard_normal((p, p)))
        rotation = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        eigen = rng.uniform(cfg.d_range[0], cfg.d_range[1], size=p)
        cov = (rotation * eigen) @ rotation.T
        covariances[j] = 0.5 * (cov + cov.T)

    gmm = GmmModel(weights=cfg.weights, means=means, covariances=covariances)
    experts = [
        ExpertModel(beta0=coefs[j, 0], beta=coefs[j, 1:], theta={"sigma": cfg.sigma})
        for j in range(k)
    ]
    return TruthModel(
        gmm=gmm, experts=experts, transition=corruption_transition(k, cfg.p0)
    )


def sample(
    truth: TruthModel, n: int, rng: Union[int, np.random.Generator] = 0
) -> SampleDraw:
    """
    Draw n observations: Z~ from the weights, X | Z~ Gaussian, Z | Z~ from
    the transition column, Y | X, Z from the expert

    Args:
        truth (TruthModel): Generating model
        n (int): Sample size
        rng (int or np.random.Generator): Seed or generator

    Returns:
        SampleDraw: Covariates, responses and both latent labels
    """
    ArrayValidator.require(n >= 0, "n must be >= 0")
    if not isinstance(rng, np.random.Generator):
        rng = RandomStreams.stream(int(rng))
    gmm, k, p = truth.gmm, truth.k, truth.p

    tilde_z = rng.choice(k, size=n, p=gmm.weights)
    noise = rng.standard_normal((n, p))
    x = gmm.means[tilde_z] + np.einsum(
        "nij,nj->ni", gmm.cholesky_factors[tilde_z], noise
    )

    cumulative = np.cumsum(truth.transition.pi, axis=0)
    u = rng.random(n)
    z = np.sum(u[:, np.newaxis] >= cumulative[:, tilde_z].T, axis=1)
    z = np.minimum(z, k - 1)

    coef = np.stack([expert.coefficients for expert in truth.experts])
    sigma = np.array([expert.sigma for expert in truth.experts])
    eps = rng.standard_normal(n)
    y = coef[z, 0] + np.sum(x * coef[z, 1:], axis=1) + sigma[z] * eps
    return SampleDraw(x=x, y=y, z=z, tilde_z=tilde_z)


def true_conditional_mean(truth: TruthModel, x: np.ndarray) -> np.ndarray:
    """E(Y | x) under the true gate and experts"""
    gate = posterior_matrix(truth.gmm, x) @ truth.transition.pi.T
    return np.sum(gate * expert_means_for(truth.experts, np.asarray(x)), axis=1)


def corruption_level(truth: TruthModel) -> float:
    """Percentage of draws whose two latent labels disagree"""
    agreement = float(np.sum(truth.gmm.weights * np.diag(truth.transition.pi)))
    return 100.0 * (1.0 - agreement)


def hungarian(cost: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Minimum-cost perfect assignment of a square cost matrix

    Returns:
        Tuple[np.ndarray, float]: perm with row i assigned to column perm[i],
            and the total cost

    Raises:
        TooLarge: If K > 64
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValidationError(f"Cost matrix must be square, got {cost.shape}")
    if cost.shape[0] > HUNGARIAN_LIMIT:
        raise TooLarge(f"Assignment of size {cost.shape[0]} > {HUNGARIAN_LIMIT}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("Cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm, float(cost[rows, cols].sum())


def mse_beta(estimated: Sequence[ExpertModel], truth: Sequence[ExpertModel]) -> float:
    """
    Coefficient error after the best matching of estimated to true experts:
    average over experts of ||(b0, b) - (b0*, b*)||^2 / (p + 1)
    """
    est = np.stack([expert.coefficients for expert in estimated])
    ref = np.stack([expert.coefficients for expert in truth])
    if est.shape != ref.shape:
        raise ValidationError(f"Expert sets differ: {est.shape} vs {ref.shape}")
    diff = est[:, np.newaxis, :] - ref[np.newaxis, :, :]
    cost = np.sum(diff**2, axis=2) / est.shape[1]
    return hungarian(cost)[1] / est.shape[0]


def pe(y: np.ndarray, yhat: np.ndarray) -> float:
    """Mean squared prediction error"""
    y, yhat = np.asarray(y, dtype=float), np.asarray(yhat, dtype=float)
    return float(np.mean((y - yhat) ** 2))


def rpe(y: np.ndarray, yhat: np.ndarray, ytrue_mean: np.ndarray) -> float:
    """
    Squared prediction error relative to that of the true conditional mean

    Raises:
        ZeroDenominator: If the true mean reproduces y exactly
    """
    y = np.asarray(y, dtype=float)
    reference = float(np.sum((y - np.asarray(ytrue_mean, dtype=float)) ** 2))
    if reference == 0.0:
        raise ZeroDenominator("True conditional mean has zero squared error")
    return float(np.sum((y - np.asarray(yhat, dtype=float)) ** 2)) / reference


class BenchmarkRunner:
    """
    Monte-Carlo comparison of the estimators over a grid

    Replication r of every grid value uses the random stream [seed, r], so
    grid values are compared on paired draws. Replications run in threads
    and reports are ordered by (grid value, replication, method).
    """

    def __init__(
        self,
        sim: Optional[SimulationConfig] = None,
        grid_kind: str = GRID_P0,
        grid: Optional[Sequence[float]] = None,
        methods: Sequence[str] = METHODS,
        reps: int = 10,
        freeze_truth: bool = False,
        noisy_cfg: Optional[NoisyMoeConfig] = None,
        moe_cfg: Optional[MoeEmConfig] = None,
        gmm_cfg: Optional[GmmFitConfig] = None,
        n_jobs: int = 1,
    ):
        """
        Initialize the runner

        Args:
            sim (SimulationConfig, optional): Generator settings; its seed is
                the base seed of the run
            grid_kind (str): "p0" or "n"
            grid (Sequence[float], optional): Grid values; defaults to the
                corruption sweep 0..60% or the sizes 300..2000
            methods (Sequence[str]): Subset of noisyss, moess, moeline, moequad
            reps (int): Replications per grid value
            freeze_truth (bool): Draw R and D once for the whole run
            noisy_cfg (NoisyMoeConfig, optional): Noisy MoE settings
            moe_cfg (MoeEmConfig, optional): Supervised MoE settings
            gmm_cfg (GmmFitConfig, optional): Mixture settings when oracle_x
                is off
            n_jobs (int): Threads across replications
        """
        self.sim = sim or SimulationConfig()
        ArrayValidator.require(
            grid_kind in (GRID_P0, GRID_N),
            f"grid_kind must be '{GRID_P0}' or '{GRID_N}'",
        )
        unknown = [m for m in methods if m not in METHODS]
        ArrayValidator.require(not unknown, f"Unknown methods: {unknown}")
        ArrayValidator.require(len(methods) > 0, "At least one method is needed")
        ArrayValidator.require(reps >= 1, "reps must be >= 1")

        self.grid_kind = grid_kind
        if grid is None:
            if grid_kind == GRID_P0:
                grid = [1.0 - c / 100.0 for c in DEFAULT_CORRUPTION_GRID]
            else:
                grid = list(DEFAULT_N_GRID)
        self.grid = [float(g) for g in grid]
        ArrayValidator.require(len(self.grid) > 0, "Grid must be nonempty")
        self.methods = list(methods)
        self.reps = reps
        self.freeze_truth = freeze_truth
        self.noisy_cfg = noisy_cfg or NoisyMoeConfig()
        self.moe_cfg = moe_cfg or MoeEmConfig()
        self.gmm_cfg = gmm_cfg or GmmFitConfig()
        self.n_jobs = n_jobs
        self.logger = logging.getLogger(__name__)

    def grid_config(self, value: float) -> SimulationConfig:
        if self.grid_kind == GRID_P0:
            return dataclasses.replace(self.sim, p0=value)
        return dataclasses.replace(self.sim, n_labeled=int(value))

    def run(self) -> Tuple[List[ReplicationReport], pd.DataFrame]:
        """
        Run every (grid value, replication) unit

        Returns:
            Tuple[List[ReplicationReport], pd.DataFrame]: Reports in unit
                order and their summary
        """
        units = [(g, r) for g in range(len(self.grid)) for r in range(self.reps)]
        self.logger.info(
            f"Benchmark over {self.grid_kind} grid {self.grid}: "
            f"{len(units)} replications x {len(self.methods)} methods"
        )
        batches = ordered_map(self._run_unit, units, self.n_jobs)
        reports = [report for batch in batches for report in batch]
        failed = sum(not report.ok for report in reports)
        if failed:
            self.logger.warning(f"{failed} of {len(reports)} method runs failed")
        return reports, summarize(reports)

    def _run_unit(self, unit: Tuple[int, int]) -> List[ReplicationReport]:
        grid_index, rep = unit
        value = self.grid[grid_index]
        cfg = self.grid_config(value)
        seed = self.sim.seed

        truth_rep = 0 if self.freeze_truth else rep
        truth = make_truth(cfg, RandomStreams.stream(seed, truth_rep, TRUTH_STREAM))
        labeled = sample(
            truth, cfg.n_labeled, RandomStreams.stream(seed, rep, LABELED_STREAM)
        )
        test = sample(truth, cfg.n_test, RandomStreams.stream(seed, rep, TEST_STREAM))
        true_mean = true_conditional_mean(truth, test.x)
        method_seed = RandomStreams.child_seed(
            RandomStreams.stream(seed, rep, METHOD_STREAM)
        )
        level = corruption_level(truth)

        gmm = truth.gmm
        gmm_error = None
        if not cfg.oracle_x and {"noisyss", "moess"} & set(self.methods):
            unlabeled = sample(
                truth,
                cfg.n_unlabeled,
                RandomStreams.stream(seed, rep, UNLABELED_STREAM),
            )
            try:
                gmm = fit_gmm(
                    np.vstack([labeled.x, unlabeled.x]),
                    dataclasses.replace(
                        self.gmm_cfg, k=cfg.k, seed=method_seed, n_jobs=1
                    ),
                )
            except Exception as e:
                gmm_error = e

        reports = []
        for method in self.methods:
            report = ReplicationReport(
                grid_kind=self.grid_kind,
                grid_value=value,
                replication=rep,
                seed=seed,
                method=method,
                n_labeled=cfg.n_labeled,
                corruption=level,
            )
            started = time.perf_counter()
            try:
                if gmm_error is not None and method in ("noisyss", "moess"):
                    raise gmm_error
                experts, yhat = self._fit_method(
                    method, labeled, test, cfg.k, gmm, method_seed
                )
                report.mse = mse_beta(experts, truth.experts)
                report.rpe = rpe(test.y, yhat, true_mean)
            except Exception as e:
                report.status = "failed"
                report.error = f"{type(e).__name__}: {e}"
                self.logger.warning(
                    f"{method} failed at {self.grid_kind}={value}, "
                    f"replication {rep}: {e}"
                )
            report.elapsed = time.perf_counter() - started
            reports.append(report)
        self.logger.debug(f"Replication {rep} at {self.grid_kind}={value} done")
        return reports

    def _fit_method(
        self,
        method: str,
        labeled: SampleDraw,
        test: SampleDraw,
        k: int,
        gmm: GmmModel,
        method_seed: int,
    ) -> Tuple[List[ExpertModel], np.ndarray]:
        if method == "noisyss":
            cfg = self.noisy_cfg
            cfg = dataclasses.replace(
                cfg,
                lts=dataclasses.replace(cfg.lts, seed=method_seed, n_jobs=1),
                n_jobs=1,
            )
            model = fit_noisy_moe(labeled.x, labeled.y, None, k, cfg, gmm=gmm)
            return model.experts, predict_many(model, test.x)
        if method == "moess":
            model = fit_moess(labeled.x, labeled.y, None, k, gmm=gmm)
            return model.experts, predict_moess(model, test.x)
        kind = GateKind.LINEAR if method == "moeline" else GateKind.QUADRATIC
        moe_cfg = dataclasses.replace(self.moe_cfg, seed=method_seed, n_jobs=1)
        model = fit_moe_em(labeled.x, labeled.y, k, kind, moe_cfg)
        return model.experts, predict_moe(model, test.x)


def run_benchmark(
    grid: Optional[Sequence[float]] = None,
    methods: Sequence[str] = METHODS,
    reps: int = 10,
    seed: int = 0,
    grid_kind: str = GRID_P0,
    sim: Optional[SimulationConfig] = None,
    **kwargs,
) -> Tuple[List[ReplicationReport], pd.DataFrame]:
    """Run the benchmark (see BenchmarkRunner)"""
    sim = dataclasses.replace(sim or SimulationConfig(), seed=seed)
    runner = BenchmarkRunner(
        sim=sim, grid_kind=grid_kind, grid=grid, methods=methods, reps=reps, **kwargs
    )
    return runner.run()


def _standard_error(values: pd.Series) -> float:
    values = values.dropna()
    if len(values) <= 1:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def summarize(reports: Sequence[ReplicationReport]) -> pd.DataFrame:
    """
    Mean and standard error of MSE and RPE per grid value and method

    Failed runs are excluded from the means and counted in n_failed.
    """
    columns = [
        "grid_kind",
        "grid_value",
        "method",
        "mse_mean",
        "mse_se",
        "rpe_mean",
        "rpe_se",
        "n_ok",
        "n_failed",
    ]
    if not reports:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([report.to_dict() for report in reports])
    frame["ok"] = frame["status"] == "ok"

    rows = []
    for (kind, value, method), group in frame.groupby(
        ["grid_kind", "grid_value", "method"], sort=False
    ):
        ok = group[group["ok"]]
        rows.append(
            {
                "grid_kind": kind,
                "grid_value": value,
                "method": method,
                "mse_mean": float(ok["mse"].mean()) if len(ok) else float("nan"),
                "mse_se": _standard_error(ok["mse"]),
                "rpe_mean": float(ok["rpe"].mean()) if len(ok) else float("nan"),
                "rpe_se": _standard_error(ok["rpe"]),
                "n_ok": int(len(ok)),
                "n_failed": int(len(group) - len(ok)),
            }
        )
    return pd.DataFrame(rows, columns=columns)


def _grid_label(kind: str, value: float) -> str:
    if kind == GRID_P0:
        return f"{100.0 * (1.0 - value):.0f}%"
    return f"{int(value)}"


def format_tables(summary: pd.DataFrame, digits: int = 3) -> str:
    """
    Text tables of "mean (se)" for MSE and RPE

    Rows are grid values (corruption percentages for a p0 grid), columns are
    methods.
    """
    if summary.empty:
        return "(no results)"
    kind = str(summary["grid_kind"].iloc[0])
    row_name = "corruption" if kind == GRID_P0 else "n"
    labels = [_grid_label(kind, v) for v in summary["grid_value"]]
    methods = list(dict.fromkeys(summary["method"]))

    blocks = []
    for metric in ("mse", "rpe"):
        cells = summary.assign(
            row=labels,
            cell=[
                f"{m:.{digits}f} ({s:.{digits}f})"
                for m, s in zip(summary[f"{metric}_mean"], summary[f"{metric}_se"])
            ],
        )
        table = cells.pivot(index="row", columns="method", values="cell")
        table = table.reindex(index=list(dict.fromkeys(labels)), columns=methods)
        table.index.name = row_name
        table.columns.name = None
        blocks.append(f"{metric.upper()}\n{table.to_string()}")
    return "\n\n".join(blocks)


def write_reports_csv(
    reports: Sequence[ReplicationReport], path, include_timing: bool = False
) -> None:
    """Write one row per replication and method at full precision"""
    frame = pd.DataFrame([report.to_dict(include_timing) for report in reports])
    frame.to_csv(
        path, index=False, float_format="%.17g", lineterminator="\n"
    )

