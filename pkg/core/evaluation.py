"""
Holdout Evaluation
==================

Repeated random train/test splits of a labeled data set, comparing the
estimators by mean squared test error
"""

import dataclasses
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.baselines import fit_moe_em, fit_moess, predict_moe, predict_moess
from core.gmm import fit_gmm
from core.moe import fit_noisy_moe, predict_many
from core.simbench import METHODS, pe
from models.gmm_model import GmmFitConfig, GmmModel
from models.mixture import GateKind, MoeEmConfig, NoisyMoeConfig
from models.simulation import HoldoutReport
from utils.helpers import RandomStreams, ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)


def standardize(frame: pd.DataFrame) -> pd.DataFrame:
    """Center every column and scale it to unit sample sd (constant columns
    are only centered)"""
    centered = frame - frame.mean()
    scale = frame.std(ddof=1).replace(0.0, 1.0).fillna(1.0)
    return centered / scale


class HoldoutEvaluator:
    """
    Repeated holdout: for each training size and split, n rows are drawn
    without replacement for training and the rest are predicted

    The covariate mixture is fitted once on every row's covariates, since
    only the responses of the test rows are hidden.
    """

    def __init__(
        self,
        k: int,
        methods: Sequence[str] = METHODS,
        reps: int = 10,
        seed: int = 0,
        noisy_cfg: Optional[NoisyMoeConfig] = None,
        moe_cfg: Optional[MoeEmConfig] = None,
        gmm_cfg: Optional[GmmFitConfig] = None,
        n_jobs: int = 1,
    ):
        unknown = [m for m in methods if m not in METHODS]
        ArrayValidator.require(not unknown, f"Unknown methods: {unknown}")
        ArrayValidator.require(reps >= 1, "reps must be >= 1")
        self.k = k
        self.methods = list(methods)
        self.reps = reps
        self.seed = seed
        self.noisy_cfg = noisy_cfg or NoisyMoeConfig()
        self.moe_cfg = moe_cfg or MoeEmConfig()
        self.gmm_cfg = gmm_cfg or GmmFitConfig()
        self.n_jobs = n_jobs
        self.logger = logging.getLogger(__name__)

    def run(
        self, x: np.ndarray, y: np.ndarray, n_train_grid: Sequence[int]
    ) -> Tuple[List[HoldoutReport], pd.DataFrame]:
        """
        Evaluate every method on every (training size, split)

        Args:
            x (np.ndarray): Covariates of all rows
            y (np.ndarray): Responses of all rows
            n_train_grid (Sequence[int]): Training sizes, each smaller than
                the number of rows

        Returns:
            Tuple[List[HoldoutReport], pd.DataFrame]: Reports and summary
        """
        x = ArrayValidator.matrix(x)
        y = ArrayValidator.vector(y, length=x.shape[0])
        n_rows = x.shape[0]
        grid = [int(n) for n in n_train_grid]
        ArrayValidator.require(len(grid) > 0, "n_train_grid must be nonempty")
        ArrayValidator.require(
            all(1 <= n < n_rows for n in grid),
            f"Training sizes must be in [1, {n_rows - 1}]",
        )

        gmm = None
        if {"noisyss", "moess"} & set(self.methods):
            gmm = fit_gmm(
                x, dataclasses.replace(self.gmm_cfg, k=self.k, seed=self.seed)
            )

        units = [(n, rep) for n in grid for rep in range(self.reps)]
        self.logger.info(
            f"Holdout over n={grid}, {self.reps} splits, methods {self.methods}"
        )
        batches = ordered_map(
            lambda unit: self._run_unit(x, y, gmm, *unit), units, self.n_jobs
        )
        reports = [report for batch in batches for report in batch]
        return reports, summarize_holdout(reports)

    def _run_unit(
        self,
        x: np.ndarray,
        y: np.ndarray,
        gmm: Optional[GmmModel],
        n: int,
        rep: int,
    ) -> List[HoldoutReport]:
        rng = RandomStreams.stream(self.seed, rep)
        order = rng.permutation(x.shape[0])
        train, test = order[:n], order[n:]
        method_seed = RandomStreams.child_seed(rng)

        reports = []
        for method in self.methods:
            report = HoldoutReport(
                n_train=n, replication=rep, seed=self.seed, method=method
            )
            try:
                yhat = self._predict(
                    method, x[train], y[train], x[test], gmm, method_seed
                )
                report.pe = pe(y[test], yhat)
            except Exception as e:
                report.status = "failed"
                report.error = f"{type(e).__name__}: {e}"
                self.logger.warning(f"{method} failed at n={n} split {rep}: {e}")
            reports.append(report)
        return reports

    def _predict(self, method, x_train, y_train, x_test, gmm, method_seed):
        if method == "noisyss":
            cfg = dataclasses.replace(
                self.noisy_cfg,
                lts=dataclasses.replace(
                    self.noisy_cfg.lts, seed=method_seed, n_jobs=1
                ),
                n_jobs=1,
            )
            model = fit_noisy_moe(x_train, y_train, None, self.k, cfg, gmm=gmm)
            return predict_many(model, x_test)
        if method == "moess":
            model = fit_moess(x_train, y_train, None, self.k, gmm=gmm)
            return predict_moess(model, x_test)
        kind = GateKind.LINEAR if method == "moeline" else GateKind.QUADRATIC
        cfg = dataclasses.replace(self.moe_cfg, seed=method_seed, n_jobs=1)
        return predict_moe(fit_moe_em(x_train, y_train, self.k, kind, cfg), x_test)


def repeated_holdout(
    x: np.ndarray,
    y: np.ndarray,
    n_train_grid: Sequence[int],
    methods: Sequence[str] = METHODS,
    k: int = 2,
    reps: int = 10,
    seed: int = 0,
    **kwargs,
) -> Tuple[List[HoldoutReport], pd.DataFrame]:
    """Repeated holdout evaluation (see HoldoutEvaluator.run)"""
    evaluator = HoldoutEvaluator(k, methods=methods, reps=reps, seed=seed, **kwargs)
    return evaluator.run(x, y, n_train_grid)


def summarize_holdout(reports: Sequence[HoldoutReport]) -> pd.DataFrame:
    """Mean and standard error of the test error per training size and method"""
    columns = ["n_train", "method", "pe_mean", "pe_se", "n_ok", "n_failed"]
    if not reports:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([report.to_dict() for report in reports])
    rows = []
    for (n, method), group in frame.groupby(["n_train", "method"], sort=False):
        ok = group.loc[group["status"] == "ok", "pe"]
        se = float(ok.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else 0.0
        rows.append(
            {
                "n_train": int(n),
                "method": method,
                "pe_mean": float(ok.mean()) if len(ok) else float("nan"),
                "pe_se": se,
                "n_ok": int(len(ok)),
                "n_failed": int(len(group) - len(ok)),
            }
        )
    return pd.DataFrame(rows, columns=columns)


def format_holdout(summary: pd.DataFrame, digits: int = 3) -> str:
    """Text table of "mean (se)" test errors, rows n_train, columns methods"""
    if summary.empty:
        return "(no results)"
    cells = summary.assign(
        cell=[
            f"{m:.{digits}f} ({s:.{digits}f})"
            for m, s in zip(summary["pe_mean"], summary["pe_se"])
        ]
    )
    table = cells.pivot(index="n_train", columns="method", values="cell")
    table = table.reindex(columns=list(dict.fromkeys(summary["method"])))
    table.columns.name = None
    return f"PE\n{table.to_string()}"
