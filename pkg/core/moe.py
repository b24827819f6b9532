"""
Noisy Mixture of Experts
========================

End-to-end semi-supervised fit: Gaussian mixture on the covariates, trimmed
expert regressions per cluster, transition matrix by exponentiated gradient;
plus the gate, predictions and diagnostics of the fitted model
"""

import dataclasses
import logging
import warnings
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from core.gmm import assign_many, fit_gmm, posterior_matrix, posterior_tilde_z
from core.lts import estimate_error_params, lts_fit, ols_fit
from core.transition import fit_transition
from models.gmm_model import GmmModel
from models.mixture import POOL_ALL, FitDiagnostics, NoisyMoeConfig, NoisyMoeModel
from models.regression import ErrorFamily, ExpertModel, LtsConfig
from models.transition import EgProblem, TransitionMatrix
from utils.exceptions import DimensionMismatch, EmptyCell, ThinClusterWarning
from utils.helpers import ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

SIGMA_FLOOR_REL = 1e-8

FIT_REGULAR = "regular"
FIT_THIN = "thin"
FIT_EMPTY = "empty"


def response_scale(y: np.ndarray) -> float:
    """Standard deviation of the responses, 1 for a constant response"""
    scale = float(np.std(y))
    return scale if scale > 0 else 1.0


def screen_labeled(x: np.ndarray, radius: float) -> np.ndarray:
    """Boolean mask of the rows with Euclidean norm at most radius"""
    x = ArrayValidator.matrix(x)
    ArrayValidator.require(radius > 0, "radius must be > 0")
    return np.linalg.norm(x, axis=1) <= radius


class ClusterExpertFitter:
    """
    One linear expert per cluster of labeled points

    Clusters with at least 2(p + 2) points get a trimmed fit when an LTS
    configuration is given, smaller clusters get ordinary least squares, and
    empty clusters copy the global least-squares fit.
    """

    def __init__(
        self,
        k: int,
        lts: Optional[LtsConfig] = None,
        error_family: ErrorFamily = ErrorFamily.GAUSSIAN,
        sigma_floor_rel: float = SIGMA_FLOOR_REL,
        n_jobs: int = 1,
    ):
        """
        Initialize the fitter

        Args:
            k (int): Number of clusters
            lts (LtsConfig, optional): Trimmed-regression settings; None fits
                every cluster by ordinary least squares
            error_family (ErrorFamily): Expert error distribution
            sigma_floor_rel (float): Sigma floor relative to the response sd
            n_jobs (int): Threads used across clusters
        """
        self.k = k
        self.lts = lts
        self.error_family = ErrorFamily.parse(error_family)
        self.sigma_floor_rel = sigma_floor_rel
        self.n_jobs = n_jobs
        self.logger = logging.getLogger(__name__)

    def fit(
        self, x: np.ndarray, y: np.ndarray, labels: np.ndarray
    ) -> Tuple[List[ExpertModel], FitDiagnostics]:
        """
        Fit the experts

        Args:
            x (np.ndarray): Labeled covariates, shape (n, p)
            y (np.ndarray): Responses, shape (n,)
            labels (np.ndarray): Cluster index of every labeled point

        Returns:
            Tuple[List[ExpertModel], FitDiagnostics]: Experts in cluster order
                and the sizes, retained counts and fallbacks
        """
        p = x.shape[1]
        floor = self.sigma_floor_rel * response_scale(y)
        g_beta0, g_beta = ols_fit(x, y)
        g_sigma = float(np.sqrt(np.mean((y - g_beta0 - x @ g_beta) ** 2)))
        global_fit = (g_beta0, g_beta, g_sigma)

        def fit_cluster(cluster: int):
            idx = np.flatnonzero(labels == cluster)
            return self._fit_one(x[idx], y[idx], p, global_fit)

        results = ordered_map(fit_cluster, range(self.k), self.n_jobs)

        experts, retained, objectives = [], [], []
        thin, empty, floored = [], [], []
        for cluster, result in enumerate(results):
            beta0, beta, sigma, n_kept, objective, kind = result
            if kind == FIT_THIN:
                thin.append(cluster)
                message = (
                    f"Cluster {cluster} has {n_kept} labeled points, "
                    f"fewer than 2(p+2) = {2 * (p + 2)}; fitted without trimming"
                )
                self.logger.warning(message)
                warnings.warn(message, ThinClusterWarning, stacklevel=2)
            elif kind == FIT_EMPTY:
                empty.append(cluster)
                self.logger.warning(
                    f"Cluster {cluster} has no labeled points; using the global fit"
                )
            if sigma < floor:
                floored.append(cluster)
                self.logger.warning(
                    f"Sigma of expert {cluster} floored at {floor:.3g}"
                )
                sigma = floor
            experts.append(
                ExpertModel(
                    beta0=beta0,
                    beta=beta,
                    error_family=self.error_family,
                    theta={"sigma": sigma},
                )
            )
            retained.append(n_kept)
            objectives.append(objective)

        diagnostics = FitDiagnostics(
            cluster_sizes=[int(np.sum(labels == c)) for c in range(self.k)],
            retained_counts=retained,
            thin_clusters=thin,
            empty_clusters=empty,
            sigma_floored=floored,
            lts_objectives=objectives,
        )
        return experts, diagnostics

    def _fit_one(self, xc: np.ndarray, yc: np.ndarray, p: int, global_fit):
        m = xc.shape[0]
        if m == 0:
            beta0, beta, sigma = global_fit
            return beta0, beta, sigma, 0, None, FIT_EMPTY
        if self.lts is None or m < 2 * (p + 2):
            beta0, beta = ols_fit(xc, yc)
            sigma = float(np.sqrt(np.mean((yc - beta0 - xc @ beta) ** 2)))
            kind = FIT_REGULAR if self.lts is None else FIT_THIN
            return beta0, beta, sigma, m, None, kind
        fit = lts_fit(xc, yc, self.lts)
        sigma = estimate_error_params(fit, xc, yc, self.error_family)["sigma"]
        return fit.beta0, fit.beta, sigma, fit.h, fit.objective, FIT_REGULAR


def expert_densities(experts: List[ExpertModel], x: np.ndarray, y: np.ndarray):
    """Gaussian density of every response under every expert, shape (n, K)"""
    means = expert_means_for(experts, x)
    sigmas = np.array([expert.sigma for expert in experts])
    return norm.pdf(y[:, np.newaxis], loc=means, scale=sigmas)


def expert_means_for(experts: List[ExpertModel], x: np.ndarray) -> np.ndarray:
    intercepts = np.array([expert.beta0 for expert in experts])
    slopes = np.stack([expert.beta for expert in experts])
    return intercepts + x @ slopes.T


class NoisyMoeEstimator:
    """
    Semi-supervised estimator of the noisy mixture of experts
    """

    def __init__(self, cfg: Optional[NoisyMoeConfig] = None):
        self.cfg = cfg or NoisyMoeConfig()
        self.logger = logging.getLogger(__name__)

    def fit(
        self,
        x_labeled: np.ndarray,
        y_labeled: np.ndarray,
        x_unlabeled: Optional[np.ndarray],
        k: int,
        gmm: Optional[GmmModel] = None,
    ) -> NoisyMoeModel:
        """
        Fit the mixture, the experts and the transition matrix

        Args:
            x_labeled (np.ndarray): Labeled covariates, shape (n, p)
            y_labeled (np.ndarray): Responses, shape (n,)
            x_unlabeled (np.ndarray, optional): Unlabeled covariates
            k (int): Number of clusters and experts
            gmm (GmmModel, optional): Known covariate mixture; skips the
                mixture fit when given

        Returns:
            NoisyMoeModel: Fitted model with diagnostics
        """
        cfg = self.cfg
        x, y, x_unlabeled, screened = self._inputs(x_labeled, y_labeled, x_unlabeled)
        p = x.shape[1]

        if gmm is None:
            if cfg.gmm_pool == POOL_ALL:
                pool = np.vstack([x, x_unlabeled])
            else:
                pool = x_unlabeled
            self.logger.info(f"Fitting covariate mixture on {pool.shape[0]} points")
            gmm = fit_gmm(pool, dataclasses.replace(cfg.gmm, k=k))
        elif gmm.k != k or gmm.p != p:
            raise DimensionMismatch(
                f"Mixture has k={gmm.k}, p={gmm.p}; expected k={k}, p={p}"
            )

        labels = assign_many(gmm, x)
        fitter = ClusterExpertFitter(
            k,
            lts=dataclasses.replace(cfg.lts, alpha=cfg.alpha),
            error_family=cfg.error_family,
            n_jobs=cfg.n_jobs,
        )
        experts, diagnostics = fitter.fit(x, y, labels)

        problem = EgProblem(
            gate_post=posterior_matrix(gmm, x),
            expert_dens=expert_densities(experts, x, y),
        )
        result = fit_transition(problem, cfg.eg)

        diagnostics = dataclasses.replace(
            diagnostics,
            screened_out=screened,
            eg=result.to_dict(),
            eg_trace=list(result.trace),
        )
        self.logger.info(
            f"Noisy MoE fitted: cluster sizes {diagnostics.cluster_sizes}, "
            f"retained {diagnostics.retained_counts}"
        )
        return NoisyMoeModel(
            gmm=gmm,
            experts=experts,
            transition=result.transition,
            alpha_used=cfg.alpha,
            diagnostics=diagnostics,
        )

    def _inputs(self, x_labeled, y_labeled, x_unlabeled):
        x = ArrayValidator.matrix(x_labeled, name="x_labeled")
        y = ArrayValidator.vector(y_labeled, name="y_labeled", length=x.shape[0])
        ArrayValidator.require(x.shape[0] >= 1, "At least one labeled point is needed")
        p = x.shape[1]
        if x_unlabeled is None:
            x_unlabeled = np.empty((0, p))
        else:
            x_unlabeled = ArrayValidator.matrix(
                x_unlabeled, name="x_unlabeled", n_cols=p
            )

        screened = 0
        if self.cfg.screen_radius is not None:
            keep = screen_labeled(x, self.cfg.screen_radius)
            screened = int(np.sum(~keep))
            x, y = x[keep], y[keep]
            self.logger.info(f"Radius screen dropped {screened} labeled points")
            ArrayValidator.require(
                x.shape[0] >= 1, "Radius screen removed every labeled point"
            )
        return x, y, x_unlabeled, screened


def fit_noisy_moe(
    x_labeled: np.ndarray,
    y_labeled: np.ndarray,
    x_unlabeled: Optional[np.ndarray],
    k: int,
    cfg: Optional[NoisyMoeConfig] = None,
    gmm: Optional[GmmModel] = None,
) -> NoisyMoeModel:
    """Fit the noisy mixture of experts (see NoisyMoeEstimator.fit)"""
    return NoisyMoeEstimator(cfg).fit(x_labeled, y_labeled, x_unlabeled, k, gmm)


def gate(model: NoisyMoeModel, x: np.ndarray) -> np.ndarray:
    """P(Z = k | x) = sum over k~ of pi[k, k~] P(Z~ = k~ | x)"""
    return model.transition.pi @ posterior_tilde_z(model.gmm, x)


def gate_many(model: NoisyMoeModel, x: np.ndarray) -> np.ndarray:
    """Gate of every row, shape (n, K)"""
    return posterior_matrix(model.gmm, x) @ model.transition.pi.T


def expert_means(model, x: np.ndarray) -> np.ndarray:
    """Mean of every expert at every row, shape (n, K)"""
    x = ArrayValidator.matrix(x, n_cols=model.p)
    return expert_means_for(model.experts, x)


def predict(model: NoisyMoeModel, x: np.ndarray) -> float:
    x = ArrayValidator.point(x, model.p)
    means = expert_means_for(model.experts, x[np.newaxis, :])[0]
    return float(gate(model, x) @ means)


def predict_many(model: NoisyMoeModel, x: np.ndarray) -> np.ndarray:
    """Gate-weighted expert means for every row"""
    return np.sum(gate_many(model, x) * expert_means(model, x), axis=1)


def empirical_gamma0(model, x: np.ndarray, z: np.ndarray) -> float:
    """
    Smallest empirical P(Z = k | s(X) = k) over clusters, with s the
    mixture's hard assignment

    Args:
        model: Anything carrying a ``gmm`` (fitted or true model), or a GmmModel
        x (np.ndarray): Covariates
        z (np.ndarray): Supervised latent labels

    Raises:
        EmptyCell: If some cluster receives no points
    """
    gmm = model if isinstance(model, GmmModel) else model.gmm
    x = ArrayValidator.matrix(x, n_cols=gmm.p)
    z = np.asarray(z, dtype=int)
    if z.shape != (x.shape[0],):
        raise DimensionMismatch(f"z has shape {z.shape}, expected ({x.shape[0]},)")
    assigned = assign_many(gmm, x)
    rates = []
    for cluster in range(gmm.k):
        cell = assigned == cluster
        if not np.any(cell):
            raise EmptyCell(f"No point is assigned to cluster {cluster}")
        rates.append(float(np.mean(z[cell] == cluster)))
    return min(rates)


def bayes_rule_diagnostics(
    gmm: GmmModel, x: np.ndarray, tilde_z: np.ndarray, transition: TransitionMatrix
) -> Dict[str, Any]:
    """
    Quality of the hard assignment against the known cluster labels

    Returns a dict with the per-cluster conditional accuracy m, the marginal
    discrepancy r, epsilon = 1 - min m / (1 + r), delta = 1 - min over k~ of
    max over k of pi[k, k~], and the lower bound (1 - epsilon)(1 - delta) on
    the smallest dominant-expert probability.

    Raises:
        EmptyCell: If some cluster label never occurs
    """
    x = ArrayValidator.matrix(x, n_cols=gmm.p)
    tilde_z = np.asarray(tilde_z, dtype=int)
    if tilde_z.shape != (x.shape[0],):
        raise DimensionMismatch("tilde_z must have one label per row of x")
    assigned = assign_many(gmm, x)

    accuracy, discrepancy = [], []
    for cluster in range(gmm.k):
        members = tilde_z == cluster
        if not np.any(members):
            raise EmptyCell(f"Cluster label {cluster} does not occur")
        share = float(np.mean(members))
        accuracy.append(float(np.mean(assigned[members] == cluster)))
        discrepancy.append((float(np.mean(assigned == cluster)) - share) / share)

    accuracy_arr = np.array(accuracy)
    discrepancy_arr = np.array(discrepancy)
    ratio = np.divide(
        accuracy_arr,
        1.0 + discrepancy_arr,
        out=np.zeros_like(accuracy_arr),
        where=(1.0 + discrepancy_arr) > 0,
    )
    epsilon = float(1.0 - np.min(ratio))
    delta = float(1.0 - np.min(np.max(transition.pi, axis=0)))
    return {
        "m": accuracy,
        "r": discrepancy,
        "epsilon": epsilon,
        "delta": delta,
        "gamma0_lower_bound": (1.0 - epsilon) * (1.0 - delta),
    }
