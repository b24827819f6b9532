"""
Baseline Mixtures of Experts
============================

Comparison estimators: the semi-supervised mixture of experts with
untrimmed per-cluster least squares (MoESS) and the supervised mixture of
experts with a linear or quadratic softmax gate fitted by EM
"""

import dataclasses
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import log_softmax, logsumexp, softmax
from scipy.stats import norm
from sklearn.cluster import KMeans

from core.gmm import assign_many, fit_gmm, posterior_matrix
from core.lts import ols_fit
from core.moe import ClusterExpertFitter, expert_means_for, response_scale
from models.gmm_model import GmmFitConfig, GmmModel
from models.mixture import POOL_ALL, GateKind, MoeEmConfig, MoeModel, MoessModel
from models.regression import ExpertModel
from utils.exceptions import DimensionMismatch, ValidationError
from utils.helpers import LinearAlgebra, RandomStreams, ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

LINE_SEARCH_HALVINGS = 30


def fit_moess(
    x_labeled: np.ndarray,
    y_labeled: np.ndarray,
    x_unlabeled: Optional[np.ndarray],
    k: int,
    gmm_cfg: Optional[GmmFitConfig] = None,
    gmm: Optional[GmmModel] = None,
    gmm_pool: str = POOL_ALL,
    n_jobs: int = 1,
) -> MoessModel:
    """
    Semi-supervised mixture of experts with one least-squares expert per
    mixture cluster

    Args:
        x_labeled (np.ndarray): Labeled covariates, shape (n, p)
        y_labeled (np.ndarray): Responses
        x_unlabeled (np.ndarray, optional): Unlabeled covariates
        k (int): Number of clusters
        gmm_cfg (GmmFitConfig, optional): Mixture settings (k is overridden)
        gmm (GmmModel, optional): Known covariate mixture
        gmm_pool (str): "all" or "unlabeled-only"
        n_jobs (int): Threads across clusters

    Returns:
        MoessModel: Fitted model
    """
    x = ArrayValidator.matrix(x_labeled, name="x_labeled")
    y = ArrayValidator.vector(y_labeled, name="y_labeled", length=x.shape[0])
    p = x.shape[1]
    if gmm is None:
        if x_unlabeled is None:
            x_unlabeled = np.empty((0, p))
        x_unlabeled = ArrayValidator.matrix(
            x_unlabeled, name="x_unlabeled", n_cols=p
        )
        pool = np.vstack([x, x_unlabeled]) if gmm_pool == POOL_ALL else x_unlabeled
        gmm = fit_gmm(pool, dataclasses.replace(gmm_cfg or GmmFitConfig(), k=k))
    elif gmm.k != k or gmm.p != p:
        raise DimensionMismatch(
            f"Mixture has k={gmm.k}, p={gmm.p}; expected k={k}, p={p}"
        )

    experts, diagnostics = ClusterExpertFitter(k, lts=None, n_jobs=n_jobs).fit(
        x, y, assign_many(gmm, x)
    )
    logger.info(f"MoESS fitted: cluster sizes {diagnostics.cluster_sizes}")
    return MoessModel(gmm=gmm, experts=experts, diagnostics=diagnostics)


def gate_moess(model: MoessModel, x: np.ndarray) -> np.ndarray:
    """Mixture posterior of every row, shape (n, K)"""
    return posterior_matrix(model.gmm, x)


def predict_moess(model: MoessModel, x: np.ndarray) -> np.ndarray:
    """Posterior-weighted expert means for every row"""
    x = ArrayValidator.matrix(x, n_cols=model.p)
    return np.sum(gate_moess(model, x) * expert_means_for(model.experts, x), axis=1)


def gate_features(x: np.ndarray, kind: GateKind) -> np.ndarray:
    """
    Gate design matrix

    Linear: (1, x). Quadratic: (1, x, x_i x_j for i <= j) with the products
    in row-major upper-triangular order.
    """
    x = ArrayValidator.matrix(x)
    kind = GateKind(kind)
    columns = [np.ones((x.shape[0], 1)), x]
    if kind is GateKind.QUADRATIC:
        rows, cols = np.triu_indices(x.shape[1])
        columns.append(x[:, rows] * x[:, cols])
    return np.hstack(columns)


def gate_moe(model: MoeModel, x: np.ndarray) -> np.ndarray:
    """Softmax gate of every row, shape (n, K)"""
    x = ArrayValidator.matrix(x, n_cols=model.p)
    return softmax(gate_features(x, model.gate_kind) @ model.gate_params.T, axis=1)


def predict_moe(model: MoeModel, x: np.ndarray) -> np.ndarray:
    """Gate-weighted expert means for every row"""
    x = ArrayValidator.matrix(x, n_cols=model.p)
    return np.sum(gate_moe(model, x) * expert_means_for(model.experts, x), axis=1)


def moe_log_likelihood(model: MoeModel, x: np.ndarray, y: np.ndarray) -> float:
    """Observed-data log-likelihood of (x, y) under the gated mixture"""
    features = gate_features(x, model.gate_kind)
    coef = np.stack([expert.coefficients for expert in model.experts])
    sigma = np.array([expert.sigma for expert in model.experts])
    log_comp = _log_components(features, model.gate_params, x, y, coef, sigma)
    return float(np.sum(logsumexp(log_comp, axis=1)))


def _log_components(features, gate_params, x, y, coef, sigma) -> np.ndarray:
    log_gate = log_softmax(features @ gate_params.T, axis=1)
    means = coef[:, 0] + x @ coef[:, 1:].T
    return log_gate + norm.logpdf(y[:, np.newaxis], loc=means, scale=sigma)


class MoeEmFitter:
    """
    EM for the supervised mixture of experts

    The E-step computes responsibilities; the M-step solves weighted least
    squares per expert, sets sigma^2 to the weighted residual mean square and
    improves the gate by damped Newton steps on the responsibility-weighted
    multinomial log-likelihood. Gate steps only ever increase that
    log-likelihood, so the observed log-likelihood never decreases.
    """

    def __init__(self, cfg: Optional[MoeEmConfig] = None):
        self.cfg = cfg or MoeEmConfig()
        self.logger = logging.getLogger(__name__)

    def fit(self, x: np.ndarray, y: np.ndarray, k: int, gate_kind) -> MoeModel:
        """
        Fit by EM from several k-means starts and keep the best

        Args:
            x (np.ndarray): Labeled covariates, shape (n, p)
            y (np.ndarray): Responses
            k (int): Number of experts
            gate_kind (GateKind or str): "linear" or "quadratic"

        Returns:
            MoeModel: Restart with the highest log-likelihood

        Raises:
            ValidationError: If n < k (p + 2)
        """
        x = ArrayValidator.matrix(x)
        y = ArrayValidator.vector(y, length=x.shape[0])
        gate_kind = GateKind(gate_kind)
        n, p = x.shape
        if n < k * (p + 2):
            raise ValidationError(
                f"MoE with k={k} needs at least k(p+2) = {k * (p + 2)} points, got {n}"
            )
        self.logger.info(
            f"Fitting {gate_kind.value} MoE with k={k} on {n} points "
            f"({self.cfg.n_restarts} restarts)"
        )
        fits = ordered_map(
            lambda r: self._fit_restart(x, y, k, gate_kind, r),
            range(self.cfg.n_restarts),
            self.cfg.n_jobs,
        )
        best = fits[0]
        for model in fits[1:]:
            if model.log_likelihood > best.log_likelihood:
                best = model
        self.logger.info(f"MoE EM log-likelihood {best.log_likelihood:.6f}")
        return best

    def _fit_restart(
        self, x: np.ndarray, y: np.ndarray, k: int, kind: GateKind, restart: int
    ) -> MoeModel:
        cfg = self.cfg
        floor = cfg.sigma_floor_rel * response_scale(y)
        features = gate_features(x, kind)
        coef, sigma = self._initial_experts(x, y, k, restart)
        sigma_floored = bool(np.any(sigma < floor))
        sigma = np.maximum(sigma, floor)
        gate_params = np.zeros((k, features.shape[1]))

        log_comp = _log_components(features, gate_params, x, y, coef, sigma)
        trace = [float(np.sum(logsumexp(log_comp, axis=1)))]
        for iteration in range(1, cfg.max_iter + 1):
            resp = np.exp(log_comp - logsumexp(log_comp, axis=1, keepdims=True))

            for j in range(k):
                weights = resp[:, j]
                if weights.sum() <= 0:
                    continue
                beta0, beta = LinearAlgebra.wls(x, y, weights)
                coef[j] = np.concatenate([[beta0], beta])
                resid = y - beta0 - x @ beta
                s = float(np.sqrt(np.sum(weights * resid**2) / weights.sum()))
                if s < floor:
                    sigma_floored = True
                    s = floor
                sigma[j] = s
            if k > 1:
                gate_params = self._gate_step(features, resp, gate_params)

            log_comp = _log_components(features, gate_params, x, y, coef, sigma)
            ll = float(np.sum(logsumexp(log_comp, axis=1)))
            previous = trace[-1]
            trace.append(ll)
            self.logger.debug(f"MoE restart {restart} iteration {iteration}: {ll:.8f}")
            if abs(ll - previous) <= cfg.tol * abs(previous):
                break

        experts = [
            ExpertModel(
                beta0=coef[j, 0], beta=coef[j, 1:], theta={"sigma": float(sigma[j])}
            )
            for j in range(k)
        ]
        return MoeModel(
            gate_kind=kind,
            gate_params=gate_params,
            experts=experts,
            log_likelihood=trace[-1],
            trace=trace,
            sigma_floored=sigma_floored,
        )

    def _initial_experts(
        self, x: np.ndarray, y: np.ndarray, k: int, restart: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        p = x.shape[1]
        rng = RandomStreams.stream(self.cfg.seed, restart)
        if k == 1:
            labels = np.zeros(x.shape[0], dtype=int)
        else:
            km = KMeans(
                n_clusters=k, n_init=1, random_state=RandomStreams.child_seed(rng)
            )
            labels = km.fit(x).labels_

        g_beta0, g_beta = ols_fit(x, y)
        coef = np.empty((k, p + 1))
        sigma = np.empty(k)
        for j in range(k):
            idx = np.flatnonzero(labels == j)
            if idx.size == 0:
                beta0, beta = g_beta0, g_beta
                idx = np.arange(x.shape[0])
            else:
                beta0, beta = ols_fit(x[idx], y[idx])
            coef[j] = np.concatenate([[beta0], beta])
            sigma[j] = np.sqrt(np.mean((y[idx] - beta0 - x[idx] @ beta) ** 2))
        return coef, sigma

    def _gate_step(
        self, features: np.ndarray, resp: np.ndarray, gate_params: np.ndarray
    ) -> np.ndarray:
        """Damped Newton iterations on the free rows (1..K-1) of the gate"""
        k, d = gate_params.shape
        params = gate_params.copy()
        value = _gate_objective(features, resp, params)

        for _ in range(self.cfg.irls_iter):
            probs = softmax(features @ params.T, axis=1)
            grad = ((resp - probs)[:, 1:].T @ features).ravel()

            size = (k - 1) * d
            hessian = np.empty((size, size))
            for a in range(1, k):
                for b in range(a, k):
                    w = probs[:, a] * ((a == b) - probs[:, b])
                    block = features.T @ (w[:, np.newaxis] * features)
                    ra, rb = (a - 1) * d, (b - 1) * d
                    hessian[ra : ra + d, rb : rb + d] = block
                    hessian[rb : rb + d, ra : ra + d] = block.T
            hessian[np.diag_indices(size)] += self.cfg.ridge
            try:
                direction = scipy.linalg.solve(hessian, grad, assume_a="sym")
            except (scipy.linalg.LinAlgError, ValueError):
                direction = scipy.linalg.lstsq(hessian, grad)[0]
            if not np.all(np.isfinite(direction)):
                break

            step = 1.0
            improved = False
            for _ in range(LINE_SEARCH_HALVINGS):
                candidate = params.copy()
                candidate[1:] += step * direction.reshape(k - 1, d)
                candidate_value = _gate_objective(features, resp, candidate)
                if candidate_value > value:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            gain = candidate_value - value
            params, value = candidate, candidate_value
            if gain <= 1e-12 * abs(value):
                break
        return params


def _gate_objective(
    features: np.ndarray, resp: np.ndarray, params: np.ndarray
) -> float:
    return float(np.sum(resp * log_softmax(features @ params.T, axis=1)))


def fit_moe_em(
    x: np.ndarray,
    y: np.ndarray,
    k: int,
    gate_kind=GateKind.LINEAR,
    cfg: Optional[MoeEmConfig] = None,
) -> MoeModel:
    """Supervised mixture of experts by EM (see MoeEmFitter.fit)"""
    return MoeEmFitter(cfg).fit(x, y, k, gate_kind)
