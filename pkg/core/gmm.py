"""
Gaussian Mixture Fitting
========================

EM for a mixture of Gaussians on the covariates, posterior cluster
responsibilities, hard assignment and BIC-based choice of the component count
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus

from models.gmm_model import BicSelection, GmmFitConfig, GmmModel
from utils.exceptions import DegenerateComponent, NoisyMoeError, ValidationError
from utils.helpers import RandomStreams, ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
DEGENERATE_MASS = 1e-8
RELATIVE_FLOOR = 1e-6


def log_density_matrix(m: GmmModel, x: np.ndarray) -> np.ndarray:
    """
    Log weight plus Gaussian log density of every row under every component

    Args:
        m (GmmModel): Mixture
        x (np.ndarray): Covariates, shape (n, p)

    Returns:
        np.ndarray: Matrix of shape (n, K)
    """
    x = ArrayValidator.matrix(x, n_cols=m.p)
    out = np.empty((x.shape[0], m.k))
    for k, chol in enumerate(m.cholesky_factors):
        diff = (x - m.means[k]).T
        sol = scipy.linalg.solve_triangular(chol, diff, lower=True)
        maha = np.sum(sol * sol, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, k] = m.log_weights[k] - 0.5 * (m.p * LOG_2PI + log_det + maha)
    return out


def posterior_matrix(m: GmmModel, x: np.ndarray) -> np.ndarray:
    """Responsibilities P(Z~ = k | x) for every row, shape (n, K)"""
    log_dens = log_density_matrix(m, x)
    post = np.exp(log_dens - logsumexp(log_dens, axis=1, keepdims=True))
    return post / post.sum(axis=1, keepdims=True)


def posterior_tilde_z(m: GmmModel, x: np.ndarray) -> np.ndarray:
    """Responsibilities of a single covariate vector, shape (K,)"""
    x = ArrayValidator.point(x, m.p)
    return posterior_matrix(m, x[np.newaxis, :])[0]


def assign(m: GmmModel, x: np.ndarray) -> int:
    """Most probable component for x, ties broken by the lowest index"""
    return int(np.argmax(posterior_tilde_z(m, x)))


def assign_many(m: GmmModel, x: np.ndarray) -> np.ndarray:
    """Most probable component for every row, ties broken by the lowest index"""
    return np.argmax(posterior_matrix(m, x), axis=1)


def gmm_log_likelihood(m: GmmModel, x: np.ndarray) -> float:
    """Observed-data log-likelihood of the rows under the mixture"""
    return float(np.sum(logsumexp(log_density_matrix(m, x), axis=1)))


class GmmFitter:
    """
    EM with k-means++ restarts for a full-covariance Gaussian mixture
    """

    def __init__(self, cfg: Optional[GmmFitConfig] = None):
        """
        Initialize the fitter

        Args:
            cfg (GmmFitConfig, optional): Fit settings, defaults to GmmFitConfig()
        """
        self.cfg = cfg or GmmFitConfig()
        self.logger = logging.getLogger(__name__)

    def fit(self, x: np.ndarray) -> GmmModel:
        """
        Fit the mixture and keep the best restart

        Args:
            x (np.ndarray): Covariates, shape (N, p)

        Returns:
            GmmModel: Restart with the highest log-likelihood, converged
                restarts preferred

        Raises:
            ValidationError: If N < k (p + 1)
            DegenerateComponent: If every restart collapses
        """
        x = ArrayValidator.matrix(x)
        n, p = x.shape
        k = self.cfg.k
        if n < k * (p + 1):
            raise ValidationError(
                f"{k} components need at least k(p+1) = {k * (p + 1)} points, got {n}"
            )

        global_cov = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
        floor = self._cov_floor(global_cov)
        self.logger.info(
            f"Fitting {k}-component GMM on {n} points "
            f"({self.cfg.n_restarts} restarts, cov_floor={floor:.3g})"
        )

        def run(restart: int):
            try:
                return self._fit_restart(x, global_cov, floor, restart)
            except DegenerateComponent as e:
                self.logger.warning(f"GMM restart {restart} failed: {e}")
                return e

        results = ordered_map(run, range(self.cfg.n_restarts), self.cfg.n_jobs)
        fitted = [r for r in results if isinstance(r, GmmModel)]
        if not fitted:
            raise DegenerateComponent(
                f"All {self.cfg.n_restarts} GMM restarts collapsed: {results[-1]}"
            )

        pool = [m for m in fitted if m.converged] or fitted
        best = pool[0]
        for model in pool[1:]:
            if model.log_likelihood > best.log_likelihood:
                best = model
        self.logger.info(
            f"GMM fit done: log-likelihood {best.log_likelihood:.6f} "
            f"after {best.n_iter} iterations (converged={best.converged})"
        )
        return best

    def _cov_floor(self, global_cov: np.ndarray) -> float:
        if self.cfg.cov_floor is not None:
            return float(self.cfg.cov_floor)
        floor = RELATIVE_FLOOR * float(np.mean(np.diag(global_cov)))
        return floor if floor > 0 else RELATIVE_FLOOR

    def _fit_restart(
        self, x: np.ndarray, global_cov: np.ndarray, floor: float, restart: int
    ) -> GmmModel:
        n, p = x.shape
        k = self.cfg.k
        rng = RandomStreams.stream(self.cfg.seed, restart)
        ridge = floor * np.eye(p)

        means, _ = kmeans_plusplus(x, k, random_state=RandomStreams.child_seed(rng))
        weights = np.full(k, 1.0 / k)
        covariances = np.repeat((global_cov + ridge)[np.newaxis], k, axis=0)
        model = self._model(weights, means, covariances)
        log_dens = log_density_matrix(model, x)

        reseeded = False
        trace: List[float] = [float(np.sum(logsumexp(log_dens, axis=1)))]
        converged = False
        n_iter = 0
        while n_iter < self.cfg.max_iter:
            n_iter += 1
            lse = logsumexp(log_dens, axis=1, keepdims=True)
            resp = np.exp(log_dens - lse)
            mass = resp.sum(axis=0)

            weak = np.flatnonzero(mass < DEGENERATE_MASS * n)
            if weak.size:
                if reseeded:
                    raise DegenerateComponent(
                        f"Component {int(weak[0])} collapsed again after re-seeding"
                    )
                reseeded = True
                worst = int(np.argmin(lse[:, 0]))
                self.logger.warning(
                    f"Re-seeding collapsed component {int(weak[0])} at point {worst}"
                )
                means = model.means.copy()
                covariances = model.covariances.copy()
                weights = model.weights.copy()
                for j in weak:
                    means[j] = x[worst]
                    covariances[j] = global_cov + ridge
                    weights[j] = 1.0 / k
                model = self._model(weights / weights.sum(), means, covariances)
                log_dens = log_density_matrix(model, x)
                trace = [float(np.sum(logsumexp(log_dens, axis=1)))]
                continue

            weights = mass / n
            means = (resp.T @ x) / mass[:, np.newaxis]
            covariances = np.empty((k, p, p))
            for j in range(k):
                diff = x - means[j]
                cov = (resp[:, j, np.newaxis] * diff).T @ diff / mass[j]
                covariances[j] = 0.5 * (cov + cov.T) + ridge
            model = self._model(weights, means, covariances)
            log_dens = log_density_matrix(model, x)

            ll = float(np.sum(logsumexp(log_dens, axis=1)))
            previous = trace[-1]
            trace.append(ll)
            self.logger.debug(f"restart {restart} iteration {n_iter}: {ll:.10f}")
            if abs(ll - previous) <= self.cfg.tol * abs(previous):
                converged = True
                break

        return GmmModel(
            weights=model.weights,
            means=model.means,
            covariances=model.covariances,
            log_likelihood=trace[-1],
            n_iter=n_iter,
            converged=converged,
            trace=trace,
        )

    @staticmethod
    def _model(weights, means, covariances) -> GmmModel:
        model = GmmModel(weights=weights, means=means, covariances=covariances)
        try:
            model.cholesky_factors
        except ValidationError as e:
            raise DegenerateComponent(str(e)) from e
        return model


def fit_gmm(x: np.ndarray, cfg: Optional[GmmFitConfig] = None) -> GmmModel:
    """Fit a Gaussian mixture by EM (see GmmFitter.fit)"""
    return GmmFitter(cfg).fit(x)


def bic(m: GmmModel, log_likelihood: float, n: int) -> float:
    """-2 log L + (number of free parameters) log n"""
    return -2.0 * log_likelihood + m.n_parameters * np.log(n)


def select_k_bic(
    x: np.ndarray,
    k_candidates: Sequence[int],
    cfg: Optional[GmmFitConfig] = None,
    threshold: float = 0.02,
) -> BicSelection:
    """
    Fit every candidate component count and suggest the BIC elbow

    The suggestion is the smallest k whose relative BIC improvement to the
    next successful candidate is below threshold, or the last candidate.

    Args:
        x (np.ndarray): Covariates
        k_candidates (Sequence[int]): Component counts to try
        cfg (GmmFitConfig, optional): Settings other than k
        threshold (float): Relative improvement threshold

    Returns:
        BicSelection: Full table and suggestion

    Raises:
        ValidationError: If there are no candidates
        NoisyMoeError: The last fit error if every candidate failed
    """
    if not k_candidates:
        raise ValidationError("k_candidates must be nonempty")
    x = ArrayValidator.matrix(x)
    base = (cfg or GmmFitConfig()).to_dict()

    rows = []
    last_error: Optional[NoisyMoeError] = None
    for k in sorted(set(int(c) for c in k_candidates)):
        try:
            model = fit_gmm(x, GmmFitConfig.from_dict({**base, "k": k}))
        except NoisyMoeError as e:
            logger.warning(f"BIC candidate k={k} failed: {e}")
            last_error = e
            rows.append(
                {
                    "k": k,
                    "bic": None,
                    "log_likelihood": None,
                    "n_parameters": None,
                    "error": str(e),
                }
            )
            continue
        rows.append(
            {
                "k": k,
                "bic": bic(model, model.log_likelihood, x.shape[0]),
                "log_likelihood": model.log_likelihood,
                "n_parameters": model.n_parameters,
                "error": None,
            }
        )

    ok = [row for row in rows if row["error"] is None]
    if not ok:
        raise last_error
    suggested = ok[-1]["k"]
    for current, following in zip(ok, ok[1:]):
        improvement = (current["bic"] - following["bic"]) / abs(current["bic"])
        if improvement < threshold:
            suggested = current["k"]
            break
    logger.info(f"BIC elbow suggests k={suggested}")
    return BicSelection(rows=rows, suggested_k=suggested, threshold=threshold)
