"""
Least Trimmed Squares
=====================

FAST-LTS search for the linear fit minimising the mean of the h smallest
squared residuals, an exact enumeration counterpart, and error-scale
estimation on the retained points
"""

import itertools
import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from models.regression import ErrorFamily, LtsConfig, LtsFit
from utils.exceptions import SingularDesign, TooFewPoints, TooLarge
from utils.helpers import LinearAlgebra, RandomStreams, ordered_map
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**6


def retained_count(alpha: float, m: int, p: int) -> int:
    """
    Retained count h = floor(alpha (m + p + 1)) clamped to [p + 2, m]

    Raises:
        TooFewPoints: If m < p + 2
    """
    if m < p + 2:
        raise TooFewPoints(f"LTS needs at least p + 2 = {p + 2} points, got {m}")
    h = int(math.floor(alpha * (m + p + 1)))
    return min(max(h, p + 2), m)


def ols_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """Least squares with intercept, minimum norm when rank-deficient"""
    beta0, beta, _ = LinearAlgebra.ols(x, y)
    return beta0, beta


def _smallest(sq_residuals: np.ndarray, h: int) -> np.ndarray:
    # stable sort keeps the lowest index first among equal residuals
    return np.sort(np.argsort(sq_residuals, kind="stable")[:h])


def _trimmed_fit(
    x: np.ndarray,
    y: np.ndarray,
    beta0: float,
    beta: np.ndarray,
    h: int,
    converged: bool = False,
) -> LtsFit:
    p = x.shape[1]
    sq = (y - beta0 - x @ beta) ** 2
    retained = _smallest(sq, h)
    return LtsFit(
        beta0=float(beta0),
        beta=np.asarray(beta, dtype=float),
        retained=tuple(int(i) for i in retained),
        h=h,
        objective=float(np.sum(sq[retained]) / (h - p - 1)),
        converged=converged,
    )


def c_step(x: np.ndarray, y: np.ndarray, retained: Sequence[int], h: int) -> LtsFit:
    """
    One concentration step: OLS on the retained points, then keep the h
    points with the smallest squared residuals under that fit

    The fit is marked converged when the retained set does not change.
    """
    idx = np.asarray(retained, dtype=int)
    beta0, beta = ols_fit(x[idx], y[idx])
    fit = _trimmed_fit(x, y, beta0, beta, h)
    if tuple(np.sort(idx).tolist()) == fit.retained:
        fit = LtsFit(fit.beta0, fit.beta, fit.retained, h, fit.objective, True)
    return fit


class LtsEstimator:
    """
    FAST-LTS: random elemental starts, two C-steps each, then the best
    n_keep candidates are concentrated to a fixed point
    """

    def __init__(self, cfg: Optional[LtsConfig] = None):
        self.cfg = cfg or LtsConfig()
        self.logger = logging.getLogger(__name__)

    def fit(self, x: np.ndarray, y: np.ndarray) -> LtsFit:
        """
        Fit the trimmed regression

        Args:
            x (np.ndarray): Covariates, shape (m, p)
            y (np.ndarray): Responses, shape (m,)

        Returns:
            LtsFit: Lowest-objective candidate

        Raises:
            TooFewPoints: If m < p + 2
            SingularDesign: If every elemental start is rank-deficient
        """
        x = ArrayValidator.matrix(x)
        y = ArrayValidator.vector(y, length=x.shape[0])
        m, p = x.shape
        h = retained_count(self.cfg.alpha, m, p)

        if self.cfg.exhaustive:
            return lts_enumerate(x, y, h)

        starts = ordered_map(
            lambda i: self._start(x, y, h, i),
            range(self.cfg.n_starts),
            self.cfg.n_jobs,
        )
        candidates = [(fit, i) for i, fit in enumerate(starts) if fit is not None]
        if not candidates:
            raise SingularDesign(
                f"All {self.cfg.n_starts} elemental starts are rank-deficient"
            )
        self.logger.debug(
            f"LTS m={m} h={h}: {len(candidates)}/{self.cfg.n_starts} usable starts"
        )

        candidates.sort(key=lambda pair: (pair[0].objective, pair[1]))
        kept = [fit for fit, _ in candidates[: self.cfg.n_keep]]
        refined = ordered_map(
            lambda fit: self._concentrate(x, y, fit), kept, self.cfg.n_jobs
        )

        best = refined[0]
        for fit in refined[1:]:
            if fit.objective < best.objective:
                best = fit
        self.logger.debug(
            f"LTS objective {best.objective:.6g} (converged={best.converged})"
        )
        return best

    def _start(
        self, x: np.ndarray, y: np.ndarray, h: int, index: int
    ) -> Optional[LtsFit]:
        m, p = x.shape
        rng = RandomStreams.stream(self.cfg.seed, index)
        subset = rng.choice(m, size=p + 1, replace=False)
        design = LinearAlgebra.design(x[subset])
        if LinearAlgebra.rank(design) < p + 1:
            return None
        coef, _ = LinearAlgebra.lstsq(design, y[subset])
        fit = _trimmed_fit(x, y, coef[0], coef[1:], h)
        for _ in range(2):
            fit = c_step(x, y, fit.retained, h)
        return fit

    def _concentrate(self, x: np.ndarray, y: np.ndarray, fit: LtsFit) -> LtsFit:
        steps = 0
        while not fit.converged and steps < self.cfg.max_csteps:
            fit = c_step(x, y, fit.retained, fit.h)
            steps += 1
        return fit


def lts_fit(x: np.ndarray, y: np.ndarray, cfg: Optional[LtsConfig] = None) -> LtsFit:
    """Least-trimmed-squares fit (see LtsEstimator.fit)"""
    return LtsEstimator(cfg).fit(x, y)


def lts_enumerate(x: np.ndarray, y: np.ndarray, h: int) -> LtsFit:
    """
    Global trimmed-squares optimum by enumerating every h-subset

    Raises:
        TooLarge: If there are more than 10^6 subsets
    """
    x = ArrayValidator.matrix(x)
    y = ArrayValidator.vector(y, length=x.shape[0])
    m, p = x.shape
    if m < p + 2:
        raise TooFewPoints(f"LTS needs at least p + 2 = {p + 2} points, got {m}")
    ArrayValidator.require(p + 2 <= h <= m, f"h must be in [{p + 2}, {m}], got {h}")
    n_subsets = math.comb(m, h)
    if n_subsets > ENUMERATION_LIMIT:
        raise TooLarge(f"C({m}, {h}) = {n_subsets} subsets exceed {ENUMERATION_LIMIT}")

    design = LinearAlgebra.design(x)
    best_ssr, best_coef = np.inf, None
    for subset in itertools.combinations(range(m), h):
        idx = list(subset)
        coef, _ = LinearAlgebra.lstsq(design[idx], y[idx])
        resid = y[idx] - design[idx] @ coef
        ssr = float(resid @ resid)
        if ssr < best_ssr:
            best_ssr, best_coef = ssr, coef
    return _trimmed_fit(x, y, best_coef[0], best_coef[1:], h, converged=True)


def estimate_error_params(
    fit: LtsFit, x: np.ndarray, y: np.ndarray, family=ErrorFamily.GAUSSIAN
) -> Dict[str, float]:
    """
    Maximum-likelihood error parameters on the retained points

    For the Gaussian family sigma^2 is the mean squared retained residual.

    Raises:
        UnsupportedFamily: For any other family
    """
    family = ErrorFamily.parse(family)
    residuals = fit.residuals(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    retained = residuals[fit.retained_indices]
    return {"sigma": float(np.sqrt(np.mean(retained**2)))}

