"""
Transition Matrix Estimation
============================

Negative log-likelihood of the latent-label transition matrix, its gradient,
and the exponentiated-gradient solver that keeps every column on the simplex
"""

import logging
from typing import Optional

import numpy as np

from models.transition import (
    INIT_UNIFORM,
    EgConfig,
    EgProblem,
    EgResult,
    TransitionMatrix,
)
from utils.exceptions import NonFinite
from utils.validators import ArrayValidator

logger = logging.getLogger(__name__)

DEFAULT_TOL_PER_POINT = 1e-9
RESTORE_AFTER = 5


def _as_array(pi) -> np.ndarray:
    if isinstance(pi, TransitionMatrix):
        return pi.pi
    return np.asarray(pi, dtype=float)


def _denominators(prob: EgProblem, pi: np.ndarray, floor: float) -> np.ndarray:
    # D_i = sum over (k, k~) of pi[k, k~] * gate_post[i, k~] * expert_dens[i, k]
    return np.maximum(np.sum((prob.expert_dens @ pi) * prob.gate_post, axis=1), floor)


def eg_objective(
    prob: EgProblem, pi, density_floor: float = EgConfig.density_floor
) -> float:
    """
    Negative log-likelihood of a transition matrix

    Args:
        prob (EgProblem): Per-observation gate posteriors and expert densities
        pi (TransitionMatrix or np.ndarray): Column-stochastic K x K matrix
        density_floor (float): Lower bound applied to each likelihood term

    Returns:
        float: -sum_i log D_i
    """
    pi = _as_array(pi)
    return float(-np.sum(np.log(_denominators(prob, pi, density_floor))))


def eg_gradient(
    prob: EgProblem, pi, density_floor: float = EgConfig.density_floor
) -> np.ndarray:
    """Gradient of eg_objective, entry (k, k~) = -sum_i g[i, k~] f[i, k] / D_i"""
    pi = _as_array(pi)
    denom = _denominators(prob, pi, density_floor)
    return -(prob.expert_dens / denom[:, np.newaxis]).T @ prob.gate_post


def initial_transition(k: int, cfg: Optional[EgConfig] = None) -> TransitionMatrix:
    """Uniform or diagonal-heavy starting point of the solver"""
    cfg = cfg or EgConfig()
    ArrayValidator.require(k >= 1, "k must be >= 1")
    if k == 1:
        return TransitionMatrix.identity(1)
    if cfg.init == INIT_UNIFORM:
        return TransitionMatrix.uniform(k)
    return _diagonal_matrix(k, cfg.rho)


def corruption_transition(k: int, p0: float) -> TransitionMatrix:
    """Matrix with p0 on the diagonal and (1 - p0)/(K - 1) elsewhere"""
    ArrayValidator.require(k >= 1, "k must be >= 1")
    ArrayValidator.require(0.0 <= p0 <= 1.0, "p0 must be in [0, 1]")
    if k == 1:
        return TransitionMatrix.identity(1)
    return _diagonal_matrix(k, p0)


def _diagonal_matrix(k: int, diagonal: float) -> TransitionMatrix:
    pi = np.full((k, k), (1.0 - diagonal) / (k - 1))
    np.fill_diagonal(pi, diagonal)
    return TransitionMatrix(pi)


class EgSolver:
    """
    Exponentiated-gradient descent over column-stochastic matrices

    The gradient is divided by n so the step size does not depend on the
    sample size. A step that would increase the objective is rejected and the
    step halved; after five accepted steps in a row the step is doubled again,
    never beyond the configured value.
    """

    def __init__(self, cfg: Optional[EgConfig] = None):
        self.cfg = cfg or EgConfig()
        self.logger = logging.getLogger(__name__)

    def solve(
        self, prob: EgProblem, init: Optional[TransitionMatrix] = None
    ) -> EgResult:
        """
        Minimise the transition negative log-likelihood

        Args:
            prob (EgProblem): Problem data
            init (TransitionMatrix, optional): Starting matrix, defaults to
                the configured initialisation

        Returns:
            EgResult: Final matrix, accepted-step objective trace, iteration
                count and convergence flag

        Raises:
            NonFinite: If the gradient is not finite
        """
        cfg = self.cfg
        n = prob.n
        tol = cfg.tol if cfg.tol is not None else DEFAULT_TOL_PER_POINT * n
        pi = (init or initial_transition(prob.k, cfg)).pi.copy()

        objective = eg_objective(prob, pi, cfg.density_floor)
        trace = [objective]
        step = cfg.step
        successes = 0
        converged = False
        n_iter = 0

        while n_iter < cfg.max_iter:
            n_iter += 1
            grad = eg_gradient(prob, pi, cfg.density_floor) / n
            if not np.all(np.isfinite(grad)):
                raise NonFinite(
                    f"Transition gradient is not finite at iteration {n_iter}"
                )

            candidate = self._update(pi, grad, step)
            value = eg_objective(prob, candidate, cfg.density_floor)
            change = objective - value

            if abs(change) < tol:
                if change >= 0:
                    pi, objective = candidate, value
                    trace.append(objective)
                converged = True
                break

            if change < 0:
                step *= 0.5
                successes = 0
                self.logger.debug(f"EG step rejected at {n_iter}, step -> {step:.3g}")
                continue

            pi, objective = candidate, value
            trace.append(objective)
            successes += 1
            if successes >= RESTORE_AFTER:
                step = min(2.0 * step, cfg.step)
                successes = 0

        if not converged:
            self.logger.warning(
                f"EG stopped at max_iter={cfg.max_iter} without meeting tol={tol:.3g}"
            )
        self.logger.info(
            f"EG finished after {n_iter} iterations: objective "
            f"{trace[0]:.6f} -> {trace[-1]:.6f}"
        )
        return EgResult(
            transition=TransitionMatrix(pi),
            trace=trace,
            n_iter=n_iter,
            converged=converged,
            step=step,
        )

    @staticmethod
    def _update(pi: np.ndarray, grad: np.ndarray, step: float) -> np.ndarray:
        exponent = -step * (grad - grad.min(axis=0, keepdims=True))
        scaled = pi * np.exp(exponent)
        sums = scaled.sum(axis=0, keepdims=True)
        # a column whose mass underflowed keeps its previous value
        safe = sums > 0
        out = np.where(safe, scaled / np.where(safe, sums, 1.0), pi)
        return out / out.sum(axis=0, keepdims=True)


def fit_transition(
    prob: EgProblem,
    cfg: Optional[EgConfig] = None,
    init: Optional[TransitionMatrix] = None,
) -> EgResult:
    """Estimate the transition matrix (see EgSolver.solve)"""
    return EgSolver(cfg).solve(prob, init)
