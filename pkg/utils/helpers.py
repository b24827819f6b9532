"""
Numeric and Runtime Utilities
=============================

Least-squares solvers, seeded random streams, ordered thread fan-out and
logging setup shared by the estimators and the command line.
"""

import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import scipy.linalg

T = TypeVar("T")
R = TypeVar("R")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class LinearAlgebra:
    """Least-squares helpers"""

    RANK_TOLERANCE = 1e-10

    @staticmethod
    def design(x: np.ndarray) -> np.ndarray:
        """Prepend the intercept column to a covariate matrix"""
        return np.column_stack([np.ones(x.shape[0]), x])

    @staticmethod
    def rank(a: np.ndarray, tol: float = RANK_TOLERANCE) -> int:
        """
        Numerical rank from a column-pivoted QR factorization

        Args:
            a (np.ndarray): Matrix of shape (m, q)
            tol (float): Relative threshold on the diagonal of R

        Returns:
            int: Number of diagonal entries of R above tol * |R[0, 0]|
        """
        if a.size == 0:
            return 0
        r = scipy.linalg.qr(a, mode="r", pivoting=True)[0]
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag[0] == 0.0:
            return 0
        return int(np.sum(diag > tol * diag[0]))

    @staticmethod
    def lstsq(
        a: np.ndarray, b: np.ndarray, tol: float = RANK_TOLERANCE
    ) -> Tuple[np.ndarray, int]:
        """
        Solve min ||a c - b|| with a pivoted QR, minimum-norm if rank-deficient

        Args:
            a (np.ndarray): Design matrix of shape (m, q)
            b (np.ndarray): Response of shape (m,)
            tol (float): Relative rank threshold

        Returns:
            Tuple[np.ndarray, int]: Coefficients of shape (q,) and numerical rank
        """
        m, q = a.shape
        if m >= q:
            qmat, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
            diag = np.abs(np.diag(r))
            rank = int(np.sum(diag > tol * diag[0])) if diag[0] > 0 else 0
            if rank == q:
                z = scipy.linalg.solve_triangular(r, qmat.T @ b)
                coef = np.empty(q)
                coef[piv] = z
                return coef, rank
        coef, _, rank, _ = scipy.linalg.lstsq(a, b, cond=tol)
        return coef, int(rank)

    @classmethod
    def ols(cls, x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray, int]:
        """Ordinary least squares with intercept, returns (beta0, beta, rank)"""
        coef, rank = cls.lstsq(cls.design(x), y)
        return float(coef[0]), coef[1:].copy(), rank

    @classmethod
    def wls(
        cls, x: np.ndarray, y: np.ndarray, weights: np.ndarray
    ) -> Tuple[float, np.ndarray]:
        """Weighted least squares with intercept via square-root weighting"""
        sw = np.sqrt(np.maximum(weights, 0.0))
        a = cls.design(x) * sw[:, np.newaxis]
        coef, _ = cls.lstsq(a, y * sw)
        return float(coef[0]), coef[1:].copy()


class RandomStreams:
    """Seeded, scheduling-independent random number streams"""

    @staticmethod
    def stream(seed: int, *index: int) -> np.random.Generator:
        """
        Generator for the unit identified by (seed, *index)

        Two calls with the same arguments return generators producing the
        same sequence, regardless of the thread that uses them.
        """
        return np.random.default_rng([int(seed), *[int(i) for i in index]])

    @staticmethod
    def child_seed(rng: np.random.Generator) -> int:
        """Draw an integer seed for libraries that want an int random_state"""
        return int(rng.integers(0, 2**31 - 1))


def ordered_map(
    func: Callable[[T], R], items: Sequence[T], n_jobs: int = 1
) -> List[R]:
    """
    Apply func to every item, in parallel threads when n_jobs > 1

    Results are returned in input order, so reductions over them do not
    depend on thread scheduling.
    """
    items = list(items)
    if n_jobs is None or n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n_jobs, len(items))) as executor:
        return list(executor.map(func, items))


def default_threads() -> int:
    """Available parallelism for the current process"""
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def configure_logging(
    verbose: bool = False, quiet: bool = False, level: Optional[str] = None
) -> None:
    """
    Install a single stderr handler on the root logger

    Args:
        verbose (bool): Log at DEBUG
        quiet (bool): Log at WARNING
        level (str, optional): Explicit level name, e.g. from NOISY_MOE_LOG_LEVEL
    """
    if level is None:
        level = os.getenv("NOISY_MOE_LOG_LEVEL")
    if verbose:
        resolved = logging.DEBUG
    elif quiet:
        resolved = logging.WARNING
    elif level:
        resolved = getattr(logging, level.upper(), logging.INFO)
    else:
        resolved = logging.INFO

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(resolved)
