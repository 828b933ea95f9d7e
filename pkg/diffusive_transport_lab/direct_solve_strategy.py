"""
Direct Solve Strategy

Factorizes I - K once. Dense LAPACK is used when K is dense enough for the
sparse factorization to lose, sparse LU otherwise.
"""

import logging
import threading
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

try:
    from .errors import ConfigurationError
    from .sweep import SweepSystem
    from .transport_strategy import ScalarFluxSolution, TransportSolverStrategy
except ImportError:
    from errors import ConfigurationError
    from sweep import SweepSystem
    from transport_strategy import ScalarFluxSolution, TransportSolverStrategy


logger = logging.getLogger(__name__)


class DirectSolveStrategy(TransportSolverStrategy):
    """
    Direct solve of (I - K) avg(u) = b.

    The residual of the computed solution is checked against the tolerance and
    logged; a direct solve never raises IterationLimitError.
    """

    def __init__(self, tol: float = 1e-10, dense_fraction: float = 0.2):
        """
        Initialize the direct solver.

        Args:
            tol: residual level above which a warning is logged
            dense_fraction: nnz(K)/n^2 above which the dense path is taken
        """
        if not 0 <= dense_fraction <= 1:
            raise ConfigurationError(f"dense_fraction must be in [0, 1], got {dense_fraction}")
        self.tol = tol
        self.dense_fraction = dense_fraction
        self._history: List[float] = []
        self.lock = threading.Lock()

    def solve(self, system: SweepSystem, initial: Optional[np.ndarray] = None) -> ScalarFluxSolution:
        n = system.size
        density = system.matrix.nnz / float(n * n)
        if density > self.dense_fraction:
            operator = np.eye(n) - system.matrix.toarray()
            average = scipy.linalg.solve(operator, system.rhs)
        else:
            operator = (sp.identity(n, format="csc") - system.matrix).tocsc()
            average = spsolve(operator, system.rhs)
        residual = float(np.max(np.abs(system.residual(average))))
        if residual > self.tol:
            logger.warning("direct solve residual %.3e exceeds tol %.1e", residual, self.tol)
        logger.debug("direct solve: n=%d density=%.3f residual=%.3e", n, density, residual)
        with self.lock:
            self._history = [residual]
        return ScalarFluxSolution(average, 0, residual, self.__class__.__name__, [residual])

    def set_tolerance(self, tol: float, max_iterations: int):
        if tol <= 0:
            raise ConfigurationError(f"tol must be positive, got {tol}")
        self.tol = tol

    def get_history(self) -> List[float]:
        with self.lock:
            return list(self._history)
