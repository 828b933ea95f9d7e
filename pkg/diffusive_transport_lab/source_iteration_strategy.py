"""
Source Iteration Strategy

Plain fixed-point iteration avg(u) <- K avg(u) + b. The contraction factor
is 1 - O(eps^2) in the diffusive regime, so this is only practical at large
eps or as a reference.
"""

import logging
import threading
from typing import List, Optional

import numpy as np

try:
    from .errors import ConfigurationError, IterationLimitError
    from .sweep import SweepSystem
    from .transport_strategy import ScalarFluxSolution, TransportSolverStrategy
except ImportError:
    from errors import ConfigurationError, IterationLimitError
    from sweep import SweepSystem
    from transport_strategy import ScalarFluxSolution, TransportSolverStrategy


logger = logging.getLogger(__name__)


class SourceIterationStrategy(TransportSolverStrategy):
    """
    Unaccelerated source iteration.
    """

    def __init__(self, tol: float = 1e-10, max_iterations: int = 500):
        """
        Initialize the iteration.

        Args:
            tol: bound on the sup norm of successive scalar-flux changes
            max_iterations: iteration cap
        """
        self.tol = tol
        self.max_iterations = max_iterations
        self._history: List[float] = []
        self.lock = threading.Lock()
        self.set_tolerance(tol, max_iterations)

    def solve(self, system: SweepSystem, initial: Optional[np.ndarray] = None) -> ScalarFluxSolution:
        x = np.zeros(system.size) if initial is None else np.asarray(initial, dtype=float).copy()
        history: List[float] = []
        for iteration in range(1, self.max_iterations + 1):
            gx = system.apply(x)
            change = float(np.max(np.abs(gx - x)))
            history.append(change)
            x = gx
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug("source iteration %d: change %.3e", iteration, change)
            if change < self.tol:
                with self.lock:
                    self._history = history
                residual = float(np.max(np.abs(system.residual(x))))
                return ScalarFluxSolution(x, iteration, residual, self.__class__.__name__, history)
        with self.lock:
            self._history = history
        raise IterationLimitError(
            f"source iteration did not reach tol={self.tol:g} in {self.max_iterations} iterations "
            f"(last change {history[-1]:.3e})",
            residual_history=history,
        )

    def set_tolerance(self, tol: float, max_iterations: int):
        if tol <= 0:
            raise ConfigurationError(f"tol must be positive, got {tol}")
        if max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {max_iterations}")
        self.tol = tol
        self.max_iterations = max_iterations

    def get_history(self) -> List[float]:
        with self.lock:
            return list(self._history)
