"""
Transport Solver Strategy Pattern

This module defines the interface for solving the swept transport system
(I - K) avg(u) = b. Strategies can be switched at runtime to trade a direct
factorization for accelerated or plain iteration.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

try:
    from .sweep import SweepSystem
except ImportError:
    from sweep import SweepSystem


@dataclass
class ScalarFluxSolution:
    """Scalar flux returned by a strategy together with its convergence record."""

    average: np.ndarray
    iterations: int
    residual: float
    strategy: str
    residual_history: List[float] = field(default_factory=list)
    rejected_corrections: int = 0


class TransportSolverStrategy(ABC):
    """
    Abstract base class defining the interface for all transport solvers.
    """

    @abstractmethod
    def solve(self, system: SweepSystem, initial: Optional[np.ndarray] = None) -> ScalarFluxSolution:
        """
        Solve avg(u) = K avg(u) + b.

        Args:
            system: assembled sweep
            initial: starting scalar flux (iterative strategies only)

        Returns:
            ScalarFluxSolution

        Raises:
            IterationLimitError: if an iterative strategy does not converge
        """
        pass

    @abstractmethod
    def set_tolerance(self, tol: float, max_iterations: int):
        """
        Set the stopping rule.

        Args:
            tol: bound on the sup norm of successive changes and of the residual
            max_iterations: iteration cap
        """
        pass

    @abstractmethod
    def get_history(self) -> List[float]:
        """
        Residual history of the most recent solve.

        Returns:
            List of sup-norm residuals, one per iteration
        """
        pass
