"""
Transport Solver Context

The context class that holds a transport solver strategy and delegates
solves to it. Allows switching strategies at runtime.
"""

from typing import List, Optional

import numpy as np

try:
    from .sweep import SweepSystem
    from .transport_strategy import ScalarFluxSolution, TransportSolverStrategy
except ImportError:
    from sweep import SweepSystem
    from transport_strategy import ScalarFluxSolution, TransportSolverStrategy


class TransportSolverContext:
    """
    Context class that uses a transport solver strategy.

    Provides a simple interface to switch between direct, plain iterative and
    accelerated solvers at runtime. Delegates all solver operations to the
    underlying strategy.
    """

    def __init__(self, strategy: TransportSolverStrategy):
        """
        Initialize the context with a solver strategy.

        Args:
            strategy: An instance of a TransportSolverStrategy implementation
        """
        self._strategy = strategy

    def set_strategy(self, strategy: TransportSolverStrategy):
        """
        Switch to a different solver strategy.

        Args:
            strategy: An instance of a TransportSolverStrategy implementation
        """
        self._strategy = strategy

    def solve(self, system: SweepSystem, initial: Optional[np.ndarray] = None) -> ScalarFluxSolution:
        """
        Solve the swept system with the current strategy.

        Args:
            system: assembled sweep
            initial: optional starting scalar flux

        Returns:
            ScalarFluxSolution
        """
        return self._strategy.solve(system, initial)

    def set_tolerance(self, tol: float, max_iterations: int):
        """
        Set the stopping rule of the current strategy.

        Args:
            tol: convergence tolerance
            max_iterations: iteration cap
        """
        self._strategy.set_tolerance(tol, max_iterations)

    def get_history(self) -> List[float]:
        """
        Residual history of the most recent solve.

        Returns:
            List of residuals
        """
        return self._strategy.get_history()

    def get_current_strategy(self) -> str:
        """
        Get the name of the current strategy.

        Returns:
            Name of the current strategy class
        """
        return self._strategy.__class__.__name__
