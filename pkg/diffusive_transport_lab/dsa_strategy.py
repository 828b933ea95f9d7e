"""
Diffusion Synthetic Acceleration Strategy

Each iteration sweeps once, then corrects the scalar flux by a diffusion solve

    -(eps^2/d) Lap delta = K x_half + b - x_half,    delta + lam*eps d(delta)/dn = 0,

with d the dimension and lam the Marshak extrapolation factor (pi/4 on the
circle, 2/3 on the sphere). The diffusion operator is the small-eps limit of
I - K, so the slowly converging smooth error modes are removed in one step.
A correction that increases the residual is rejected.
"""

import logging
import threading
from typing import List, Optional

import numpy as np

try:
    from .errors import ConfigurationError, IterationLimitError
    from .interior import PolarFourierSolver
    from .sweep import SweepSystem
    from .transport_strategy import ScalarFluxSolution, TransportSolverStrategy
except ImportError:
    from errors import ConfigurationError, IterationLimitError
    from interior import PolarFourierSolver
    from sweep import SweepSystem
    from transport_strategy import ScalarFluxSolution, TransportSolverStrategy


logger = logging.getLogger(__name__)

MARSHAK_FACTOR = {2: np.pi / 4.0, 3: 2.0 / 3.0}


class DiffusionSyntheticStrategy(TransportSolverStrategy):
    """
    Source iteration with a diffusion-synthetic correction after every sweep.
    """

    def __init__(self, tol: float = 1e-10, max_iterations: int = 500, extrapolation: Optional[float] = None):
        """
        Initialize the accelerated iteration.

        Args:
            tol: bound on successive changes and on the residual (sup norm)
            max_iterations: iteration cap
            extrapolation: Robin length in units of eps; defaults to the
                Marshak value of the dimension
        """
        if extrapolation is not None and extrapolation <= 0:
            raise ConfigurationError(f"extrapolation must be positive, got {extrapolation}")
        self.extrapolation = extrapolation
        self._history: List[float] = []
        self.lock = threading.Lock()
        self.set_tolerance(tol, max_iterations)

    def diffusion_solver(self, system: SweepSystem) -> PolarFourierSolver:
        grid = system.grid
        lam = MARSHAK_FACTOR[grid.dimension] if self.extrapolation is None else self.extrapolation
        return PolarFourierSolver(
            grid.domain,
            grid.radii,
            grid.faces_r,
            grid.n_theta,
            diffusion=grid.eps ** 2 / grid.dimension,
            robin_length=lam * grid.eps,
        )

    def solve(self, system: SweepSystem, initial: Optional[np.ndarray] = None) -> ScalarFluxSolution:
        solver = self.diffusion_solver(system)
        x = np.zeros(system.size) if initial is None else np.asarray(initial, dtype=float).copy()
        res = system.residual(x)
        history: List[float] = []
        rejected = 0
        for iteration in range(1, self.max_iterations + 1):
            x_half = x + res
            res_half = system.residual(x_half)
            candidate = x_half + solver.solve(res_half).ravel()
            res_new = system.residual(candidate)
            if np.max(np.abs(res_new)) > np.max(np.abs(res_half)):
                rejected += 1
                if rejected == 1:
                    logger.warning("diffusion correction increased the residual at iteration %d; rejected", iteration)
                candidate, res_new = x_half, res_half
            change = float(np.max(np.abs(candidate - x)))
            residual = float(np.max(np.abs(res_new)))
            history.append(residual)
            x, res = candidate, res_new
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug("DSA iteration %d: change %.3e residual %.3e", iteration, change, residual)
            if change < self.tol and residual < self.tol:
                with self.lock:
                    self._history = history
                return ScalarFluxSolution(x, iteration, residual, self.__class__.__name__, history, rejected)
        with self.lock:
            self._history = history
        raise IterationLimitError(
            f"DSA iteration did not reach tol={self.tol:g} in {self.max_iterations} iterations "
            f"(last residual {history[-1]:.3e})",
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
