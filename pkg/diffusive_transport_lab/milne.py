"""
Half-space Milne problem

    sin(phi) dPhi/deta + Phi - avg(Phi) = 0,   Phi(0, w) = g(w) for sin(phi) > 0

solved on a graded, truncated eta mesh. Each direction is swept exactly against
a piecewise-linear scattering source, which makes one sweep an affine map
avg(Phi) -> K avg(Phi) + f. K depends only on the mesh, the angular grid and the
far-field closure, so a `MilneOperator` is built once and reused for every
boundary point.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

try:
    from .errors import ConfigurationError, IterationLimitError
    from .quadgeom import AngularGrid
except ImportError:
    from errors import ConfigurationError, IterationLimitError
    from quadgeom import AngularGrid


logger = logging.getLogger(__name__)

CLOSURES = ("isotropic", "specular")


def graded_eta_mesh(height: float = 30.0, first_step: float = 0.01, ratio: float = 1.1, max_step: float = 0.5) -> np.ndarray:
    """Mesh on [0, height] growing geometrically from `first_step` up to `max_step`, then uniform."""
    if height <= 0 or first_step <= 0 or ratio < 1 or max_step < first_step:
        raise ConfigurationError(
            f"invalid eta mesh parameters height={height}, first_step={first_step}, ratio={ratio}, max_step={max_step}"
        )
    nodes = [0.0]
    step = first_step
    while nodes[-1] + step < height - 0.5 * min(step, max_step):
        nodes.append(nodes[-1] + step)
        step = min(step * ratio, max_step)
    nodes.append(height)
    return np.asarray(nodes)


class AndersonMixer:
    """
    Type-II Anderson acceleration of a fixed-point map x -> G(x).

    Keeps the last `depth` differences of iterates and residuals and mixes them
    by an unconstrained least-squares fit.
    """

    def __init__(self, depth: int = 5, relaxation: float = 1.0):
        if depth < 0:
            raise ConfigurationError("Anderson depth must be >= 0")
        if not 0 < relaxation <= 1:
            raise ConfigurationError("Anderson relaxation must be in (0, 1]")
        self.depth = depth
        self.relaxation = relaxation
        self._g_prev: Optional[np.ndarray] = None
        self._f_prev: Optional[np.ndarray] = None
        self._dg: List[np.ndarray] = []
        self._df: List[np.ndarray] = []

    def __call__(self, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
        f = gx - x
        if self._f_prev is not None and self.depth > 0:
            self._dg.append(gx - self._g_prev)
            self._df.append(f - self._f_prev)
            if len(self._df) > self.depth:
                self._dg.pop(0)
                self._df.pop(0)
        self._g_prev, self._f_prev = gx.copy(), f.copy()
        if not self._df:
            return x + self.relaxation * f
        dF = np.column_stack(self._df)
        dG = np.column_stack(self._dg)
        gamma = np.linalg.lstsq(dF, f, rcond=None)[0]
        mixed_g = gx - dG @ gamma
        mixed_x = x - (np.column_stack([dg - df for dg, df in zip(self._dg, self._df)]) @ gamma)
        return (1.0 - self.relaxation) * mixed_x + self.relaxation * mixed_g


def _characteristic_weights(tau: np.ndarray):
    """Exact weights for Phi_out = a*Phi_in + b*q_in + c*q_out with q linear over the cell."""
    one_minus = -np.expm1(-tau)
    a = 1.0 - one_minus
    ratio = one_minus / tau
    c = 1.0 - ratio
    b = ratio - a
    return a, b, c


@dataclass
class MilneProblem:
    """
    Incoming data and discretization of one Milne problem.

    Args:
        grid: angular grid (directions with sin(phi) > 0 are incoming)
        incoming: g sampled on the incoming nodes, in grid order
        eta: mesh on [0, H], strictly increasing from 0
        closure: far-field closure at eta = H ("isotropic" or "specular")
    """

    grid: AngularGrid
    incoming: np.ndarray
    eta: np.ndarray = field(default_factory=graded_eta_mesh)
    closure: str = "isotropic"

    def __post_init__(self):
        self.incoming = np.asarray(self.incoming, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        n_in = int(np.count_nonzero(self.grid.incoming))
        if self.incoming.shape != (n_in,):
            raise ConfigurationError(f"incoming data must have {n_in} entries, got shape {self.incoming.shape}")
        if not np.all(np.isfinite(self.incoming)):
            raise ConfigurationError("incoming data must be finite")
        if self.eta.ndim != 1 or self.eta.size < 2 or self.eta[0] != 0.0 or np.any(np.diff(self.eta) <= 0):
            raise ConfigurationError("eta mesh must be strictly increasing and start at 0")
        if self.closure not in CLOSURES:
            raise ConfigurationError(f"closure must be one of {CLOSURES}, got {self.closure!r}")

    @classmethod
    def from_function(cls, grid: AngularGrid, g: Callable, eta: Optional[np.ndarray] = None, closure: str = "isotropic") -> "MilneProblem":
        """Sample g(phi, psi) on the incoming nodes; psi is None in 2D."""
        mask = grid.incoming
        psi = None if grid.psi is None else grid.psi[mask]
        values = np.broadcast_to(np.asarray(g(grid.phi[mask], psi), dtype=float), (int(mask.sum()),))
        return cls(grid, values.copy(), graded_eta_mesh() if eta is None else eta, closure)

    @property
    def height(self) -> float:
        return float(self.eta[-1])


class MilneOperator:
    """
    Assembled sweep of a Milne problem: avg(Phi) = K avg(Phi) + F g.

    Built once per (grid, mesh, closure); `solve` can then be called for many
    incoming data vectors.
    """

    def __init__(self, grid: AngularGrid, eta: np.ndarray, closure: str = "isotropic"):
        if closure not in CLOSURES:
            raise ConfigurationError(f"closure must be one of {CLOSURES}, got {closure!r}")
        self.grid = grid
        self.eta = np.asarray(eta, dtype=float)
        self.closure = closure
        self.mu = grid.sin_phi
        self._incoming = np.flatnonzero(self.mu > 0)
        self._outgoing = np.flatnonzero(self.mu < 0)
        self._mirror = grid.mirror_index
        n = self.eta.size
        self.matrix = grid.average(self.sweep(np.eye(n), np.zeros((self._incoming.size, n))), axis=0)
        self.inflow_response = grid.average(
            self.sweep(np.zeros((n, self._incoming.size)), np.eye(self._incoming.size)), axis=0
        )
        self._lu = None
        self._lock = threading.Lock()

    @property
    def size(self) -> int:
        return self.eta.size

    def sweep(self, source: np.ndarray, inflow: np.ndarray) -> np.ndarray:
        """
        Sweep every direction for a batch of isotropic sources.

        Args:
            source: avg(Phi) on the mesh, shape (n_eta, m)
            inflow: incoming data, shape (n_incoming, m)

        Returns:
            Phi with shape (n_dirs, n_eta, m)
        """
        q = np.asarray(source, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        inflow = np.asarray(inflow, dtype=float).reshape(self._incoming.size, -1)
        n_eta, m = q.shape
        out = np.zeros((self.mu.size, n_eta, m))
        dz = np.diff(self.eta)

        mu_in = self.mu[self._incoming]
        a, b, c = _characteristic_weights(dz[None, :] / mu_in[:, None])
        phi = np.broadcast_to(inflow, (mu_in.size, m)).copy()
        out[self._incoming, 0] = phi
        for i in range(n_eta - 1):
            phi = a[:, i, None] * phi + b[:, i, None] * q[i] + c[:, i, None] * q[i + 1]
            out[self._incoming, i + 1] = phi

        mu_out = -self.mu[self._outgoing]
        a, b, c = _characteristic_weights(dz[None, :] / mu_out[:, None])
        if self.closure == "isotropic":
            phi = np.broadcast_to(q[-1], (mu_out.size, m)).copy()
        else:
            phi = out[self._mirror[self._outgoing], -1].copy()
        out[self._outgoing, -1] = phi
        for i in range(n_eta - 2, -1, -1):
            phi = a[:, i, None] * phi + b[:, i, None] * q[i + 1] + c[:, i, None] * q[i]
            out[self._outgoing, i] = phi
        return out

    def rhs(self, incoming: np.ndarray) -> np.ndarray:
        return self.inflow_response @ np.asarray(incoming, dtype=float)

    def residual(self, average: np.ndarray, incoming: np.ndarray) -> float:
        return float(np.max(np.abs(average - self.matrix @ average - self.rhs(incoming))))

    def solve_direct(self, incoming: np.ndarray) -> np.ndarray:
        with self._lock:
            if self._lu is None:
                self._lu = scipy.linalg.lu_factor(np.eye(self.size) - self.matrix)
        return scipy.linalg.lu_solve(self._lu, self.rhs(incoming))

    def solve_iterative(self, incoming: np.ndarray, tol: float, max_iterations: int = 5000, depth: int = 5):
        """Anderson-accelerated source iteration; returns (average, iterations, history)."""
        f = self.rhs(incoming)
        x = np.zeros(self.size)
        mixer = AndersonMixer(depth)
        history: List[float] = []
        for iteration in range(1, max_iterations + 1):
            gx = self.matrix @ x + f
            change = float(np.max(np.abs(gx - x)))
            history.append(change)
            if logger.isEnabledFor(logging.DEBUG):
                logger.debug("milne iteration %d: change %.3e", iteration, change)
            if change < tol:
                return gx, iteration, history
            x = mixer(x, gx)
        raise IterationLimitError(
            f"Milne iteration did not reach tol={tol:g} in {max_iterations} iterations (last change {history[-1]:.3e})",
            residual_history=history,
        )


@dataclass
class MilneSolution:
    """Phi on (eta, direction), its far-field limit and decayed part Psi = Phi - Phi_inf."""

    problem: MilneProblem
    values: np.ndarray
    average: np.ndarray
    phi_inf: float
    decay_rate: float
    decay_constant: float
    decay_rate_fit: float
    residual: float
    far_field_gap: float
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    method: str = "iterate"

    @property
    def eta(self) -> np.ndarray:
        return self.problem.eta

    @property
    def grid(self) -> AngularGrid:
        return self.problem.grid

    @property
    def psi(self) -> np.ndarray:
        return self.values - self.phi_inf

    @property
    def psi_average(self) -> np.ndarray:
        return self.average - self.phi_inf

    def boundary_trace(self) -> np.ndarray:
        """Psi(0, w) on all nodes; the outgoing half is the computed trace."""
        return self.psi[0].copy()

    def psi_at(self, eta_query) -> np.ndarray:
        """Psi interpolated linearly in eta, zero beyond the truncation height; shape (*eta_query.shape, n_dirs)."""
        eta_query = np.asarray(eta_query, dtype=float)
        flat = eta_query.ravel()
        psi = self.psi
        idx = np.clip(np.searchsorted(self.eta, flat, side="right") - 1, 0, self.eta.size - 2)
        lo, hi = self.eta[idx], self.eta[idx + 1]
        s = np.clip((flat - lo) / (hi - lo), 0.0, 1.0)[:, None]
        out = (1.0 - s) * psi[idx] + s * psi[idx + 1]
        out[flat > self.eta[-1]] = 0.0
        return out.reshape(eta_query.shape + (psi.shape[1],))

    def psi_average_at(self, eta_query) -> np.ndarray:
        eta_query = np.asarray(eta_query, dtype=float)
        out = np.interp(eta_query, self.eta, self.psi_average)
        return np.where(eta_query > self.eta[-1], 0.0, out)

    def decay_envelope(self) -> np.ndarray:
        """max over directions of |Psi(eta, .)|."""
        return np.max(np.abs(self.psi), axis=1)


def _fit_decay(eta: np.ndarray, envelope: np.ndarray):
    """
    Smallest rate K with envelope(eta) <= C exp(-K eta), C = 2 envelope(0),
    plus a least-squares slope of log(envelope) for reference.
    """
    top = float(envelope[0])
    if top <= 0.0:
        return np.inf, 0.0, np.inf
    constant = 2.0 * top
    floor = max(1e-13, 1e-11 * top)
    mask = (eta > 0) & (envelope > floor)
    if not np.any(mask):
        return np.inf, constant, np.inf
    rates = np.log(constant / envelope[mask]) / eta[mask]
    rate = float(np.min(rates))
    if np.count_nonzero(mask) >= 2:
        slope = np.polyfit(eta[mask], np.log(envelope[mask]), 1)[0]
        fit = float(-slope)
    else:
        fit = rate
    return rate, constant, fit


def solve_milne(
    problem: MilneProblem,
    tol: float = 1e-10,
    method: str = "iterate",
    operator: Optional[MilneOperator] = None,
    max_iterations: int = 5000,
) -> MilneSolution:
    """
    Solve a Milne problem.

    Args:
        problem: the Milne problem
        tol: stopping tolerance on successive averages (sup norm)
        method: "iterate" (Anderson-accelerated source iteration) or "direct"
        operator: a prebuilt MilneOperator for the same grid/mesh/closure
        max_iterations: iteration cap for "iterate"

    Returns:
        MilneSolution

    Raises:
        ConfigurationError: on bad arguments or a mismatched operator
        IterationLimitError: if the iteration does not converge
    """
    if tol <= 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    if method not in ("iterate", "direct"):
        raise ConfigurationError(f"method must be 'iterate' or 'direct', got {method!r}")
    if operator is None:
        operator = MilneOperator(problem.grid, problem.eta, problem.closure)
    elif operator.size != problem.eta.size or operator.closure != problem.closure or operator.grid is not problem.grid:
        raise ConfigurationError("Milne operator was built for a different grid, mesh or closure")

    iterations, history = 0, []
    if method == "direct":
        average = operator.solve_direct(problem.incoming)
    else:
        average, iterations, history = operator.solve_iterative(problem.incoming, tol, max_iterations)

    values = operator.sweep(average[:, None], problem.incoming[:, None])[:, :, 0].T
    average = problem.grid.average(values)
    eta = problem.eta
    tail = eta >= 0.9 * eta[-1]
    phi_inf = float(np.mean(average[tail]))
    envelope = np.max(np.abs(values - phi_inf), axis=1)
    rate, constant, fit = _fit_decay(eta, envelope)
    solution = MilneSolution(
        problem=problem,
        values=values,
        average=average,
        phi_inf=phi_inf,
        decay_rate=rate,
        decay_constant=constant,
        decay_rate_fit=fit,
        residual=operator.residual(average, problem.incoming),
        far_field_gap=float(abs(average[-1] - phi_inf)),
        iterations=iterations,
        residual_history=history,
        method=method,
    )
    logger.debug(
        "milne solve (%s): phi_inf=%.10g K=%.3g residual=%.2e iterations=%d",
        method, phi_inf, rate, solution.residual, iterations,
    )
    return solution


def milne_infinity(solution: MilneSolution) -> float:
    return solution.phi_inf


def flux_profile(solution: MilneSolution) -> np.ndarray:
    """Integral of sin(phi) Phi dw at every eta; constant in eta for an exact solution."""
    return solution.grid.integrate(solution.values * solution.grid.sin_phi)


def dump_profile_csv(solution: MilneSolution, path) -> pd.DataFrame:
    """Write Phi(eta, phi[, psi]) in long format with columns eta, phi, [psi,] value."""
    grid = solution.grid
    n_eta, n_dirs = solution.values.shape
    columns = {
        "eta": np.repeat(solution.eta, n_dirs),
        "phi": np.tile(grid.phi, n_eta),
    }
    if grid.psi is not None:
        columns["psi"] = np.tile(grid.psi, n_eta)
    columns["value"] = solution.values.ravel()
    frame = pd.DataFrame(columns)
    frame.to_csv(path, index=False, float_format="%.12e")
    return frame


def solve_milne_family(
    problems: Sequence[MilneProblem],
    tol: float = 1e-10,
    method: str = "direct",
    operator: Optional[MilneOperator] = None,
) -> List[MilneSolution]:
    """Solve several problems that share grid, mesh and closure with one operator."""
    if not problems:
        return []
    if operator is None:
        first = problems[0]
        operator = MilneOperator(first.grid, first.eta, first.closure)
    return [solve_milne(p, tol=tol, method=method, operator=operator) for p in problems]
