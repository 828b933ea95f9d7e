"""
Steady transport solve and remainder diagnostics

    w.grad u + eps^-1 (u - avg u) = 0 in Omega,   u = g on the incoming boundary.

`solve_transport` assembles the long-characteristic sweep and hands the scalar
flux system to a solver strategy through a TransportSolverContext. The rest of
the module measures the solution against the approximate solution u_a: the
remainder norms, the discrete Green identity and the weak formulation tested
with xi and w.grad xi, where -Lap xi = avg R and xi = 0 on the boundary.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

try:
    from .data_families import BoundaryData
    from .direct_solve_strategy import DirectSolveStrategy
    from .dsa_strategy import DiffusionSyntheticStrategy
    from .errors import ConfigurationError
    from .interior import PolarDerivatives, solve_dirichlet_poisson
    from .norms import BoundaryField, boundary_inner, boundary_norm, boundary_trace, l2_norm, phase_inner, spatial_l2_norm
    from .phase_space import PhaseSpaceGrid, build_phase_space_grid
    from .quadgeom import DomainSpec
    from .source_iteration_strategy import SourceIterationStrategy
    from .sources import ApproximateSolution, SourceTerms
    from .sweep import SweepSystem, assemble_sweep
    from .transport_context import TransportSolverContext
    from .transport_strategy import TransportSolverStrategy
except ImportError:
    from data_families import BoundaryData
    from direct_solve_strategy import DirectSolveStrategy
    from dsa_strategy import DiffusionSyntheticStrategy
    from errors import ConfigurationError
    from interior import PolarDerivatives, solve_dirichlet_poisson
    from norms import BoundaryField, boundary_inner, boundary_norm, boundary_trace, l2_norm, phase_inner, spatial_l2_norm
    from phase_space import PhaseSpaceGrid, build_phase_space_grid
    from quadgeom import DomainSpec
    from source_iteration_strategy import SourceIterationStrategy
    from sources import ApproximateSolution, SourceTerms
    from sweep import SweepSystem, assemble_sweep
    from transport_context import TransportSolverContext
    from transport_strategy import TransportSolverStrategy


logger = logging.getLogger(__name__)

STRATEGIES = ("auto", "direct", "source_iteration", "dsa")


@dataclass
class SolverSettings:
    """
    Solver selection and stopping rule.

    "auto" solves directly below `direct_threshold` unknowns and otherwise
    iterates, with diffusion-synthetic acceleration when `accelerate` is set.
    """

    strategy: str = "auto"
    tol: float = 1e-10
    max_iterations: int = 500
    accelerate: bool = True
    direct_threshold: int = 6000

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.tol <= 0 or self.max_iterations < 1:
            raise ConfigurationError(f"invalid stopping rule tol={self.tol}, max_iterations={self.max_iterations}")


def select_strategy(settings: SolverSettings, n_unknowns: int) -> TransportSolverStrategy:
    name = settings.strategy
    if name == "auto":
        if n_unknowns <= settings.direct_threshold:
            name = "direct"
        else:
            name = "dsa" if settings.accelerate else "source_iteration"
    if name == "direct":
        return DirectSolveStrategy(tol=settings.tol)
    if name == "dsa":
        return DiffusionSyntheticStrategy(settings.tol, settings.max_iterations)
    return SourceIterationStrategy(settings.tol, settings.max_iterations)


@dataclass
class TransportProblem:
    """
    One steady transport problem.

    Args:
        domain: analytic domain
        eps: Knudsen number
        data: inflow data on the incoming boundary
        grid: phase-space grid built for this eps and domain
        settings: solver selection and stopping rule
    """

    domain: DomainSpec
    eps: float
    data: BoundaryData
    grid: PhaseSpaceGrid
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if self.grid.domain != self.domain:
            raise ConfigurationError("grid was built for a different domain")
        if abs(self.grid.eps - self.eps) > 1e-14 * self.eps:
            raise ConfigurationError(f"grid was built for eps={self.grid.eps}, not {self.eps}")

    @classmethod
    def build(cls, domain: DomainSpec, eps: float, data: BoundaryData, settings: Optional[SolverSettings] = None, **grid_options) -> "TransportProblem":
        grid = build_phase_space_grid(domain, eps, **grid_options)
        return cls(domain, eps, data, grid, settings or SolverSettings())


@dataclass
class TransportField:
    """Discrete u on the phase-space grid with its convergence record."""

    grid: PhaseSpaceGrid
    eps: float
    values: np.ndarray
    average: np.ndarray
    strategy: str
    iterations: int
    residual: float
    residual_history: List[float] = field(default_factory=list)
    collar_resolved: bool = True

    def trace(self) -> BoundaryField:
        return boundary_trace(self.grid, self.values)

    def outgoing_trace(self) -> BoundaryField:
        trace = self.trace()
        return BoundaryField(
            {f.name: np.where(self.grid.incoming(f), 0.0, trace[f.name]) for f in self.grid.domain.faces}
        )

    def inflow_defect(self, data: BoundaryData) -> float:
        """max |u - g| over the incoming boundary nodes."""
        defect = 0.0
        theta = self.grid.theta if self.grid.dimension == 2 else np.zeros(1)
        for face in self.grid.domain.faces:
            g = data.evaluate(face.name, theta[:, None], self.grid.chart_angle(face)[None, :])
            u = self.values[self.grid.face_nodes(face)]
            mask = self.grid.incoming(face)
            defect = max(defect, float(np.max(np.abs(u - g)[:, mask])))
        return defect


def solve_transport(problem: TransportProblem, context: Optional[TransportSolverContext] = None) -> TransportField:
    """
    Solve the steady transport problem.

    Args:
        problem: the transport problem
        context: solver context; by default one is built from the problem's settings

    Returns:
        TransportField

    Raises:
        IterationLimitError: if an iterative strategy does not converge
    """
    grid = problem.grid
    resolved = grid.collar_resolved()
    if not resolved:
        logger.warning(
            "boundary collar under-resolved for eps=%g: %s radial cells within 2 eps",
            problem.eps, [grid.collar_cell_count(f) for f in grid.domain.faces],
        )
    system = assemble_sweep(grid, problem.data)
    if context is None:
        context = TransportSolverContext(select_strategy(problem.settings, system.size))
    solution = context.solve(system)
    values = system.angular_flux(solution.average)
    logger.info(
        "transport %s eps=%g solved with %s: %d iterations, residual %.2e",
        problem.domain.kind, problem.eps, context.get_current_strategy(), solution.iterations, solution.residual,
    )
    return TransportField(
        grid=grid,
        eps=problem.eps,
        values=values,
        average=grid.average(values),
        strategy=solution.strategy,
        iterations=solution.iterations,
        residual=solution.residual,
        residual_history=list(solution.residual_history),
        collar_resolved=resolved,
    )


def angular_average(field: TransportField) -> np.ndarray:
    """Measure-correct average of u over the velocity circle/sphere at every spatial node."""
    return field.grid.average(field.values)


def leading_order_error(field: TransportField, u0: np.ndarray) -> float:
    """|u - U0| in L2(Omega x S) with U0 treated as angle independent."""
    return l2_norm(field.grid, field.values - np.asarray(u0)[:, None])


def _periodic_derivative(values: np.ndarray, nodes: np.ndarray, axis: int) -> np.ndarray:
    """Three-point derivative on a periodic, nonuniform set of angles in (-pi, pi]."""
    v = np.moveaxis(values, axis, -1)
    prev_nodes = np.roll(nodes, 1)
    prev_nodes[0] -= 2.0 * np.pi
    next_nodes = np.roll(nodes, -1)
    next_nodes[-1] += 2.0 * np.pi
    h1 = nodes - prev_nodes
    h2 = next_nodes - nodes
    out = (
        -h2 / (h1 * (h1 + h2)) * np.roll(v, 1, axis=-1)
        + (h2 - h1) / (h1 * h2) * v
        + h1 / (h2 * (h1 + h2)) * np.roll(v, -1, axis=-1)
    )
    return np.moveaxis(out, -1, axis)


def streaming_derivative(grid: PhaseSpaceGrid, field: np.ndarray) -> np.ndarray:
    """
    Discrete w.grad f of a phase-space field,

        w.grad f = -sin(phi) f_r + (cos(phi)/r) (f_theta - f_phi)

    in the local frame (f_theta vanishes on ball/shell). Second-order
    differences in r, periodic central differences in theta and in the circle
    angle, one-sided at the ends of the polar range on the sphere.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim == 1:
        f = np.repeat(f[:, None], grid.n_dirs, axis=1)
    f = f.reshape(grid.n_r, grid.n_theta, grid.n_dirs)
    r = grid.radii[:, None, None]
    d_r = np.gradient(f, grid.radii, axis=0, edge_order=2)
    if grid.n_theta > 1:
        h = 2.0 * np.pi / grid.n_theta
        d_theta = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * h)
    else:
        d_theta = np.zeros_like(f)
    phi = grid.angles.phi
    if grid.dimension == 2:
        d_phi = _periodic_derivative(f, phi, axis=2)
    else:
        d_phi = np.gradient(f, phi, axis=2, edge_order=2)
    out = -grid.angles.sin_phi * d_r + grid.angles.cos_phi / r * (d_theta - d_phi)
    return out.reshape(grid.shape)


def green_identity_residual(grid: PhaseSpaceGrid, f: np.ndarray, g: np.ndarray) -> float:
    """
    |<w.grad f, g> + <f, w.grad g> - int_boundary f g (w.n)| on the grid.
    """
    volume = phase_inner(grid, streaming_derivative(grid, f), g) + phase_inner(grid, f, streaming_derivative(grid, g))
    surface = boundary_inner(grid, boundary_trace(grid, f), boundary_trace(grid, g))
    return float(abs(volume - surface))


@dataclass
class RemainderDiagnostics:
    """
    R = u - u_a with its average, deviation and the test function xi.

    `angular_measure` is |S| (2 pi or 4 pi): |R|^2 = |S| |avg R|^2_Omega + |R - avg R|^2.
    """

    grid: PhaseSpaceGrid
    eps: float
    remainder: np.ndarray
    average: np.ndarray
    xi: PolarDerivatives
    norms: Dict[str, float]

    @property
    def angular_measure(self) -> float:
        return self.grid.angles.total_measure

    @property
    def deviation(self) -> np.ndarray:
        return self.remainder - self.average[:, None]

    def decomposition_defect(self) -> float:
        total = self.norms["R"] ** 2
        split = self.angular_measure * self.norms["Rbar_spatial"] ** 2 + self.norms["R_minus_Rbar"] ** 2
        return float(abs(total - split) / max(total, 1e-300))


def remainder_diagnostics(u: TransportField, ua: ApproximateSolution) -> RemainderDiagnostics:
    """
    Remainder norms and the test function xi for one eps.

    Raises:
        ConfigurationError: if u and u_a live on different grids or eps
    """
    grid = u.grid
    if ua.values.shape != grid.shape or abs(ua.eps - u.eps) > 1e-14 * u.eps or ua.grid.n_r != grid.n_r:
        raise ConfigurationError("transport field and approximate solution do not share grid and eps")
    remainder = u.values - ua.values
    average = grid.average(remainder)
    deviation = remainder - average[:, None]
    xi = solve_dirichlet_poisson(grid.domain, grid.radii, grid.faces_r, grid.n_theta, average.reshape(grid.n_r, grid.n_theta))
    trace = boundary_trace(grid, remainder)
    spatial = spatial_l2_norm(grid, average)
    norms = {
        "R": l2_norm(grid, remainder),
        "Rbar": float(np.sqrt(grid.angles.total_measure) * spatial),
        "Rbar_spatial": spatial,
        "R_minus_Rbar": l2_norm(grid, deviation),
        "R_gamma_plus": boundary_norm(grid, trace, "gamma_plus"),
        "R_gamma_minus": boundary_norm(grid, trace, "gamma_minus"),
    }
    logger.debug("remainder eps=%g: %s", u.eps, {k: f"{v:.3e}" for k, v in norms.items()})
    return RemainderDiagnostics(grid, u.eps, remainder, average, xi, norms)


def synthesis_bound(diag: RemainderDiagnostics) -> float:
    """eps^-1/2 |R|_out + eps^-1/2 |avg R| + eps^-1 |R - avg R|."""
    eps = diag.eps
    n = diag.norms
    return float(eps ** -0.5 * n["R_gamma_plus"] + eps ** -0.5 * n["Rbar"] + n["R_minus_Rbar"] / eps)


@dataclass
class KernelReport:
    """Terms of the weak formulation tested with xi and with w.grad xi."""

    eps: float
    terms: Dict[str, float]

    def to_records(self) -> List[dict]:
        return [{"eps": self.eps, "term": k, "value": v} for k, v in sorted(self.terms.items())]


def kernel_estimate_check(diag: RemainderDiagnostics, sources: SourceTerms) -> KernelReport:
    """
    Evaluate both tests of the weak formulation of the remainder equation.

    With xi: <R, w.grad xi> + <S, xi> = 0 (the relaxation term drops because
    xi is angle independent).
    With w.grad xi: int_boundary R (w.grad xi)(w.n) - <R, (w.grad)^2 xi>
    + eps^-1 <R - avg R, w.grad xi> - <S, w.grad xi> = 0, where the average
    part -<avg R, (w.grad)^2 xi> = (|S|/d) |avg R|^2_Omega.

    Raises:
        ConfigurationError: if sources were assembled for another eps
    """
    grid = diag.grid
    if abs(sources.eps - diag.eps) > 1e-14 * diag.eps:
        raise ConfigurationError(f"sources were assembled for eps={sources.eps}, not {diag.eps}")
    sin_f, cos_f = grid.angles.sin_phi, grid.angles.cos_phi
    xi = diag.xi.value.reshape(-1)
    d_xi = diag.xi.streaming(sin_f, cos_f)
    dd_xi = diag.xi.streaming_twice(sin_f, cos_f)
    R, S = diag.remainder, sources.total
    avg = diag.average
    dev = diag.deviation
    second_moment_factor = grid.angles.total_measure / grid.dimension
    rbar_sq = diag.norms["Rbar_spatial"] ** 2

    terms = {
        "oddness": phase_inner(grid, avg, d_xi),
        "conservation_transport": phase_inner(grid, R, d_xi),
        "conservation_source": phase_inner(grid, S, xi),
        "boundary": boundary_inner(grid, boundary_trace(grid, R), boundary_trace(grid, d_xi)),
        "average_second_moment": -phase_inner(grid, avg, dd_xi),
        "deviation_second_moment": -phase_inner(grid, dev, dd_xi),
        "relaxation": phase_inner(grid, dev, d_xi) / diag.eps,
        "source": phase_inner(grid, S, d_xi),
        "rbar_squared": second_moment_factor * rbar_sq,
    }
    terms["conservation_defect"] = terms["conservation_transport"] + terms["conservation_source"]
    terms["weak_defect"] = (
        terms["boundary"] + terms["average_second_moment"] + terms["deviation_second_moment"]
        + terms["relaxation"] - terms["source"]
    )
    terms["second_moment_ratio"] = (
        terms["average_second_moment"] / terms["rbar_squared"] if terms["rbar_squared"] > 0 else 0.0
    )
    return KernelReport(diag.eps, {k: float(v) for k, v in terms.items()})


def source_consistency(ua: ApproximateSolution, sources: SourceTerms) -> float:
    """
    Relative size of w.grad u_a + eps^-1 (u_a - avg u_a) + S on the grid,
    which vanishes up to discretization error when S is assembled consistently.
    """
    grid = ua.grid
    values = ua.values
    operator = streaming_derivative(grid, values) + (values - grid.average(values)[:, None]) / ua.eps
    defect = l2_norm(grid, operator + sources.total)
    scale = max(l2_norm(grid, sources.total), l2_norm(grid, operator), 1e-300)
    return float(defect / scale)


def sweep_system(problem: TransportProblem) -> SweepSystem:
    """The assembled sweep of a problem, for direct inspection and oracle solves."""
    return assemble_sweep(problem.grid, problem.data)
