"""
Long-characteristic sweep

Every phase-space node integrates the transport equation exactly along its
backward ray x - t w, t in [0, s], s the distance to the boundary:

    u(x, w) = exp(-s/eps) g(exit) + int_0^s eps^-1 exp(-t/eps) avg(u)(x - t w) dt

with avg(u) piecewise linear between the ray nodes t_m = min(eps q_m, s) and
interpolated bilinearly in (r, theta) (linearly in r on ball/shell). The
weights are nonnegative and sum with the boundary weight to one, so constants
are reproduced exactly and the discrete maximum principle holds. Averaging
over directions gives the affine map avg(u) -> K avg(u) + b.

Where a cell is wide against eps the linear interpolant spreads every sample
over the cell, which adds a spurious diffusion of order eps h to K and swamps
the eps^2 Laplacian of the diffusion limit. `assemble_sweep` removes it: the
interpolation error of the local quadratic, f (1 - f) h^2 / 2 times the second
difference at the node, is subtracted from K and any entry pushed below zero
is returned to the diagonal. K stays nonnegative with unchanged row sums.

On ball/shell the rays are straight lines through rotationally symmetric
fields, which realizes the reduced operator mu d/dr + ((1 - mu^2)/r) d/dmu
without angular differencing.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

try:
    from .data_families import BoundaryData
    from .errors import ConfigurationError
    from .phase_space import PhaseSpaceGrid
except ImportError:
    from data_families import BoundaryData
    from errors import ConfigurationError
    from phase_space import PhaseSpaceGrid


logger = logging.getLogger(__name__)

RAY_STEP = 0.125
RAY_UNIFORM_END = 2.0
RAY_RATIO = 1.25
RAY_CUTOFF = 40.0


def ray_parameters(
    step: float = RAY_STEP,
    uniform_end: float = RAY_UNIFORM_END,
    ratio: float = RAY_RATIO,
    cutoff: float = RAY_CUTOFF,
) -> np.ndarray:
    """Optical depths of the ray nodes: uniform up to `uniform_end`, then geometric up to `cutoff`."""
    if step <= 0 or uniform_end < step or ratio < 1 or cutoff <= uniform_end:
        raise ConfigurationError(
            f"invalid ray parameters step={step}, uniform_end={uniform_end}, ratio={ratio}, cutoff={cutoff}"
        )
    q = list(step * np.arange(int(round(uniform_end / step)) + 1))
    h = step
    while q[-1] < cutoff:
        h *= ratio
        q.append(min(q[-1] + h, cutoff))
    return np.asarray(q)


def _segment_weights(x: np.ndarray):
    """Weights of the end values of a linear function integrated against exp(-t) over [0, x]."""
    total = -np.expm1(-x)
    small = x < 1e-6
    safe = np.where(small, 1.0, x)
    right = np.where(small, 0.5 * x, (total - x * np.exp(-x)) / safe)
    return total - right, right


def _ray_node_weights(s: np.ndarray, eps: float, q: np.ndarray):
    t = np.minimum(eps * q[None, :], s[:, None])
    left, right = _segment_weights(np.diff(t, axis=1) / eps)
    decay = np.exp(-t[:, :-1] / eps)
    w = np.zeros_like(t)
    w[:, :-1] += decay * left
    w[:, 1:] += decay * right
    # kernel mass beyond the last node is lumped onto it
    w[:, -1] += np.maximum(np.exp(-q[-1]) - np.exp(-s / eps), 0.0)
    return t, w


def _radial_stencil(radii: np.ndarray, rho: np.ndarray):
    idx = np.clip(np.searchsorted(radii, rho, side="right") - 1, 0, radii.size - 2)
    frac = np.clip((rho - radii[idx]) / (radii[idx + 1] - radii[idx]), 0.0, 1.0)
    return idx, frac


def _wrap(angle: np.ndarray) -> np.ndarray:
    return np.arctan2(np.sin(angle), np.cos(angle))


@dataclass
class DirectionRays:
    """
    Ray stencils of one direction, one row per radial node.

    A node (i, j) reads avg(u) at radial index `radial[i, c]` and angular index
    (j + shift[i, c]) mod n_theta with weight `weight[i, c]`.
    `radial_spread` and `angular_spread` hold the kernel-weighted interpolation
    error of a unit second derivative in r and in the theta index, summed over
    the samples that land in the cells around the node.
    """

    index: int
    radial: np.ndarray
    shift: np.ndarray
    weight: np.ndarray
    exit_distance: np.ndarray
    boundary_weight: np.ndarray
    exit_inner: np.ndarray
    exit_theta: np.ndarray
    exit_angle: np.ndarray
    radial_spread: np.ndarray
    angular_spread: np.ndarray


def trace_direction(grid: PhaseSpaceGrid, k: int, q: np.ndarray) -> DirectionRays:
    """Ray geometry and quadrature for direction `k` of the angular grid."""
    r = grid.radii
    eps = grid.eps
    sin_f = float(grid.angles.sin_phi[k])
    cos_f = float(grid.angles.cos_phi[k])
    p = -r * sin_f  # x . w

    outer = grid.domain.outer_radius
    s = p + np.sqrt(np.maximum(p ** 2 - r ** 2 + outer ** 2, 0.0))
    inner_hit = np.zeros(r.size, dtype=bool)
    if not grid.domain.is_convex():
        disc = p ** 2 - r ** 2 + grid.domain.inner_radius ** 2
        inner_hit = (p > 0) & (disc >= 0)
        s = np.where(inner_hit, p - np.sqrt(np.where(inner_hit, disc, 0.0)), s)
    s = np.maximum(s, 0.0)

    t, w = _ray_node_weights(s, eps, q)
    rr = r[:, None]
    rho = np.sqrt(np.maximum(rr ** 2 + 2.0 * t * rr * sin_f + t ** 2, 0.0))
    ri, fr = _radial_stencil(r, rho)
    if grid.n_theta > 1:
        u = np.arctan2(-t * cos_f, rr + t * sin_f) * grid.n_theta / (2.0 * np.pi)
        base = np.floor(u)
        ft = u - base
        base = base.astype(int)
    else:
        base = np.zeros(t.shape, dtype=int)
        ft = np.zeros(t.shape)

    radial = np.stack([ri, ri + 1, ri, ri + 1], axis=-1)
    shift = np.stack([base, base, base + 1, base + 1], axis=-1)
    corner = np.stack([(1 - fr) * (1 - ft), fr * (1 - ft), (1 - fr) * ft, fr * ft], axis=-1)
    weight = w[..., None] * corner
    # only samples in the cells around the node enter the correction
    row = np.arange(r.size)[:, None]
    near = ((ri == row) | (ri == row - 1)) & (base >= -1) & (base <= 0)
    near_w = np.where(near, w, 0.0)
    cell = r[ri + 1] - r[ri]
    radial_spread = 0.5 * np.sum(near_w * fr * (1 - fr) * cell ** 2, axis=1)
    angular_spread = 0.5 * np.sum(near_w * ft * (1 - ft), axis=1)

    delta = np.arctan2(-s * cos_f, r + s * sin_f)
    phi_exit = grid.angles.phi[k] - delta
    exit_angle = np.where(inner_hit, _wrap(-phi_exit), _wrap(phi_exit))
    n = r.size
    return DirectionRays(
        index=k,
        radial=radial.reshape(n, -1),
        shift=shift.reshape(n, -1),
        weight=weight.reshape(n, -1),
        exit_distance=s,
        boundary_weight=np.exp(-s / eps),
        exit_inner=inner_hit,
        exit_theta=delta,
        exit_angle=exit_angle,
        radial_spread=radial_spread,
        angular_spread=angular_spread,
    )


def boundary_values(grid: PhaseSpaceGrid, rays: DirectionRays, data: BoundaryData) -> np.ndarray:
    """Inflow data at the exit point of every backward ray of one direction, shape (n_r, n_theta)."""
    if grid.dimension == 2:
        theta = grid.theta[None, :] + rays.exit_theta[:, None]
    else:
        theta = np.zeros((grid.n_r, 1))
    phi = np.broadcast_to(rays.exit_angle[:, None], theta.shape)
    values = np.asarray(data.evaluate("outer", theta, phi), dtype=float).copy()
    if np.any(rays.exit_inner):
        rows = rays.exit_inner
        values[rows] = data.evaluate("inner", theta[rows], phi[rows])
    return values


def _direction_operator(grid: PhaseSpaceGrid, rays: DirectionRays) -> sp.csr_matrix:
    n_theta = grid.n_theta
    i = np.arange(grid.n_r)[:, None, None]
    j = np.arange(n_theta)[None, None, :]
    rows = np.broadcast_to(i * n_theta + j, rays.radial.shape + (n_theta,))
    cols = rays.radial[:, :, None] * n_theta + (j + rays.shift[:, :, None]) % n_theta
    vals = np.broadcast_to(rays.weight[:, :, None], cols.shape)
    op = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(grid.n_space, grid.n_space))
    op.eliminate_zeros()
    return op


def _second_difference(grid: PhaseSpaceGrid, radial: np.ndarray, angular: np.ndarray) -> sp.csr_matrix:
    """radial * d2/dr2 + angular * (second difference in the theta index), zero on the first and last ring."""
    n_r, n_theta = grid.n_r, grid.n_theta
    r = grid.radii
    node = np.arange(grid.n_space).reshape(n_r, n_theta)
    rows, cols, vals = [], [], []

    inner = np.arange(1, n_r - 1)
    h_minus = r[inner] - r[inner - 1]
    h_plus = r[inner + 1] - r[inner]
    scale = 2.0 * radial[inner] / (h_minus + h_plus)
    for offset, coef in ((-1, scale / h_minus), (0, -scale * (1.0 / h_minus + 1.0 / h_plus)), (1, scale / h_plus)):
        rows.append(node[inner].ravel())
        cols.append(node[inner + offset].ravel())
        vals.append(np.repeat(coef, n_theta))

    if n_theta >= 3:
        for offset, coef in ((-1, 1.0), (0, -2.0), (1, 1.0)):
            rows.append(node.ravel())
            cols.append(np.roll(node, -offset, axis=1).ravel())
            vals.append(np.repeat(coef * angular, n_theta))

    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.n_space, grid.n_space)
    )


def _clip_to_diagonal(matrix: sp.csr_matrix) -> sp.csr_matrix:
    """Zero the negative entries and charge them to the diagonal, keeping row sums."""
    matrix = matrix.tocsr()
    deficit = np.asarray(matrix.minimum(0.0).sum(axis=1)).ravel()
    clipped = matrix.maximum(0.0) + sp.diags(deficit)
    clipped = clipped.tocsr()
    clipped.eliminate_zeros()
    return clipped


@dataclass
class SweepSystem:
    """
    The assembled sweep: avg(u) = K avg(u) + b.

    `boundary[:, k]` holds exp(-s/eps) g(exit) for direction k; the angular
    flux of any scalar flux is rebuilt from the stored ray stencils.
    `correction` is what was taken off the direction average of the stencils
    to form `matrix` (zero when assembled uncorrected).
    """

    grid: PhaseSpaceGrid
    data: BoundaryData
    rays: List[DirectionRays]
    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary: np.ndarray
    correction: Optional[sp.csr_matrix] = None

    @property
    def size(self) -> int:
        return self.grid.n_space

    def apply(self, average: np.ndarray) -> np.ndarray:
        """One transport sweep followed by averaging."""
        return self.matrix @ average + self.rhs

    def residual(self, average: np.ndarray) -> np.ndarray:
        return self.apply(average) - average

    def direction_operator(self, k: int) -> sp.csr_matrix:
        """Sparse map avg(u) -> u(., w_k) without the boundary term."""
        return _direction_operator(self.grid, self.rays[k])

    def angular_flux(self, average: np.ndarray) -> np.ndarray:
        """u on every phase-space node for a given scalar flux, shape (n_space, n_dirs)."""
        grid = self.grid
        ubar = np.asarray(average, dtype=float).reshape(grid.n_r, grid.n_theta)
        j = np.arange(grid.n_theta)[None, None, :]
        out = np.empty(grid.shape)
        for k, rays in enumerate(self.rays):
            cols = (j + rays.shift[:, :, None]) % grid.n_theta
            gathered = ubar[rays.radial[:, :, None], cols]
            out[:, k] = np.einsum("ic,icj->ij", rays.weight, gathered).ravel() + self.boundary[:, k]
        return out


def assemble_sweep(grid: PhaseSpaceGrid, data: BoundaryData, q: np.ndarray = None, corrected: bool = True) -> SweepSystem:
    """
    Assemble K and b for one grid and inflow data.

    Args:
        grid: phase-space grid (carries eps)
        data: inflow data on the incoming boundary
        q: optical depths of the ray nodes; defaults to `ray_parameters()`
        corrected: remove the interpolation diffusion from K

    Returns:
        SweepSystem
    """
    q = ray_parameters() if q is None else np.asarray(q, dtype=float)
    if q[0] != 0.0 or np.any(np.diff(q) <= 0):
        raise ConfigurationError("ray parameters must start at 0 and increase")
    share = grid.angles.weights / grid.angles.total_measure
    rays = [trace_direction(grid, k, q) for k in range(grid.n_dirs)]
    boundary = np.empty(grid.shape)
    stencils = sp.csr_matrix((grid.n_space, grid.n_space))
    for k, ray in enumerate(rays):
        stencils = stencils + share[k] * _direction_operator(grid, ray)
        boundary[:, k] = (ray.boundary_weight[:, None] * boundary_values(grid, ray, data)).ravel()
    stencils = stencils.tocsr()
    matrix = stencils
    if corrected:
        radial = sum(share[k] * ray.radial_spread for k, ray in enumerate(rays))
        angular = sum(share[k] * ray.angular_spread for k, ray in enumerate(rays))
        matrix = _clip_to_diagonal(stencils - _second_difference(grid, radial, angular))
    system = SweepSystem(grid, data, rays, matrix, boundary @ share, boundary, (stencils - matrix).tocsr())
    logger.info(
        "assembled sweep for %s eps=%g: %d unknowns, %d directions, nnz(K)=%d, correction %s",
        grid.domain.kind, grid.eps, grid.n_space, grid.n_dirs, system.matrix.nnz, "on" if corrected else "off",
    )
    return system


def solve_full_system(system: SweepSystem):
    """
    Solve the coupled system for (u, avg(u)) directly, without eliminating u.

        u_k - P_k avg(u) = exp(-s/eps) g                 for every direction k
        avg(u) + C avg(u) - sum_k (w_k/|S|) u_k = 0

    with C the interpolation correction of the assembled K.

    Returns:
        Tuple of (angular flux (n_space, n_dirs), scalar flux (n_space,))
    """
    grid = system.grid
    n, m = grid.n_space, grid.n_dirs
    share = grid.angles.weights / grid.angles.total_measure
    eye = sp.identity(n, format="csr")
    coupling = eye if system.correction is None else eye + system.correction
    transport = sp.vstack([-system.direction_operator(k) for k in range(m)])
    averaging = sp.hstack([-share[k] * eye for k in range(m)])
    full = sp.bmat([[sp.identity(n * m), transport], [averaging, coupling]], format="csc")
    rhs = np.concatenate([system.boundary[:, k] for k in range(m)] + [np.zeros(n)])
    logger.debug("direct solve of the full phase-space system: %d unknowns", full.shape[0])
    solution = spsolve(full, rhs)
    angular = solution[: n * m].reshape(m, n).T
    return angular, solution[n * m:]
