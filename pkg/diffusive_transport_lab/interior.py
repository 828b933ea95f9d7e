"""
Interior expansion

U0 is harmonic with the Milne far-field values as Dirichlet data, and the first
corrections are U1 = -w.grad U0, U2 = (w.grad)^2 U0. On the disk/annulus
U0 = Re F(z) for a truncated Laurent series plus a logarithm, so every
directional derivative is exact: (w.grad)^n U0 = Re(e^{i n beta} F^{(n)}(z)).
On the ball/shell (rotationally symmetric data) U0 = A + B/r.

The module also carries the polar Fourier/finite-volume solver used for the
Dirichlet Poisson problem -Lap xi = f and for the diffusion correction of the
accelerated transport iteration.
"""

import logging
from dataclasses import dataclass
from math import factorial
from typing import Callable, Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import eval_legendre

try:
    from .errors import ConfigurationError
    from .quadgeom import DomainSpec
except ImportError:
    from errors import ConfigurationError
    from quadgeom import DomainSpec


logger = logging.getLogger(__name__)

DEFAULT_MODES = 32
BoundaryData = Mapping[str, Union[float, np.ndarray, Callable]]


def _falling(m: np.ndarray, n: int) -> np.ndarray:
    out = np.ones_like(m, dtype=float)
    for j in range(n):
        out = out * (m - j)
    return out


@dataclass(frozen=True)
class HarmonicFunction:
    """
    Spectral harmonic function on an analytic domain.

    2D: U = Re( sum_m c_m (z/scale)^m ) + log_coefficient * ln|z| over integer
    exponents m (negative ones only on the annulus).
    3D: U = constant + inverse_radius / r.
    """

    domain: DomainSpec
    exponents: np.ndarray
    coefficients: np.ndarray
    scale: float = 1.0
    log_coefficient: float = 0.0
    constant: float = 0.0
    inverse_radius: float = 0.0
    truncation_error: float = 0.0

    @property
    def n_modes(self) -> int:
        return int(np.max(np.abs(self.exponents))) if self.exponents.size else 0

    def complex_derivative(self, points: np.ndarray, order: int) -> np.ndarray:
        """F^{(order)}(z) at 2D points (..., 2); the logarithm contributes ln|z| at order 0."""
        if self.domain.dimension != 2:
            raise ConfigurationError("complex derivatives exist for 2D domains only")
        pts = np.asarray(points, dtype=float)
        z = (pts[..., 0] + 1j * pts[..., 1]) / self.scale
        m = self.exponents
        factor = _falling(m.astype(float), order) / self.scale ** order
        powers = z[..., None] ** (m - order)
        out = powers @ (self.coefficients * factor)
        if self.log_coefficient:
            zz = z * self.scale
            if order == 0:
                out = out + self.log_coefficient * np.log(np.abs(zz))
            else:
                out = out + self.log_coefficient * (-1) ** (order - 1) * factorial(order - 1) * zz ** (-order)
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.directional(points, None, 0)

    def directional(self, points: np.ndarray, directions: Optional[np.ndarray], order: int) -> np.ndarray:
        """
        (w.grad)^order U at points (..., d) for unit directions broadcastable to (..., d).
        """
        if order < 0:
            raise ConfigurationError(f"order must be >= 0, got {order}")
        pts = np.asarray(points, dtype=float)
        if self.domain.dimension == 2:
            deriv = self.complex_derivative(pts, order)
            if order == 0:
                return deriv.real
            w = np.asarray(directions, dtype=float)
            omega = w[..., 0] + 1j * w[..., 1]
            return (omega ** order * deriv).real
        r = np.linalg.norm(pts, axis=-1)
        if order == 0:
            return self.constant + self.inverse_radius / r
        w = np.asarray(directions, dtype=float)
        cosine = np.sum(w * pts, axis=-1) / r
        return self.inverse_radius * (-1) ** order * factorial(order) * eval_legendre(order, cosine) / r ** (order + 1)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.domain.dimension == 2:
            d = self.complex_derivative(pts, 1)
            return np.stack([d.real, -d.imag], axis=-1)
        r = np.linalg.norm(pts, axis=-1, keepdims=True)
        return -self.inverse_radius * pts / r ** 3


def _fourier_samples(data, n_samples: int) -> np.ndarray:
    if callable(data):
        theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
        return np.asarray(data(theta), dtype=float) * np.ones(n_samples)
    values = np.atleast_1d(np.asarray(data, dtype=float))
    if values.size == 1:
        return np.full(n_samples, float(values[0]))
    return values


def _face_value(data) -> float:
    if callable(data):
        return float(data(0.0))
    values = np.atleast_1d(np.asarray(data, dtype=float))
    if not np.allclose(values, values[0], rtol=0, atol=1e-12):
        raise ConfigurationError("ball/shell data must be rotationally symmetric (a single value per face)")
    return float(values[0])


def solve_dirichlet_laplace(domain: DomainSpec, boundary_data: BoundaryData, n_modes: int = DEFAULT_MODES) -> HarmonicFunction:
    """
    Harmonic extension of Dirichlet data.

    Args:
        domain: analytic domain
        boundary_data: face name -> data. In 2D the data are samples on the
            uniform angles 2*pi*j/N, a callable of the angle, or a constant; in
            3D a constant per face.
        n_modes: Fourier modes kept (2D)

    Returns:
        HarmonicFunction whose trace matches the (truncated) data
    """
    faces = {f.name: f for f in domain.faces}
    missing = set(faces) - set(boundary_data)
    if missing:
        raise ConfigurationError(f"missing boundary data for {sorted(missing)}")

    if domain.dimension == 3:
        outer = _face_value(boundary_data["outer"])
        if domain.is_convex():
            return HarmonicFunction(domain, np.zeros(0, dtype=int), np.zeros(0, dtype=complex), constant=outer)
        a, b = domain.radii
        inner = _face_value(boundary_data["inner"])
        coeff = (inner - outer) / (1.0 / a - 1.0 / b)
        return HarmonicFunction(
            domain, np.zeros(0, dtype=int), np.zeros(0, dtype=complex), constant=outer - coeff / b, inverse_radius=coeff
        )

    n_samples = max(4 * n_modes, 128)
    samples = {name: _fourier_samples(boundary_data[name], n_samples) for name in faces}
    sizes = {s.size for s in samples.values()}
    if len(sizes) != 1:
        raise ConfigurationError("boundary samples of both faces must have the same length")
    n = sizes.pop()
    k_max = min(n_modes, n // 2 - 1)
    if k_max < 0:
        raise ConfigurationError(f"need at least 2 boundary samples, got {n}")
    modes = {name: np.fft.rfft(s)[: k_max + 1] / n for name, s in samples.items()}

    scale = domain.outer_radius
    co = modes["outer"]
    if domain.is_convex():
        exponents = np.arange(k_max + 1)
        coefficients = np.concatenate([[co[0].real], 2.0 * co[1:]]).astype(complex)
        log_coefficient, constant = 0.0, 0.0
    else:
        a, b = domain.radii
        ci = modes["inner"]
        log_coefficient = float((co[0].real - ci[0].real) / np.log(b / a))
        a0 = ci[0].real - log_coefficient * np.log(a)
        k = np.arange(1, k_max + 1)
        q = a / b
        alpha = (2.0 * ci[1:] * q ** k - 2.0 * co[1:]) / (q ** (2 * k) - 1.0)
        beta = np.conj(2.0 * co[1:] - alpha)
        exponents = np.concatenate([[0], k, -k])
        coefficients = np.concatenate([[a0], alpha, beta]).astype(complex)
        constant = 0.0

    u = HarmonicFunction(domain, exponents, coefficients, scale=scale, log_coefficient=log_coefficient)
    theta = 2.0 * np.pi * np.arange(n) / n
    error = 0.0
    for name, face in faces.items():
        pts = face.radius * np.column_stack([np.cos(theta), np.sin(theta)])
        error = max(error, float(np.max(np.abs(u(pts) - samples[name]))))
    logger.debug("Dirichlet Laplace on %s: %d modes, truncation error %.2e", domain.kind, k_max, error)
    return HarmonicFunction(
        domain, exponents, coefficients, scale=scale, log_coefficient=log_coefficient, constant=constant,
        truncation_error=error,
    )


@dataclass(frozen=True)
class InteriorSolution:
    """U0 and the first two corrections of the interior expansion."""

    u0: HarmonicFunction
    eps: Optional[float] = None

    def U0(self, points) -> np.ndarray:
        return self.u0(points)

    def U1(self, points, directions) -> np.ndarray:
        return -self.u0.directional(points, directions, 1)

    def U2(self, points, directions) -> np.ndarray:
        return self.u0.directional(points, directions, 2)

    def streaming_U2(self, points, directions) -> np.ndarray:
        """w.grad U2 = (w.grad)^3 U0."""
        return self.u0.directional(points, directions, 3)

    def composite(self, points, directions, eps: float) -> np.ndarray:
        """U0 + eps U1 + eps^2 U2."""
        return self.U0(points) + eps * self.U1(points, directions) + eps ** 2 * self.U2(points, directions)


def build_expansion(domain: DomainSpec, phi_inf: BoundaryData, eps: Optional[float] = None, n_modes: int = DEFAULT_MODES) -> InteriorSolution:
    """U0 with trace Phi_inf on every face, plus U1, U2 by exact differentiation."""
    return InteriorSolution(solve_dirichlet_laplace(domain, phi_inf, n_modes), eps)


class PolarFourierSolver:
    """
    Solver for -D Lap v = f on a polar (2D) or radial (3D) node set.

    Fourier modes in the boundary angle decouple; each mode is a radial
    finite-volume problem with Dirichlet or Robin (v + length * dv/dn = 0)
    conditions on the faces. Factorizations are cached per mode.
    """

    def __init__(
        self,
        domain: DomainSpec,
        radii: np.ndarray,
        faces_r: np.ndarray,
        n_theta: int,
        diffusion: float = 1.0,
        robin_length: Optional[float] = None,
    ):
        if diffusion <= 0:
            raise ConfigurationError(f"diffusion coefficient must be positive, got {diffusion}")
        if robin_length is not None and robin_length <= 0:
            raise ConfigurationError(f"Robin length must be positive, got {robin_length}")
        self.domain = domain
        self.radii = np.asarray(radii, dtype=float)
        self.faces_r = np.asarray(faces_r, dtype=float)
        self.n_theta = n_theta
        self.diffusion = diffusion
        self.robin_length = robin_length
        p = 1 if domain.dimension == 2 else 2
        self._p = p
        lo, hi = self.faces_r[:-1], self.faces_r[1:]
        self.cell_measure = (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
        n_modes = n_theta // 2 + 1
        self._factors = [splu(self._mode_matrix(k).tocsc()) for k in range(n_modes)]

    def _boundary_rows(self):
        rows = [self.radii.size - 1]
        if not self.domain.is_convex():
            rows.append(0)
        return rows

    def _mode_matrix(self, k: int) -> sp.csr_matrix:
        r, p, D = self.radii, self._p, self.diffusion
        n = r.size
        face_area = self.faces_r[1:-1] ** p
        coupling = D * face_area / np.diff(r)
        main = np.zeros(n)
        main[:-1] += coupling
        main[1:] += coupling
        main += D * k ** 2 * self.cell_measure / r ** 2
        lower = -coupling.copy()
        upper = -coupling.copy()
        if self.robin_length is None:
            for i in self._boundary_rows():
                main[i] = 1.0
                if i > 0:
                    lower[i - 1] = 0.0
                if i < n - 1:
                    upper[i] = 0.0
        else:
            for i in self._boundary_rows():
                main[i] += D * self.radii[i] ** p / self.robin_length
        return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")

    def solve(self, source: np.ndarray) -> np.ndarray:
        """Solve for a source given on the nodes, shape (n_r*n_theta,) or (n_r, n_theta)."""
        f = np.asarray(source, dtype=float).reshape(self.radii.size, self.n_theta)
        modes = np.fft.rfft(f, axis=1) * self.cell_measure[:, None]
        if self.robin_length is None:
            modes[self._boundary_rows(), :] = 0.0
        out = np.empty_like(modes)
        for k, lu in enumerate(self._factors):
            out[:, k] = lu.solve(modes[:, k].real) + 1j * lu.solve(modes[:, k].imag)
        return np.fft.irfft(out, n=self.n_theta, axis=1)


@dataclass
class PolarDerivatives:
    """A polar field and its first and second derivatives on (n_r, n_theta) nodes."""

    radii: np.ndarray
    value: np.ndarray
    dr: np.ndarray
    dtheta: np.ndarray
    drr: np.ndarray
    drtheta: np.ndarray
    dthetatheta: np.ndarray

    def streaming(self, sin_phi: np.ndarray, cos_phi: np.ndarray) -> np.ndarray:
        """w.grad v in the local frame w = -sin(phi) e_r + cos(phi) e_theta, shape (n_space, n_dirs)."""
        r = self.radii[:, None]
        w_r, w_t = -sin_phi, cos_phi
        first = self.dr.reshape(-1, 1) * w_r + (self.dtheta / r).reshape(-1, 1) * w_t
        return first

    def streaming_twice(self, sin_phi: np.ndarray, cos_phi: np.ndarray) -> np.ndarray:
        """(w.grad)^2 v from the polar Hessian."""
        r = self.radii[:, None]
        w_r, w_t = -sin_phi, cos_phi
        h_rr = self.drr.reshape(-1, 1)
        h_rt = (self.drtheta / r - self.dtheta / r ** 2).reshape(-1, 1)
        h_tt = (self.dthetatheta / r ** 2 + self.dr / r).reshape(-1, 1)
        return w_r ** 2 * h_rr + 2.0 * w_r * w_t * h_rt + w_t ** 2 * h_tt


def polar_derivatives(radii: np.ndarray, values: np.ndarray) -> PolarDerivatives:
    """Spectral derivatives in theta, second-order finite differences in r."""
    v = np.asarray(values, dtype=float)
    n_theta = v.shape[1]
    k = np.fft.rfftfreq(n_theta, d=1.0 / n_theta)
    if n_theta % 2 == 0 and n_theta > 1:
        k_first = k.copy()
        k_first[-1] = 0.0
    else:
        k_first = k

    def d_theta(f, order):
        spec = np.fft.rfft(f, axis=1)
        mult = (1j * (k_first if order == 1 else k)) ** order
        return np.fft.irfft(spec * mult, n=n_theta, axis=1)

    def d_r(f):
        if radii.size < 3:
            return np.gradient(f, radii, axis=0)
        return np.gradient(f, radii, axis=0, edge_order=2)

    dr = d_r(v)
    dt = d_theta(v, 1) if n_theta > 1 else np.zeros_like(v)
    return PolarDerivatives(
        radii=radii,
        value=v,
        dr=dr,
        dtheta=dt,
        drr=d_r(dr),
        drtheta=d_r(dt),
        dthetatheta=d_theta(v, 2) if n_theta > 1 else np.zeros_like(v),
    )


def solve_dirichlet_poisson(domain: DomainSpec, radii: np.ndarray, faces_r: np.ndarray, n_theta: int, source: np.ndarray) -> PolarDerivatives:
    """xi with -Lap xi = source and xi = 0 on every face, plus its derivatives."""
    solver = PolarFourierSolver(domain, radii, faces_r, n_theta)
    xi = solver.solve(source)
    return polar_derivatives(np.asarray(radii, dtype=float), xi)
