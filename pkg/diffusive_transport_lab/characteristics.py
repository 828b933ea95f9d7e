"""
Characteristics of the Milne problem with geometric correction

    d(eta)/dt = sin(phi),   d(phi)/dt = -eps * s * cos(phi) / (1 - s*eps*eta)

with s = +1 next to a convex face and s = -1 next to a concave one. Along a
path E = (1 - s*eps*eta) cos(phi) is conserved, which is what decides whether a
point of the (eta, phi) strip is connected to the boundary eta = 0.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

try:
    from .errors import ConfigurationError
except ImportError:
    from errors import ConfigurationError


logger = logging.getLogger(__name__)

STRIP_MARGIN = 1e-9


def _check(eps: float, convexity_sign: int):
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if convexity_sign not in (1, -1):
        raise ConfigurationError(f"convexity_sign must be +1 or -1, got {convexity_sign}")


def conserved_quantity(eps: float, convexity_sign: int, eta, phi) -> np.ndarray:
    return (1.0 - convexity_sign * eps * np.asarray(eta, dtype=float)) * np.cos(phi)


@dataclass
class CharacteristicPath:
    t: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    eps: float
    convexity_sign: int
    exited: bool = False
    exit_reason: Optional[str] = None

    @property
    def conserved(self) -> np.ndarray:
        return conserved_quantity(self.eps, self.convexity_sign, self.eta, self.phi)

    def conserved_drift(self) -> float:
        """Largest deviation of E from its initial value."""
        e = self.conserved
        return float(np.max(np.abs(e - e[0])))

    def drift_per_unit_time(self) -> float:
        span = abs(float(self.t[-1] - self.t[0]))
        return self.conserved_drift() / max(span, 1.0)

    @property
    def reached_boundary(self) -> bool:
        return self.exit_reason == "boundary"


def _rhs(eps: float, s: int):
    def rhs(_t, y):
        eta, phi = y
        return [np.sin(phi), -eps * s * np.cos(phi) / (1.0 - s * eps * eta)]

    return rhs


def _events(eps: float, s: int):
    def boundary(_t, y):
        return y[0]

    boundary.terminal = True
    boundary.direction = -1

    events = [boundary]
    if s > 0:
        def strip(_t, y):
            return 1.0 - eps * y[0] - STRIP_MARGIN

        strip.terminal = True
        strip.direction = -1
        events.append(strip)
    return events


def trace_characteristic(
    eps: float,
    convexity_sign: int,
    start: Tuple[float, float],
    t_span: Tuple[float, float],
    step: Optional[float] = 0.05,
    rtol: float = 1e-12,
    atol: float = 1e-12,
) -> CharacteristicPath:
    """
    Integrate one characteristic from `start` = (eta0, phi0).

    A decreasing `t_span` traces the path backward. Integration stops at
    eta = 0 or, for a convex face, at the edge of the strip eps*eta < 1; the
    path is then flagged as exited.

    Args:
        eps: Knudsen number
        convexity_sign: +1 convex face, -1 concave face
        start: initial (eta, phi)
        t_span: (t0, t1)
        step: maximum integrator step; None lets the integrator choose
        rtol, atol: integrator tolerances

    Returns:
        CharacteristicPath
    """
    _check(eps, convexity_sign)
    eta0, phi0 = float(start[0]), float(start[1])
    if eta0 < 0:
        raise ConfigurationError(f"eta0 must be >= 0, got {eta0}")
    if convexity_sign > 0 and eps * eta0 >= 1.0:
        raise ConfigurationError(f"start eta0={eta0} is outside the admissible strip eps*eta < 1")
    events = _events(eps, convexity_sign)
    sol = solve_ivp(
        _rhs(eps, convexity_sign),
        t_span,
        [eta0, phi0],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        max_step=np.inf if step is None else step,
        events=events,
    )
    if sol.status == -1:
        logger.warning("characteristic integration failed: %s", sol.message)
    reason = None
    if sol.status == 1:
        reason = "boundary" if sol.t_events[0].size else "strip"
    return CharacteristicPath(
        t=sol.t,
        eta=sol.y[0],
        phi=sol.y[1],
        eps=eps,
        convexity_sign=convexity_sign,
        exited=sol.status == 1,
        exit_reason=reason,
    )


def classify_hollow(eps: float, convexity_sign: int, eta, phi) -> np.ndarray:
    """
    Mask of the points whose characteristic never touches eta = 0, i.e. E > 1.

    One-dimensional `eta` and `phi` are expanded to an (n_eta, n_phi) grid;
    other arrays are broadcast and classified pointwise.
    """
    _check(eps, convexity_sign)
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if eta.ndim == 1 and phi.ndim == 1:
        eta, phi = np.meshgrid(eta, phi, indexing="ij")
    return conserved_quantity(eps, convexity_sign, eta, phi) > 1.0


def reach_time_bound(eps: float, eta0: float) -> float:
    """Time within which a boundary-connected characteristic reaches eta = 0."""
    return 4.0 * (1.0 + eps * eta0) / eps + 4.0 * eta0


def reaches_boundary(eps: float, convexity_sign: int, eta0: float, phi0: float, t_max: Optional[float] = None) -> bool:
    """Trace backward and then forward; True when either direction hits eta = 0."""
    if t_max is None:
        t_max = reach_time_bound(eps, eta0)
    for t_end in (-t_max, t_max):
        path = trace_characteristic(eps, convexity_sign, (eta0, phi0), (0.0, t_end), step=None, rtol=1e-10, atol=1e-12)
        if path.reached_boundary:
            return True
    return False


def trace_family(
    eps: float,
    convexity_sign: int,
    starts: Sequence[Tuple[float, float]],
    t_max: float,
    step: float = 0.05,
) -> List[CharacteristicPath]:
    """Backward paths from a set of starting points."""
    return [trace_characteristic(eps, convexity_sign, s, (0.0, -t_max), step=step) for s in starts]


def dump_paths_csv(paths: Sequence[CharacteristicPath], path) -> pd.DataFrame:
    """Write paths in long format with columns path, t, eta, phi, E."""
    frames = [
        pd.DataFrame({"path": k, "t": p.t, "eta": p.eta, "phi": p.phi, "E": p.conserved})
        for k, p in enumerate(paths)
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["path", "t", "eta", "phi", "E"])
    frame.to_csv(path, index=False, float_format="%.12e")
    return frame
