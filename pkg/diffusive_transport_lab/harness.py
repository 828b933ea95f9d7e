"""
Study harness

Reads a StudyConfig, runs the requested studies over an eps sweep and writes
a ConvergenceReport (JSON) plus one CSV table per study. Studies:

    converge        |u - U0| and the discrete maximum principle per eps
    remainder       norms of R = u - u_a, the synthesis bound, the energy identity
    sources         norms of h and S0..S3, the boundary layer and the consistency defect
    kernel-check    the weak formulation tested with xi and w.grad xi
    milne           decay, far-field stability and profiles of half-space problems
    characteristics paths and hollow-region masks of the geometric correction
    oracle          iterative solvers against direct solves of the assembled systems
    exactness       constant data end to end, Green identity under refinement

Slopes are least-squares fits of log(value) against log(eps); every slope or
value with a declared band becomes a pass/fail check.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    from .boundary_layer import CutoffSpec, FaceLayers, build_face_layers, face_phi_inf, solve_face_milne
    from .characteristics import classify_hollow, conserved_quantity, dump_paths_csv, reaches_boundary, trace_family
    from .data_families import DATA_FAMILIES, BoundaryData, ConstantData, make_boundary_data
    from .errors import ConfigurationError, LabError, StudyError
    from .field_io import export_field
    from .interior import InteriorSolution, build_expansion
    from .milne import MilneOperator, MilneProblem, dump_profile_csv, flux_profile, graded_eta_mesh, milne_infinity, solve_milne
    from .norms import boundary_norm, norm_suite
    from .phase_space import PhaseSpaceGrid, build_phase_space_grid
    from .quadgeom import DomainSpec, build_angular_grid
    from .sources import ApproximateSolution, SourceTerms, assemble_h, assemble_sources, build_approximate_solution, energy_identity
    from .sweep import assemble_sweep, solve_full_system
    from .transport import (
        SolverSettings,
        TransportField,
        TransportProblem,
        green_identity_residual,
        kernel_estimate_check,
        leading_order_error,
        remainder_diagnostics,
        select_strategy,
        solve_transport,
        source_consistency,
        synthesis_bound,
    )
    from .transport_context import TransportSolverContext
except ImportError:
    from boundary_layer import CutoffSpec, FaceLayers, build_face_layers, face_phi_inf, solve_face_milne
    from characteristics import classify_hollow, conserved_quantity, dump_paths_csv, reaches_boundary, trace_family
    from data_families import DATA_FAMILIES, BoundaryData, ConstantData, make_boundary_data
    from errors import ConfigurationError, LabError, StudyError
    from field_io import export_field
    from interior import InteriorSolution, build_expansion
    from milne import MilneOperator, MilneProblem, dump_profile_csv, flux_profile, graded_eta_mesh, milne_infinity, solve_milne
    from norms import boundary_norm, norm_suite
    from phase_space import PhaseSpaceGrid, build_phase_space_grid
    from quadgeom import DomainSpec, build_angular_grid
    from sources import ApproximateSolution, SourceTerms, assemble_h, assemble_sources, build_approximate_solution, energy_identity
    from sweep import assemble_sweep, solve_full_system
    from transport import (
        SolverSettings,
        TransportField,
        TransportProblem,
        green_identity_residual,
        kernel_estimate_check,
        leading_order_error,
        remainder_diagnostics,
        select_strategy,
        solve_transport,
        source_consistency,
        synthesis_bound,
    )
    from transport_context import TransportSolverContext


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_EPS = [0.2, 0.1, 0.05, 0.025, 0.0125]
StudyName = Literal["converge", "remainder", "sources", "kernel-check", "milne", "characteristics", "oracle", "exactness"]
STUDIES = StudyName.__args__
RATE_STUDIES = ("converge", "remainder", "sources")
TRANSPORT_STUDIES = ("converge", "remainder", "kernel-check")
SWEEP_STUDIES = TRANSPORT_STUDIES + ("sources",)
MILNE_FAMILIES = ["constant", "smooth", "fourier", "grazing", "tabulated"]


# ---------------------------------------------------------------- configuration


class DomainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["disk", "annulus", "ball", "shell"] = "disk"
    radius: float = Field(1.0, gt=0)
    inner: float = Field(1.0, gt=0)
    outer: float = Field(2.0, gt=0)

    @model_validator(mode="after")
    def _radii_ordered(self):
        if self.kind in ("annulus", "shell") and not self.inner < self.outer:
            raise ValueError(f"{self.kind} needs inner < outer, got {self.inner}, {self.outer}")
        return self

    def to_spec(self) -> DomainSpec:
        if self.kind in ("disk", "ball"):
            return DomainSpec(self.kind, (self.radius,))
        return DomainSpec(self.kind, (self.inner, self.outer))


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: str = "smooth"
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("family")
    @classmethod
    def _known_family(cls, value):
        if value not in DATA_FAMILIES:
            raise ValueError(f"unknown data family {value!r}; choose one of {sorted(DATA_FAMILIES)}")
        return value

    def build(self) -> BoundaryData:
        return make_boundary_data(self.family, self.params)


def _even_polar(value: int) -> int:
    if value < 2 or value % 2:
        raise ValueError(f"n_polar must be even and >= 2, got {value}")
    return value


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_theta: int = Field(48, ge=4)
    n_polar: int = 24
    n_grazing: int = Field(6, ge=0)
    grazing_width: Optional[float] = Field(None, gt=0)
    max_step: float = Field(1.0 / 24.0, gt=0)
    ratio: float = Field(1.15, ge=1.0)
    first_step: Optional[float] = Field(None, gt=0)
    refine: int = Field(1, ge=1)
    n_modes: int = Field(32, ge=1)

    @field_validator("n_polar")
    @classmethod
    def _check_polar(cls, value):
        return _even_polar(value)

    def options(self, refine: int = 1) -> dict:
        return {
            "n_theta": self.n_theta,
            "n_polar": self.n_polar,
            "n_grazing": self.n_grazing,
            "grazing_width": self.grazing_width,
            "max_step": self.max_step,
            "ratio": self.ratio,
            "first_step": self.first_step,
            "refine": self.refine * refine,
        }


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strategy: Literal["auto", "direct", "source_iteration", "dsa"] = "auto"
    tol: float = Field(1e-10, gt=0)
    max_iterations: int = Field(500, ge=1)
    accelerate: bool = True
    direct_threshold: int = Field(6000, ge=0)

    def settings(self) -> SolverSettings:
        return SolverSettings(self.strategy, self.tol, self.max_iterations, self.accelerate, self.direct_threshold)


class MilneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    height: float = Field(30.0, gt=0)
    first_step: float = Field(0.01, gt=0)
    ratio: float = Field(1.1, ge=1.0)
    max_step: float = Field(0.5, gt=0)
    closure: Literal["isotropic", "specular"] = "isotropic"
    method: Literal["direct", "iterate"] = "direct"
    tol: float = Field(1e-10, gt=0)
    n_polar: int = 16
    families: List[str] = Field(default_factory=lambda: list(MILNE_FAMILIES))

    @field_validator("n_polar")
    @classmethod
    def _check_polar(cls, value):
        return _even_polar(value)

    @field_validator("families")
    @classmethod
    def _known_families(cls, value):
        unknown = [f for f in value if f not in DATA_FAMILIES]
        if unknown:
            raise ValueError(f"unknown Milne data families {unknown}")
        return value

    def mesh(self, height: Optional[float] = None) -> np.ndarray:
        return graded_eta_mesh(self.height if height is None else height, self.first_step, self.ratio, self.max_step)


class CharacteristicsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps: float = Field(0.1, gt=0, le=0.5)
    eta_max: float = Field(20.0, gt=0)
    n_eta: int = Field(81, ge=2)
    n_phi: int = Field(73, ge=2)
    n_paths_eta: int = Field(6, ge=1)
    n_paths_phi: int = Field(9, ge=1)
    t_max: float = Field(40.0, gt=0)
    step: float = Field(0.05, gt=0)
    n_samples: int = Field(500, ge=0)


class OracleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps: float = Field(0.2, gt=0, le=0.5)
    n_theta: int = Field(8, ge=4)
    n_polar: int = 8
    max_step: float = Field(0.125, gt=0)
    strategies: List[Literal["direct", "source_iteration", "dsa"]] = Field(
        default_factory=lambda: ["direct", "dsa", "source_iteration"]
    )
    tol: float = Field(1e-12, gt=0)
    max_iterations: int = Field(20000, ge=1)
    max_unknowns: int = Field(100_000, ge=1)

    @field_validator("n_polar")
    @classmethod
    def _check_polar(cls, value):
        return _even_polar(value)


class BandConfig(BaseModel):
    """Accepted range of a fitted slope or of a per-row value; None leaves a side open."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["slope", "value"] = "slope"
    low: Optional[float] = None
    high: Optional[float] = None

    @model_validator(mode="after")
    def _ordered(self):
        if self.low is not None and self.high is not None and self.low > self.high:
            raise ValueError(f"band low {self.low} exceeds high {self.high}")
        return self

    def contains(self, value: float) -> bool:
        if value is None or np.isnan(value):
            return False
        return (self.low is None or value >= self.low) and (self.high is None or value <= self.high)


def default_bands() -> Dict[str, BandConfig]:
    slope, value = "slope", "value"
    table = {
        "converge.u_minus_U0": (slope, 0.4, 0.6),
        "converge.inflow_defect": (value, None, 1e-8),
        "converge.max_principle_violation": (value, None, 1e-8),
        "converge.refinement_change": (value, None, 0.05),
        "remainder.Rbar": (slope, 0.4, None),
        "remainder.R_minus_Rbar": (slope, 0.8, None),
        "remainder.R_gamma_plus": (slope, 0.4, None),
        "remainder.decomposition_defect": (value, None, 1e-10),
        "remainder.energy_imbalance": (value, None, 0.1),
        "sources.h_gamma_minus": (slope, 0.9, 1.1),
        "sources.S0_L2": (slope, 1.8, 2.2),
        "sources.S1_L2_weighted": (slope, -0.2, 0.2),
        "sources.S2_L2_weighted": (slope, 0.4, 0.6),
        "sources.S3_L2xL1w_weighted": (slope, 0.4, 0.6),
        "sources.UB0_L2": (slope, 0.4, 0.6),
        "kernel-check.second_moment_ratio": (value, 0.8, 1.2),
        "kernel-check.oddness_relative": (value, None, 1e-10),
        "milne.decay_rate": (value, 1e-8, None),
        "milne.phi_inf_stability": (value, None, 1e-6),
        "milne.max_principle_violation": (value, None, 1e-9),
        "oracle.max_difference": (value, None, 1e-8),
        "exactness.u_deviation": (value, None, 1e-10),
        "exactness.sources_max": (value, None, 1e-10),
        "exactness.h_max": (value, None, 1e-10),
        "exactness.green_ratio": (value, None, 0.75),
        "characteristics.conserved_drift": (value, None, 1e-8),
        "characteristics.membership_mismatch": (value, None, 0.0),
    }
    return {k: BandConfig(kind=kind, low=lo, high=hi) for k, (kind, lo, hi) in table.items()}


class StudyConfig(BaseModel):
    """
    Complete description of one study run. Every field has a default, and the
    resolved config is echoed into the report.
    """

    model_config = ConfigDict(extra="forbid")

    name: str = "study"
    domain: DomainConfig = Field(default_factory=DomainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    eps: List[float] = Field(default_factory=lambda: list(DEFAULT_EPS))
    grid: GridConfig = Field(default_factory=GridConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    milne: MilneConfig = Field(default_factory=MilneConfig)
    characteristics: CharacteristicsConfig = Field(default_factory=CharacteristicsConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    studies: List[StudyName] = Field(default_factory=lambda: ["converge"])
    bands: Dict[str, BandConfig] = Field(default_factory=default_bands)
    velocity_cutoff: bool = True
    refinement_check: bool = False
    export_fields: bool = True
    optimality_cap: Optional[float] = 0.75
    zero_tol: float = Field(1e-10, gt=0)
    output: str = "results"
    seed: int = 0
    threads: int = Field(1, ge=1)

    @field_validator("eps")
    @classmethod
    def _eps_decreasing(cls, value):
        if not value:
            raise ValueError("eps list is empty")
        if any(not 0 < e <= 0.5 for e in value):
            raise ValueError(f"every eps must lie in (0, 0.5], got {value}")
        if any(b >= a for a, b in zip(value, value[1:])):
            raise ValueError(f"eps list must be strictly decreasing, got {value}")
        return value

    @field_validator("bands", mode="before")
    @classmethod
    def _merge_bands(cls, value):
        merged = {k: v.model_dump() for k, v in default_bands().items()}
        merged.update(value or {})
        return merged

    @field_validator("studies")
    @classmethod
    def _unique_studies(cls, value):
        if len(set(value)) != len(value):
            raise ValueError(f"studies listed twice: {value}")
        return value

    @model_validator(mode="after")
    def _enough_eps(self):
        fitted = [s for s in self.studies if s in RATE_STUDIES]
        if fitted and len(self.eps) < 3:
            raise ValueError(f"studies {fitted} fit rates and need at least 3 eps values, got {len(self.eps)}")
        return self

    @classmethod
    def from_dict(cls, document: dict) -> "StudyConfig":
        try:
            return cls.model_validate(document)
        except ValidationError as exc:
            raise ConfigurationError(f"invalid study config: {exc}") from exc

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "StudyConfig":
        try:
            document = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(document)


# ---------------------------------------------------------------- report


@dataclass
class RateFit:
    """Least-squares fit of log(value) = slope * log(eps) + intercept; residual is the RMS misfit."""

    slope: Optional[float]
    intercept: Optional[float]
    residual: Optional[float]
    n_points: int
    degenerate: bool = False


@dataclass
class BandCheck:
    name: str
    kind: str
    value: Optional[float]
    low: Optional[float]
    high: Optional[float]
    passed: bool
    note: str = ""


@dataclass
class ConvergenceReport:
    """
    Per-eps rows of every measured quantity, fitted slopes, grid metadata and
    the pass/fail checks.
    """

    config: dict
    tables: Dict[str, List[dict]] = field(default_factory=dict)
    slopes: Dict[str, RateFit] = field(default_factory=dict)
    checks: List[BandCheck] = field(default_factory=list)
    grids: List[dict] = field(default_factory=list)
    files: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[BandCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return _clean({
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "tables": self.tables,
            "slopes": {k: asdict(v) for k, v in self.slopes.items()},
            "checks": [asdict(c) for c in self.checks],
            "grids": self.grids,
            "files": sorted(self.files),
            "passed": self.passed,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, out_dir: Union[str, Path]) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in self.tables.items():
            if rows:
                _write_csv(pd.DataFrame(rows), out / f"{name}.csv")
        if self.slopes:
            frame = pd.DataFrame([{"quantity": k, **asdict(v)} for k, v in sorted(self.slopes.items())])
            _write_csv(frame, out / "slopes.csv")
        if self.checks:
            _write_csv(pd.DataFrame([asdict(c) for c in self.checks]), out / "checks.csv")
        path = out / "report.json"
        path.write_text(self.to_json() + "\n")
        return path


def _write_csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, float_format="%.12e")


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else None
    return value


def fit_rate(pairs: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Fit value ~ C eps^slope by least squares in log-log.

    Args:
        pairs: (eps, value) pairs, at least three

    Returns:
        RateFit; `degenerate` is set and no fit is made when a value is not positive

    Raises:
        ConfigurationError: fewer than three pairs or a nonpositive eps
    """
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 3:
        raise ConfigurationError(f"rate fit needs at least 3 points, got {len(pairs)}")
    eps = np.array([p[0] for p in pairs])
    values = np.array([p[1] for p in pairs])
    if np.any(eps <= 0):
        raise ConfigurationError("rate fit needs positive eps")
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        return RateFit(None, None, None, len(pairs), degenerate=True)
    design = np.column_stack([np.log(eps), np.ones_like(eps)])
    coef, *_ = np.linalg.lstsq(design, np.log(values), rcond=None)
    misfit = np.log(values) - design @ coef
    return RateFit(float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(misfit ** 2))), len(pairs))


# ---------------------------------------------------------------- eps sweep


@contextmanager
def _stage(name: str):
    try:
        yield
    except StudyError:
        raise
    except (LabError, ValueError, RuntimeError, ArithmeticError) as exc:
        raise StudyError(name, exc) from exc


@dataclass
class SweepMember:
    """Everything computed for one eps: grid, expansion, sources and (optionally) the transport solve."""

    eps: float
    grid: PhaseSpaceGrid
    data: BoundaryData
    interior: InteriorSolution
    layers: FaceLayers
    approximate: ApproximateSolution
    sources: SourceTerms
    transport: Optional[TransportField] = None

    @cached_property
    def diagnostics(self):
        if self.transport is None:
            raise ConfigurationError(f"no transport solution at eps={self.eps}")
        return remainder_diagnostics(self.transport, self.approximate)

    def metadata(self) -> dict:
        meta = {
            "eps": self.eps,
            "n_r": self.grid.n_r,
            "n_theta": self.grid.n_theta,
            "n_dirs": self.grid.n_dirs,
            "unknowns": self.grid.n_space * self.grid.n_dirs,
            "collar_cells": min(self.grid.collar_cell_count(f) for f in self.grid.domain.faces),
            "collar_resolved": self.grid.collar_resolved(),
            "truncation_error": self.interior.u0.truncation_error,
        }
        if self.transport is not None:
            t = self.transport
            meta.update(strategy=t.strategy, iterations=t.iterations, residual=t.residual)
        return meta


def solve_member(config: StudyConfig, eps: float, with_transport: bool = True, refine: int = 1, data: Optional[BoundaryData] = None) -> SweepMember:
    """Build the grid, the Milne layers, the approximate solution and the sources at one eps; solve transport on request."""
    domain = config.domain.to_spec()
    data = config.data.build() if data is None else data
    with _stage("grid"):
        grid = build_phase_space_grid(domain, eps, **config.grid.options(refine))
    with _stage("milne"):
        solutions = solve_face_milne(
            grid, data, eta=config.milne.mesh(), closure=config.milne.closure, method=config.milne.method, tol=config.milne.tol
        )
    with _stage("interior"):
        interior = build_expansion(domain, face_phi_inf(solutions), eps, config.grid.n_modes)
    with _stage("sources"):
        layers = build_face_layers(solutions, eps, CutoffSpec())
        approximate = build_approximate_solution(grid, interior, layers, eps)
        sources = assemble_sources(grid, interior, layers, eps, config.velocity_cutoff)
    transport = None
    if with_transport:
        with _stage("transport"):
            transport = solve_transport(TransportProblem(domain, eps, data, grid, config.solver.settings()))
    return SweepMember(eps, grid, data, interior, layers, approximate, sources, transport)


def _map(func: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def solve_sweep(config: StudyConfig, with_transport: bool = True, threads: int = 1) -> List[SweepMember]:
    """Members for every eps of the config, in config order."""
    members = _map(lambda e: solve_member(config, e, with_transport), config.eps, threads)
    for m in members:
        logger.info("eps=%g: %s", m.eps, m.metadata())
    return members


# ---------------------------------------------------------------- studies


def _converge(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    rows = []
    refined = []
    if config.refinement_check:
        refined = _map(lambda e: solve_member(config, e, True, refine=2), config.eps, threads)
    for n, m in enumerate(members):
        u = m.transport
        lo, hi = m.data.bounds()
        row = {
            "eps": m.eps,
            "u_minus_U0": leading_order_error(u, m.approximate.leading_order),
            "inflow_defect": u.inflow_defect(m.data),
            "max_principle_violation": max(lo - float(u.values.min()), float(u.values.max()) - hi, 0.0),
            "iterations": u.iterations,
            "collar_resolved": u.collar_resolved,
        }
        if refined:
            fine = leading_order_error(refined[n].transport, refined[n].approximate.leading_order)
            row["u_minus_U0_refined"] = fine
            row["refinement_change"] = abs(fine - row["u_minus_U0"]) / max(row["u_minus_U0"], 1e-300)
        rows.append(row)
        if config.export_fields:
            for name, values in (("u", u.values), ("ubar", u.average)):
                path = export_field(
                    out / f"{name}_eps{m.eps:g}.tfld", m.grid, values, name=name, extra={"strategy": u.strategy}
                )
                report.files.append(path.name)
    report.tables["converge"] = rows
    if config.optimality_cap is not None:
        fit = fit_rate([(r["eps"], r["u_minus_U0"]) for r in rows])
        ok = fit.degenerate or fit.slope <= config.optimality_cap
        report.checks.append(
            BandCheck("converge.u_minus_U0.optimality", "slope", fit.slope, None, config.optimality_cap, ok)
        )


def _remainder(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    rows = []
    for m in members:
        diag = m.diagnostics
        energy = energy_identity(diag.remainder, m.sources.total, m.grid, m.eps)
        row = {"eps": m.eps, **diag.norms}
        row["synthesis_bound"] = synthesis_bound(diag)
        row["decomposition_defect"] = diag.decomposition_defect()
        row.update({f"energy_{k}": v for k, v in energy.terms.items()})
        row["energy_imbalance"] = energy.imbalance
        rows.append(row)
    report.tables["remainder"] = rows


def _sources(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    rows = []
    for m in members:
        s, grid = m.sources, m.grid
        weight = grid.eta_weight()
        row = {"eps": m.eps, "h_gamma_minus": boundary_norm(grid, s.h, "gamma_minus")}
        plain = assemble_h(grid, m.interior, m.layers, m.eps, velocity_cutoff=False)
        row["h_gamma_minus_no_cutoff"] = boundary_norm(grid, plain, "gamma_minus")
        fields = {"S0": s.s0, "UB0": s.layer, **s.components()}
        for name, values in fields.items():
            measures = ("L2", "L2xL1w")
            suite = norm_suite(values, grid, name, m.eps, measures, weight=None if name == "S0" else weight)
            row.update({f"{name}_{k}": v for k, v in suite.values.items()})
        row["consistency"] = source_consistency(m.approximate, s)
        rows.append(row)
    report.tables["sources"] = rows


def _kernel_check(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    rows = []
    for m in members:
        kernel = kernel_estimate_check(m.diagnostics, m.sources)
        terms = kernel.terms
        scale = max(abs(terms["rbar_squared"]), 1e-300)
        row = {"eps": m.eps, **terms}
        row["oddness_relative"] = abs(terms["oddness"]) / scale
        row["conservation_relative"] = abs(terms["conservation_defect"]) / scale
        row["weak_relative"] = abs(terms["weak_defect"]) / scale
        rows.append(row)
    report.tables["kernel-check"] = rows


def _boundary_data_on_grid(data: BoundaryData, angles) -> np.ndarray:
    phi = angles.phi[angles.incoming]
    return np.broadcast_to(data.evaluate("outer", 0.0, phi), phi.shape).copy()


def _milne(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    mc = config.milne
    dimension = config.domain.to_spec().dimension
    angles = build_angular_grid(dimension, mc.n_polar)
    eta, eta_long = mc.mesh(), mc.mesh(2.0 * mc.height)
    operator = MilneOperator(angles, eta, mc.closure)
    operator_long = MilneOperator(angles, eta_long, mc.closure)

    def run(family: str) -> dict:
        data = make_boundary_data(family)
        g = _boundary_data_on_grid(data, angles)
        solution = solve_milne(MilneProblem(angles, g, eta, mc.closure), mc.tol, mc.method, operator)
        long = solve_milne(MilneProblem(angles, g, eta_long, mc.closure), mc.tol, mc.method, operator_long)
        profile = out / f"milne_{family}.csv"
        dump_profile_csv(solution, profile)
        flux = flux_profile(solution)
        lo, hi = float(g.min()), float(g.max())
        return {
            "family": family,
            "phi_inf": milne_infinity(solution),
            "phi_inf_long": milne_infinity(long),
            "phi_inf_stability": abs(milne_infinity(solution) - milne_infinity(long)),
            "decay_rate": solution.decay_rate,
            "decay_rate_fit": solution.decay_rate_fit,
            "decay_constant": solution.decay_constant,
            "psi_boundary_sup": float(np.max(np.abs(solution.psi[0]))),
            "flux_variation": float(np.max(np.abs(flux - flux[0]))),
            "max_principle_violation": max(lo - float(solution.values.min()), float(solution.values.max()) - hi, 0.0),
            "residual": solution.residual,
            "profile": profile.name,
        }

    out.mkdir(parents=True, exist_ok=True)
    rows = _map(run, mc.families, threads)
    report.files.extend(r["profile"] for r in rows)
    report.tables["milne"] = rows


@dataclass
class CharacteristicsExport:
    files: Dict[str, Path]
    rows: List[dict]


def export_characteristics(config: StudyConfig, out_dir: Union[str, Path]) -> CharacteristicsExport:
    """
    Write backward characteristic families and hollow-region masks for the
    convex (+1) and non-convex (-1) geometric correction at the configured eps.

    Files: paths_<convex|nonconvex>.csv with columns path, t, eta, phi, E and
    hollow_<convex|nonconvex>.csv with the (eta, phi, E) grid points whose
    characteristic never reaches eta = 0.
    """
    cc = config.characteristics
    eps = cc.eps
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    files, rows = {}, []
    eta_grid = np.linspace(0.0, cc.eta_max, cc.n_eta)
    phi_grid = np.linspace(-0.5 * np.pi, 0.5 * np.pi, cc.n_phi)

    for sign, label in ((1, "convex"), (-1, "nonconvex")):
        # convex paths must start inside the strip eps*eta < 1
        eta_cap = cc.eta_max if sign < 0 else min(cc.eta_max, 0.9 / eps)
        starts = [
            (e, p)
            for e in np.linspace(0.0, eta_cap, cc.n_paths_eta + 1)[1:]
            for p in np.linspace(-0.5 * np.pi, 0.5 * np.pi, cc.n_paths_phi + 2)[1:-1]
        ]
        paths = trace_family(eps, sign, starts, cc.t_max, cc.step)
        files[f"paths_{label}"] = out / f"paths_{label}.csv"
        dump_paths_csv(paths, files[f"paths_{label}"])

        mask = classify_hollow(eps, sign, eta_grid, phi_grid)
        ee, pp = np.meshgrid(eta_grid, phi_grid, indexing="ij")
        hollow = pd.DataFrame({
            "eta": ee[mask], "phi": pp[mask], "E": conserved_quantity(eps, sign, ee[mask], pp[mask]),
        })
        files[f"hollow_{label}"] = out / f"hollow_{label}.csv"
        _write_csv(hollow, files[f"hollow_{label}"])

        sample_eta = rng.uniform(0.0, eta_cap, cc.n_samples)
        sample_phi = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, cc.n_samples)
        predicted = classify_hollow(eps, sign, sample_eta[:, None], sample_phi[:, None]).ravel() if cc.n_samples else np.zeros(0, bool)
        mismatch = sum(
            bool(h) == reaches_boundary(eps, sign, float(e), float(p))
            for h, e, p in zip(predicted, sample_eta, sample_phi)
        )
        rows.append({
            "eps": eps,
            "convexity_sign": sign,
            "paths": len(paths),
            "conserved_drift": max((p.conserved_drift() for p in paths), default=0.0),
            "hollow_points": int(mask.sum()),
            "samples": cc.n_samples,
            "membership_mismatch": int(mismatch),
        })
        logger.info("characteristics %s eps=%g: %d hollow grid points, %d sample mismatches", label, eps, int(mask.sum()), mismatch)
    return CharacteristicsExport(files, rows)


def _characteristics(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    export = export_characteristics(config, out)
    report.files.extend(p.name for p in export.files.values())
    report.tables["characteristics"] = export.rows
    by_sign = {r["convexity_sign"]: r for r in export.rows}
    report.checks.append(
        BandCheck("characteristics.convex_hollow_empty", "value", by_sign[1]["hollow_points"], None, 0.0,
                  by_sign[1]["hollow_points"] == 0)
    )
    report.checks.append(
        BandCheck("characteristics.nonconvex_hollow_nonempty", "value", by_sign[-1]["hollow_points"], 1.0, None,
                  by_sign[-1]["hollow_points"] > 0)
    )


def _oracle(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    oc = config.oracle
    domain = config.domain.to_spec()
    data = config.data.build()
    grid = build_phase_space_grid(domain, oc.eps, n_theta=oc.n_theta, n_polar=oc.n_polar, n_grazing=0, max_step=oc.max_step)
    unknowns = grid.n_space * grid.n_dirs
    if unknowns > oc.max_unknowns:
        raise ConfigurationError(f"oracle instance has {unknowns} unknowns, above the limit {oc.max_unknowns}")
    system = assemble_sweep(grid, data)
    angular, scalar = solve_full_system(system)
    rows = []
    for name in oc.strategies:
        settings = SolverSettings(strategy=name, tol=oc.tol, max_iterations=oc.max_iterations)
        context = TransportSolverContext(select_strategy(settings, system.size))
        solution = context.solve(system)
        values = system.angular_flux(solution.average)
        rows.append({
            "eps": oc.eps,
            "solver": context.get_current_strategy(),
            "unknowns": unknowns,
            "max_difference": float(np.max(np.abs(values - angular))),
            "average_difference": float(np.max(np.abs(solution.average - scalar))),
            "iterations": solution.iterations,
        })

    mc = config.milne
    angles = build_angular_grid(domain.dimension, mc.n_polar)
    eta = mc.mesh()
    operator = MilneOperator(angles, eta, mc.closure)
    for family in mc.families:
        problem = MilneProblem(angles, _boundary_data_on_grid(make_boundary_data(family), angles), eta, mc.closure)
        direct = solve_milne(problem, oc.tol, "direct", operator)
        iterated = solve_milne(problem, oc.tol, "iterate", operator, max_iterations=oc.max_iterations)
        rows.append({
            "eps": None,
            "solver": f"milne:{family}",
            "unknowns": direct.values.size,
            "max_difference": float(np.max(np.abs(direct.values - iterated.values))),
            "average_difference": abs(direct.phi_inf - iterated.phi_inf),
            "iterations": iterated.iterations,
        })
    report.tables["oracle"] = rows


def _exactness(config: StudyConfig, members: List[SweepMember], report: ConvergenceReport, out: Path, threads: int):
    value = float(config.data.params.get("value", 1.0)) if config.data.family == "constant" else 1.0
    data = ConstantData(value)
    constant = _map(lambda e: solve_member(config, e, True, data=data), config.eps, threads)
    rows = []
    for m in constant:
        rows.append({
            "eps": m.eps,
            "u_deviation": float(np.max(np.abs(m.transport.values - value))),
            "ua_deviation": float(np.max(np.abs(m.approximate.values - value))),
            "sources_max": max(float(np.max(np.abs(v))) for v in (m.sources.s0, *m.sources.components().values())),
            "h_max": max(float(np.max(np.abs(v))) for v in m.sources.h.values.values()),
        })

    domain = config.domain.to_spec()
    eps = config.eps[0]
    previous = None
    for refine in (1, 2):
        grid = build_phase_space_grid(domain, eps, **config.grid.options(refine))
        x = grid.points
        w = grid.directions()
        f = np.sum(x ** 2, axis=1)
        g = 1.0 + x[:, :1] * w[..., 0]
        residual = green_identity_residual(grid, f, g)
        row = {"eps": eps, "refine": refine, "green_residual": residual}
        if previous is not None:
            row["green_ratio"] = residual / max(previous, 1e-300)
        previous = residual
        rows.append(row)
    report.tables["exactness"] = rows


STUDY_RUNNERS: Dict[str, Callable] = {
    "converge": _converge,
    "remainder": _remainder,
    "sources": _sources,
    "kernel-check": _kernel_check,
    "milne": _milne,
    "characteristics": _characteristics,
    "oracle": _oracle,
    "exactness": _exactness,
}


# ---------------------------------------------------------------- bands


def _worst(values: List[float], band: BandConfig) -> float:
    def excess(v):
        if v is None or not np.isfinite(v):
            return np.inf
        over = v - band.high if band.high is not None else -np.inf
        under = band.low - v if band.low is not None else -np.inf
        return max(over, under)

    return max(values, key=excess)


def apply_bands(config: StudyConfig, report: ConvergenceReport):
    """Fit every banded quantity and record a check per band whose study ran."""
    for key, band in sorted(config.bands.items()):
        study, _, quantity = key.partition(".")
        rows = report.tables.get(study)
        if not rows:
            continue
        present = [r for r in rows if r.get(quantity) is not None]
        if not present:
            continue
        if band.kind == "slope":
            fit = fit_rate([(r["eps"], r[quantity]) for r in present])
            report.slopes[key] = fit
            if fit.degenerate:
                zero = all(abs(r[quantity]) <= config.zero_tol for r in present)
                report.checks.append(BandCheck(key, "slope", None, band.low, band.high, zero, "exact zero" if zero else "degenerate fit"))
                if not zero:
                    logger.warning("%s: nonpositive values, no rate fitted", key)
                continue
            logger.info("%s: slope %.4f (residual %.2e)", key, fit.slope, fit.residual)
            report.checks.append(BandCheck(key, "slope", fit.slope, band.low, band.high, band.contains(fit.slope)))
        else:
            values = [float(r[quantity]) for r in present]
            worst = _worst(values, band)
            report.checks.append(
                BandCheck(key, "value", worst, band.low, band.high, all(band.contains(v) for v in values))
            )


def run_study(config: StudyConfig, out_dir: Optional[Union[str, Path]] = None, threads: Optional[int] = None) -> ConvergenceReport:
    """
    Run every requested study and write the report.

    Args:
        config: validated study config
        out_dir: output directory (defaults to config.output)
        threads: worker threads for independent solves (defaults to config.threads)

    Returns:
        ConvergenceReport; `passed` reflects every declared band

    Raises:
        StudyError: any module error, tagged with the stage that raised it
    """
    out = Path(out_dir if out_dir is not None else config.output)
    threads = config.threads if threads is None else threads
    report = ConvergenceReport(config=config.model_dump(mode="json"))
    members: List[SweepMember] = []
    if any(s in SWEEP_STUDIES for s in config.studies):
        with_transport = any(s in TRANSPORT_STUDIES for s in config.studies)
        members = solve_sweep(config, with_transport, threads)
        report.grids = [m.metadata() for m in members]
        unresolved = [m.eps for m in members if not m.grid.collar_resolved()]
        if unresolved:
            logger.warning("boundary collar under-resolved at eps=%s", unresolved)

    for study in config.studies:
        logger.info("%s: running %s study", config.name, study)
        with _stage(study):
            STUDY_RUNNERS[study](config, members, report, out, threads)

    with _stage("report"):
        apply_bands(config, report)
        report.write(out)
    logger.info(
        "%s: %d checks, %d failed", config.name, len(report.checks), len(report.failures())
    )
    return report
