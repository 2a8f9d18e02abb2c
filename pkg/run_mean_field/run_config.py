"""
YAML run configuration -> ProblemSpec and solver/particle/output settings.

Every mapping is checked against its allowed keys so typos fail loudly.
Relative snapshot filenames are resolved against the config file's directory.
"""
import hashlib
import json
import logging
import os
from typing import Dict, List, NamedTuple, Optional, Tuple

import yaml

from mfoc.exceptions import AssumptionError, ConfigError, MFOCError
from mfoc.grid.calculus import integrate
from mfoc.grid.snapshot import read_field
from mfoc.grid.torus import ScalarField, TimeMesh, TorusGrid
from mfoc.problem.couplings import (AdditiveNonlocalCoupling, ConstantCoupling, Coupling, LocalPowerCoupling,
                                    RunningCost)
from mfoc.problem.fields import FourierMode, TrigonometricSeries
from mfoc.problem.potentials import (MorsePotential, Potential, PowerLawPotential, TabulatedPotential,
                                     TrigonometricPotential)
from mfoc.problem.problem_spec import ProblemSpec
from mfoc.solvers.fixed_point import DEFAULT_DAMPING, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE
from mfoc.solvers.fokker_planck import DEFAULT_CFL_SAFETY, DEFAULT_MAX_SUBSTEPS

OUTPUT_ROOT_ENV = "MFOC_OUTPUT_ROOT"
MASS_TOLERANCE = 1e-12
# rho0 whose mass is off by more than this is a modelling error, not quadrature noise
MASS_RENORMALIZE_LIMIT = 1e-2

SECTIONS = {"problem", "solver", "particles", "output"}
PROBLEM_KEYS = {"grid", "mesh", "potential", "coupling", "rho0", "phi_T", "running_cost"}


class SolverSettings(NamedTuple):
    damping: float = DEFAULT_DAMPING
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    cfl_safety: float = DEFAULT_CFL_SAFETY
    budget_slack: float = 0.0
    max_substeps: int = DEFAULT_MAX_SUBSTEPS


class ProbePoint(NamedTuple):
    x0: Tuple[float, ...]
    t0: float


class ParticleSettings(NamedTuple):
    N: int = 10_000
    seeds: Tuple[int, ...] = (0,)
    probe_points: Tuple[ProbePoint, ...] = ()
    n_perturb: int = 10
    epsilon: float = 0.1


class OutputSettings(NamedTuple):
    directory: str = "mfoc_output"
    snapshot_stride: int = 1


class RunConfig:

    def __init__(self, spec: ProblemSpec, solver: SolverSettings, particles: ParticleSettings,
                 output: OutputSettings, raw: dict, filename: Optional[str] = None):
        self.spec = spec
        self.solver = solver
        self.particles = particles
        self.output = output
        self.raw = raw
        self.filename = filename

    def __repr__(self):
        return f"RunConfig({self.filename}, {self.spec})"

    @property
    def config_hash(self) -> str:
        """ sha256 of the parsed configuration (independent of YAML formatting) """
        canonical = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _check_keys(mapping, path: str, allowed, required=()):
    if not isinstance(mapping, dict):
        raise ConfigError(f"'{path}' must be a mapping, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"Unknown key '{path}.{key}' (allowed: {', '.join(sorted(allowed))})")
    for key in required:
        if key not in mapping:
            raise ConfigError(f"Missing required key '{path}.{key}'")
    return mapping


def _number(mapping: dict, key: str, path: str, default=None, kind=float):
    value = mapping.get(key, default)
    if value is None:
        raise ConfigError(f"Missing required key '{path}.{key}'")
    if isinstance(value, bool):
        raise ConfigError(f"'{path}.{key}' must be a number, got {value!r}")
    try:
        converted = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}.{key}' must be a number, got {value!r}")
    if kind is int and converted != value:
        raise ConfigError(f"'{path}.{key}' must be an integer, got {value!r}")
    return converted


def _series(descriptor: dict, d: int, path: str) -> TrigonometricSeries:
    modes = []
    for i, mode in enumerate(descriptor.get("modes", [])):
        mode_path = f"{path}.modes[{i}]"
        _check_keys(mode, mode_path, {"wavevector", "cos", "sin"}, required=("wavevector",))
        wavevector = mode["wavevector"]
        if isinstance(wavevector, int):
            wavevector = [wavevector]
        if len(wavevector) != d:
            raise ConfigError(f"'{mode_path}.wavevector' {wavevector} is not of dimension {d}")
        modes.append(FourierMode(wavevector, _number(mode, "cos", mode_path, 0.0), _number(mode, "sin", mode_path, 0.0)))
    return TrigonometricSeries(d, _number(descriptor, "constant", path, 0.0), modes)


def _resolve(filename: str, base_dir: str) -> str:
    return filename if os.path.isabs(filename) else os.path.join(base_dir, filename)


def parse_field(descriptor, grid: TorusGrid, path: str, base_dir: str) -> ScalarField:
    if isinstance(descriptor, (int, float)) and not isinstance(descriptor, bool):
        return ScalarField.constant(grid, float(descriptor))
    field_type = _check_keys(descriptor, path, {"type", "value", "constant", "modes", "filename"},
                             required=("type",))["type"]
    if field_type == "constant":
        _check_keys(descriptor, path, {"type", "value"})
        return ScalarField.constant(grid, _number(descriptor, "value", path))
    if field_type == "trigonometric":
        _check_keys(descriptor, path, {"type", "constant", "modes"})
        return _series(descriptor, grid.d, path).sample(grid)
    if field_type == "snapshot":
        _check_keys(descriptor, path, {"type", "filename"}, required=("filename",))
        return read_field(_resolve(descriptor["filename"], base_dir), grid)
    raise ConfigError(f"'{path}.type' = '{field_type}' is not one of constant, trigonometric, snapshot")


POTENTIAL_KEYS = {
    "morse": {"C_A", "l_A", "C_R", "l_R"},
    "power_law": {"a", "b"},
    "trigonometric": {"constant", "modes"},
    "tabulated": {"filename"},
    "zero": set(),
}


def parse_potential(descriptor, grid: TorusGrid, path: str, base_dir: str) -> Potential:
    potential_type = _check_keys(descriptor, path, {"type", "smoothing_width"} | set().union(*POTENTIAL_KEYS.values()),
                                 required=("type",))["type"]
    if potential_type not in POTENTIAL_KEYS:
        raise ConfigError(f"'{path}.type' = '{potential_type}' is not one of {', '.join(POTENTIAL_KEYS)}")
    _check_keys(descriptor, path, {"type", "smoothing_width"} | POTENTIAL_KEYS[potential_type],
                required=tuple(k for k in POTENTIAL_KEYS[potential_type] if k not in ("constant", "modes")))
    smoothing_width = descriptor.get("smoothing_width")

    if potential_type == "morse":
        return MorsePotential(*(_number(descriptor, k, path) for k in ("C_A", "l_A", "C_R", "l_R")),
                              smoothing_width=smoothing_width)
    if potential_type == "power_law":
        return PowerLawPotential(_number(descriptor, "a", path), _number(descriptor, "b", path),
                                 smoothing_width=smoothing_width)
    if potential_type == "trigonometric":
        return TrigonometricPotential(_series(descriptor, grid.d, path), smoothing_width=smoothing_width)
    if potential_type == "tabulated":
        table = read_field(_resolve(descriptor["filename"], base_dir), grid)
        return TabulatedPotential(table, smoothing_width=smoothing_width)
    return TrigonometricPotential.zero(grid.d)


def parse_coupling(descriptor, grid: TorusGrid, path: str, base_dir: str) -> Coupling:
    coupling_type = _check_keys(descriptor, path,
                                {"type", "c", "V", "K", "c1", "exponent", "saturation", "gradient_bound"},
                                required=("type",))["type"]
    if coupling_type == "constant":
        _check_keys(descriptor, path, {"type", "c"}, required=("c",))
        return ConstantCoupling(_number(descriptor, "c", path))
    if coupling_type == "additive_nonlocal":
        _check_keys(descriptor, path, {"type", "V", "K"}, required=("V", "K"))
        return AdditiveNonlocalCoupling(parse_field(descriptor["V"], grid, f"{path}.V", base_dir),
                                        parse_potential(descriptor["K"], grid, f"{path}.K", base_dir))
    if coupling_type == "local_power":
        _check_keys(descriptor, path, {"type", "c1", "exponent", "saturation", "gradient_bound"},
                    required=("c1", "exponent", "saturation"))
        gradient_bound = descriptor.get("gradient_bound")
        if gradient_bound is not None:
            gradient_bound = _number(descriptor, "gradient_bound", path)
        return LocalPowerCoupling(_number(descriptor, "c1", path), _number(descriptor, "exponent", path),
                                  _number(descriptor, "saturation", path), gradient_bound)
    raise ConfigError(f"'{path}.type' = '{coupling_type}' is not one of constant, additive_nonlocal, local_power")


def parse_running_cost(descriptor, grid: TorusGrid, path: str, base_dir: str) -> RunningCost:
    _check_keys(descriptor, path, {"potential", "coefficient", "exponent", "interaction"})
    potential = None
    if "potential" in descriptor:
        potential = parse_field(descriptor["potential"], grid, f"{path}.potential", base_dir)
    interaction = None
    if "interaction" in descriptor:
        interaction = parse_potential(descriptor["interaction"], grid, f"{path}.interaction", base_dir)
    if "coefficient" in descriptor or "exponent" in descriptor:
        return RunningCost.power(_number(descriptor, "coefficient", path), _number(descriptor, "exponent", path),
                                 potential=potential, interaction=interaction)
    return RunningCost(potential, interaction=interaction)


def normalize_density(rho0: ScalarField, path: str = "problem.rho0") -> ScalarField:
    """ Renormalises a unit-mass density that is off by quadrature noise, rejects anything else """
    if rho0.min() < 0:
        raise ConfigError(f"'{path}' takes negative value {rho0.min():.6g}")
    mass = integrate(rho0)
    error = abs(mass - 1)
    if error <= MASS_TOLERANCE:
        return rho0
    if error <= MASS_RENORMALIZE_LIMIT:
        logging.warning("%s has mass %r - renormalising to 1", path, mass)
        return rho0 * (1.0 / mass)
    raise ConfigError(f"'{path}' has mass {mass!r}, more than {MASS_RENORMALIZE_LIMIT} away from 1")


def parse_problem(problem: dict, base_dir: str) -> ProblemSpec:
    _check_keys(problem, "problem", PROBLEM_KEYS, required=("grid", "mesh", "potential", "coupling", "rho0", "phi_T"))
    grid_block = _check_keys(problem["grid"], "problem.grid", {"d", "n"}, required=("d", "n"))
    mesh_block = _check_keys(problem["mesh"], "problem.mesh", {"T", "nt"}, required=("T", "nt"))
    try:
        grid = TorusGrid(_number(grid_block, "d", "problem.grid", kind=int),
                         _number(grid_block, "n", "problem.grid", kind=int))
        mesh = TimeMesh(_number(mesh_block, "T", "problem.mesh"), _number(mesh_block, "nt", "problem.mesh", kind=int))
        potential = parse_potential(problem["potential"], grid, "problem.potential", base_dir)
        coupling = parse_coupling(problem["coupling"], grid, "problem.coupling", base_dir)
        rho0 = normalize_density(parse_field(problem["rho0"], grid, "problem.rho0", base_dir))
        phi_T = parse_field(problem["phi_T"], grid, "problem.phi_T", base_dir)
        running_cost = None
        if "running_cost" in problem:
            running_cost = parse_running_cost(problem["running_cost"], grid, "problem.running_cost", base_dir)
    except (AssumptionError, ConfigError):
        raise
    except (MFOCError, ValueError, OSError) as e:
        raise ConfigError(f"Invalid problem block: {e}") from e
    return ProblemSpec(grid, mesh, potential, coupling, rho0, phi_T, running_cost)


def parse_solver(block: dict) -> SolverSettings:
    _check_keys(block, "solver", set(SolverSettings._fields))
    defaults = SolverSettings()
    settings = SolverSettings(**{
        field: _number(block, field, "solver", getattr(defaults, field), kind=type(getattr(defaults, field)))
        for field in SolverSettings._fields})
    if not 0 < settings.damping <= 1:
        raise ConfigError(f"'solver.damping' = {settings.damping} must lie in (0, 1]")
    if not settings.tolerance > 0:
        raise ConfigError(f"'solver.tolerance' = {settings.tolerance} must be positive")
    if settings.max_iterations < 1 or settings.max_substeps < 1:
        raise ConfigError("'solver.max_iterations' and 'solver.max_substeps' must be >= 1")
    if not 0 < settings.cfl_safety <= 1:
        raise ConfigError(f"'solver.cfl_safety' = {settings.cfl_safety} must lie in (0, 1]")
    if settings.budget_slack < 0:
        raise ConfigError(f"'solver.budget_slack' = {settings.budget_slack} must be >= 0")
    return settings


def parse_particles(block: dict, d: int) -> ParticleSettings:
    _check_keys(block, "particles", set(ParticleSettings._fields))
    defaults = ParticleSettings()
    seeds = block.get("seeds", list(defaults.seeds))
    if not isinstance(seeds, list) or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError(f"'particles.seeds' must be a list of nonnegative integers, got {seeds!r}")
    points: List[ProbePoint] = []
    for i, point in enumerate(block.get("probe_points", [])):
        path = f"particles.probe_points[{i}]"
        _check_keys(point, path, {"x0", "t0"}, required=("x0", "t0"))
        x0 = point["x0"]
        if isinstance(x0, (int, float)):
            x0 = [x0]
        if len(x0) != d:
            raise ConfigError(f"'{path}.x0' {x0} is not of dimension {d}")
        points.append(ProbePoint(tuple(float(x) for x in x0), _number(point, "t0", path)))
    N = _number(block, "N", "particles", defaults.N, kind=int)
    if N < 1:
        raise ConfigError(f"'particles.N' = {N} must be >= 1")
    return ParticleSettings(N, tuple(seeds), tuple(points),
                            _number(block, "n_perturb", "particles", defaults.n_perturb, kind=int),
                            _number(block, "epsilon", "particles", defaults.epsilon))


def parse_output(block: dict) -> OutputSettings:
    _check_keys(block, "output", set(OutputSettings._fields))
    directory = block.get("directory", OutputSettings().directory)
    if not isinstance(directory, str):
        raise ConfigError(f"'output.directory' must be a string, got {directory!r}")
    if (root := os.environ.get(OUTPUT_ROOT_ENV)) and not os.path.isabs(directory):
        directory = os.path.join(root, directory)
    stride = _number(block, "snapshot_stride", "output", 1, kind=int)
    if stride < 1:
        raise ConfigError(f"'output.snapshot_stride' = {stride} must be >= 1")
    return OutputSettings(directory, stride)


def parse_config(raw: Dict, base_dir: str = ".", filename: Optional[str] = None) -> RunConfig:
    _check_keys(raw, "<config>", SECTIONS, required=("problem",))
    spec = parse_problem(raw["problem"], base_dir)
    return RunConfig(spec, parse_solver(raw.get("solver") or {}),
                     parse_particles(raw.get("particles") or {}, spec.grid.d),
                     parse_output(raw.get("output") or {}), raw, filename)


def load_config(filename: str) -> RunConfig:
    try:
        with open(filename) as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config '{filename}': {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config '{filename}' is not valid YAML: {e}") from e
    if raw is None:
        raise ConfigError(f"Config '{filename}' is empty")
    return parse_config(raw, os.path.dirname(os.path.abspath(filename)), filename)
