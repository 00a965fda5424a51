"""Run configuration: versioned JSON with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from . import bv_analysis as bv
from . import viscous_solver as vs
from .discretization import PROFILES, LoadingProgram, build_space
from .energy import Problem
from .instances import equilibrated_datum, unstable_datum
from .material import MaterialModel

SCHEMA = "viscoflow.run/1"
INITIAL_KINDS = ("equilibrated", "unstable")


class ConfigError(ValueError):
    pass


def _positive(name, value):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class GridBlock:
    nx: int = 4
    ny: int = 4
    lx: float = 1.0
    ly: float = 1.0
    dirichlet: str = "left-right"
    neumann: str = "none"

    def validate(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("grid needs at least one cell in each direction")
        _positive("grid.lx", self.lx)
        _positive("grid.ly", self.ly)


@dataclass(frozen=True)
class LoadingBlock:
    T: float = 4.0
    profile: str = "ramp"
    amplitude: float = 1.0
    traction: tuple = (0.0, 0.0)
    body_force: tuple = (0.0, 0.0)
    stretch: float = 1.2
    bend: float = 1.0
    safe_load_margin: float = 0.0

    def validate(self):
        _positive("loading.T", self.T)
        if self.profile not in PROFILES:
            raise ConfigError(f"loading.profile must be one of {PROFILES}")
        if self.safe_load_margin < 0:
            raise ConfigError("loading.safe_load_margin must be nonnegative")
        if len(self.traction) != 2 or len(self.body_force) != 2:
            raise ConfigError("traction and body_force are 2-vectors")


@dataclass(frozen=True)
class InitialBlock:
    kind: str = "equilibrated"
    z0: float = 0.6
    overstress: float = 1.5

    def validate(self):
        if self.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}")
        if not 0 < self.z0 <= 1:
            raise ConfigError("initial.z0 must lie in (0, 1]")
        if self.kind == "unstable" and self.overstress <= 1:
            raise ConfigError("initial.overstress must exceed 1")


@dataclass(frozen=True)
class SolverBlock:
    n_steps: int = 200
    layered: bool = False
    min_dt: float = 1e-10
    growth: float = 1.5
    tol_alt: float = 1e-10
    max_alt: int = 10_000
    z_min: float = 1e-3
    max_newton: int = 200
    dissipation_state: str = "current"
    tol_scale: float = 1.0

    def validate(self):
        if self.n_steps < 1:
            raise ConfigError("solver.n_steps must be at least 1")
        for name in ("min_dt", "tol_alt", "z_min", "tol_scale"):
            _positive(f"solver.{name}", getattr(self, name))
        if self.growth <= 1:
            raise ConfigError("solver.growth must exceed 1")
        if self.dissipation_state not in vs.DISSIPATION_STATES:
            raise ConfigError(f"solver.dissipation_state must be one of {vs.DISSIPATION_STATES}")

    def options(self):
        return vs.SolverOptions(tol_alt=self.tol_alt, max_alt=self.max_alt, z_min=self.z_min,
                                dissipation_state=self.dissipation_state, max_newton=self.max_newton)


@dataclass(frozen=True)
class ParamsBlock:
    """Single run (eps, mu, nu), a sweep path, and optional per-path grids."""

    eps: float = 1e-3
    mu: float = 1e-3
    nu: float = 1e-3
    path: str = bv.JOINT
    grids: dict = field(default_factory=dict)

    def validate(self):
        try:
            vs.ParamTriple(self.eps, self.mu, self.nu)
        except ValueError as exc:
            raise ConfigError(f"params: {exc}") from None
        if self.path not in bv.PATHS:
            raise ConfigError(f"params.path must be one of {bv.PATHS}")
        for path, grid in self.grids.items():
            try:
                bv.validate_grid(path, [tuple(g) for g in grid])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"params.grids[{path!r}]: {exc}") from None

    def grid(self, path):
        return [tuple(g) for g in self.grids[path]] if path in self.grids else bv.DEFAULT_GRIDS[path]


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    formats: tuple = ("csv", "json")

    def validate(self):
        bad = set(self.formats) - {"csv", "json"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")


BLOCKS = {
    "material": MaterialModel,
    "grid": GridBlock,
    "loading": LoadingBlock,
    "initial": InitialBlock,
    "solver": SolverBlock,
    "params": ParamsBlock,
    "output": OutputBlock,
}


def _build_block(name, cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"block {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    data = {k: tuple(v) if isinstance(v, list) and k != "grids" else v for k, v in data.items()}
    try:
        block = cls(**data)
        if hasattr(block, "validate"):
            block.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return block


@dataclass(frozen=True)
class RunConfig:
    material: MaterialModel = field(default_factory=MaterialModel)
    grid: GridBlock = field(default_factory=GridBlock)
    loading: LoadingBlock = field(default_factory=LoadingBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    params: ParamsBlock = field(default_factory=ParamsBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        schema = data.get("schema")
        if schema != SCHEMA:
            raise ConfigError(f"unsupported schema {schema!r}, expected {SCHEMA!r}")
        unknown = set(data) - set(BLOCKS) - {"schema"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        return cls(**{name: _build_block(name, kind, data.get(name, {})) for name, kind in BLOCKS.items()})

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self):
        out = {"schema": SCHEMA}
        for name in BLOCKS:
            out[name] = asdict(getattr(self, name))
        return out

    # -- builders ---------------------------------------------------------------
    def problem(self):
        g, ld = self.grid, self.loading
        try:
            sp = build_space(g.nx, g.ny, g.lx, g.ly, dirichlet=g.dirichlet, neumann=g.neumann, material=self.material)
            loading = LoadingProgram(sp, T=ld.T, profile=ld.profile, amplitude=ld.amplitude,
                                     traction=tuple(ld.traction), body_force=tuple(ld.body_force),
                                     stretch=ld.stretch, bend=ld.bend)
            if ld.safe_load_margin > 0:
                loading.check_safe_load(ld.safe_load_margin)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return Problem(sp, self.material, loading)

    def initial_state(self, problem):
        if self.initial.kind == "unstable":
            return unstable_datum(problem, self.initial.z0, self.initial.overstress)
        return equilibrated_datum(problem, self.initial.z0)

    def times(self):
        s = self.solver
        if s.layered:
            return vs.layered_times(self.loading.T, s.n_steps, s.min_dt, s.growth)
        return vs.uniform_times(self.loading.T, s.n_steps)

    def param_triple(self):
        return vs.ParamTriple(self.params.eps, self.params.mu, self.params.nu)


def bundled_config_path(name="reference"):
    return resources.files("viscoflow") / "configs" / f"{name}.json"


def bundled_config(name="reference"):
    path = bundled_config_path(name)
    if not path.is_file():
        raise ConfigError(f"no bundled configuration named {name!r}")
    return RunConfig.from_dict(json.loads(path.read_text()))
