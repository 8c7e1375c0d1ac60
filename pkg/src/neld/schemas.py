"""Pydantic v2 models for the NELD simulator.

Defines the enums shared across modules and the configuration schema
(flow, simulation parameters, potential, run section, initial conditions)
that `neld run` reads from its TOML config file.
"""

from __future__ import annotations

import math
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

if TYPE_CHECKING:
    from .flow_lattice import FlowSpec


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class FlowKind(str, Enum):
    """Background flow families."""

    SHEAR = "shear"
    PLANAR_ELONGATION = "planar_elongation"
    EQUILIBRIUM = "equilibrium"


class CoordSystem(str, Enum):
    """Coordinate systems a SystemState can be expressed in."""

    ABSOLUTE_LAGRANGIAN = "absolute_lagrangian"
    REMAPPED_LAGRANGIAN = "remapped_lagrangian"
    ABSOLUTE_EULERIAN = "absolute_eulerian"
    REMAPPED_EULERIAN = "remapped_eulerian"


class Scheme(str, Enum):
    """Time-stepping schemes."""

    EULER_MARUYAMA = "euler_maruyama"
    INTEGRATING_FACTOR = "integrating_factor"


class PotentialKind(str, Enum):
    """Potential families."""

    ZERO = "zero"
    FRACTIONAL_COSINE = "fractional_cosine"
    SMOOTH_PAIR = "smooth_pair"


class PositionInit(str, Enum):
    """Initial position layouts in fractional cell coordinates."""

    UNIFORM = "uniform"
    CENTER = "center"


class Suite(str, Enum):
    """Verification suites run by `neld verify`."""

    REMAP = "remap"
    LATTICE = "lattice"
    POTENTIAL = "potential"
    OU = "ou"
    DRIFT = "drift"
    CONVERGENCE = "convergence"
    ALL = "all"


# ---------------------------------------------------------------------------
# Flow
# ---------------------------------------------------------------------------

class FlowConfig(BaseModel):
    """Background flow selection."""

    model_config = ConfigDict(frozen=True)

    kind: FlowKind = FlowKind.SHEAR
    rate: float = 1.0

    @field_validator("rate")
    @classmethod
    def _nonzero_rate(cls, value: float) -> float:
        if value == 0.0 or not math.isfinite(value):
            raise ValueError("strain rate must be finite and nonzero (zero-rate rule)")
        return value


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------

class CosineMode(BaseModel):
    """Single Fourier mode c_m cos(2 pi m . s) in fractional coordinates s."""

    model_config = ConfigDict(frozen=True)

    m: tuple[int, int, int]
    amplitude: float

    @field_validator("amplitude")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("mode amplitude must be finite")
        return value


class PairParams(BaseModel):
    """Polynomial bump phi(r) = -depth (1 - r^2/range^2)^3 for r < range."""

    model_config = ConfigDict(frozen=True)

    depth: float = 1.0
    range: float = Field(0.3, gt=0)


class PotentialSpec(BaseModel):
    """Lattice-periodic potential with bounded gradient."""

    model_config = ConfigDict(frozen=True)

    kind: PotentialKind = PotentialKind.ZERO
    modes: tuple[CosineMode, ...] = ()
    pair: PairParams | None = None
    grad_bound: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_kind_payload(self) -> PotentialSpec:
        if self.kind is PotentialKind.FRACTIONAL_COSINE and not self.modes:
            raise ValueError("fractional_cosine potential needs at least one mode")
        if self.kind is PotentialKind.SMOOTH_PAIR and self.pair is None:
            raise ValueError("smooth_pair potential needs pair parameters")
        if self.grad_bound is not None and not math.isfinite(self.grad_bound):
            raise ValueError("grad_bound must be finite")
        return self

    @classmethod
    def zero(cls) -> PotentialSpec:
        return cls(kind=PotentialKind.ZERO)

    @classmethod
    def default_cosine(cls, amplitude: float = 0.5) -> PotentialSpec:
        """One cosine mode per lattice axis with the given amplitude."""
        modes = tuple(
            CosineMode(m=m, amplitude=amplitude)
            for m in ((1, 0, 0), (0, 1, 0), (0, 0, 1))
        )
        return cls(kind=PotentialKind.FRACTIONAL_COSINE, modes=modes)


# ---------------------------------------------------------------------------
# Simulation parameters
# ---------------------------------------------------------------------------

class SimParams(BaseModel):
    """The `sim.*` section of a run config."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(1.0, gt=0)
    beta: float = Field(1.0, gt=0)
    steps_per_period: int = Field(64, ge=1)
    particles: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    scheme: Scheme = Scheme.INTEGRATING_FACTOR
    frame: CoordSystem = CoordSystem.REMAPPED_LAGRANGIAN

    @field_validator("frame")
    @classmethod
    def _remapped_frame(cls, value: CoordSystem) -> CoordSystem:
        if value not in (CoordSystem.REMAPPED_LAGRANGIAN, CoordSystem.REMAPPED_EULERIAN):
            raise ValueError("simulation frame must be remapped_lagrangian or remapped_eulerian")
        return value


class SimConfig(SimParams):
    """Everything a trajectory needs: parameters, flow and potential.

    sigma and dt are derived: sigma^2 = 2 gamma / beta and dt = T / n_s,
    so n_s steps land exactly on the period boundary.
    """

    flow: FlowConfig = Field(default_factory=FlowConfig)
    potential: PotentialSpec = Field(default_factory=PotentialSpec)

    @model_validator(mode="after")
    def _check_pair_cutoff(self) -> SimConfig:
        if self.potential.kind is PotentialKind.SMOOTH_PAIR:
            from .potential import check_pair_cutoff

            check_pair_cutoff(self.potential, self.flow_spec, self.flow_spec.initial_cell)
        return self

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.gamma / self.beta)

    @property
    def flow_spec(self) -> FlowSpec:
        from .flow_lattice import make_flow

        return make_flow(self.flow.kind, self.flow.rate)

    @property
    def period(self) -> float:
        return self.flow_spec.period

    @property
    def dt(self) -> float:
        return self.period / self.steps_per_period


# ---------------------------------------------------------------------------
# Run configuration (config file root)
# ---------------------------------------------------------------------------

class InitSpec(BaseModel):
    """Initial distribution of one ensemble.

    Momenta are N(0, momentum_scale^2 / beta) with momentum_shift added to
    the x component of every particle.
    """

    model_config = ConfigDict(frozen=True)

    positions: PositionInit = PositionInit.UNIFORM
    momentum_shift: float = 0.0
    momentum_scale: float = Field(1.0, ge=0)


class RunSection(BaseModel):
    """The `run.*` section of a run config."""

    model_config = ConfigDict(frozen=True)

    n_periods: int = Field(100, ge=0)
    n_trajectories: int = Field(256, ge=1)
    record_stride: int = Field(1, ge=1)
    burn_in_fraction: float = Field(0.2, ge=0, lt=1)
    phase_bins: int = Field(32, ge=1)
    observables: tuple[str, ...] = ("kinetic",)
    output_dir: Path = Path("results")
    suite: Suite = Suite.ALL
    threads: int = Field(1, ge=1)
    common_noise: bool = True
    write_states: bool = True
    drift_exponents: tuple[int, ...] = (1, 2)

    @field_validator("observables")
    @classmethod
    def _known_observables(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        from .observables import OBSERVABLES

        missing = [name for name in value if name not in OBSERVABLES]
        if missing:
            known = ", ".join(sorted(OBSERVABLES))
            raise ValueError(f"unknown observable(s) {missing}; known: {known}")
        return value

    @field_validator("drift_exponents")
    @classmethod
    def _positive_exponents(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(n < 1 for n in value):
            raise ValueError("drift exponents must be >= 1")
        return value


class RunConfig(BaseModel):
    """Root schema of a `neld run` config file."""

    model_config = ConfigDict(frozen=True)

    flow: FlowConfig = Field(default_factory=FlowConfig)
    sim: SimParams = Field(default_factory=SimParams)
    potential: PotentialSpec = Field(default_factory=PotentialSpec)
    run: RunSection = Field(default_factory=RunSection)
    init_a: InitSpec = Field(default_factory=InitSpec)
    init_b: InitSpec | None = None

    def simulation(self) -> SimConfig:
        """Assemble the SimConfig the dynamics layer consumes."""
        return SimConfig(
            **self.sim.model_dump(),
            flow=self.flow,
            potential=self.potential,
        )
