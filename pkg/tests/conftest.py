"""Shared fixtures for the neld test suite."""

from __future__ import annotations

from collections.abc import Callable
from pathlib import Path

import pytest

from neld.flow_lattice import FlowSpec, make_flow
from neld.schemas import FlowConfig, FlowKind, PotentialSpec, SimConfig


@pytest.fixture
def shear() -> FlowSpec:
    return make_flow(FlowKind.SHEAR, 1.0)


@pytest.fixture
def pef() -> FlowSpec:
    return make_flow(FlowKind.PLANAR_ELONGATION, 1.0)


@pytest.fixture
def make_sim() -> Callable[..., SimConfig]:
    """Factory for SimConfig with small defaults; keyword args override."""

    def factory(
        kind: FlowKind = FlowKind.SHEAR,
        rate: float = 1.0,
        potential: PotentialSpec | None = None,
        **params: object,
    ) -> SimConfig:
        params.setdefault("steps_per_period", 16)
        params.setdefault("seed", 7)
        return SimConfig(
            flow=FlowConfig(kind=kind, rate=rate),
            potential=potential or PotentialSpec.zero(),
            **params,
        )

    return factory


SMALL_RUN = """\
flow.kind = "shear"
flow.rate = 1.0
sim.gamma = 1.0
sim.beta = 1.0
sim.steps_per_period = 8
sim.seed = 42
potential.kind = "fractional_cosine"
potential.modes = [{ m = [1, 0, 0], amplitude = 0.5 }, { m = [0, 1, 0], amplitude = 0.5 }]
run.n_periods = 6
run.n_trajectories = 16
run.phase_bins = 4
run.observables = ["kinetic", "one"]
init_b.momentum_shift = 2.0
"""


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str], Path]:
    """Write TOML text to a config file under tmp_path and return its path."""

    def writer(text: str, name: str = "run.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return writer


@pytest.fixture
def small_config(write_config: Callable[[str], Path]) -> Path:
    return write_config(SMALL_RUN)
