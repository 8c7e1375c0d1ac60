"""Position and momentum remaps between absolute/remapped, Eulerian/Lagrangian coordinates.

Arrays of positions and momenta have shape (..., 3): a single vector, a
(d, 3) configuration or a (B, d, 3) ensemble. Matrices act on the last
axis, so x @ E.T applies E to every vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NonFiniteError, WrongFrameError
from .flow_lattice import FlowSpec, LatticeFrame, phase
from .schemas import CoordSystem

SNAP_TOL = 1e-15
"""Wrapped components in [1 - SNAP_TOL, 1) are snapped to 0."""


@dataclass(frozen=True, eq=False)
class SystemState:
    """Positions and momenta of d particles in one coordinate system.

    Attributes:
        coords: Coordinate system of positions/momenta.
        positions: Array (..., d, 3).
        momenta: Array (..., d, 3); unit mass, so velocity units.
        t: Absolute simulation time.
        flow: Background flow.
        frame: Lattice frame at time t.
    """

    coords: CoordSystem
    positions: np.ndarray
    momenta: np.ndarray
    t: float
    flow: FlowSpec
    frame: LatticeFrame

    @property
    def theta(self) -> float:
        return self.frame.theta

    @property
    def particles(self) -> int:
        return int(self.positions.shape[-2])

    def require(self, coords: CoordSystem) -> None:
        """Raise WrongFrameError unless the state is in `coords`."""
        if self.coords is not coords:
            raise WrongFrameError(coords.value, self.coords.value)


def _apply(matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) @ matrix.T


# ---------------------------------------------------------------------------
# Positions
# ---------------------------------------------------------------------------

def wrap_unit(x: np.ndarray) -> np.ndarray:
    """Componentwise x mod 1 into the half-open cell [0, 1).

    Raises:
        NonFiniteError: If any component is NaN or infinite.
    """
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise NonFiniteError(step=-1)
    wrapped = x - np.floor(x)
    wrapped[wrapped >= 1.0 - SNAP_TOL] = 0.0
    return wrapped


def wrap_to_cell(cell: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Map points onto their image inside the cell spanned by `cell`."""
    fractional = np.linalg.solve(cell, np.asarray(x, dtype=float).reshape(-1, 3).T).T
    return (wrap_unit(fractional) @ cell.T).reshape(np.shape(x))


def remap_position_eulerian(
    flow: FlowSpec, L0: np.ndarray, t: float, q_tilde: np.ndarray
) -> np.ndarray:
    """Remapped Eulerian position q_hat = e^{[t]A} L0 g(L0^-1 e^{-[t]A} q_tilde)."""
    theta, _ = phase(flow, t)
    back = _apply(flow.stretch_inverse(theta), q_tilde)
    in_cell = wrap_to_cell(np.asarray(L0, dtype=float), back)
    return _apply(flow.stretch(theta), in_cell)


def remap_position_lagrangian(
    flow: FlowSpec, L0: np.ndarray, t: float, q: np.ndarray
) -> np.ndarray:
    """Remapped Lagrangian position q_bar = e^{-[t]A} g_hat_t(e^{tA} q)."""
    theta, _ = phase(flow, t)
    q_hat = remap_position_eulerian(flow, L0, t, _apply(flow.stretch(t), q))
    return _apply(flow.stretch_inverse(theta), q_hat)


# ---------------------------------------------------------------------------
# Momenta
# ---------------------------------------------------------------------------

def remap_momentum_lagrangian(flow: FlowSpec, t: float, p: np.ndarray) -> np.ndarray:
    """Remapped Lagrangian momentum p_bar = e^{floor(t/T) T A} p."""
    _, k = phase(flow, t)
    return _apply(flow.stretch(k * flow.period), p)


# ---------------------------------------------------------------------------
# Full phase-space maps
# ---------------------------------------------------------------------------

def to_remapped_eulerian(flow: FlowSpec, t: float, state: SystemState) -> SystemState:
    """Phi_t: (q_bar, p_bar) -> (e^{[t]A} q_bar, e^{[t]A} p_bar).

    Raises:
        WrongFrameError: If the state is not in remapped Lagrangian coordinates.
    """
    state.require(CoordSystem.REMAPPED_LAGRANGIAN)
    theta, _ = phase(flow, t)
    E = flow.stretch(theta)
    return replace(
        state,
        coords=CoordSystem.REMAPPED_EULERIAN,
        positions=_apply(E, state.positions),
        momenta=_apply(E, state.momenta),
        t=t,
    )


def to_remapped_lagrangian(flow: FlowSpec, t: float, state: SystemState) -> SystemState:
    """Phi_t^-1, the inverse of to_remapped_eulerian."""
    state.require(CoordSystem.REMAPPED_EULERIAN)
    theta, _ = phase(flow, t)
    E_inv = flow.stretch_inverse(theta)
    return replace(
        state,
        coords=CoordSystem.REMAPPED_LAGRANGIAN,
        positions=_apply(E_inv, state.positions),
        momenta=_apply(E_inv, state.momenta),
        t=t,
    )


def to_absolute_eulerian(flow: FlowSpec, t: float, state: SystemState) -> SystemState:
    """Phi_tilde_t: (q, p) -> (e^{tA} q, e^{tA} p).

    Raises:
        WrongFrameError: If the state is not in absolute Lagrangian coordinates.
    """
    state.require(CoordSystem.ABSOLUTE_LAGRANGIAN)
    E = flow.stretch(t)
    return replace(
        state,
        coords=CoordSystem.ABSOLUTE_EULERIAN,
        positions=_apply(E, state.positions),
        momenta=_apply(E, state.momenta),
        t=t,
    )


def to_absolute_lagrangian(flow: FlowSpec, t: float, state: SystemState) -> SystemState:
    """Phi_tilde_t^-1, the inverse of to_absolute_eulerian."""
    state.require(CoordSystem.ABSOLUTE_EULERIAN)
    E_inv = flow.stretch_inverse(t)
    return replace(
        state,
        coords=CoordSystem.ABSOLUTE_LAGRANGIAN,
        positions=_apply(E_inv, state.positions),
        momenta=_apply(E_inv, state.momenta),
        t=t,
    )


def remap_absolute_lagrangian(
    flow: FlowSpec, L0: np.ndarray, t: float, q: np.ndarray, p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """R_t: absolute Lagrangian (q, p) -> remapped Lagrangian (q_bar, p_bar)."""
    return (
        remap_position_lagrangian(flow, L0, t, q),
        remap_momentum_lagrangian(flow, t, p),
    )


def remap_absolute_eulerian(
    flow: FlowSpec, L0: np.ndarray, t: float, q_tilde: np.ndarray, p_tilde: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """R_tilde_t: absolute Eulerian -> remapped Eulerian; momenta unchanged."""
    return remap_position_eulerian(flow, L0, t, q_tilde), np.array(p_tilde, dtype=float)


def check_diagram(
    flow: FlowSpec, L0: np.ndarray, t: float, q: np.ndarray, p: np.ndarray
) -> float:
    """Max-norm residual between Phi_t(R_t(x)) and R_tilde_t(Phi_tilde_t(x)).

    x = (q, p) is in absolute Lagrangian coordinates.
    """
    theta, _ = phase(flow, t)
    E_theta = flow.stretch(theta)
    q_bar, p_bar = remap_absolute_lagrangian(flow, L0, t, q, p)
    lower = (_apply(E_theta, q_bar), _apply(E_theta, p_bar))

    E_t = flow.stretch(t)
    upper = remap_absolute_eulerian(flow, L0, t, _apply(E_t, q), _apply(E_t, p))

    return float(
        max(np.max(np.abs(lower[0] - upper[0])), np.max(np.abs(lower[1] - upper[1])))
    )


def remapped_state(
    flow: FlowSpec,
    positions: np.ndarray,
    momenta: np.ndarray,
    *,
    L0: np.ndarray | None = None,
    coords: CoordSystem = CoordSystem.REMAPPED_LAGRANGIAN,
) -> SystemState:
    """State at t = 0 (phase 0, no remaps yet) in a remapped frame."""
    return SystemState(
        coords=coords,
        positions=np.array(positions, dtype=float),
        momenta=np.array(momenta, dtype=float),
        t=0.0,
        flow=flow,
        frame=LatticeFrame.initial(flow, L0),
    )
