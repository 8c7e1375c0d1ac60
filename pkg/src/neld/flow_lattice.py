"""Background flows, deforming lattices and their automorphism remaps.

Shear flow uses the Lees-Edwards automorphism, planar elongational flow the
Kraynik-Reinelt automorphism with initial cell L0 = S^-1. All exponentials
e^{tA} are evaluated in closed form: shear A is nilpotent (e^{tA} = I + tA)
and planar elongation A is diagonal.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .exceptions import NotAtBoundaryError, SingularCellError, ZeroRateError
from .schemas import FlowKind

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-9
"""Tolerance on theta == T when remapping at a period boundary."""

REMAP_TOL = 1e-10
"""Allowed residual between the remapped cell and L0."""

LE_AUTOMORPHISM = np.array([[1, -1, 0], [0, 1, 0], [0, 0, 1]], dtype=np.int64)
KR_AUTOMORPHISM = np.array([[2, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=np.int64)

# Integer combinations searched for the shortest lattice vector.
_IMAGE_SHIFTS = np.array(
    [z for z in itertools.product(range(-2, 3), repeat=3) if any(z)],
    dtype=float,
)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowSpec:
    """Background flow with its remap period and lattice automorphism.

    Attributes:
        kind: Flow family.
        rate: Strain rate epsilon (nonzero, sign allowed).
        A: Traceless 3x3 velocity gradient.
        period: Remap period T (uses |epsilon|).
        automorphism: Integer matrix M in SL(3, Z) (mirrored for negative rates).
        eigenbasis: S with M S = S diag(lam, 1/lam, 1); identity for shear.
        lam: KR eigenvalue lambda > 1, None for shear.
        eta: log(lambda), None for shear.
        remap_matrix: Integer M_eff with e^{TA} L0 M_eff = L0 (a power of M).
        initial_cell: Default L0 (S^-1 for planar elongation, identity otherwise).
    """

    kind: FlowKind
    rate: float
    A: np.ndarray
    period: float
    automorphism: np.ndarray
    eigenbasis: np.ndarray
    lam: float | None
    eta: float | None
    remap_matrix: np.ndarray
    initial_cell: np.ndarray

    def stretch(self, tau: float) -> np.ndarray:
        """Return e^{tau A} in closed form."""
        if self.kind is FlowKind.SHEAR:
            out = np.eye(3)
            out[0, 1] = tau * self.rate
            return out
        if self.kind is FlowKind.PLANAR_ELONGATION:
            growth = tau * self.rate
            return np.diag([math.exp(growth), math.exp(-growth), 1.0])
        return np.eye(3)

    def stretch_inverse(self, tau: float) -> np.ndarray:
        """Return e^{-tau A}."""
        return self.stretch(-tau)


@dataclass(frozen=True, eq=False)
class LatticeFrame:
    """Current deformed cell e^{theta A} L0 within a remap period.

    theta lives in [0, T); it equals T only transiently, right before
    remap_lattice brings it back to 0.
    """

    L0: np.ndarray
    theta: float
    remap_count: int
    cell: np.ndarray

    @classmethod
    def initial(cls, flow: FlowSpec, L0: np.ndarray | None = None) -> LatticeFrame:
        cell0 = flow.initial_cell if L0 is None else np.asarray(L0, dtype=float)
        return cls(L0=cell0, theta=0.0, remap_count=0, cell=cell0.copy())

    def at_phase(self, flow: FlowSpec, theta: float) -> LatticeFrame:
        """Same period, cell deformed to phase theta."""
        return replace(self, theta=theta, cell=flow.stretch(theta) @ self.L0)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def kr_basis() -> tuple[np.ndarray, np.ndarray, float, float]:
    """Kraynik-Reinelt automorphism and its eigen-decomposition.

    Returns:
        (M, S, lam, eta) with M S = S diag(lam, 1/lam, 1), unit columns in S
        with positive first component, lam = (3 + sqrt 5)/2 and eta = log lam.
    """
    M = KR_AUTOMORPHISM.copy()
    lam = (3.0 + math.sqrt(5.0)) / 2.0
    columns = []
    # Eigenvectors of the symmetric 2x2 block [[2, 1], [1, 1]]: (1, mu - 2).
    for mu in (lam, 1.0 / lam):
        v = np.array([1.0, mu - 2.0, 0.0])
        columns.append(v / np.linalg.norm(v))
    columns.append(np.array([0.0, 0.0, 1.0]))
    S = np.column_stack(columns)
    return M, S, lam, math.log(lam)


@lru_cache(maxsize=32)
def make_flow(kind: FlowKind, eps: float) -> FlowSpec:
    """Build a fully populated FlowSpec.

    Args:
        kind: Flow family.
        eps: Strain rate; for the equilibrium flow it is the sampling rate
            that sets the period T = 1/|eps|.

    Raises:
        ZeroRateError: If eps is zero.
    """
    eps = float(eps)
    if eps == 0.0:
        raise ZeroRateError()
    kind = FlowKind(kind)
    sign = 1 if eps > 0 else -1

    if kind is FlowKind.SHEAR:
        A = np.zeros((3, 3))
        A[0, 1] = eps
        period = 1.0 / abs(eps)
        M = LE_AUTOMORPHISM.copy()
        if sign < 0:
            M[0, 1] = 1
        S = np.eye(3)
        lam = eta = None
        L0 = np.eye(3)
        # e^{TA} = I + sign*E01, undone by the shift I - sign*E01.
        M_eff = LE_AUTOMORPHISM.copy()
        M_eff[0, 1] = -sign
    elif kind is FlowKind.PLANAR_ELONGATION:
        A = np.diag([eps, -eps, 0.0])
        M, S, lam, eta = kr_basis()
        period = eta / abs(eps)
        L0 = np.linalg.inv(S)
        # e^{TA} = Lambda^{sign}, and L0^{-1} Lambda^{-sign} L0 = M^{-sign}.
        M_inv = np.array([[1, -1, 0], [-1, 2, 0], [0, 0, 1]], dtype=np.int64)
        M_eff = M_inv if sign > 0 else M.copy()
    else:
        A = np.zeros((3, 3))
        period = 1.0 / abs(eps)
        M = np.eye(3, dtype=np.int64)
        S = np.eye(3)
        lam = eta = None
        L0 = np.eye(3)
        M_eff = np.eye(3, dtype=np.int64)

    flow = FlowSpec(
        kind=kind,
        rate=eps,
        A=_frozen(A),
        period=period,
        automorphism=_frozen(M),
        eigenbasis=_frozen(S),
        lam=lam,
        eta=eta,
        remap_matrix=_frozen(M_eff),
        initial_cell=_frozen(L0),
    )
    logger.debug("Built %s flow: rate=%g, T=%.12g", kind.value, eps, period)
    return flow


# ---------------------------------------------------------------------------
# Lattice operations
# ---------------------------------------------------------------------------

def deformed_lattice(flow: FlowSpec, t: float, L0: np.ndarray) -> np.ndarray:
    """Return L_t = e^{tA} L0."""
    return flow.stretch(t) @ np.asarray(L0, dtype=float)


def phase(flow: FlowSpec, t: float) -> tuple[float, int]:
    """Split t into (theta, k) with t = k T + theta and theta in [0, T)."""
    k = math.floor(t / flow.period)
    theta = t - k * flow.period
    if theta >= flow.period:
        theta -= flow.period
        k += 1
    elif theta < 0.0:
        theta += flow.period
        k -= 1
    return theta, k


def centered_stretch(flow: FlowSpec, t: float) -> float:
    """Shear strain normalized to [-1/2, 1/2) by rounding (display only)."""
    strain = t * flow.rate
    return strain - math.floor(strain + 0.5)


def remap_lattice(flow: FlowSpec, frame: LatticeFrame) -> LatticeFrame:
    """Apply the automorphism at a period boundary.

    Raises:
        NotAtBoundaryError: If frame.theta is not T within BOUNDARY_TOL.
    """
    if abs(frame.theta - flow.period) > BOUNDARY_TOL:
        raise NotAtBoundaryError(frame.theta, flow.period)

    remapped = flow.stretch(flow.period) @ frame.L0 @ flow.remap_matrix
    residual = float(np.max(np.abs(remapped - frame.L0)))
    if residual > REMAP_TOL:
        logger.warning("Remapped cell deviates from L0 by %.3e", residual)
    logger.debug("Remap %d -> %d (residual %.3e)", frame.remap_count, frame.remap_count + 1, residual)
    return LatticeFrame(
        L0=frame.L0,
        theta=0.0,
        remap_count=frame.remap_count + 1,
        cell=frame.L0.copy(),
    )


def cell_quality(cell: np.ndarray) -> tuple[float, float]:
    """Return (min_image, cond) of a cell.

    min_image is the shortest nonzero lattice vector over integer
    combinations in {-2..2}^3; cond is the 2-norm condition number.

    Raises:
        SingularCellError: If the cell is singular.
    """
    cell = np.asarray(cell, dtype=float)
    if not np.isfinite(cell).all() or abs(np.linalg.det(cell)) < 1e-300:
        raise SingularCellError(f"Singular cell matrix:\n{cell}")
    lengths = np.linalg.norm(_IMAGE_SHIFTS @ cell.T, axis=1)
    return float(lengths.min()), float(np.linalg.cond(cell, 2))
