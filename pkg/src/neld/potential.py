"""Lattice-periodic potentials defined in fractional coordinates of the current cell.

Positions are Eulerian arrays of shape (..., d, 3). Energies have shape
(...) and gradients (..., d, 3). Summation order over modes, pairs and
images is fixed, so results are deterministic for a fixed input order.

Cosine modes follow the current basis: a remap relabels m by the lattice
automorphism, and only modes it fixes (m_0 = 0 under shear, m = (0, 0, k)
under planar elongation) keep the force continuous across the boundary.
Pair potentials see only the lattice and are unaffected.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .exceptions import CutoffViolationError, SingularCellError
from .flow_lattice import FlowSpec, cell_quality
from .schemas import PotentialKind, PotentialSpec

TWO_PI = 2.0 * math.pi

# Max of x (1 - x^2)^2 on [0, 1], attained at x = 1/sqrt(5).
_BUMP_SLOPE_MAX = 16.0 / (25.0 * math.sqrt(5.0))

_NEIGHBOR_SHIFTS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=float)


def _inverse(cell: np.ndarray) -> np.ndarray:
    cell = np.asarray(cell, dtype=float)
    if not np.isfinite(cell).all() or abs(np.linalg.det(cell)) < 1e-300:
        raise SingularCellError(f"Singular cell matrix:\n{cell}")
    return np.linalg.inv(cell)


def _mode_arrays(spec: PotentialSpec) -> tuple[np.ndarray, np.ndarray]:
    m = np.array([mode.m for mode in spec.modes], dtype=float)
    c = np.array([mode.amplitude for mode in spec.modes], dtype=float)
    return m, c


# ---------------------------------------------------------------------------
# Pair bump
# ---------------------------------------------------------------------------

def _bump(r: np.ndarray, depth: float, cutoff: float) -> np.ndarray:
    x2 = np.minimum((r / cutoff) ** 2, 1.0)
    return -depth * (1.0 - x2) ** 3


def _bump_slope_over_r(r: np.ndarray, depth: float, cutoff: float) -> np.ndarray:
    """phi'(r) / r, finite at r = 0."""
    x2 = np.minimum((r / cutoff) ** 2, 1.0)
    return 6.0 * depth / cutoff**2 * (1.0 - x2) ** 2


def _pair_images(cell: np.ndarray, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Displacements r_ij over the 27 images around the rounded minimum image.

    Returns:
        (disp, (i, j)) with disp of shape (..., n_pairs, 27, 3) for i < j.
    """
    d = positions.shape[-2]
    i, j = np.triu_indices(d, k=1)
    diff = positions[..., i, :] - positions[..., j, :]
    cell_inv = _inverse(cell)
    frac = diff @ cell_inv.T
    frac -= np.rint(frac)
    base = frac @ cell.T
    disp = base[..., None, :] + (_NEIGHBOR_SHIFTS @ cell.T)
    return disp, np.stack([i, j])


def check_pair_cutoff(spec: PotentialSpec, flow: FlowSpec, L0: np.ndarray, samples: int = 65) -> float:
    """Check the pair range against the worst cell of one remap period.

    Returns:
        Smallest minimum image found over the sampled phases.

    Raises:
        CutoffViolationError: If range >= half that minimum image.
    """
    worst = min(
        cell_quality(flow.stretch(theta) @ L0)[0]
        for theta in np.linspace(0.0, flow.period, samples)
    )
    if spec.pair is not None and spec.pair.range >= 0.5 * worst:
        raise CutoffViolationError(spec.pair.range, worst)
    return worst


def _check_cell_cutoff(spec: PotentialSpec, cell: np.ndarray) -> None:
    assert spec.pair is not None
    min_image, _ = cell_quality(cell)
    if spec.pair.range >= 0.5 * min_image:
        raise CutoffViolationError(spec.pair.range, min_image)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def value(spec: PotentialSpec, cell: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Potential energy of each configuration.

    Raises:
        SingularCellError: If the cell is singular.
        CutoffViolationError: If a pair range exceeds half the cell's min image.
    """
    positions = np.asarray(positions, dtype=float)
    batch = positions.shape[:-2]

    if spec.kind is PotentialKind.ZERO:
        _inverse(cell)
        return np.zeros(batch)

    if spec.kind is PotentialKind.FRACTIONAL_COSINE:
        m, c = _mode_arrays(spec)
        frac = positions @ _inverse(cell).T
        arg = TWO_PI * (frac @ m.T)
        return np.sum(np.cos(arg) @ c, axis=-1)

    assert spec.pair is not None
    _check_cell_cutoff(spec, cell)
    if positions.shape[-2] < 2:
        return np.zeros(batch)
    disp, _ = _pair_images(np.asarray(cell, dtype=float), positions)
    r = np.linalg.norm(disp, axis=-1)
    return np.sum(_bump(r, spec.pair.depth, spec.pair.range), axis=(-2, -1))


def gradient(spec: PotentialSpec, cell: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Analytic gradient of `value` with respect to Eulerian positions."""
    positions = np.asarray(positions, dtype=float)

    if spec.kind is PotentialKind.ZERO:
        _inverse(cell)
        return np.zeros_like(positions)

    if spec.kind is PotentialKind.FRACTIONAL_COSINE:
        m, c = _mode_arrays(spec)
        cell_inv = _inverse(cell)
        frac = positions @ cell_inv.T
        arg = TWO_PI * (frac @ m.T)
        # d(arg)/dq for mode m is the row 2 pi m^T cell^-1.
        wave = TWO_PI * (m @ cell_inv)
        return -(np.sin(arg) * c) @ wave

    assert spec.pair is not None
    _check_cell_cutoff(spec, cell)
    grad = np.zeros_like(positions)
    if positions.shape[-2] < 2:
        return grad
    disp, (i, j) = _pair_images(np.asarray(cell, dtype=float), positions)
    r = np.linalg.norm(disp, axis=-1, keepdims=True)
    pair_force = np.sum(_bump_slope_over_r(r, spec.pair.depth, spec.pair.range) * disp, axis=-2)
    for n, (a, b) in enumerate(zip(i, j)):
        grad[..., a, :] += pair_force[..., n, :]
        grad[..., b, :] -= pair_force[..., n, :]
    return grad


def lagrangian_force(
    spec: PotentialSpec,
    flow: FlowSpec,
    theta: float,
    cell0: np.ndarray,
    q_bar: np.ndarray,
) -> np.ndarray:
    """Drift term e^{-theta A} grad V(e^{theta A} q_bar) on the cell e^{theta A} L0."""
    E = flow.stretch(theta)
    cell = E @ np.asarray(cell0, dtype=float)
    q_hat = np.asarray(q_bar, dtype=float) @ E.T
    return gradient(spec, cell, q_hat) @ flow.stretch_inverse(theta).T


def gradient_bound(spec: PotentialSpec, flow: FlowSpec, L0: np.ndarray, particles: int) -> float:
    """Bound C on sup |dV/dq_i| over every cell of one remap period.

    A declared spec.grad_bound takes precedence. For cosine modes the bound
    is sum |c_m| 2 pi |e^{-theta A^T} L0^-T m|; the squared norm is convex in
    theta, so the sup over [0, T] sits at an endpoint.
    """
    if spec.grad_bound is not None:
        return spec.grad_bound
    if spec.kind is PotentialKind.ZERO:
        return 0.0
    if spec.kind is PotentialKind.FRACTIONAL_COSINE:
        m, c = _mode_arrays(spec)
        bounds = []
        for theta in (0.0, flow.period):
            cell_inv = _inverse(flow.stretch(theta) @ L0)
            bounds.append(float(np.abs(c) @ np.linalg.norm(TWO_PI * (m @ cell_inv), axis=1)))
        return max(bounds)
    assert spec.pair is not None
    slope = 6.0 * abs(spec.pair.depth) / spec.pair.range * _BUMP_SLOPE_MAX
    return max(particles - 1, 0) * slope
