"""Tests for flows, deforming lattices and automorphism remaps."""

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from neld.exceptions import NotAtBoundaryError, SingularCellError, ZeroRateError
from neld.flow_lattice import (
    LatticeFrame,
    cell_quality,
    centered_stretch,
    deformed_lattice,
    kr_basis,
    make_flow,
    phase,
    remap_lattice,
)
from neld.schemas import FlowKind

GOLDEN = (3.0 + math.sqrt(5.0)) / 2.0


# ---------------------------------------------------------------------------
# make_flow
# ---------------------------------------------------------------------------

class TestMakeFlow:
    @pytest.mark.parametrize("kind", list(FlowKind))
    def test_zero_rate_rejected(self, kind):
        with pytest.raises(ZeroRateError, match="zero-rate"):
            make_flow(kind, 0.0)

    def test_shear_fields(self, shear):
        assert shear.period == pytest.approx(1.0)
        assert_allclose(shear.A, [[0, 1, 0], [0, 0, 0], [0, 0, 0]])
        assert np.array_equal(shear.remap_matrix, [[1, -1, 0], [0, 1, 0], [0, 0, 1]])
        assert np.trace(shear.A) == 0.0

    def test_negative_shear_uses_mirrored_remap(self):
        flow = make_flow(FlowKind.SHEAR, -0.5)
        assert flow.period == pytest.approx(2.0)
        assert np.array_equal(flow.remap_matrix, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])

    def test_pef_fields(self, pef):
        assert pef.lam == pytest.approx(GOLDEN, rel=1e-15)
        assert pef.period == pytest.approx(math.log(GOLDEN))
        assert_allclose(pef.A, np.diag([1.0, -1.0, 0.0]))
        assert np.array_equal(pef.automorphism, [[2, 1, 0], [1, 1, 0], [0, 0, 1]])

    def test_kr_eigenbasis(self):
        M, S, lam, eta = kr_basis()
        assert_allclose(M @ S, S @ np.diag([lam, 1.0 / lam, 1.0]), atol=1e-12)
        assert_allclose(S.T @ S, np.eye(3), atol=1e-12)
        assert eta == pytest.approx(math.log(lam))
        assert round(np.linalg.det(M)) == 1

    def test_arrays_are_read_only(self, shear):
        with pytest.raises(ValueError):
            shear.A[0, 0] = 1.0

    def test_equilibrium_flow_has_no_gradient(self):
        flow = make_flow(FlowKind.EQUILIBRIUM, 0.5)
        assert flow.period == pytest.approx(2.0)
        assert_allclose(flow.stretch(1.3), np.eye(3))


# ---------------------------------------------------------------------------
# Stretch and phase
# ---------------------------------------------------------------------------

class TestStretch:
    @pytest.mark.parametrize("kind", [FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION])
    @pytest.mark.parametrize("rate", [1.0, -0.7])
    def test_matches_matrix_exponential(self, kind, rate):
        flow = make_flow(kind, rate)
        for tau in (0.0, 0.3, 1.7, -2.2):
            assert_allclose(flow.stretch(tau), expm(tau * flow.A), rtol=1e-12, atol=1e-12)
            assert_allclose(flow.stretch(tau) @ flow.stretch_inverse(tau), np.eye(3), atol=1e-12)

    def test_pef_period_stretch_maps_ones(self, pef):
        stretched = pef.stretch(pef.period) @ np.ones(3)
        assert_allclose(stretched, [GOLDEN, 1.0 / GOLDEN, 1.0], rtol=1e-12)

    def test_phase_split(self, shear):
        theta, k = phase(shear, 2.25)
        assert k == 2
        assert theta == pytest.approx(0.25)

    def test_phase_negative_time(self, shear):
        theta, k = phase(shear, -0.25)
        assert k == -1
        assert theta == pytest.approx(0.75)

    @pytest.mark.parametrize("kind", [FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION])
    def test_phase_stretch_is_periodic(self, kind):
        flow = make_flow(kind, 1.0)
        rng = np.random.default_rng(3)
        for t in rng.uniform(0.0, 5.0 * flow.period, size=50):
            a, _ = phase(flow, t)
            b, _ = phase(flow, t + flow.period)
            assert_allclose(flow.stretch(a), flow.stretch(b), atol=1e-12)

    def test_centered_stretch(self, shear):
        assert centered_stretch(shear, 0.7) == pytest.approx(-0.3)
        assert centered_stretch(shear, 1.2) == pytest.approx(0.2)

    def test_deformed_lattice(self, shear):
        assert_allclose(deformed_lattice(shear, 0.5, np.eye(3)), [[1, 0.5, 0], [0, 1, 0], [0, 0, 1]])


# ---------------------------------------------------------------------------
# remap_lattice
# ---------------------------------------------------------------------------

class TestRemapLattice:
    def test_rejects_mid_period(self, shear):
        frame = LatticeFrame.initial(shear).at_phase(shear, 0.5)
        with pytest.raises(NotAtBoundaryError):
            remap_lattice(shear, frame)

    @pytest.mark.parametrize("kind", [FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION])
    @pytest.mark.parametrize("rate", [1.0, -0.5])
    def test_closure(self, kind, rate):
        flow = make_flow(kind, rate)
        frame = LatticeFrame.initial(flow)
        for count in range(1, 11):
            stretched = flow.stretch(flow.period) @ frame.L0 @ flow.remap_matrix
            assert_allclose(stretched, flow.initial_cell, atol=1e-10)
            frame = remap_lattice(flow, frame.at_phase(flow, flow.period))
            assert frame.theta == 0.0
            assert frame.remap_count == count
            assert_allclose(frame.cell, flow.initial_cell)

    @pytest.mark.parametrize("kind", [FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION])
    def test_cells_stay_well_shaped_with_remap(self, kind):
        flow = make_flow(kind, 1.0)
        reference = cell_quality(flow.initial_cell)[0]
        worst = min(
            cell_quality(flow.stretch(theta) @ flow.initial_cell)[0]
            for theta in np.linspace(0.0, flow.period, 65)
        )
        assert worst >= 0.3 * reference

    def test_pef_cell_collapses_without_remap(self, pef):
        assert cell_quality(pef.stretch(5.0))[0] < 1e-2


# ---------------------------------------------------------------------------
# cell_quality
# ---------------------------------------------------------------------------

class TestCellQuality:
    def test_identity(self):
        min_image, cond = cell_quality(np.eye(3))
        assert min_image == pytest.approx(1.0)
        assert cond == pytest.approx(1.0)

    def test_singular(self):
        with pytest.raises(SingularCellError):
            cell_quality(np.diag([1.0, 0.0, 1.0]))
