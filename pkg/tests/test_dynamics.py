"""Tests for the NELD integrators, period advance and trajectory runs."""

from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from neld.analysis import moment_check
from neld.dynamics import advance_period, initial_state, run, step_eulerian, step_lagrangian
from neld.exceptions import NonFiniteError, WrongFrameError
from neld.observables import OBSERVABLES
from neld.potential import value
from neld.remap import remapped_state
from neld.rng import NoiseStream
from neld.schemas import CoordSystem, FlowKind, InitSpec, PotentialSpec, Scheme

Q0 = np.array([[0.2, 0.7, 0.4]])
P0 = np.array([[1.0, -0.5, 0.3]])


def _eulerian(cfg):
    return cfg.model_copy(update={"frame": CoordSystem.REMAPPED_EULERIAN})


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

class TestSteps:
    def test_integrating_factor_decay_without_flow(self, make_sim):
        cfg = make_sim(FlowKind.EQUILIBRIUM, gamma=2.0)
        state = remapped_state(cfg.flow_spec, Q0, P0)
        new = step_lagrangian(cfg, state, 0.0, np.zeros((1, 3)))
        assert_allclose(new.momenta, math.exp(-2.0 * cfg.dt) * P0, rtol=1e-14)
        assert new.theta == pytest.approx(cfg.dt)

    def test_integrating_factor_shear_closed_form(self, make_sim):
        cfg = make_sim(gamma=0.7)
        flow = cfg.flow_spec
        state = remapped_state(flow, Q0, P0)
        for n in range(10):
            state = step_lagrangian(cfg, state, n * cfg.dt, np.zeros((1, 3)))
        theta = 10 * cfg.dt
        expected = math.exp(-0.7 * theta) * P0 @ flow.stretch_inverse(theta).T
        assert_allclose(state.momenta, expected, rtol=1e-12)

    def test_integrating_factor_conserves_energy_without_friction(self, make_sim):
        cfg = make_sim(FlowKind.EQUILIBRIUM, potential=PotentialSpec.default_cosine(), gamma=1e-6)
        flow = cfg.flow_spec
        L0 = flow.initial_cell
        state = remapped_state(flow, np.array([[0.55, 0.45, 0.5]]) @ L0.T, np.array([[0.3, -0.2, 0.1]]))

        def energy(s):
            return 0.5 * float(np.sum(s.momenta**2)) + float(value(cfg.potential, L0, s.positions))

        start = energy(state)
        drift = 0.0
        for _ in range(40):
            state, _ = advance_period(cfg, state, np.zeros((cfg.steps_per_period, 1, 3)))
            drift = max(drift, abs(energy(state) - start))
        assert drift < 0.02

    def test_eulerian_matches_linear_ode(self, make_sim):
        cfg = _eulerian(make_sim(gamma=0.7, steps_per_period=256))
        flow = cfg.flow_spec
        state = remapped_state(flow, Q0, P0, coords=CoordSystem.REMAPPED_EULERIAN)
        for n in range(cfg.steps_per_period):
            state = step_eulerian(cfg, state, n * cfg.dt, np.zeros((1, 3)))

        generator = np.zeros((6, 6))
        generator[:3, :3] = flow.A
        generator[:3, 3:] = np.eye(3)
        generator[3:, 3:] = -0.7 * np.eye(3)
        exact = expm(flow.period * generator) @ np.concatenate([Q0[0], P0[0]])
        assert_allclose(state.momenta[0], exact[3:], rtol=1e-12)
        assert_allclose(state.positions[0], exact[:3], atol=1e-4)

    def test_step_requires_frame(self, make_sim):
        cfg = make_sim()
        state = remapped_state(cfg.flow_spec, Q0, P0, coords=CoordSystem.REMAPPED_EULERIAN)
        with pytest.raises(WrongFrameError):
            step_lagrangian(cfg, state, 0.0, np.zeros((1, 3)))

    def test_euler_maruyama_first_order_without_noise(self, make_sim):
        potential = PotentialSpec.default_cosine()

        def momenta_after_period(n_s):
            cfg = make_sim(potential=potential, steps_per_period=n_s, scheme=Scheme.EULER_MARUYAMA)
            state = remapped_state(cfg.flow_spec, Q0, P0)
            state, _ = advance_period(cfg, state, np.zeros((n_s, 1, 3)))
            return state.momenta

        reference = momenta_after_period(3200)
        err_coarse = np.max(np.abs(momenta_after_period(32) - reference))
        err_fine = np.max(np.abs(momenta_after_period(64) - reference))
        assert err_coarse > 0.0
        assert err_fine < 0.7 * err_coarse


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

class TestAdvancePeriod:
    @pytest.mark.parametrize("kind", [FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION])
    def test_deterministic_chain_decay(self, make_sim, kind):
        cfg = make_sim(kind)
        state = remapped_state(cfg.flow_spec, Q0, P0)
        state, sample = advance_period(cfg, state, np.zeros((cfg.steps_per_period, 1, 3)))
        assert sample.k == 1
        assert state.theta == 0.0
        assert state.t == pytest.approx(cfg.period)
        assert_allclose(sample.P, math.exp(-cfg.gamma * cfg.period) * P0, rtol=1e-12)

    def test_chain_positions_in_cell(self, make_sim, pef):
        cfg = make_sim(FlowKind.PLANAR_ELONGATION, potential=PotentialSpec.default_cosine())
        ids = np.arange(32)
        result = run(cfg, 5, initial_state(cfg, ids), trajectory_ids=ids)
        inverse = np.linalg.inv(pef.initial_cell)
        for sample in result.chain:
            frac = sample.Q @ inverse.T
            assert np.all(frac >= -1e-12) and np.all(frac < 1.0 + 1e-12)

    def test_frames_agree_under_shared_noise(self, make_sim):
        cfg = make_sim(potential=PotentialSpec.default_cosine(), steps_per_period=32)
        ids = np.arange(8)
        lag = initial_state(cfg, ids)
        eul = remapped_state(cfg.flow_spec, lag.positions, lag.momenta, coords=CoordSystem.REMAPPED_EULERIAN)
        dW = NoiseStream(cfg.seed, ids, 1).increments(0, 32, cfg.dt)
        _, sample_lag = advance_period(cfg, lag, dW)
        _, sample_eul = advance_period(_eulerian(cfg), eul, dW)
        assert_allclose(sample_lag.P, sample_eul.P, atol=1e-10)
        gap = sample_lag.Q - sample_eul.Q
        assert_allclose(gap, np.rint(gap), atol=1e-10)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

class TestRun:
    def test_bit_identical_reruns(self, make_sim):
        cfg = make_sim(potential=PotentialSpec.default_cosine())
        ids = np.arange(4)
        first = run(cfg, 3, initial_state(cfg, ids), trajectory_ids=ids)
        second = run(cfg, 3, initial_state(cfg, ids), trajectory_ids=ids)
        for a, b in zip(first.chain, second.chain):
            assert np.array_equal(a.Q, b.Q) and np.array_equal(a.P, b.P)

    def test_ensemble_split_does_not_change_trajectories(self, make_sim):
        cfg = make_sim(potential=PotentialSpec.default_cosine())
        ids = np.arange(6)
        whole = run(cfg, 2, initial_state(cfg, ids), trajectory_ids=ids)
        part = run(cfg, 2, initial_state(cfg, ids[3:]), trajectory_ids=ids[3:])
        assert np.array_equal(whole.chain[-1].P[3:], part.chain[-1].P)

    def test_zero_periods(self, make_sim):
        cfg = make_sim()
        ids = np.arange(2)
        result = run(cfg, 0, initial_state(cfg, ids), observables=[OBSERVABLES["kinetic"]])
        assert len(result.chain) == 1
        assert result.trace == []

    def test_trace_records(self, make_sim):
        cfg = make_sim(steps_per_period=16)
        ids = np.arange(3)
        result = run(cfg, 3, initial_state(cfg, ids), observables=[OBSERVABLES["kinetic"]], record_stride=4)
        assert len(result.trace) == 12
        assert sorted({r.period for r in result.trace}) == [0, 1, 2]
        assert_allclose(sorted({r.theta for r in result.trace}), [0.0, 0.25, 0.5, 0.75])
        assert result.trace[0].values["kinetic"].shape == (3,)
        assert_allclose(result.trace[0].values["kinetic"], np.sum(result.chain[0].P ** 2, axis=(-2, -1)))

    def test_eulerian_trace_uses_lagrangian_coordinates(self, make_sim):
        cfg = make_sim(potential=PotentialSpec.default_cosine())
        ids = np.arange(4)
        lag = initial_state(cfg, ids)
        eul_cfg = _eulerian(cfg)
        eul = initial_state(eul_cfg, ids)
        kinetic = [OBSERVABLES["kinetic"]]
        a = run(cfg, 1, lag, trajectory_ids=ids, observables=kinetic)
        b = run(eul_cfg, 1, eul, trajectory_ids=ids, observables=kinetic)
        for ra, rb in zip(a.trace, b.trace):
            assert_allclose(ra.values["kinetic"], rb.values["kinetic"], rtol=1e-10)

    def test_run_requires_configured_frame(self, make_sim):
        cfg = make_sim()
        state = remapped_state(cfg.flow_spec, Q0, P0, coords=CoordSystem.REMAPPED_EULERIAN)
        with pytest.raises(WrongFrameError):
            run(cfg, 1, state)

    def test_blowup_reports_trajectory(self, make_sim):
        cfg = make_sim(FlowKind.EQUILIBRIUM, gamma=100.0, steps_per_period=1, scheme=Scheme.EULER_MARUYAMA)
        ids = np.arange(2)
        with pytest.raises(NonFiniteError) as info:
            run(cfg, 400, initial_state(cfg, ids), trajectory_ids=ids)
        assert info.value.trajectory in (0, 1)
        assert info.value.step > 0

    def test_initial_state_options(self, make_sim):
        cfg = make_sim(beta=4.0)
        ids = np.arange(500)
        state = initial_state(cfg, ids, InitSpec(positions="center", momentum_shift=2.0, momentum_scale=0.0))
        assert_allclose(state.positions, 0.5)
        assert_allclose(state.momenta[..., 0], 2.0)
        assert_allclose(state.momenta[..., 1:], 0.0)
        thermal = initial_state(cfg, ids)
        assert np.var(thermal.momenta) == pytest.approx(0.25, rel=0.15)


# ---------------------------------------------------------------------------
# Statistical properties
# ---------------------------------------------------------------------------

@pytest.mark.slow
class TestStatistics:
    def test_free_chain_variances(self, make_sim):
        cfg = make_sim(steps_per_period=8)
        ids = np.arange(512)
        result = run(cfg, 60, initial_state(cfg, ids), trajectory_ids=ids)
        P = np.stack([s.P for s in result.chain[1:]])
        per_trajectory = np.mean(P**2, axis=(0, 2, 3))
        se = per_trajectory.std(ddof=1) / math.sqrt(ids.size)
        assert abs(per_trajectory.mean() - 1.0 / cfg.beta) <= 4 * se

        G = math.exp(cfg.gamma * cfg.period) * P[1:] - P[:-1]
        g_per_trajectory = np.mean(G**2, axis=(0, 2, 3))
        g_se = g_per_trajectory.std(ddof=1) / math.sqrt(ids.size)
        expected = math.expm1(2 * cfg.gamma * cfg.period) / cfg.beta
        assert abs(g_per_trajectory.mean() - expected) <= 4 * g_se

    def test_equipartition_without_flow(self, make_sim):
        cfg = make_sim(FlowKind.EQUILIBRIUM, potential=PotentialSpec.default_cosine(), beta=2.0)
        ids = np.arange(256)
        result = run(cfg, 40, initial_state(cfg, ids), trajectory_ids=ids)
        kinetic = np.stack([np.sum(s.P**2, axis=(-2, -1)) / 3.0 for s in result.chain[10:]])
        per_trajectory = kinetic.mean(axis=0)
        se = per_trajectory.std(ddof=1) / math.sqrt(ids.size)
        assert abs(per_trajectory.mean() - 1.0 / cfg.beta) <= 4 * se

    def test_chain_stays_bounded_under_shear(self, make_sim):
        cfg = make_sim(potential=PotentialSpec.default_cosine())
        ids = np.arange(128)
        result = run(cfg, 200, initial_state(cfg, ids, InitSpec(momentum_scale=3.0)), trajectory_ids=ids)
        norms = np.stack([np.linalg.norm(s.P, axis=-1) for s in result.chain])
        assert np.isfinite(norms).all()
        assert norms.max() < 50.0
        for n in (1, 2):
            check = moment_check(result.chain, n)
            assert math.isfinite(check.estimate)
            assert check.bounded
