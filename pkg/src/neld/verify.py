"""Property suites run by `neld verify`.

Each suite returns CheckResult rows with the measured residual or statistic
and the threshold it was held to. All randomness is seeded, so a suite's
outcome is reproducible.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .analysis import (
    boltzmann_bin_probabilities,
    chi_square_test,
    configurational_histogram,
    convergence_rate,
    drift_estimate,
    generator_apply,
    generator_drift_constants,
    lln_average,
    momentum_increments,
    strong_order,
)
from .dynamics import initial_state, run, step_eulerian, step_lagrangian
from .exceptions import AnalysisError
from .flow_lattice import (
    LatticeFrame,
    cell_quality,
    make_flow,
    phase,
    remap_lattice,
)
from .observables import OBSERVABLES, lyapunov_observable
from .potential import gradient, value
from .remap import check_diagram, remapped_state
from .rng import NoiseStream
from .schemas import (
    CoordSystem,
    FlowConfig,
    FlowKind,
    InitSpec,
    PairParams,
    PositionInit,
    PotentialKind,
    PotentialSpec,
    Scheme,
    SimConfig,
    Suite,
)

logger = logging.getLogger(__name__)

SEED = 20240601
DIAGRAM_TOL = 1e-10
PERIODICITY_TOL = 1e-12
CLOSURE_TOL = 1e-10
GRADIENT_TOL = 1e-6
SE_FACTOR = 3.0
CHI_SQUARE_LEVEL = 0.01

_FLOWS = (
    (FlowKind.SHEAR, 1.0),
    (FlowKind.SHEAR, -0.5),
    (FlowKind.PLANAR_ELONGATION, 1.0),
    (FlowKind.PLANAR_ELONGATION, -0.5),
)


@dataclass(frozen=True)
class CheckResult:
    """One verified property."""

    name: str
    measured: float
    threshold: float
    passed: bool
    relation: str = "<="

    @classmethod
    def at_most(cls, name: str, measured: float, threshold: float) -> CheckResult:
        return cls(name, float(measured), float(threshold), bool(measured <= threshold), "<=")

    @classmethod
    def at_least(cls, name: str, measured: float, threshold: float) -> CheckResult:
        return cls(name, float(measured), float(threshold), bool(measured >= threshold), ">=")


def _sim(
    kind: FlowKind = FlowKind.SHEAR,
    rate: float = 1.0,
    potential: PotentialSpec | None = None,
    **params: object,
) -> SimConfig:
    return SimConfig(
        flow=FlowConfig(kind=kind, rate=rate),
        potential=potential or PotentialSpec.zero(),
        seed=SEED,
        **params,
    )


# ---------------------------------------------------------------------------
# remap
# ---------------------------------------------------------------------------

def suite_remap(samples: int = 1000) -> list[CheckResult]:
    """Commutative diagram Phi_t R_t = R_tilde_t Phi_tilde_t on random inputs."""
    rng = np.random.default_rng(SEED)
    results = []
    for kind, rate in _FLOWS:
        flow = make_flow(kind, rate)
        L0 = flow.initial_cell
        worst = 0.0
        for _ in range(samples):
            t = rng.uniform(0.0, 4.0 * flow.period)
            q = rng.uniform(-1.0, 2.0, size=(2, 3))
            p = rng.normal(size=(2, 3))
            worst = max(worst, check_diagram(flow, L0, t, q, p))
        results.append(CheckResult.at_most(f"diagram residual ({kind.value}, rate {rate:g})", worst, DIAGRAM_TOL))
    return results


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------

def suite_lattice() -> list[CheckResult]:
    """Stretch periodicity, remap closure and cell quality over ten periods."""
    rng = np.random.default_rng(SEED)
    results = []
    for kind, rate in _FLOWS:
        flow = make_flow(kind, rate)
        label = f"{kind.value}, rate {rate:g}"
        L0 = flow.initial_cell

        worst = 0.0
        for t in rng.uniform(0.0, 5.0 * flow.period, size=200):
            theta, _ = phase(flow, t)
            theta_next, _ = phase(flow, t + flow.period)
            worst = max(worst, float(np.max(np.abs(flow.stretch(theta) - flow.stretch(theta_next)))))
        results.append(CheckResult.at_most(f"stretch periodicity ({label})", worst, PERIODICITY_TOL))

        frame = LatticeFrame.initial(flow)
        closure = 0.0
        min_image = math.inf
        for _ in range(10):
            for theta in np.linspace(0.0, flow.period, 33):
                min_image = min(min_image, cell_quality(flow.stretch(theta) @ L0)[0])
            before = flow.stretch(flow.period) @ frame.L0 @ flow.remap_matrix
            frame = remap_lattice(flow, frame.at_phase(flow, flow.period))
            closure = max(closure, float(np.max(np.abs(before - L0))))
        results.append(CheckResult.at_most(f"remap closure ({label})", closure, CLOSURE_TOL))
        reference = cell_quality(L0)[0]
        results.append(CheckResult.at_least(f"min image ratio with remap ({label})", min_image / reference, 0.3))

    pef = make_flow(FlowKind.PLANAR_ELONGATION, 1.0)
    collapsed = cell_quality(pef.stretch(5.0 / pef.rate))[0]
    results.append(CheckResult.at_most("min image without remap (planar_elongation, t = 5/rate)", collapsed, 1e-2))
    shear = make_flow(FlowKind.SHEAR, 1.0)
    results.append(CheckResult.at_least("cell condition without remap (shear, t = 5/rate)", cell_quality(shear.stretch(5.0))[1], 20.0))
    return results


# ---------------------------------------------------------------------------
# potential
# ---------------------------------------------------------------------------

def _gradient_error(spec: PotentialSpec, cell: np.ndarray, q: np.ndarray, h: float = 1e-5) -> float:
    analytic = gradient(spec, cell, q)
    numeric = np.zeros_like(q)
    for i in range(q.shape[-2]):
        for axis in range(3):
            shift = np.zeros(q.shape[-2:])
            shift[i, axis] = h
            numeric[..., i, axis] = (value(spec, cell, q + shift) - value(spec, cell, q - shift)) / (2 * h)
    scale = np.maximum(np.max(np.abs(analytic), axis=(-2, -1)), 1.0)
    return float(np.max(np.max(np.abs(numeric - analytic), axis=(-2, -1)) / scale))


def suite_potential(samples: int = 1000) -> list[CheckResult]:
    """Analytic vs finite-difference gradients, then the equilibrium marginal."""
    rng = np.random.default_rng(SEED)
    results = []
    flow = make_flow(FlowKind.SHEAR, 1.0)
    cell = flow.stretch(rng.uniform(0.0, flow.period)) @ flow.initial_cell

    cosine = PotentialSpec.default_cosine()
    q = rng.uniform(0.0, 1.0, size=(samples, 2, 3)) @ cell.T
    results.append(CheckResult.at_most("gradient error (fractional_cosine)", _gradient_error(cosine, cell, q), GRADIENT_TOL))

    pair = PotentialSpec(kind=PotentialKind.SMOOTH_PAIR, pair=PairParams(depth=1.0, range=0.3))
    q = rng.uniform(0.0, 1.0, size=(samples, 3, 3)) @ cell.T
    results.append(CheckResult.at_most("gradient error (smooth_pair)", _gradient_error(pair, cell, q), GRADIENT_TOL))

    results += _equilibrium_checks(cosine)
    return results


def _equilibrium_checks(spec: PotentialSpec, trajectories: int = 2048) -> list[CheckResult]:
    cfg = _sim(FlowKind.EQUILIBRIUM, 1.0, spec, steps_per_period=32)
    ids = np.arange(trajectories)
    result = run(cfg, 50, initial_state(cfg, ids), trajectory_ids=ids)
    kept = result.chain[10::2]

    kinetic = np.stack([np.sum(s.P**2, axis=(-2, -1)) for s in kept]) / (3 * cfg.particles)
    per_trajectory = kinetic.mean(axis=0)
    mean = float(per_trajectory.mean())
    se = float(per_trajectory.std(ddof=1) / math.sqrt(per_trajectory.size))
    z = abs(mean - 1.0 / cfg.beta) / se

    positions = np.stack([s.Q for s in kept])
    counts = configurational_histogram(positions, cfg.flow_spec.initial_cell, 0, 32)
    probabilities = boltzmann_bin_probabilities(spec, 0, cfg.beta, 32)
    _, p_value = chi_square_test(counts, probabilities)
    return [
        CheckResult.at_most("equipartition |<p^2>/3d - 1/beta| / SE (equilibrium, cosine)", z, SE_FACTOR),
        CheckResult.at_least("configurational marginal chi-square p-value", p_value, CHI_SQUARE_LEVEL),
    ]


# ---------------------------------------------------------------------------
# ou
# ---------------------------------------------------------------------------

def suite_ou(trajectories: int = 1024, periods: int = 100) -> list[CheckResult]:
    """Zero-potential momentum chain: stationary variance and increment variance."""
    cfg = _sim(FlowKind.SHEAR, 1.0, steps_per_period=16)
    ids = np.arange(trajectories)
    result = run(cfg, periods, initial_state(cfg, ids), trajectory_ids=ids)

    P = np.stack([s.P for s in result.chain[1:]])
    per_trajectory = np.mean(P**2, axis=(0, 2, 3))
    variance = float(per_trajectory.mean())
    se = float(per_trajectory.std(ddof=1) / math.sqrt(trajectories))

    G = momentum_increments(result.chain, cfg.gamma, cfg.period)
    g_per_trajectory = np.mean(G**2, axis=(0, 2, 3))
    g_expected = math.expm1(2.0 * cfg.gamma * cfg.period) / cfg.beta
    g_variance = float(g_per_trajectory.mean())
    g_se = float(g_per_trajectory.std(ddof=1) / math.sqrt(trajectories))
    return [
        CheckResult.at_most("stationary variance |var - 1/beta| / SE", abs(variance - 1.0 / cfg.beta) / se, SE_FACTOR),
        CheckResult.at_most("increment variance |var G - (e^{2 gamma T} - 1)/beta| / SE", abs(g_variance - g_expected) / g_se, SE_FACTOR),
    ]


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------

def suite_drift(trajectories: int = 128, periods: int = 100) -> list[CheckResult]:
    """Lyapunov drift a_n < 1 for shear and planar elongation, and the generator drift."""
    results = []
    cosine = PotentialSpec.default_cosine()
    for kind in (FlowKind.SHEAR, FlowKind.PLANAR_ELONGATION):
        cfg = _sim(kind, 1.0, cosine, steps_per_period=32)
        ids = np.arange(trajectories)
        result = run(cfg, periods, initial_state(cfg, ids), trajectory_ids=ids)
        for n in (1, 2):
            a, _ = drift_estimate(result.chain[20:], n)
            results.append(CheckResult.at_most(f"drift a_{n} ({kind.value}, cosine)", a, 1.0 - 1e-9))

    cfg = _sim(FlowKind.SHEAR, 1.0, cosine)
    rng = np.random.default_rng(SEED)
    radius = np.linspace(0.0, 20.0, 401)
    direction = rng.normal(size=(radius.size, 1, 3))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    p = radius[:, None, None] * direction
    q = rng.uniform(0.0, 1.0, size=p.shape)
    for m in (2.0, 4.0):
        f = lyapunov_observable(m)
        Uf = generator_apply(cfg.flow_spec, cfg, 0.0, (q, p), f)
        a_hat, _ = generator_drift_constants(Uf, f.value(q, p))
        results.append(CheckResult.at_least(f"generator drift a_hat (1 + |p|^{m:g})", a_hat, 1e-6))
    return results


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def _ensemble_series(cfg: SimConfig, init: InitSpec, ids: np.ndarray, periods: int, tag: int, name: str) -> np.ndarray:
    result = run(cfg, periods, initial_state(cfg, ids, init, tag=tag), trajectory_ids=ids)
    observable = OBSERVABLES[name]
    return np.stack([observable(0.0, s.Q, s.P, cfg) for s in result.chain])


def frame_errors(cfg: SimConfig, trajectories: int = 64) -> float:
    """Max distance after one period between the mapped Lagrangian and the Eulerian path.

    Both paths use the same Brownian increments and the Euler-Maruyama scheme.
    """
    flow = cfg.flow_spec
    ids = np.arange(trajectories)
    lag = initial_state(cfg, ids)
    eul = remapped_state(flow, lag.positions, lag.momenta, coords=CoordSystem.REMAPPED_EULERIAN)
    dW = NoiseStream(cfg.seed, ids, cfg.particles).increments(0, cfg.steps_per_period, cfg.dt)
    for n in range(cfg.steps_per_period):
        theta = n * cfg.dt
        lag = step_lagrangian(cfg, lag, theta, dW[n])
        eul = step_eulerian(cfg, eul, theta, dW[n])
    E = flow.stretch(flow.period)
    q_gap = np.max(np.abs(lag.positions @ E.T - eul.positions))
    p_gap = np.max(np.abs(lag.momenta @ E.T - eul.momenta))
    return float(max(q_gap, p_gap))


def suite_convergence() -> list[CheckResult]:
    """OU relaxation rate, limit-cycle convergence and frame equivalence order."""
    results = []

    ou = _sim(FlowKind.EQUILIBRIUM, 1.0, steps_per_period=16)
    ids = np.arange(64)
    plus = InitSpec(positions=PositionInit.CENTER, momentum_shift=2.0, momentum_scale=0.0)
    minus = InitSpec(positions=PositionInit.CENTER, momentum_shift=-2.0, momentum_scale=0.0)
    a = _ensemble_series(ou, plus, ids, 8, 0, "px")
    b = _ensemble_series(ou, minus, ids, 8, 1, "px")
    fit = convergence_rate(a, b, times=np.arange(a.shape[0]) * ou.period)
    results.append(CheckResult.at_most("OU rate |lambda - gamma| / gamma", abs(fit.rate - ou.gamma) / ou.gamma, 0.1))

    sheared = _sim(FlowKind.SHEAR, 1.0, PotentialSpec.default_cosine(), steps_per_period=32)
    ids = np.arange(4096)
    cold = InitSpec(momentum_scale=0.0)
    hot = InitSpec(momentum_scale=3.0)
    a = _ensemble_series(sheared, cold, ids, 6, 0, "kinetic")
    b = _ensemble_series(sheared, hot, ids, 6, 1, "kinetic")
    rate = r_squared = math.nan
    try:
        fit = convergence_rate(a, b, times=np.arange(a.shape[0]) * sheared.period)
        rate, r_squared = fit.rate, fit.r_squared
    except AnalysisError as exc:
        logger.warning("Shear convergence fit failed: %s", exc)
    results.append(CheckResult.at_least("shear convergence rate lambda", rate, 1e-9))
    results.append(CheckResult.at_least("shear convergence fit r^2", r_squared, 0.9))

    ids = np.arange(64)
    periods = 400
    times = np.arange(periods + 1) * sheared.period
    lln_a = lln_average(_ensemble_series(sheared, cold, ids, periods, 0, "kinetic").mean(axis=1), times)
    lln_b = lln_average(_ensemble_series(sheared, hot, ids, periods, 1, "kinetic").mean(axis=1), times)
    gap = abs(lln_a.final - lln_b.final) / math.hypot(lln_a.stderr, lln_b.stderr)
    results.append(CheckResult.at_most("time-average gap |avg_A - avg_B| / SE (cold vs hot start)", gap, SE_FACTOR))

    steps = (64, 128, 256)
    errors = []
    for n_s in steps:
        cfg = _sim(FlowKind.SHEAR, 1.0, PotentialSpec.default_cosine(), steps_per_period=n_s, scheme=Scheme.EULER_MARUYAMA)
        errors.append(frame_errors(cfg))
    order = strong_order(errors, [1.0 / n for n in steps])
    results.append(CheckResult.at_least("frame equivalence strong order", order, 0.8))
    return results


SUITES: dict[Suite, Callable[[], list[CheckResult]]] = {
    Suite.REMAP: suite_remap,
    Suite.LATTICE: suite_lattice,
    Suite.POTENTIAL: suite_potential,
    Suite.OU: suite_ou,
    Suite.DRIFT: suite_drift,
    Suite.CONVERGENCE: suite_convergence,
}


def run_suite(suite: Suite) -> dict[Suite, list[CheckResult]]:
    """Run one suite, or every suite in declaration order for Suite.ALL."""
    selected = list(SUITES) if suite is Suite.ALL else [suite]
    out = {}
    for name in selected:
        logger.info("Running suite %s", name.value)
        out[name] = SUITES[name]()
    return out
