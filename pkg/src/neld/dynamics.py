"""Integrators for NELD in remapped Lagrangian and remapped Eulerian coordinates.

Remapped Lagrangian SDE over one period (theta in [0, T)):

    dq_bar = p_bar dtheta
    dp_bar = -e^{-theta A} grad V(e^{theta A} q_bar) dtheta - Gamma p_bar dtheta
             + sigma e^{-theta A} dW,          Gamma = gamma I + A

Remapped Eulerian SDE:

    dq_hat = (p_hat + A q_hat) dtheta
    dp_hat = -grad V(q_hat) dtheta - gamma p_hat dtheta + sigma dW

The integrating-factor scheme is a BAOAB splitting whose O part solves the
linear drift -Gamma p and the noise exactly, so it is exact without a
potential; the Eulerian version is the image of the Lagrangian one.

Positions are left unwrapped inside a period; at the boundary the lattice is
remapped, positions are folded into the L0 cell and Lagrangian momenta are
multiplied by e^{TA}.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonFiniteError
from .flow_lattice import FlowSpec, LatticeFrame, remap_lattice
from .observables import Observable
from .potential import gradient, lagrangian_force
from .remap import SystemState, wrap_to_cell
from .rng import NoiseStream
from .schemas import CoordSystem, InitSpec, PositionInit, Scheme, SimConfig

logger = logging.getLogger(__name__)

Recorder = Callable[[int, float, np.ndarray, np.ndarray], None]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChainSample:
    """Period-sampled state (Q_k, P_k) at phase 0 in remapped Lagrangian coordinates."""

    k: int
    Q: np.ndarray
    P: np.ndarray


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """Observable values recorded at one step of one period."""

    period: int
    step: int
    theta: float
    t: float
    values: dict[str, np.ndarray]


@dataclass(eq=False)
class RunResult:
    """Output of `run`: the period chain and the optional per-step trace."""

    chain: list[ChainSample] = field(default_factory=list)
    trace: list[TraceRecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Scheme coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _OUCoefficients:
    """Exact one-step coefficients of dp = -gamma p dt + sigma dW."""

    decay: float
    noise: float

    @classmethod
    def for_step(cls, gamma: float, dt: float) -> _OUCoefficients:
        return cls(
            decay=math.exp(-gamma * dt),
            # Std of int_0^dt e^{-gamma (dt - s)} dW(s), per unit sqrt(dt) of dW.
            noise=math.sqrt(-math.expm1(-2.0 * gamma * dt) / (2.0 * gamma * dt)),
        )


def _check_finite(q: np.ndarray, p: np.ndarray, step: int, trajectory_ids: np.ndarray | None) -> None:
    finite = np.isfinite(q).all(axis=(-2, -1)) & np.isfinite(p).all(axis=(-2, -1))
    if np.all(finite):
        return
    trajectory = None
    if np.ndim(finite) > 0:
        index = int(np.argmin(finite))
        trajectory = int(trajectory_ids[index]) if trajectory_ids is not None else index
    elif trajectory_ids is not None:
        trajectory = int(trajectory_ids[0])
    raise NonFiniteError(step=step, trajectory=trajectory)


def _lagrangian_update(
    cfg: SimConfig,
    flow: FlowSpec,
    L0: np.ndarray,
    theta: float,
    q: np.ndarray,
    p: np.ndarray,
    dW: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    dt = cfg.dt
    if cfg.scheme is Scheme.EULER_MARUYAMA:
        force = lagrangian_force(cfg.potential, flow, theta, L0, q)
        friction = cfg.gamma * p + p @ flow.A.T
        noise = dW @ flow.stretch_inverse(theta).T
        return q + dt * p, p + dt * (-force - friction) + cfg.sigma * noise

    # BAOAB: half kick, half drift, exact flow-and-friction step, half drift, half kick.
    coef = _OUCoefficients.for_step(cfg.gamma, dt)
    half = 0.5 * dt
    p = p - half * lagrangian_force(cfg.potential, flow, theta, L0, q)
    q = q + half * p
    p = coef.decay * (p @ flow.stretch_inverse(dt).T) + (cfg.sigma * coef.noise * dW) @ flow.stretch_inverse(theta + dt).T
    q = q + half * p
    return q, p - half * lagrangian_force(cfg.potential, flow, theta + dt, L0, q)


def _eulerian_update(
    cfg: SimConfig,
    flow: FlowSpec,
    L0: np.ndarray,
    theta: float,
    q: np.ndarray,
    p: np.ndarray,
    dW: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    dt = cfg.dt
    if cfg.scheme is Scheme.EULER_MARUYAMA:
        grad = gradient(cfg.potential, flow.stretch(theta) @ L0, q)
        q_new = q + dt * (p + q @ flow.A.T)
        return q_new, p + dt * (-grad - cfg.gamma * p) + cfg.sigma * dW

    # Image of the Lagrangian BAOAB step: the O part also streams positions by e^{dt A}.
    coef = _OUCoefficients.for_step(cfg.gamma, dt)
    half = 0.5 * dt
    p = p - half * gradient(cfg.potential, flow.stretch(theta) @ L0, q)
    q = (q + half * p) @ flow.stretch(dt).T
    p = coef.decay * p + cfg.sigma * coef.noise * dW
    q = q + half * p
    return q, p - half * gradient(cfg.potential, flow.stretch(theta + dt) @ L0, q)


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def _step(
    cfg: SimConfig,
    state: SystemState,
    theta: float,
    dW: np.ndarray,
    coords: CoordSystem,
    update: Callable[..., tuple[np.ndarray, np.ndarray]],
) -> SystemState:
    state.require(coords)
    flow = state.flow
    q, p = update(cfg, flow, state.frame.L0, theta, state.positions, state.momenta, np.asarray(dW, dtype=float))
    _check_finite(q, p, step=int(round(theta / cfg.dt)), trajectory_ids=None)
    new_theta = theta + cfg.dt
    frame = state.frame.at_phase(flow, new_theta)
    return SystemState(
        coords=coords,
        positions=q,
        momenta=p,
        t=frame.remap_count * flow.period + new_theta,
        flow=flow,
        frame=frame,
    )


def step_lagrangian(cfg: SimConfig, state: SystemState, theta: float, dW: np.ndarray) -> SystemState:
    """Advance a remapped Lagrangian state from phase theta by one step dt.

    Args:
        cfg: Simulation config (scheme, gamma, sigma, dt, potential).
        state: State in remapped Lagrangian coordinates.
        theta: Current phase.
        dW: Brownian increments ~ N(0, dt), same shape as the momenta.

    Raises:
        WrongFrameError: If the state is not remapped Lagrangian.
        NonFiniteError: If the step produced NaN or infinite values.
    """
    return _step(cfg, state, theta, dW, CoordSystem.REMAPPED_LAGRANGIAN, _lagrangian_update)


def step_eulerian(cfg: SimConfig, state: SystemState, theta: float, dW: np.ndarray) -> SystemState:
    """Advance a remapped Eulerian state from phase theta by one step dt."""
    return _step(cfg, state, theta, dW, CoordSystem.REMAPPED_EULERIAN, _eulerian_update)


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

def advance_period(
    cfg: SimConfig,
    state: SystemState,
    dW: np.ndarray,
    *,
    recorder: Recorder | None = None,
    record_stride: int = 1,
    trajectory_ids: np.ndarray | None = None,
) -> tuple[SystemState, ChainSample]:
    """Integrate n_s steps over [0, T), then remap lattice, positions and momenta.

    Args:
        cfg: Simulation config.
        state: State at phase 0 in cfg.frame.
        dW: Increments of shape (n_s, *momenta.shape).
        recorder: Called as recorder(step, theta, q_bar, p_bar) before every
            `record_stride`-th step, with remapped Lagrangian coordinates.
        record_stride: Recording stride in steps.
        trajectory_ids: Global ids used when reporting a blowup.

    Returns:
        The state at the next period start and its ChainSample.
    """
    coords = state.coords
    state.require(cfg.frame)
    flow = state.flow
    L0 = state.frame.L0
    n_s = cfg.steps_per_period
    dt = cfg.dt
    eulerian = coords is CoordSystem.REMAPPED_EULERIAN
    update = _eulerian_update if eulerian else _lagrangian_update
    base_step = state.frame.remap_count * n_s

    q, p = state.positions, state.momenta
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_s):
            theta = n * dt
            if recorder is not None and n % record_stride == 0:
                if eulerian:
                    E_inv = flow.stretch_inverse(theta)
                    recorder(n, theta, q @ E_inv.T, p @ E_inv.T)
                else:
                    recorder(n, theta, q, p)
            q, p = update(cfg, flow, L0, theta, q, p, dW[n])
            _check_finite(q, p, base_step + n, trajectory_ids)

    frame = remap_lattice(flow, state.frame.at_phase(flow, flow.period))
    if eulerian:
        q = wrap_to_cell(L0, q)
    else:
        E_T = flow.stretch(flow.period)
        q = wrap_to_cell(L0, q @ E_T.T)
        p = p @ E_T.T

    new_state = SystemState(
        coords=coords,
        positions=q,
        momenta=p,
        t=frame.remap_count * flow.period,
        flow=flow,
        frame=frame,
    )
    return new_state, ChainSample(k=frame.remap_count, Q=q, P=p)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def initial_state(
    cfg: SimConfig,
    trajectory_ids: np.ndarray,
    init: InitSpec | None = None,
    *,
    tag: int = 0,
) -> SystemState:
    """Draw a (B, d, 3) initial state at phase 0 in cfg.frame.

    Positions are uniform in the L0 cell (or at its center); momenta are
    N(0, momentum_scale^2 / beta) plus momentum_shift on the x component.
    """
    init = init or InitSpec()
    flow = cfg.flow_spec
    L0 = flow.initial_cell
    noise = NoiseStream(cfg.seed, trajectory_ids, cfg.particles)
    uniform, normal = noise.initial(tag)
    if init.positions is PositionInit.CENTER:
        uniform = np.full_like(uniform, 0.5)
    momenta = normal * (init.momentum_scale / math.sqrt(cfg.beta))
    momenta[..., 0] += init.momentum_shift
    return SystemState(
        coords=cfg.frame,
        positions=uniform @ L0.T,
        momenta=momenta,
        t=0.0,
        flow=flow,
        frame=LatticeFrame.initial(flow, L0),
    )


def run(
    cfg: SimConfig,
    n_periods: int,
    initial: SystemState,
    *,
    trajectory_ids: Sequence[int] | np.ndarray | None = None,
    observables: Sequence[Observable] = (),
    record_stride: int = 1,
) -> RunResult:
    """Integrate n_periods periods from `initial`.

    The state may be a single (d, 3) configuration or a (B, d, 3) ensemble.
    Increments come from NoiseStream(cfg.seed, trajectory_ids), so results
    are bit-identical for equal (cfg, ids) whatever the ensemble split.

    Args:
        cfg: Simulation config.
        n_periods: Number of periods to integrate.
        initial: State at phase 0 in cfg.frame.
        trajectory_ids: Global trajectory ids; defaults to 0..B-1.
        observables: Observables recorded into the trace.
        record_stride: Trace stride in steps.

    Returns:
        RunResult with n_periods + 1 chain samples (initial included).
    """
    initial.require(cfg.frame)
    batched = initial.momenta.ndim == 3
    if trajectory_ids is None:
        trajectory_ids = np.arange(initial.momenta.shape[0] if batched else 1)
    ids = np.asarray(trajectory_ids, dtype=np.int64)
    noise = NoiseStream(cfg.seed, ids, cfg.particles)
    flow = initial.flow

    result = RunResult(chain=[ChainSample(k=initial.frame.remap_count, Q=initial.positions, P=initial.momenta)])
    state = initial

    for _ in range(n_periods):
        k = state.frame.remap_count
        dW = noise.increments(k, cfg.steps_per_period, cfg.dt)
        if not batched:
            dW = dW[:, 0]

        recorder: Recorder | None = None
        if observables:
            def recorder(step: int, theta: float, q: np.ndarray, p: np.ndarray, k: int = k) -> None:
                values = {obs.name: np.asarray(obs(theta, q, p, cfg)) for obs in observables}
                result.trace.append(TraceRecord(k, step, theta, k * flow.period + theta, values))

        state, sample = advance_period(
            cfg,
            state,
            dW,
            recorder=recorder,
            record_stride=record_stride,
            trajectory_ids=ids,
        )
        result.chain.append(sample)
        logger.debug("Period %d done (t=%.6g)", sample.k, state.t)

    return result
