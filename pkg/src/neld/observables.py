"""Named observables f(theta, q_bar, p_bar) and smooth test functions for the generator."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .exceptions import UnknownObservableError

if TYPE_CHECKING:
    from .schemas import SimConfig

Evaluator = Callable[[float, np.ndarray, np.ndarray, "SimConfig"], np.ndarray]


@dataclass(frozen=True)
class Observable:
    """Observable on remapped Lagrangian phase space.

    Attributes:
        name: Registry key.
        unit: Unit string written into result headers.
        weight_exponent: n such that |f| <= growth * K_n.
        growth: Declared constant c in |f| <= c K_n.
        evaluate: (theta, q_bar, p_bar, cfg) -> values over the leading axes.
    """

    name: str
    unit: str
    weight_exponent: int
    growth: float
    evaluate: Evaluator

    def __call__(self, theta: float, q_bar: np.ndarray, p_bar: np.ndarray, cfg: SimConfig) -> np.ndarray:
        return self.evaluate(theta, q_bar, p_bar, cfg)


def _squared_norm(p: np.ndarray) -> np.ndarray:
    return np.sum(np.square(p), axis=(-2, -1))


def _kinetic(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
    return _squared_norm(p)


def _px(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
    return np.mean(p[..., 0], axis=-1)


def _pxpy(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
    return np.mean(p[..., 0] * p[..., 1], axis=-1)


def _one(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
    return np.ones(p.shape[:-2])


def _lyapunov(n: int) -> Evaluator:
    def evaluate(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
        return 1.0 + _squared_norm(p) ** n

    return evaluate


def _potential(theta: float, q: np.ndarray, p: np.ndarray, cfg: SimConfig) -> np.ndarray:
    from .potential import value

    flow = cfg.flow_spec
    E = flow.stretch(theta)
    return value(cfg.potential, E @ flow.initial_cell, q @ E.T)


OBSERVABLES: dict[str, Observable] = {
    "kinetic": Observable("kinetic", "momentum^2", 1, 1.0, _kinetic),
    "px": Observable("px", "momentum", 1, 1.0, _px),
    "pxpy": Observable("pxpy", "momentum^2", 1, 1.0, _pxpy),
    "one": Observable("one", "1", 0, 1.0, _one),
    "lyapunov1": Observable("lyapunov1", "1", 1, 1.0, _lyapunov(1)),
    "lyapunov2": Observable("lyapunov2", "1", 2, 1.0, _lyapunov(2)),
    "potential": Observable("potential", "energy", 0, 1.0, _potential),
}


def get_observable(name: str) -> Observable:
    """Look up an observable by registry name.

    Raises:
        UnknownObservableError: If the name is not registered.
    """
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise UnknownObservableError(name) from None


# ---------------------------------------------------------------------------
# Smooth observables with analytic derivatives (generator evaluation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothObservable:
    """f(q, p) on Eulerian phase space with the derivatives the generator needs.

    Arrays q, p have shape (..., d, 3); value and laplacian_p return (...),
    grad_q and grad_p return (..., d, 3).
    """

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_q: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    laplacian_p: Callable[[np.ndarray, np.ndarray], np.ndarray]


def constant_observable(c: float = 1.0) -> SmoothObservable:
    return SmoothObservable(
        name=f"constant({c:g})",
        value=lambda q, p: np.full(p.shape[:-2], c),
        grad_q=lambda q, p: np.zeros_like(q),
        grad_p=lambda q, p: np.zeros_like(p),
        laplacian_p=lambda q, p: np.zeros(p.shape[:-2]),
    )


def squared_momentum_observable() -> SmoothObservable:
    """f = |p|^2 over all particles."""
    return SmoothObservable(
        name="|p|^2",
        value=lambda q, p: _squared_norm(p),
        grad_q=lambda q, p: np.zeros_like(q),
        grad_p=lambda q, p: 2.0 * p,
        laplacian_p=lambda q, p: np.full(p.shape[:-2], 2.0 * p.shape[-2] * p.shape[-1]),
    )


def lyapunov_observable(exponent: float) -> SmoothObservable:
    """f = 1 + |p|^m with m = exponent >= 2.

    In D = 3d momentum dimensions, grad |p|^m = m |p|^{m-2} p and
    Laplacian |p|^m = m (m + D - 2) |p|^{m-2}.
    """
    m = float(exponent)
    if m < 2.0:
        raise ValueError("Lyapunov exponent must be >= 2 for a C^2 observable")

    def radius(p: np.ndarray) -> np.ndarray:
        return np.sqrt(_squared_norm(p))

    def grad_p(q: np.ndarray, p: np.ndarray) -> np.ndarray:
        scale = m * radius(p) ** (m - 2.0)
        return scale[..., None, None] * p

    def laplacian_p(q: np.ndarray, p: np.ndarray) -> np.ndarray:
        dims = p.shape[-2] * p.shape[-1]
        return m * (m + dims - 2.0) * radius(p) ** (m - 2.0)

    return SmoothObservable(
        name=f"1+|p|^{m:g}",
        value=lambda q, p: 1.0 + radius(p) ** m,
        grad_q=lambda q, p: np.zeros_like(q),
        grad_p=grad_p,
        laplacian_p=laplacian_p,
    )
