"""Estimators over recorded chains and traces.

Covers the Lyapunov drift condition, the generator drift inequality,
limit-cycle profiles, exponential convergence rates between two ensembles,
running (law of large numbers) averages and moment bounds, plus the
equilibrium and discretization checks used by `neld verify`.

All estimators are pure reductions over immutable arrays; inputs are never
modified.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
from scipy import integrate, stats

from .exceptions import InsufficientDataError, NoDecayWindowError
from .flow_lattice import FlowSpec
from .observables import SmoothObservable
from .potential import gradient, value
from .remap import wrap_unit
from .schemas import PotentialSpec, SimConfig

if TYPE_CHECKING:
    from .dynamics import ChainSample, TraceRecord

logger = logging.getLogger(__name__)

DRIFT_MIN_PAIRS = 1000
MOMENT_MIN_SAMPLES = 1000
DRIFT_BINS = 20
NOISE_FACTOR = 3.0
STABILITY_TOLERANCE = 0.1


class DriftEstimate(NamedTuple):
    """Constants of an inequality E[K'] <= a K + b (or U f <= -a f + b)."""

    a: float
    b: float


class RateFit(NamedTuple):
    """Exponential decay fit of an ensemble difference."""

    rate: float
    r_squared: float
    window: int


@dataclass(frozen=True)
class LLNAverage:
    """Running time average of one observable series.

    Attributes:
        running: (1/t) int_0^t f ds at every recorded time.
        final: Last running average.
        stderr: Batch-means standard error of the final average.
        split_difference: Second-half average minus first-half average.
        split_stderr: Combined standard error of that difference.
    """

    running: np.ndarray
    final: float
    stderr: float
    split_difference: float
    split_stderr: float


@dataclass(frozen=True)
class MomentCheck:
    """Empirical moment E[K_n] over the post burn-in chain."""

    estimate: float
    stderr: float
    last_quarter: float
    sup_phase: float
    bounded: bool


# ---------------------------------------------------------------------------
# Lyapunov functions
# ---------------------------------------------------------------------------

def lyapunov(n: int, momenta: np.ndarray, *, exponent: float | None = None) -> np.ndarray | float:
    """K_n = 1 + (sum of squared momentum components)^n.

    With `exponent` = m the alternative convention 1 + |p|^m is used.
    A single vector (3,) or configuration (d, 3) gives a float; a batch
    (..., d, 3) gives an array over the leading axes.
    """
    if n < 1:
        raise ValueError(f"Lyapunov index must be >= 1, got {n}")
    p = np.asarray(momenta, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    squared = np.sum(np.square(p), axis=(-2, -1))
    K = 1.0 + (squared ** (0.5 * exponent) if exponent is not None else squared**n)
    return float(K) if K.ndim == 0 else K


def _chain_momenta(chain: Sequence[ChainSample]) -> np.ndarray:
    """Stack chain momenta into (K, B, d, 3); unbatched chains get B = 1."""
    P = np.stack([np.asarray(sample.P, dtype=float) for sample in chain])
    if P.ndim == 3:
        P = P[:, None]
    return P


def drift_estimate(
    chain: Sequence[ChainSample],
    n: int,
    *,
    exponent: float | None = None,
    n_bins: int = DRIFT_BINS,
    min_pairs: int = DRIFT_MIN_PAIRS,
) -> DriftEstimate:
    """Fit the envelope E[K_n(P_{k+1}) | P_k] <= a K_n(P_k) + b.

    Pairs (K_n(P_k), K_n(P_{k+1})) are pooled over periods and trajectories
    and grouped into quantile bins of the current value. The line is the last
    edge of the upper concave hull of (bin mean, bin mean + one SE), so it
    dominates every bin; b is then the smallest intercept that keeps it so.

    Raises:
        InsufficientDataError: Fewer than `min_pairs` pairs, or no spread in K_n.
    """
    if len(chain) < 2:
        raise InsufficientDataError("drift_estimate needs at least two chain samples")
    K = lyapunov(n, _chain_momenta(chain), exponent=exponent)
    x = K[:-1].ravel()
    y = K[1:].ravel()
    if x.size < min_pairs:
        raise InsufficientDataError(f"drift_estimate needs {min_pairs} pairs, got {x.size}")

    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1)))
    if edges.size < 2 or not np.ptp(x) > 0:
        raise InsufficientDataError("Lyapunov values have no spread")
    labels = np.searchsorted(edges[1:-1], x, side="right")

    centers, upper = [], []
    for label in range(edges.size - 1):
        in_bin = labels == label
        count = int(in_bin.sum())
        if count < 2:
            continue
        ys = y[in_bin]
        centers.append(float(x[in_bin].mean()))
        upper.append(float(ys.mean() + ys.std(ddof=1) / math.sqrt(count)))
    if len(centers) < 2:
        raise InsufficientDataError("Too few populated bins for a drift fit")

    hull = _upper_hull(np.array(centers), np.array(upper))
    (x0, y0), (x1, y1) = hull[-2], hull[-1]
    a = max((y1 - y0) / (x1 - x0), 0.0)
    b = float(np.max(np.array(upper) - a * np.array(centers)))
    logger.debug("drift_estimate n=%d: a=%.6g, b=%.6g over %d pairs", n, a, b, x.size)
    return DriftEstimate(a=float(a), b=b)


def _upper_hull(x: np.ndarray, y: np.ndarray) -> list[tuple[float, float]]:
    """Upper concave hull of points sorted by x (monotone chain)."""
    order = np.argsort(x, kind="stable")
    hull: list[tuple[float, float]] = []
    for xi, yi in zip(x[order], y[order]):
        while len(hull) >= 2:
            (xa, ya), (xb, yb) = hull[-2], hull[-1]
            if (xb - xa) * (yi - ya) - (yb - ya) * (xi - xa) >= 0:
                hull.pop()
            else:
                break
        hull.append((float(xi), float(yi)))
    return hull


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def generator_apply(
    flow: FlowSpec,
    cfg: SimConfig,
    theta: float,
    point: tuple[np.ndarray, np.ndarray],
    f: SmoothObservable,
    *,
    L0: np.ndarray | None = None,
) -> np.ndarray:
    """Remapped Eulerian generator applied to f at (q_hat, p_hat):

        <p + A q, grad_q f> - <grad V(q), grad_p f> - gamma <p, grad_p f>
        + sigma^2 / 2 Laplacian_p f

    The potential gradient is taken on the cell e^{theta A} L0.
    """
    q, p = (np.asarray(x, dtype=float) for x in point)
    cell = flow.stretch(theta) @ (flow.initial_cell if L0 is None else np.asarray(L0, dtype=float))
    grad_v = gradient(cfg.potential, cell, q)
    gq = f.grad_q(q, p)
    gp = f.grad_p(q, p)
    axes = (-2, -1)
    transport = np.sum((p + q @ flow.A.T) * gq, axis=axes)
    force = -np.sum(grad_v * gp, axis=axes)
    friction = -cfg.gamma * np.sum(p * gp, axis=axes)
    diffusion = 0.5 * cfg.sigma**2 * f.laplacian_p(q, p)
    return transport + force + friction + diffusion


def generator_drift_constants(
    generated: np.ndarray,
    values: np.ndarray,
    *,
    top_fraction: float = 0.5,
) -> DriftEstimate:
    """Fit (a_hat, b_hat) with U f <= -a_hat f + b_hat on the supplied points.

    a_hat is the smallest decay ratio -U f / f over the points whose f lies
    in the upper `top_fraction`; b_hat is the smallest offset that makes the
    inequality hold everywhere.
    """
    Uf = np.ravel(np.asarray(generated, dtype=float))
    fv = np.ravel(np.asarray(values, dtype=float))
    if Uf.size == 0 or Uf.shape != fv.shape:
        raise InsufficientDataError("generator_drift_constants needs matching non-empty arrays")
    threshold = np.quantile(fv, 1.0 - top_fraction)
    top = fv >= threshold
    a = max(float(np.min(-Uf[top] / fv[top])), 0.0)
    b = float(np.max(Uf + a * fv))
    return DriftEstimate(a=a, b=b)


# ---------------------------------------------------------------------------
# Limit cycle
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PhaseProfile:
    """Phase-binned sums of an observable over [0, T).

    Bins are mergeable, so ensembles can be reduced chunk by chunk.
    """

    n_bins: int
    period: float
    counts: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray

    @classmethod
    def empty(cls, n_bins: int, period: float) -> PhaseProfile:
        if n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        return cls(
            n_bins=n_bins,
            period=period,
            counts=np.zeros(n_bins, dtype=np.int64),
            sums=np.zeros(n_bins),
            sumsq=np.zeros(n_bins),
        )

    def bin_index(self, theta: float) -> int:
        return min(int(theta / self.period * self.n_bins), self.n_bins - 1)

    def add(self, theta: float, values: np.ndarray) -> None:
        v = np.ravel(np.asarray(values, dtype=float))
        i = self.bin_index(theta)
        self.counts[i] += v.size
        self.sums[i] += float(np.sum(v))
        self.sumsq[i] += float(np.sum(v * v))

    def accumulate(
        self,
        records: Iterable[TraceRecord],
        observable: str,
        *,
        burn_in: int = 0,
        periods: range | None = None,
    ) -> PhaseProfile:
        """Add every record at or after `burn_in` (and inside `periods`, if given)."""
        for record in records:
            if record.period < burn_in or (periods is not None and record.period not in periods):
                continue
            self.add(record.theta, record.values[observable])
        return self

    def require_populated(self, observable: str) -> None:
        """Raise InsufficientDataError if any bin is empty."""
        empty = np.flatnonzero(self.counts == 0)
        if empty.size:
            raise InsufficientDataError(
                f"{empty.size} of {self.n_bins} phase bins for {observable!r} are empty"
            )

    def merge(self, other: PhaseProfile) -> PhaseProfile:
        if other.n_bins != self.n_bins or other.period != self.period:
            raise ValueError("Cannot merge profiles with different binning")
        return PhaseProfile(
            n_bins=self.n_bins,
            period=self.period,
            counts=self.counts + other.counts,
            sums=self.sums + other.sums,
            sumsq=self.sumsq + other.sumsq,
        )

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.period, self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        edges = self.edges
        return 0.5 * (edges[:-1] + edges[1:])

    @property
    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.sums / self.counts

    @property
    def variance(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.maximum(self.sumsq / self.counts - self.mean**2, 0.0)

    @property
    def stderr(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.variance / np.maximum(self.counts - 1, 1))


def limit_cycle(
    records: Iterable[TraceRecord],
    observable: str,
    n_bins: int,
    period: float,
    *,
    burn_in: int = 0,
    periods: range | None = None,
) -> PhaseProfile:
    """Bin recorded observable values by phase into a PhaseProfile.

    Args:
        records: Trace records from dynamics.run.
        observable: Name of the recorded observable.
        n_bins: Number of phase bins over [0, T).
        period: Remap period T.
        burn_in: Records with period index below this are discarded.
        periods: If given, only these period indices are pooled.

    Raises:
        InsufficientDataError: If any bin ends up empty.
    """
    profile = PhaseProfile.empty(n_bins, period).accumulate(
        records, observable, burn_in=burn_in, periods=periods
    )
    profile.require_populated(observable)
    return profile


# ---------------------------------------------------------------------------
# Convergence and averages
# ---------------------------------------------------------------------------

def difference_noise(series_a: np.ndarray, series_b: np.ndarray, *, paired: bool) -> np.ndarray:
    """Monte-Carlo standard error of mean_A - mean_B at every time.

    Paired ensembles (common noise, equal size) use the spread of the
    per-trajectory differences.
    """
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if paired and a.shape == b.shape:
        return np.std(a - b, axis=1, ddof=1) / math.sqrt(a.shape[1])
    return np.sqrt(
        np.var(a, axis=1, ddof=1) / a.shape[1] + np.var(b, axis=1, ddof=1) / b.shape[1]
    )


def convergence_rate(
    series_a: np.ndarray,
    series_b: np.ndarray,
    *,
    times: np.ndarray | None = None,
    paired: bool = True,
    noise_factor: float = NOISE_FACTOR,
) -> RateFit:
    """Fit log |mean_A f - mean_B f| = log C - lambda t.

    Args:
        series_a: Observable values of ensemble A, shape (n_times, B_A).
        series_b: Observable values of ensemble B, shape (n_times, B_B).
        times: Sample times; defaults to 0, 1, 2, ...
        paired: Whether the ensembles share their noise trajectory by trajectory.
        noise_factor: The fit window is the leading run of times where the
            difference exceeds noise_factor times its standard error.

    Raises:
        NoDecayWindowError: If that window has fewer than three points.
    """
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError("series must be (n_times, n_trajectories) with equal n_times")
    t = np.arange(a.shape[0], dtype=float) if times is None else np.asarray(times, dtype=float)

    delta = np.abs(a.mean(axis=1) - b.mean(axis=1))
    if a.shape[1] > 1 and b.shape[1] > 1:
        noise = difference_noise(a, b, paired=paired)
    else:
        noise = np.zeros_like(delta)
    above = (delta > noise_factor * noise) & (delta > 0)
    window = int(np.argmin(above)) if not above.all() else above.size
    if window < 3:
        raise NoDecayWindowError(
            f"Ensemble difference exceeds {noise_factor:g}x its noise floor at only {window} time(s)"
        )
    fit = stats.linregress(t[:window], np.log(delta[:window]))
    logger.debug("convergence_rate: lambda=%.6g r2=%.4f window=%d", -fit.slope, fit.rvalue**2, window)
    return RateFit(rate=float(-fit.slope), r_squared=float(fit.rvalue**2), window=window)


def batch_means_stderr(series: np.ndarray, n_batches: int = 20) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    x = np.ravel(np.asarray(series, dtype=float))
    n_batches = min(n_batches, x.size // 2)
    if n_batches < 2:
        return math.nan
    size = x.size // n_batches
    means = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def lln_average(values: np.ndarray, times: np.ndarray) -> LLNAverage:
    """Running average (1/t) int f ds by the trapezoid rule on recorded points.

    Time is measured from the first recorded point. Series shorter than four
    points carry NaN error estimates.
    """
    f = np.ravel(np.asarray(values, dtype=float))
    t = np.ravel(np.asarray(times, dtype=float))
    if f.shape != t.shape or f.size == 0:
        raise ValueError("values and times must be non-empty and of equal length")
    if f.size == 1:
        return LLNAverage(f.copy(), float(f[0]), math.nan, math.nan, math.nan)

    integral = integrate.cumulative_trapezoid(f, t, initial=0.0)
    elapsed = t - t[0]
    running = np.empty_like(f)
    running[0] = f[0]
    running[1:] = integral[1:] / elapsed[1:]

    half = f.size // 2
    first = _window_average(f[: half + 1], t[: half + 1])
    second = _window_average(f[half:], t[half:])
    split_stderr = math.hypot(batch_means_stderr(f[:half], 10), batch_means_stderr(f[half:], 10))
    return LLNAverage(
        running=running,
        final=float(running[-1]),
        stderr=batch_means_stderr(f),
        split_difference=second - first,
        split_stderr=split_stderr,
    )


def _window_average(f: np.ndarray, t: np.ndarray) -> float:
    if f.size < 2:
        return float(f[0]) if f.size else math.nan
    return float(integrate.trapezoid(f, t) / (t[-1] - t[0]))


def moment_check(
    chain: Sequence[ChainSample],
    n: int,
    *,
    burn_in_fraction: float = 0.2,
    exponent: float | None = None,
    tolerance: float = STABILITY_TOLERANCE,
    profile: PhaseProfile | None = None,
    min_samples: int = MOMENT_MIN_SAMPLES,
) -> MomentCheck:
    """Estimate E[K_n] on the stationary part of the chain.

    bounded is True when the last-quarter estimate is within `tolerance`
    (relative) of the full post burn-in estimate. With a K_n phase profile
    the supremum over phase bins is reported as sup_phase.

    Raises:
        InsufficientDataError: Fewer than four periods, or fewer than
            `min_samples` states (periods times trajectories), after burn-in.
    """
    start = int(math.floor(burn_in_fraction * len(chain)))
    kept = chain[start:]
    if len(kept) < 4:
        raise InsufficientDataError(f"moment_check needs 4 periods after burn-in, got {len(kept)}")
    K = lyapunov(n, _chain_momenta(kept), exponent=exponent)
    if K.size < min_samples:
        raise InsufficientDataError(f"moment_check needs {min_samples} samples after burn-in, got {K.size}")
    per_period = K.mean(axis=1)
    estimate = float(per_period.mean())
    last_quarter = float(per_period[-max(len(per_period) // 4, 1):].mean())
    stderr = batch_means_stderr(per_period)
    if not math.isfinite(stderr):
        stderr = float(K.std(ddof=1) / math.sqrt(K.size)) if K.size > 1 else math.nan
    sup_phase = estimate if profile is None else max(estimate, float(np.nanmax(profile.mean)))
    bounded = math.isfinite(estimate) and abs(last_quarter - estimate) <= tolerance * abs(estimate)
    return MomentCheck(estimate, stderr, last_quarter, sup_phase, bool(bounded))


# ---------------------------------------------------------------------------
# Equilibrium and discretization checks
# ---------------------------------------------------------------------------

def momentum_increments(chain: Sequence[ChainSample], gamma: float, period: float) -> np.ndarray:
    """G_k = e^{gamma T} P_{k+1} - P_k, shape (K, B, d, 3).

    Under the zero potential these are i.i.d. with mean 0 and per-component
    variance (e^{2 gamma T} - 1) / beta.
    """
    P = _chain_momenta(chain)
    return math.exp(gamma * period) * P[1:] - P[:-1]


def configurational_histogram(
    positions: np.ndarray, cell: np.ndarray, axis: int, n_bins: int
) -> np.ndarray:
    """Counts of fractional coordinate `axis` over n_bins equal bins of [0, 1)."""
    s = wrap_unit(np.asarray(positions, dtype=float) @ np.linalg.inv(cell).T)[..., axis]
    counts, _ = np.histogram(np.ravel(s), bins=n_bins, range=(0.0, 1.0))
    return counts


def boltzmann_bin_probabilities(
    spec: PotentialSpec,
    axis: int,
    beta: float,
    n_bins: int,
    *,
    cell: np.ndarray | None = None,
    points_per_bin: int = 16,
    transverse_points: int = 32,
) -> np.ndarray:
    """Single-particle marginal of exp(-beta V) along one fractional axis.

    The other two fractional coordinates are integrated on a midpoint grid.
    """
    cell = np.eye(3) if cell is None else np.asarray(cell, dtype=float)
    along = (np.arange(n_bins * points_per_bin) + 0.5) / (n_bins * points_per_bin)
    across = (np.arange(transverse_points) + 0.5) / transverse_points
    grids = [across, across, across]
    grids[axis] = along
    s = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1)
    energy = value(spec, cell, (s @ cell.T)[..., None, :])
    weight = np.exp(-beta * (energy - energy.min()))
    marginal = np.moveaxis(weight, axis, 0).reshape(along.size, -1).sum(axis=1)
    per_bin = marginal.reshape(n_bins, points_per_bin).sum(axis=1)
    return per_bin / per_bin.sum()


def chi_square_test(counts: np.ndarray, probabilities: np.ndarray) -> tuple[float, float]:
    """Pearson chi-square of observed counts against bin probabilities.

    Returns:
        (statistic, p_value).
    """
    observed = np.asarray(counts, dtype=float)
    expected = np.asarray(probabilities, dtype=float) * observed.sum()
    result = stats.chisquare(observed, f_exp=expected)
    return float(result.statistic), float(result.pvalue)


def strong_order(errors: Sequence[float], dts: Sequence[float]) -> float:
    """Least-squares slope of log error against log dt."""
    fit = stats.linregress(np.log(np.asarray(dts, dtype=float)), np.log(np.asarray(errors, dtype=float)))
    return float(fit.slope)
