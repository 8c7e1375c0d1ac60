"""Ensemble engine behind `neld run`.

Runs ensemble A (and optionally ensemble B from a second initial
distribution), reduces chains and phase profiles in a fixed chunk order,
computes the summary estimators and writes the result tables.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (
    PhaseProfile,
    convergence_rate,
    drift_estimate,
    lln_average,
    moment_check,
)
from .config import save_config
from .dynamics import ChainSample, initial_state, run
from .exceptions import AnalysisError
from .observables import Observable, get_observable
from .results import (
    CHAIN_FILE,
    FITTED,
    MEASURED,
    PROFILES_FILE,
    SERIES_FILE,
    SUMMARY_FILE,
    Cell,
    Column,
    write_table,
)
from .rng import BLOCK_SIZE
from .schemas import InitSpec, RunConfig, SimConfig

logger = logging.getLogger(__name__)

CHUNK_SIZE = BLOCK_SIZE
"""Trajectories per work unit; fixed so --threads never changes results."""

_TAG_A = 0
_TAG_B = 1


@dataclass(eq=False)
class EnsembleResult:
    """Merged output of one ensemble.

    Attributes:
        trajectory_ids: Global ids in ensemble order.
        chain: Period samples with (B, d, 3) arrays, initial sample included.
        profiles: Post burn-in phase profiles per recorded observable.
    """

    trajectory_ids: np.ndarray
    chain: list[ChainSample]
    profiles: dict[str, PhaseProfile]

    def series(self, observable: Observable, cfg: SimConfig) -> np.ndarray:
        """Observable at every period boundary, shape (n_periods + 1, B)."""
        return np.stack([np.asarray(observable(0.0, s.Q, s.P, cfg)) for s in self.chain])


@dataclass(eq=False)
class RunOutcome:
    """Everything `neld run` writes."""

    config: RunConfig
    sim: SimConfig
    ensemble_a: EnsembleResult
    ensemble_b: EnsembleResult | None
    summary: list[tuple[Column, Cell]]


class EnsembleRunner:
    """Executes a configured run.

    Args:
        config: Validated run configuration.
    """

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.sim = config.simulation()
        self.observables = [get_observable(name) for name in config.run.observables]
        self.burn_in = int(math.floor(config.run.burn_in_fraction * config.run.n_periods))

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def execute(self) -> RunOutcome:
        """Run both ensembles and compute the summary."""
        run_cfg = self.config.run
        n = run_cfg.n_trajectories
        logger.info(
            "Running %d trajectories for %d periods (%s flow, rate %g)",
            n,
            run_cfg.n_periods,
            self.sim.flow.kind.value,
            self.sim.flow.rate,
        )
        ids_a = np.arange(n, dtype=np.int64)
        ensemble_a = self.run_ensemble(self.config.init_a, ids_a, _TAG_A, record=True)

        ensemble_b = None
        if self.config.init_b is not None:
            ids_b = ids_a if run_cfg.common_noise else ids_a + n
            ensemble_b = self.run_ensemble(self.config.init_b, ids_b, _TAG_B, record=False)

        summary = self.summarize(ensemble_a, ensemble_b)
        logger.info("Run finished")
        return RunOutcome(self.config, self.sim, ensemble_a, ensemble_b, summary)

    def run_ensemble(
        self,
        init: InitSpec,
        trajectory_ids: np.ndarray,
        tag: int,
        *,
        record: bool,
    ) -> EnsembleResult:
        """Run one ensemble in CHUNK_SIZE work units and merge them in order."""
        chunks = [
            trajectory_ids[start : start + CHUNK_SIZE]
            for start in range(0, trajectory_ids.size, CHUNK_SIZE)
        ]
        threads = self.config.run.threads
        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda ids: self._run_chunk(init, ids, tag, record), chunks))
        else:
            parts = [self._run_chunk(init, ids, tag, record) for ids in chunks]

        chain = [
            ChainSample(
                k=samples[0].k,
                Q=np.concatenate([s.Q for s in samples]),
                P=np.concatenate([s.P for s in samples]),
            )
            for samples in zip(*(part.chain for part in parts))
        ]
        profiles: dict[str, PhaseProfile] = {}
        for part in parts:
            for name, profile in part.profiles.items():
                profiles[name] = profiles[name].merge(profile) if name in profiles else profile
        return EnsembleResult(trajectory_ids, chain, profiles)

    def _run_chunk(
        self, init: InitSpec, ids: np.ndarray, tag: int, record: bool
    ) -> EnsembleResult:
        run_cfg = self.config.run
        state = initial_state(self.sim, ids, init, tag=tag)
        result = run(
            self.sim,
            run_cfg.n_periods,
            state,
            trajectory_ids=ids,
            observables=self.observables if record else (),
            record_stride=run_cfg.record_stride,
        )
        profiles = {}
        if record:
            for obs in self.observables:
                profiles[obs.name] = PhaseProfile.empty(run_cfg.phase_bins, self.sim.period).accumulate(
                    result.trace, obs.name, burn_in=self.burn_in
                )
        logger.debug("Chunk %d..%d done", int(ids[0]), int(ids[-1]))
        return EnsembleResult(ids, result.chain, profiles)

    # ------------------------------------------------------------------
    # Summary
    # ------------------------------------------------------------------

    def summarize(
        self, ensemble_a: EnsembleResult, ensemble_b: EnsembleResult | None
    ) -> list[tuple[Column, Cell]]:
        """Single-row summary: rates, LLN averages, drift constants, moments."""
        period = self.sim.period
        times = np.arange(len(ensemble_a.chain)) * period
        cells: list[tuple[Column, Cell]] = [(Column("period", "time", MEASURED), period)]

        for obs in self.observables:
            series_a = ensemble_a.series(obs, self.sim)
            rate = r_squared = math.nan
            window: Cell = None
            if ensemble_b is not None:
                series_b = ensemble_b.series(obs, self.sim)
                paired = self.config.run.common_noise
                try:
                    fit = convergence_rate(series_a, series_b, times=times, paired=paired)
                    rate, r_squared, window = fit.rate, fit.r_squared, fit.window
                except AnalysisError as exc:
                    logger.warning("No convergence rate for %s: %s", obs.name, exc)
            cells += [
                (Column(f"lambda_hat.{obs.name}", "1/time", FITTED), rate),
                (Column(f"r_squared.{obs.name}", "1", FITTED), r_squared),
                (Column(f"fit_window.{obs.name}", "periods", FITTED), window),
            ]

            lln = lln_average(series_a.mean(axis=1), times)
            cells += [
                (Column(f"lln_final.{obs.name}", obs.unit, MEASURED), lln.final),
                (Column(f"lln_stderr.{obs.name}", obs.unit, MEASURED), lln.stderr),
                (Column(f"lln_split.{obs.name}", obs.unit, MEASURED), lln.split_difference),
                (Column(f"lln_split_stderr.{obs.name}", obs.unit, MEASURED), lln.split_stderr),
            ]

        for n in self.config.run.drift_exponents:
            cells += self._drift_cells(ensemble_a, n)
        return cells

    def _drift_cells(self, ensemble: EnsembleResult, n: int) -> list[tuple[Column, Cell]]:
        a = b = math.nan
        try:
            a, b = drift_estimate(ensemble.chain[self.burn_in :], n)
        except AnalysisError as exc:
            logger.warning("No drift estimate for K%d: %s", n, exc)

        estimate = stderr = last_quarter = sup_phase = math.nan
        bounded: Cell = None
        try:
            profile = ensemble.profiles.get(f"lyapunov{n}")
            check = moment_check(
                ensemble.chain,
                n,
                burn_in_fraction=self.config.run.burn_in_fraction,
                profile=profile,
            )
            estimate, stderr = check.estimate, check.stderr
            last_quarter, sup_phase, bounded = check.last_quarter, check.sup_phase, check.bounded
        except AnalysisError as exc:
            logger.warning("No moment check for K%d: %s", n, exc)

        tag = f"K{n}"
        return [
            (Column(f"drift_a.{tag}", "1", FITTED), a),
            (Column(f"drift_b.{tag}", "1", FITTED), b),
            (Column(f"moment.{tag}", "1", MEASURED), estimate),
            (Column(f"moment_stderr.{tag}", "1", MEASURED), stderr),
            (Column(f"moment_last_quarter.{tag}", "1", MEASURED), last_quarter),
            (Column(f"moment_sup_phase.{tag}", "1", MEASURED), sup_phase),
            (Column(f"moment_bounded.{tag}", "bool", MEASURED), bounded),
        ]


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def write_outputs(outcome: RunOutcome, directory: Path) -> list[Path]:
    """Write config.json, chain.tsv, series.tsv, profiles.tsv and summary.tsv."""
    directory.mkdir(parents=True, exist_ok=True)
    written = [save_config(outcome.config, directory)]
    ensembles = [("A", outcome.ensemble_a)]
    if outcome.ensemble_b is not None:
        ensembles.append(("B", outcome.ensemble_b))

    if outcome.config.run.write_states:
        written.append(write_table(directory / CHAIN_FILE, _CHAIN_COLUMNS, _chain_rows(ensembles)))
    written.append(_write_series(outcome, directory))
    written.append(_write_profiles(outcome, directory))
    columns = [column for column, _ in outcome.summary]
    written.append(write_table(directory / SUMMARY_FILE, columns, [[cell for _, cell in outcome.summary]]))
    for path in written:
        logger.info("Wrote %s", path)
    return written


_CHAIN_COLUMNS = [
    Column("ensemble"),
    Column("trajectory"),
    Column("period"),
    Column("particle"),
    *(Column(f"Q_{axis}", "length", MEASURED) for axis in "xyz"),
    *(Column(f"P_{axis}", "momentum", MEASURED) for axis in "xyz"),
]


def _chain_rows(ensembles: Sequence[tuple[str, EnsembleResult]]) -> list[list[Cell]]:
    rows: list[list[Cell]] = []
    for label, ensemble in ensembles:
        for sample in ensemble.chain:
            for b, trajectory in enumerate(ensemble.trajectory_ids):
                for i in range(sample.Q.shape[-2]):
                    rows.append(
                        [label, int(trajectory), sample.k, i]
                        + [float(x) for x in sample.Q[b, i]]
                        + [float(x) for x in sample.P[b, i]]
                    )
    return rows


def _write_series(outcome: RunOutcome, directory: Path) -> Path:
    sim = outcome.sim
    columns = [
        Column("observable"),
        Column("period"),
        Column("t", "time", MEASURED),
        Column("mean_a", "observable", MEASURED),
        Column("stderr_a", "observable", MEASURED),
        Column("mean_b", "observable", MEASURED),
        Column("stderr_b", "observable", MEASURED),
        Column("diff_stderr", "observable", MEASURED),
    ]
    rows: list[list[Cell]] = []
    for name in outcome.config.run.observables:
        obs = get_observable(name)
        a = outcome.ensemble_a.series(obs, sim)
        b = outcome.ensemble_b.series(obs, sim) if outcome.ensemble_b is not None else None
        for k in range(a.shape[0]):
            row: list[Cell] = [name, outcome.ensemble_a.chain[k].k, k * sim.period]
            row += [float(a[k].mean()), _stderr(a[k])]
            if b is None:
                row += [None, None, None]
            else:
                diff = _stderr(a[k] - b[k]) if outcome.config.run.common_noise else math.hypot(_stderr(a[k]), _stderr(b[k]))
                row += [float(b[k].mean()), _stderr(b[k]), diff]
            rows.append(row)
    return write_table(directory / SERIES_FILE, columns, rows)


def _write_profiles(outcome: RunOutcome, directory: Path) -> Path:
    columns = [
        Column("observable"),
        Column("bin"),
        Column("theta_lo", "time", MEASURED),
        Column("theta_hi", "time", MEASURED),
        Column("count", "samples", MEASURED),
        Column("mean", "observable", MEASURED),
        Column("stderr", "observable", MEASURED),
    ]
    rows: list[list[Cell]] = []
    for name, profile in outcome.ensemble_a.profiles.items():
        try:
            profile.require_populated(name)
        except AnalysisError as exc:
            logger.warning("%s", exc)
        edges = profile.edges
        mean, stderr = profile.mean, profile.stderr
        for i in range(profile.n_bins):
            rows.append(
                [name, i, float(edges[i]), float(edges[i + 1]), int(profile.counts[i]), float(mean[i]), float(stderr[i])]
            )
    return write_table(directory / PROFILES_FILE, columns, rows)


def _stderr(values: np.ndarray) -> float:
    v = np.ravel(values)
    if v.size < 2:
        return math.nan
    return float(np.std(v, ddof=1) / math.sqrt(v.size))
