"""Custom exception hierarchy for the NELD simulator."""


class NeldError(Exception):
    """Base exception for all neld errors."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class ConfigError(NeldError):
    """Errors related to run configuration files."""


class ConfigNotFoundError(ConfigError):
    """Configuration file does not exist."""


class ConfigInvalidError(ConfigError):
    """Configuration file parsed but a key failed validation."""

    def __init__(self, key: str, message: str) -> None:
        self.key = key
        self.message = message
        super().__init__(f"Invalid config key {key!r}: {message}")


class UnknownObservableError(ConfigError):
    """Referenced observable is not in the registry."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"Unknown observable: {name!r}")


# ---------------------------------------------------------------------------
# Flow and lattice
# ---------------------------------------------------------------------------

class FlowError(NeldError):
    """Errors related to background flows and lattices."""


class ZeroRateError(FlowError):
    """Strain rate is zero; flows require a nonzero rate."""

    def __init__(self) -> None:
        super().__init__("Strain rate must be nonzero (zero-rate rule)")


class NotAtBoundaryError(FlowError):
    """Lattice remap requested away from a period boundary."""

    def __init__(self, theta: float, period: float) -> None:
        self.theta = theta
        self.period = period
        super().__init__(
            f"Lattice remap requires theta == T; got theta={theta!r}, T={period!r}"
        )


class SingularCellError(NeldError):
    """Cell matrix is singular."""


class WrongFrameError(NeldError):
    """State is expressed in a different coordinate system than required."""

    def __init__(self, expected: str, got: str) -> None:
        self.expected = expected
        self.got = got
        super().__init__(f"Expected coordinates {expected!r}, got {got!r}")


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

class PotentialError(NeldError):
    """Errors related to potential evaluation."""


class CutoffViolationError(PotentialError):
    """Pair cutoff exceeds half the minimum image distance of the cell."""

    def __init__(self, cutoff: float, min_image: float) -> None:
        self.cutoff = cutoff
        self.min_image = min_image
        super().__init__(
            f"Pair cutoff {cutoff:g} exceeds half the minimum image "
            f"distance {min_image:g}"
        )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class SimulationError(NeldError):
    """Errors raised while integrating trajectories."""


class NonFiniteError(SimulationError):
    """State became NaN or infinite (step-size blowup)."""

    def __init__(self, step: int, trajectory: int | None = None) -> None:
        self.step = step
        self.trajectory = trajectory
        where = f"step {step}"
        if trajectory is not None:
            where += f", trajectory {trajectory}"
        super().__init__(f"Non-finite state at {where}")


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------

class AnalysisError(NeldError):
    """Errors raised by the estimators."""


class InsufficientDataError(AnalysisError):
    """Not enough (or not enough distinct) samples for an estimate."""


class NoDecayWindowError(AnalysisError):
    """Ensemble difference never rises above its Monte-Carlo noise floor."""


# ---------------------------------------------------------------------------
# Results directories
# ---------------------------------------------------------------------------

class ResultsError(NeldError):
    """Errors related to reading run output directories."""


class ResultsNotFoundError(ResultsError):
    """An expected results file does not exist."""


class ResultsCorruptedError(ResultsError):
    """A results file exists but cannot be parsed."""
