"""
Exception hierarchy for the wireless DSGD simulator.
"""

from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class InvalidArgumentError(SimulationError, ValueError):
    """An argument is outside the range an operation accepts."""


class ConfigError(SimulationError, ValueError):
    """A configuration file or override could not be parsed."""


class TopologyGenerationError(SimulationError):
    """No connected topology was found within the attempt budget."""

    def __init__(self, n: int, sigma: float, tau: float, attempts: int):
        self.n = n
        self.sigma = sigma
        self.tau = tau
        self.attempts = attempts
        super().__init__(
            f"no connected topology after {attempts} attempts "
            f"(n={n}, sigma={sigma}, tau={tau})"
        )


class InvalidTopologyError(SimulationError):
    """The topology cannot support consensus (e.g. it is disconnected)."""


class SizeLimitError(SimulationError):
    """An exact search was asked to handle too many vertices."""


class InvalidColoringError(SimulationError):
    """Two conflicting vertices share a color."""


class PowerBoundViolationError(SimulationError):
    """A node state exceeds the agreed norm bound B."""

    def __init__(self, node: int, norm: float, bound: float):
        self.node = node
        self.norm = norm
        self.bound = bound
        super().__init__(f"node {node}: |theta| = {norm:.4g} exceeds norm bound {bound:.4g}")


class NumericalDivergenceError(SimulationError):
    """Node states became non-finite."""

    def __init__(self, iteration: int, message: Optional[str] = None):
        self.iteration = iteration
        super().__init__(message or f"non-finite node state at iteration {iteration}")


class UnsupportedMetricError(SimulationError):
    """The task cannot provide the requested metric."""


class InvalidPartitionError(SimulationError, ValueError):
    """A data partition is empty or malformed."""


class DatasetError(SimulationError):
    """Base class for dataset ingestion failures."""


class IdxFormatError(DatasetError):
    """The file is not a valid IDX container of the expected kind."""


class InconsistentFilesError(DatasetError):
    """Images and labels files disagree on the sample count."""


class DatasetIOError(DatasetError, OSError):
    """The file is missing, unreadable or truncated."""
