"""
Mixing module for the wireless DSGD simulator.
Builds and checks the symmetric doubly-stochastic consensus matrix from the graph Laplacian.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.linalg import eigvalsh

from src.config import STOCHASTIC_TOL
from src.errors import InvalidArgumentError, InvalidTopologyError
from src.topology import Topology, is_connected


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Consensus weights; row i holds the coefficients node i applies to its neighbors."""

    n: int
    weights: np.ndarray

    def __post_init__(self):
        self.weights.setflags(write=False)

    @property
    def self_weights(self) -> np.ndarray:
        return np.diag(self.weights).copy()

    def support(self) -> np.ndarray:
        """Off-diagonal nonzero pattern."""
        mask = self.weights > 0
        np.fill_diagonal(mask, False)
        return mask


@dataclass
class MixingReport:
    """Outcome of a doubly-stochastic check."""

    row_deviation: float
    column_deviation: float
    min_entry: float
    asymmetry: float
    tol: float
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def laplacian_mixing(topology: Topology) -> MixingMatrix:
    """
    Return W = I - (D - A) / (d_max + 1).

    Diagonal entry i is 1 - degree_i / (d_max + 1); every neighbor gets
    1 / (d_max + 1).
    """
    if not is_connected(topology):
        raise InvalidTopologyError("consensus needs a connected topology")

    adjacency = topology.adjacency.astype(float)
    laplacian = np.diag(topology.degrees.astype(float)) - adjacency
    weights = np.eye(topology.n) - laplacian / (topology.d_max + 1)
    return MixingMatrix(n=topology.n, weights=weights)


def verify_doubly_stochastic(m: MixingMatrix, tol: float = STOCHASTIC_TOL) -> MixingReport:
    """Measure how far `m` is from being symmetric, nonnegative and doubly stochastic."""
    if tol <= 0:
        raise InvalidArgumentError(f"tol must be > 0, got {tol}")

    w = np.asarray(m.weights, dtype=float)
    row_dev = float(np.max(np.abs(w.sum(axis=1) - 1.0))) if w.size else 0.0
    col_dev = float(np.max(np.abs(w.sum(axis=0) - 1.0))) if w.size else 0.0
    min_entry = float(w.min()) if w.size else 0.0
    asymmetry = float(np.linalg.norm(w - w.T))

    report = MixingReport(
        row_deviation=row_dev,
        column_deviation=col_dev,
        min_entry=min_entry,
        asymmetry=asymmetry,
        tol=tol,
    )
    if row_dev > tol:
        report.failures.append(f"row sums deviate from 1 by {row_dev:.3g}")
    if col_dev > tol:
        report.failures.append(f"column sums deviate from 1 by {col_dev:.3g}")
    if min_entry < 0:
        report.failures.append(f"negative entry {min_entry:.3g}")
    if asymmetry > tol:
        report.failures.append(f"asymmetry norm {asymmetry:.3g}")
    return report


def spectral_gap(m: MixingMatrix) -> float:
    """1 - |lambda_2|, with lambda_2 the second-largest eigenvalue in magnitude."""
    if m.n < 2:
        return 1.0
    eigenvalues = np.sort(np.abs(eigvalsh(m.weights)))[::-1]
    return float(1.0 - eigenvalues[1])
