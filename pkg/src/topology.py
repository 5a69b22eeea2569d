"""
Topology module for the wireless DSGD simulator.
Generates Rayleigh fading channel matrices and thresholded random connected topologies.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Tuple, Union

import networkx as nx
import numpy as np

from src.config import MAX_TOPOLOGY_ATTEMPTS
from src.errors import InvalidArgumentError, TopologyGenerationError
from src.logger import logger

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Return a generator for `seed`; an existing generator is used as-is."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class ChannelGains:
    """Symmetric fading amplitudes between every pair of nodes."""

    n: int
    gains: np.ndarray
    sigma: float

    def __post_init__(self):
        self.gains.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Topology:
    """Communication graph obtained by thresholding the channel gains."""

    n: int
    adjacency: np.ndarray
    degrees: np.ndarray
    d_max: int
    threshold: float
    _neighbors: List[Tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.adjacency.setflags(write=False)
        self.degrees.setflags(write=False)
        object.__setattr__(
            self, "_neighbors",
            [tuple(int(j) for j in np.flatnonzero(row)) for row in self.adjacency],
        )

    @classmethod
    def from_adjacency(cls, adjacency, threshold: float = 0.0) -> "Topology":
        """Build a topology from any symmetric 0/1 matrix."""
        adj = np.array(adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidArgumentError("adjacency must be a square matrix")
        if not np.array_equal(adj, adj.T):
            raise InvalidArgumentError("adjacency must be symmetric")
        np.fill_diagonal(adj, False)
        degrees = adj.sum(axis=1).astype(np.int64)
        d_max = int(degrees.max()) if degrees.size else 0
        return cls(n=adj.shape[0], adjacency=adj, degrees=degrees, d_max=d_max, threshold=threshold)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Topology":
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            adj[i, j] = adj[j, i] = True
        return cls.from_adjacency(adj)

    def neighbors(self, i: int) -> Tuple[int, ...]:
        return self._neighbors[i]

    def edges(self) -> List[Tuple[int, int]]:
        """Undirected edges as (i, j) with i < j, lexicographically ordered."""
        rows, cols = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum()) // 2

    @property
    def edge_density(self) -> float:
        if self.n < 2:
            return 0.0
        return self.edge_count / (self.n * (self.n - 1) / 2)

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges())
        return g


def sample_channel_gains(n: int, sigma: float, seed: SeedLike) -> ChannelGains:
    """
    Draw an n x n reciprocal Rayleigh fading matrix.

    The upper triangle is i.i.d. Rayleigh(sigma), mirrored below the
    diagonal; the diagonal is zero.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if sigma <= 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma}")

    rng = make_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    gains = np.zeros((n, n))
    gains[rows, cols] = rng.rayleigh(scale=sigma, size=rows.size)
    gains[cols, rows] = gains[rows, cols]
    return ChannelGains(n=n, gains=gains, sigma=float(sigma))


def threshold_topology(gains: ChannelGains, tau: float) -> Topology:
    """Keep the links whose gain reaches `tau`; connectivity is not checked here."""
    if tau <= 0:
        raise InvalidArgumentError(f"tau must be > 0, got {tau}")
    adjacency = gains.gains >= tau
    np.fill_diagonal(adjacency, False)
    degrees = adjacency.sum(axis=1).astype(np.int64)
    d_max = int(degrees.max()) if degrees.size else 0
    return Topology(n=gains.n, adjacency=adjacency, degrees=degrees, d_max=d_max, threshold=float(tau))


def is_connected(topology: Topology) -> bool:
    """True iff the graph has a single connected component."""
    if topology.n <= 1:
        return True
    return nx.is_connected(topology.graph)


def sample_connected_topology(
    n: int,
    sigma: float,
    tau: float,
    seed: SeedLike,
    max_attempts: int = MAX_TOPOLOGY_ATTEMPTS,
) -> Tuple[ChannelGains, Topology]:
    """Rejection-sample channel realizations until the thresholded graph is connected."""
    if max_attempts < 1:
        raise InvalidArgumentError(f"max_attempts must be >= 1, got {max_attempts}")

    rng = make_rng(seed)
    for attempt in range(1, max_attempts + 1):
        gains = sample_channel_gains(n, sigma, rng)
        topology = threshold_topology(gains, tau)
        if is_connected(topology):
            if attempt > 1:
                logger.debug(f"Connected topology found after {attempt} attempts (n={n}, tau={tau:.3g})")
            return gains, topology

    raise TopologyGenerationError(n, sigma, tau, max_attempts)


def edge_probability(tau_factor: float) -> float:
    """Analytical Rayleigh tail P(h >= tau) for tau = tau_factor * sigma."""
    return float(np.exp(-tau_factor ** 2 / 2.0))
