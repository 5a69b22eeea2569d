"""
Scheduling module for the wireless DSGD simulator.
Builds P2P and MAC conflict graphs, colors them, turns colorings into
transmission schedules and checks schedules against the slot constraints.
"""

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.config import BRUTE_FORCE_MAX_VERTICES
from src.errors import InvalidArgumentError, InvalidColoringError, SizeLimitError
from src.logger import logger
from src.topology import Topology

Link = Tuple[int, int]


class Scheme(str, Enum):
    """Consensus communication schemes."""

    MAC = "MAC"
    P2P = "P2P"
    IDEAL = "IDEAL"  # noiseless, instantaneous exchange (T = 0)


class ColoringPolicy(str, Enum):
    SATURATION = "saturation"
    LARGEST_DEGREE = "largest_degree"


@dataclass(frozen=True, eq=False)
class ConflictGraph:
    """Schedulable units and the pairs of them that cannot share a slot."""

    scheme: Scheme
    vertices: Tuple
    conflicts: np.ndarray

    def __post_init__(self):
        self.conflicts.setflags(write=False)

    @classmethod
    def from_matrix(cls, conflicts, scheme: Scheme = Scheme.MAC, vertices: Optional[Sequence] = None) -> "ConflictGraph":
        mat = np.array(conflicts, dtype=bool)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidArgumentError("conflict matrix must be square")
        mat = mat | mat.T
        np.fill_diagonal(mat, False)
        verts = tuple(vertices) if vertices is not None else tuple(range(mat.shape[0]))
        return cls(scheme=scheme, vertices=verts, conflicts=mat)

    @property
    def size(self) -> int:
        return len(self.vertices)

    @cached_property
    def adjacency_lists(self) -> List[List[int]]:
        return [np.flatnonzero(row).tolist() for row in self.conflicts]

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.size))
        rows, cols = np.nonzero(np.triu(self.conflicts, 1))
        g.add_edges_from(zip(rows.tolist(), cols.tolist()))
        return g


@dataclass(frozen=True)
class Coloring:
    """Color per conflict-graph vertex, numbered densely from 0."""

    vertices: Tuple
    colors: Tuple[int, ...]
    policy: str

    @property
    def num_colors(self) -> int:
        return max(self.colors) + 1 if self.colors else 0

    def classes(self) -> List[List[int]]:
        """Vertex indices grouped by color, in color order."""
        groups: List[List[int]] = [[] for _ in range(self.num_colors)]
        for v, c in enumerate(self.colors):
            groups[c].append(v)
        return groups

    def is_proper(self, graph: ConflictGraph) -> bool:
        colors = np.asarray(self.colors)
        rows, cols = np.nonzero(np.triu(graph.conflicts, 1))
        return not np.any(colors[rows] == colors[cols])


@dataclass(frozen=True)
class Slot:
    """One channel use: the active receivers and every (tx, rx) link carried."""

    receivers: Tuple[int, ...]
    links: Tuple[Link, ...]

    @property
    def transmitters(self) -> Tuple[int, ...]:
        return tuple(sorted({tx for tx, _ in self.links}))

    def targets(self) -> Dict[int, int]:
        """Transmitter -> intended receiver (MAC slots have exactly one per transmitter)."""
        return {tx: rx for tx, rx in self.links}


@dataclass(frozen=True)
class Schedule:
    scheme: Scheme
    slots: Tuple[Slot, ...]

    @property
    def T(self) -> int:
        return len(self.slots)

    def to_dict(self) -> Dict:
        out = {"scheme": self.scheme.value, "T": self.T, "slots": []}
        for k, slot in enumerate(self.slots):
            entry = {"slot": k, "receivers": list(slot.receivers)}
            if self.scheme is Scheme.P2P:
                entry["links"] = [list(link) for link in slot.links]
            else:
                entry["transmitters"] = {str(tx): rx for tx, rx in slot.links}
            out["slots"].append(entry)
        return out


# ==================== Conflict graphs ====================
def build_p2p_conflict_graph(topology: Topology) -> ConflictGraph:
    """
    Vertices are directed links (i, j) of the topology.

    (i, j) and (l, m) conflict when they share a receiver, share a
    transmitter, or when either transmitter sits in the other's receiver
    neighborhood.
    """
    links = np.argwhere(topology.adjacency)
    vertices = tuple((int(i), int(j)) for i, j in links)
    if not vertices:
        return ConflictGraph(scheme=Scheme.P2P, vertices=(), conflicts=np.zeros((0, 0), dtype=bool))

    tx, rx = links[:, 0], links[:, 1]
    same_rx = rx[:, None] == rx[None, :]
    same_tx = tx[:, None] == tx[None, :]
    # foreign[u, v]: transmitter of v is a neighbor of the receiver of u
    foreign = topology.adjacency[rx[:, None], tx[None, :]] & ~same_tx
    conflicts = same_rx | same_tx | foreign | foreign.T
    np.fill_diagonal(conflicts, False)
    return ConflictGraph(scheme=Scheme.P2P, vertices=vertices, conflicts=conflicts)


def build_mac_conflict_graph(topology: Topology) -> ConflictGraph:
    """Nodes conflict iff they share at least one common neighbor."""
    a = topology.adjacency.astype(np.int64)
    conflicts = (a @ a) > 0
    np.fill_diagonal(conflicts, False)
    return ConflictGraph(scheme=Scheme.MAC, vertices=tuple(range(topology.n)), conflicts=conflicts)


def build_conflict_graph(topology: Topology, scheme: Scheme) -> ConflictGraph:
    scheme = Scheme(scheme)
    if scheme is Scheme.P2P:
        return build_p2p_conflict_graph(topology)
    if scheme is Scheme.MAC:
        return build_mac_conflict_graph(topology)
    raise InvalidArgumentError(f"scheme {scheme.value} has no conflict graph")


# ==================== Coloring ====================
def _smallest_free(used) -> int:
    c = 0
    while c in used:
        c += 1
    return c


def greedy_color(graph: ConflictGraph, policy: str = ColoringPolicy.SATURATION) -> Coloring:
    """
    Proper coloring by a greedy heuristic.

    `saturation` picks the uncolored vertex with the most distinct neighbor
    colors (then highest degree); `largest_degree` colors in decreasing
    degree order. Ties go to the lowest vertex index.
    """
    policy = ColoringPolicy(policy)
    size = graph.size
    adj = graph.adjacency_lists
    degree = [len(nbrs) for nbrs in adj]
    colors = [-1] * size

    if policy is ColoringPolicy.LARGEST_DEGREE:
        for v in sorted(range(size), key=lambda x: (-degree[x], x)):
            colors[v] = _smallest_free({colors[u] for u in adj[v] if colors[u] >= 0})
    else:
        saturation: List[set] = [set() for _ in range(size)]
        uncolored = list(range(size))
        while uncolored:
            v = max(uncolored, key=lambda x: (len(saturation[x]), degree[x], -x))
            uncolored.remove(v)
            c = _smallest_free(saturation[v])
            colors[v] = c
            for u in adj[v]:
                if colors[u] < 0:
                    saturation[u].add(c)

    return Coloring(vertices=graph.vertices, colors=tuple(colors), policy=policy.value)


def _k_colorable(adj: List[List[int]], order: List[int], k: int) -> Optional[List[int]]:
    colors = [-1] * len(order)

    def extend(pos: int, used: int) -> bool:
        if pos == len(order):
            return True
        v = order[pos]
        forbidden = {colors[u] for u in adj[v] if colors[u] >= 0}
        # a fresh color is interchangeable with any other fresh color
        for c in range(min(used + 1, k)):
            if c in forbidden:
                continue
            colors[v] = c
            if extend(pos + 1, max(used, c + 1)):
                return True
        colors[v] = -1
        return False

    return colors if extend(0, 0) else None


def brute_force_chromatic(
    graph: ConflictGraph,
    max_vertices: int = BRUTE_FORCE_MAX_VERTICES,
) -> Tuple[int, Coloring]:
    """Exact chromatic number by backtracking; returns (chi, witness coloring)."""
    if graph.size > max_vertices:
        raise SizeLimitError(f"{graph.size} vertices exceeds the exact-search limit of {max_vertices}")
    if graph.size == 0:
        return 0, Coloring(vertices=(), colors=(), policy="exact")

    greedy = greedy_color(graph, ColoringPolicy.SATURATION)
    adj = graph.adjacency_lists
    # DSATUR order keeps constrained vertices early
    order = sorted(range(graph.size), key=lambda v: (greedy.colors[v], v))
    clique = max(len(c) for c in nx.find_cliques(graph.graph))

    for k in range(clique, greedy.num_colors):
        found = _k_colorable(adj, order, k)
        if found is not None:
            chi, colors = k, tuple(found)
            break
    else:
        chi, colors = greedy.num_colors, greedy.colors

    logger.debug(f"Exact coloring: chi={chi}, greedy={greedy.num_colors} (ratio {greedy.num_colors / chi:.2f})")
    return chi, Coloring(vertices=graph.vertices, colors=_first_use_order(colors), policy="exact")


def _first_use_order(colors: Sequence[int]) -> Tuple[int, ...]:
    relabel: Dict[int, int] = {}
    for c in colors:
        relabel.setdefault(c, len(relabel))
    return tuple(relabel[c] for c in colors)


# ==================== Schedules ====================
def coloring_to_schedule(coloring: Coloring, scheme: Scheme, topology: Topology) -> Schedule:
    """One slot per color class: directed links for P2P, receiver sets for MAC."""
    scheme = Scheme(scheme)
    graph = build_conflict_graph(topology, scheme)
    if tuple(coloring.vertices) != graph.vertices:
        raise InvalidColoringError("coloring does not cover the conflict graph of this topology")
    if not coloring.is_proper(graph):
        raise InvalidColoringError("conflicting vertices share a color")

    slots: List[Slot] = []
    for members in coloring.classes():
        if scheme is Scheme.P2P:
            links = tuple(sorted(graph.vertices[v] for v in members))
            receivers = tuple(sorted({rx for _, rx in links}))
        else:
            receivers = tuple(sorted(graph.vertices[v] for v in members))
            targets: Dict[int, int] = {}
            for r in receivers:
                for j in topology.neighbors(r):
                    if j in targets:
                        raise InvalidColoringError(f"node {j} neighbors receivers {targets[j]} and {r}")
                    targets[j] = r
            links = tuple(sorted(targets.items()))
        slots.append(Slot(receivers=receivers, links=links))
    return Schedule(scheme=scheme, slots=tuple(slots))


def build_schedule(
    topology: Topology,
    scheme: Scheme,
    policy: str = ColoringPolicy.SATURATION,
) -> Schedule:
    """Conflict graph -> greedy coloring -> schedule (IDEAL gets an empty schedule)."""
    scheme = Scheme(scheme)
    if scheme is Scheme.IDEAL:
        return Schedule(scheme=scheme, slots=())
    graph = build_conflict_graph(topology, scheme)
    return coloring_to_schedule(greedy_color(graph, policy), scheme, topology)


def validate_schedule(schedule: Schedule, topology: Topology, scheme: Scheme) -> List[str]:
    """
    List every way `schedule` breaks the slot rules or the coverage rules.

    P2P: an active receiver may have only one active transmitter in its
    neighborhood and an active transmitter only one active receiver in its
    neighborhood; every directed link is carried exactly once.
    MAC: every neighbor of a receiver transmits to it, two receivers never
    share a neighbor, each transmitter has one target; every node receives
    exactly once.
    """
    scheme = Scheme(scheme)
    violations: List[str] = []
    if schedule.scheme is not scheme:
        violations.append(f"schedule is for {schedule.scheme.value}, expected {scheme.value}")
    if scheme is Scheme.IDEAL:
        return violations

    adj = topology.adjacency

    def nbrs(v: int) -> set:
        return {u for u in range(topology.n) if adj[v, u]}

    if scheme is Scheme.P2P:
        carried: Counter = Counter()
        for k, slot in enumerate(schedule.slots):
            active_tx = {tx for tx, _ in slot.links}
            active_rx = [rx for _, rx in slot.links]
            for tx, rx in slot.links:
                carried[(tx, rx)] += 1
                if not adj[tx, rx]:
                    violations.append(f"slot {k}: ({tx},{rx}) is not a link of the topology")
            for rx in sorted(set(active_rx)):
                heard = sorted(nbrs(rx) & active_tx)
                if len(heard) != 1 or active_rx.count(rx) != 1:
                    violations.append(f"slot {k}: receiver {rx} has active transmitters {heard} in its neighborhood")
            for tx in sorted(active_tx):
                reached = sorted(nbrs(tx) & set(active_rx))
                if len(reached) != 1:
                    violations.append(f"slot {k}: transmitter {tx} has active receivers {reached} in its neighborhood")
        for i in range(topology.n):
            for j in sorted(nbrs(i)):
                if carried[(i, j)] != 1:
                    violations.append(f"link ({i},{j}) carried {carried[(i, j)]} times")
        for link in sorted(set(carried) - {(i, j) for i in range(topology.n) for j in nbrs(i)}):
            violations.append(f"link {link} scheduled but absent from the topology")
        return violations

    received: Counter = Counter()
    for k, slot in enumerate(schedule.slots):
        rx_set = list(slot.receivers)
        received.update(rx_set)
        tx_count = Counter(tx for tx, _ in slot.links)
        for tx, count in sorted(tx_count.items()):
            if count > 1:
                violations.append(f"slot {k}: transmitter {tx} has {count} targets")
        target = dict(slot.links)
        for tx, rx in slot.links:
            if rx not in rx_set:
                violations.append(f"slot {k}: transmitter {tx} targets inactive node {rx}")
            elif not adj[tx, rx]:
                violations.append(f"slot {k}: transmitter {tx} is not a neighbor of {rx}")
        for r in rx_set:
            for j in sorted(nbrs(r)):
                if target.get(j) != r:
                    violations.append(f"slot {k}: neighbor {j} of receiver {r} is not transmitting to it")
        for a_idx, a in enumerate(rx_set):
            for b in rx_set[a_idx + 1:]:
                common = sorted(nbrs(a) & nbrs(b))
                if common:
                    violations.append(f"slot {k}: receivers {a} and {b} share neighbors {common}")
    for v in range(topology.n):
        if received[v] != 1:
            violations.append(f"node {v} receives in {received[v]} slots")
    return violations
