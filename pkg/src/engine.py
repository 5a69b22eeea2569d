"""
DSGD engine for the wireless DSGD simulator.
Runs gradient -> over-the-air consensus -> update for every node and records
disagreement, consensus and test-metric traces.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.airsim import ChannelConfig, build_scaling_plan, channel_round
from src.config import NORM_BOUND_FACTOR
from src.errors import InvalidArgumentError, NumericalDivergenceError, UnsupportedMetricError
from src.logger import logger
from src.mixing import MixingMatrix
from src.scheduling import Schedule, Scheme
from src.tasks import QuadraticTask, Task
from src.topology import ChannelGains, SeedLike, Topology


@dataclass
class NodeState:
    """Current models of all nodes (one row each) plus their running sums."""

    theta: np.ndarray
    running_sum: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.running_sum is None:
            self.running_sum = np.zeros_like(self.theta)

    def update(self, theta: np.ndarray) -> None:
        self.theta = theta
        self.running_sum = self.running_sum + theta
        self.step_count += 1

    def running_average(self) -> np.ndarray:
        """(1/t) * sum of the iterates after each update; the current model before any update."""
        if self.step_count == 0:
            return self.theta.copy()
        return self.running_sum / self.step_count


@dataclass
class IterationRecord:
    iteration: int
    max_disagreement: Optional[float]
    consensus_distance: float
    test_metric: Optional[float]
    scheme: str
    slots: int

    @property
    def channel_uses(self) -> int:
        return self.iteration * self.slots


@dataclass
class TrainLog:
    """Per-iteration records of one DSGD run and its metadata."""

    records: List[IterationRecord] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    states: Optional[NodeState] = None
    maximize: bool = True

    def _metrics(self) -> List[float]:
        return [r.test_metric for r in self.records if r.test_metric is not None]

    @property
    def final_metric(self) -> Optional[float]:
        values = self._metrics()
        return values[-1] if values else None

    @property
    def best_metric(self) -> Optional[float]:
        values = self._metrics()
        if not values:
            return None
        return max(values) if self.maximize else min(values)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    learning_rate_decay: float = 0.0
    iterations: int = 250
    noise_std: float = 1.0
    power: float = 100.0
    norm_bound: Optional[float] = None
    interference: bool = False
    eval_interval: int = 10

    def step_size(self, t: int) -> float:
        return self.learning_rate / (1.0 + self.learning_rate_decay * t)


def default_norm_bound(states: np.ndarray) -> float:
    """NORM_BOUND_FACTOR times the largest initial model norm (at least 1)."""
    largest = float(np.max(np.linalg.norm(states, axis=1))) if states.size else 0.0
    return NORM_BOUND_FACTOR * max(largest, 1.0)


def consensus_distance(theta: np.ndarray) -> float:
    """max_i ||theta_i - mean(theta)||."""
    theta = np.atleast_2d(theta)
    return float(np.max(np.linalg.norm(theta - theta.mean(axis=0), axis=1)))


def max_disagreement(states, task: Task) -> float:
    """Worst node gap |f(avg_i) - f(theta*)| over the running averages."""
    averages = states.running_average() if isinstance(states, NodeState) else np.atleast_2d(states)
    reference = task.reference_value
    return float(max(abs(task.global_loss(avg) - reference) for avg in averages))


def fixed_point(task: QuadraticTask, mixing: MixingMatrix, lr: float) -> np.ndarray:
    """
    Stationary states of noiseless constant-step DSGD on the quadratic task.

    Solves theta = W theta - lr * (theta - C), i.e.
    theta = lr * ((1 + lr) I - W)^-1 C.
    """
    if not isinstance(task, QuadraticTask):
        raise InvalidArgumentError("closed-form fixed point only exists for the quadratic task")
    if lr <= 0:
        raise InvalidArgumentError(f"lr must be > 0, got {lr}")
    system = (1.0 + lr) * np.eye(mixing.n) - mixing.weights
    return lr * np.linalg.solve(system, task.centers)


def split_seed(seed: SeedLike) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent generators for the gradient and channel-noise streams."""
    if isinstance(seed, np.random.Generator):
        return seed, np.random.default_rng(seed.integers(2 ** 63))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = [
        np.random.SeedSequence(entropy=ss.entropy, spawn_key=tuple(ss.spawn_key) + (k,))
        for k in range(2)
    ]
    return np.random.default_rng(children[0]), np.random.default_rng(children[1])


def run_dsgd(
    task: Task,
    gains: ChannelGains,
    topology: Topology,
    mixing: MixingMatrix,
    schedule: Schedule,
    scheme: Scheme,
    cfg: TrainConfig,
    seed: SeedLike,
    initial_states: Optional[np.ndarray] = None,
) -> TrainLog:
    """Run DSGD for cfg.iterations and return the trace."""
    scheme = Scheme(scheme)
    if task.n_nodes != topology.n or mixing.n != topology.n:
        raise InvalidArgumentError(
            f"size mismatch: task={task.n_nodes}, topology={topology.n}, mixing={mixing.n}"
        )
    if schedule.scheme is not scheme:
        raise InvalidArgumentError(f"schedule built for {schedule.scheme.value}, run asked for {scheme.value}")
    if cfg.iterations < 0 or cfg.eval_interval < 1:
        raise InvalidArgumentError("iterations must be >= 0 and eval_interval >= 1")

    grad_rng, channel_rng = split_seed(seed)
    theta0 = task.initial_states(grad_rng) if initial_states is None else np.array(initial_states, dtype=float)
    state = NodeState(theta=theta0)
    norm_bound = cfg.norm_bound if cfg.norm_bound is not None else default_norm_bound(theta0)
    channel = ChannelConfig(power_limit=cfg.power, noise_std=cfg.noise_std,
                            sub_threshold_interference=cfg.interference)
    plan = None
    if scheme is not Scheme.IDEAL:
        plan = build_scaling_plan(scheme, gains, topology, mixing, channel, norm_bound)

    log = TrainLog(maximize=task.maximize)
    log.metadata.update({
        "scheme": scheme.value,
        "T": schedule.T,
        "n": topology.n,
        "edges": topology.edge_count,
        "edge_density": topology.edge_density,
        "d_max": topology.d_max,
        "norm_bound": norm_bound,
        "metric": task.metric_name,
    })

    track_disagreement = task.has_reference
    if track_disagreement:
        try:
            log.metadata["reference_value"] = task.reference_value
        except UnsupportedMetricError:
            track_disagreement = False
    if not track_disagreement:
        logger.debug(f"max_disagreement not tracked for {type(task).__name__}")

    for t in range(1, cfg.iterations + 1):
        grads = task.stochastic_gradients(state.theta, grad_rng)
        mixed = channel_round(scheme, state.theta, schedule, gains, mixing, channel, plan, channel_rng)
        theta = mixed - cfg.step_size(t - 1) * grads
        if not np.all(np.isfinite(theta)):
            raise NumericalDivergenceError(t)
        state.update(theta)

        evaluate = t % cfg.eval_interval == 0 or t == cfg.iterations
        log.records.append(IterationRecord(
            iteration=t,
            max_disagreement=max_disagreement(state, task) if track_disagreement else None,
            consensus_distance=consensus_distance(theta),
            test_metric=float(np.mean([task.evaluate(row) for row in theta])) if evaluate else None,
            scheme=scheme.value,
            slots=schedule.T,
        ))

    log.states = state
    if log.records:
        last = log.records[-1]
        logger.debug(
            f"{scheme.value} run done: T={schedule.T}, {task.metric_name}={last.test_metric:.4f}, "
            f"consensus={last.consensus_distance:.3g}"
        )
    return log
