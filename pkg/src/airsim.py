"""
Over-the-air channel module for the wireless DSGD simulator.
Simulates one consensus round per scheme: power-constrained analog transmissions
over the fading channel with additive Gaussian noise.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import InvalidArgumentError, PowerBoundViolationError
from src.mixing import MixingMatrix
from src.scheduling import Schedule, Scheme
from src.topology import ChannelGains, Topology

# Relative slack when comparing a state norm with the norm bound.
NORM_SLACK = 1e-9


@dataclass(frozen=True)
class ChannelConfig:
    """Transmit power limit P, receiver noise std and the sub-threshold interference switch."""

    power_limit: float = 1.0
    noise_std: float = 1.0
    sub_threshold_interference: bool = False

    def __post_init__(self):
        if self.power_limit <= 0:
            raise InvalidArgumentError(f"power_limit must be > 0, got {self.power_limit}")
        if self.noise_std < 0:
            raise InvalidArgumentError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True, eq=False)
class ScalingPlan:
    """
    Transmit and combining factors that realize the mixing weights.

    tx_gains[j, i] scales node j's model when it transmits to node i;
    combine_weights[i, j] is what receiver i multiplies the slot output
    carrying node j by. For MAC, alignment_gains[r] is the common gain
    receiver r's neighbors align to.
    """

    scheme: Scheme
    norm_bound: float
    tx_gains: np.ndarray
    combine_weights: np.ndarray
    alignment_gains: Optional[np.ndarray] = None

    def composite_weights(self, gains: ChannelGains, mixing: MixingMatrix) -> np.ndarray:
        """Realized mixing: combine[i, j] * h_ij * tx[j, i] off the diagonal, w_ii on it."""
        realized = self.combine_weights * gains.gains * self.tx_gains.T
        np.fill_diagonal(realized, np.diag(mixing.weights))
        return realized


def build_scaling_plan(
    scheme: Scheme,
    gains: ChannelGains,
    topology: Topology,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    norm_bound: float,
) -> ScalingPlan:
    """
    P2P: every link sends sqrt(P)/B * theta and the receiver undoes the
    channel with p_ij = w_ij * B / (h_ij * sqrt(P)).
    MAC: receiver r picks the largest gamma_r such that every neighbor's
    pre-scaled signal gamma_r * w_rj / h_rj * theta_j meets the power limit,
    then divides the superposition by gamma_r.
    """
    scheme = Scheme(scheme)
    if norm_bound <= 0:
        raise InvalidArgumentError(f"norm_bound must be > 0, got {norm_bound}")

    n = topology.n
    adj = topology.adjacency
    h = gains.gains
    w = mixing.weights
    root_p = np.sqrt(cfg.power_limit)
    tx_gains = np.zeros((n, n))
    combine = np.zeros((n, n))
    gamma = None

    if scheme is Scheme.P2P:
        tx_gains[adj.T] = root_p / norm_bound
        combine[adj] = w[adj] * norm_bound / (h[adj] * root_p)
    elif scheme is Scheme.MAC:
        gamma = np.zeros(n)
        for r in range(n):
            nbrs = list(topology.neighbors(r))
            if not nbrs:
                continue
            gamma[r] = root_p * np.min(h[r, nbrs] / (w[r, nbrs] * norm_bound))
            tx_gains[nbrs, r] = gamma[r] * w[r, nbrs] / h[r, nbrs]
            combine[r, nbrs] = 1.0 / gamma[r]
    else:
        raise InvalidArgumentError(f"scheme {scheme.value} transmits nothing")

    return ScalingPlan(
        scheme=scheme,
        norm_bound=float(norm_bound),
        tx_gains=tx_gains,
        combine_weights=combine,
        alignment_gains=gamma,
    )


def check_norm_bound(states: np.ndarray, norm_bound: float) -> None:
    norms = np.linalg.norm(states, axis=1)
    worst = int(np.argmax(norms)) if norms.size else 0
    if norms.size and norms[worst] > norm_bound * (1 + NORM_SLACK):
        raise PowerBoundViolationError(worst, float(norms[worst]), norm_bound)


def transmit_powers(plan: ScalingPlan, states: np.ndarray) -> np.ndarray:
    """|x|^2 for every scheduled link j -> i, as an n x n matrix indexed [j, i]."""
    sq_norms = np.sum(states ** 2, axis=1)
    return plan.tx_gains ** 2 * sq_norms[:, None]


def _noise(rng: np.random.Generator, cfg: ChannelConfig, shape) -> np.ndarray:
    if cfg.noise_std == 0:
        return np.zeros(shape)
    return cfg.noise_std * rng.standard_normal(shape)


def _interference(
    receiver: int,
    exclude: set,
    active: np.ndarray,
    signals: np.ndarray,
    gains: ChannelGains,
) -> np.ndarray:
    """Leakage at `receiver` from active transmitters outside `exclude` through the full gain matrix."""
    others = [k for k in active if k != receiver and k not in exclude]
    if not others:
        return np.zeros(signals.shape[1])
    return gains.gains[receiver, others] @ signals[others]


def p2p_round(
    states: np.ndarray,
    schedule: Schedule,
    gains: ChannelGains,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    plan: ScalingPlan,
    rng: np.random.Generator,
) -> np.ndarray:
    """One P2P consensus block: each scheduled link is a separate noisy channel use."""
    states = np.asarray(states, dtype=float)
    check_norm_bound(states, plan.norm_bound)
    d = states.shape[1]
    acc = np.zeros_like(states)

    for slot in schedule.slots:
        if not slot.links:
            continue
        tx = np.array([j for j, _ in slot.links])
        rx = np.array([i for _, i in slot.links])
        signals = np.zeros_like(states)
        # P2P transmit gain does not depend on the target
        signals[tx] = plan.tx_gains[tx, rx][:, None] * states[tx]
        received = gains.gains[rx, tx][:, None] * signals[tx] + _noise(rng, cfg, (len(tx), d))
        if cfg.sub_threshold_interference:
            active = np.unique(tx)
            for k, (j, i) in enumerate(slot.links):
                received[k] += _interference(i, {j}, active, signals, gains)
        np.add.at(acc, rx, plan.combine_weights[rx, tx][:, None] * received)

    return np.diag(mixing.weights)[:, None] * states + acc


def mac_round(
    states: np.ndarray,
    schedule: Schedule,
    gains: ChannelGains,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    plan: ScalingPlan,
    rng: np.random.Generator,
) -> np.ndarray:
    """One MAC consensus block: each receiver gets its whole neighborhood superposed in one slot."""
    states = np.asarray(states, dtype=float)
    check_norm_bound(states, plan.norm_bound)
    d = states.shape[1]
    out = np.diag(mixing.weights)[:, None] * states

    for slot in schedule.slots:
        if not slot.links:
            continue
        tx = np.array([j for j, _ in slot.links])
        target = np.array([r for _, r in slot.links])
        signals = np.zeros_like(states)
        signals[tx] = plan.tx_gains[tx, target][:, None] * states[tx]
        noise = _noise(rng, cfg, (len(slot.receivers), d))
        for k, r in enumerate(slot.receivers):
            senders = tx[target == r]
            if senders.size == 0:
                continue
            y = gains.gains[r, senders] @ signals[senders] + noise[k]
            if cfg.sub_threshold_interference:
                y = y + _interference(r, set(senders.tolist()), tx, signals, gains)
            out[r] += plan.combine_weights[r, senders[0]] * y

    return out


def ideal_round(states: np.ndarray, mixing: MixingMatrix) -> np.ndarray:
    """Noiseless consensus: mixing @ states."""
    return mixing.weights @ np.asarray(states, dtype=float)


def channel_round(
    scheme: Scheme,
    states: np.ndarray,
    schedule: Schedule,
    gains: ChannelGains,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    plan: Optional[ScalingPlan],
    rng: np.random.Generator,
) -> np.ndarray:
    """Dispatch one consensus round to the scheme's channel model."""
    scheme = Scheme(scheme)
    if scheme is Scheme.IDEAL:
        return ideal_round(states, mixing)
    round_fn = p2p_round if scheme is Scheme.P2P else mac_round
    return round_fn(states, schedule, gains, mixing, cfg, plan, rng)


def probe_linear_map(
    scheme: Scheme,
    schedule: Schedule,
    gains: ChannelGains,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    plan: ScalingPlan,
) -> np.ndarray:
    """Realized n x n map of a noiseless round, read off with basis-vector states."""
    silent = ChannelConfig(power_limit=cfg.power_limit, noise_std=0.0,
                           sub_threshold_interference=cfg.sub_threshold_interference)
    n = mixing.n
    # column j of the output is the response to node j holding e_j scaled into the bound
    basis = np.eye(n) * plan.norm_bound
    response = channel_round(scheme, basis, schedule, gains, mixing, silent, plan, np.random.default_rng(0))
    return response / plan.norm_bound


def effective_noise_variance(
    scheme: Scheme,
    gains: ChannelGains,
    topology: Topology,
    mixing: MixingMatrix,
    cfg: ChannelConfig,
    norm_bound: float,
) -> np.ndarray:
    """
    Per-component post-combining noise variance at each node per round.

    P2P sums (w_ij / h_ij)^2 over neighbors, MAC keeps only the maximum,
    both scaled by noise_std^2 * B^2 / P.
    """
    scheme = Scheme(scheme)
    n = topology.n
    if scheme is Scheme.IDEAL:
        return np.zeros(n)
    scale = cfg.noise_std ** 2 * norm_bound ** 2 / cfg.power_limit
    ratio_sq = np.zeros((n, n))
    adj = topology.adjacency
    ratio_sq[adj] = (mixing.weights[adj] / gains.gains[adj]) ** 2
    if scheme is Scheme.P2P:
        return scale * ratio_sq.sum(axis=1)
    return scale * ratio_sq.max(axis=1, initial=0.0)
