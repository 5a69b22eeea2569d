"""
Unit tests for the over-the-air channel module.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.airsim import (
    ChannelConfig,
    build_scaling_plan,
    channel_round,
    effective_noise_variance,
    ideal_round,
    p2p_round,
    probe_linear_map,
    transmit_powers,
)
from src.errors import InvalidArgumentError, PowerBoundViolationError
from src.mixing import laplacian_mixing
from src.scheduling import Schedule, Scheme, Slot, build_schedule
from src.topology import ChannelGains, Topology, sample_connected_topology


def _instance(n=10, sigma=2.0, tau_factor=1.2, seed=0):
    gains, topo = sample_connected_topology(n, sigma, tau_factor * sigma, seed)
    return gains, topo, laplacian_mixing(topo)


def _states_on_bound(n, d, bound, seed=1):
    x = np.random.default_rng(seed).standard_normal((n, d))
    return bound * x / np.linalg.norm(x, axis=1, keepdims=True)


def test_composite_weights_reproduce_mixing():
    gains, topo, mixing = _instance()
    cfg = ChannelConfig(power_limit=4.0, noise_std=1.0)
    for scheme in (Scheme.P2P, Scheme.MAC):
        plan = build_scaling_plan(scheme, gains, topo, mixing, cfg, norm_bound=3.0)
        realized = plan.composite_weights(gains, mixing)
        assert np.allclose(realized, mixing.weights, atol=1e-12), scheme.value
    print("✅ Scaling plans realize the mixing weights")


def test_transmit_power_within_limit():
    gains, topo, mixing = _instance(seed=4)
    cfg = ChannelConfig(power_limit=2.5)
    bound = 5.0
    states = _states_on_bound(topo.n, 6, bound)

    for scheme in (Scheme.P2P, Scheme.MAC):
        plan = build_scaling_plan(scheme, gains, topo, mixing, cfg, bound)
        powers = transmit_powers(plan, states)
        assert np.all(powers <= cfg.power_limit * (1 + 1e-9)), scheme.value
        assert np.all(powers[~topo.adjacency] == 0)
        if scheme is Scheme.P2P:
            assert np.allclose(powers[topo.adjacency], cfg.power_limit)
        else:
            # the weakest link of every receiver transmits at full power
            for r in range(topo.n):
                assert powers[list(topo.neighbors(r)), r].max() == pytest.approx(cfg.power_limit)


def test_noiseless_rounds_match_ideal():
    gains, topo, mixing = _instance(n=12, tau_factor=0.8, seed=2)
    cfg = ChannelConfig(power_limit=1.0, noise_std=0.0)
    bound = 4.0
    states = _states_on_bound(topo.n, 5, bound) * 0.9
    expected = ideal_round(states, mixing)

    for scheme in (Scheme.P2P, Scheme.MAC):
        schedule = build_schedule(topo, scheme)
        plan = build_scaling_plan(scheme, gains, topo, mixing, cfg, bound)
        out = channel_round(scheme, states, schedule, gains, mixing, cfg, plan, np.random.default_rng(0))
        assert np.allclose(out, expected, atol=1e-9), scheme.value
        assert np.allclose(probe_linear_map(scheme, schedule, gains, mixing, cfg, plan), mixing.weights, atol=1e-9)

    ideal = channel_round(Scheme.IDEAL, states, Schedule(Scheme.IDEAL, ()), gains, mixing, cfg, None, None)
    assert np.allclose(ideal, mixing.weights @ states)
    print("✅ Noiseless P2P and MAC rounds equal W @ states")


def test_mac_noise_never_exceeds_p2p():
    """Over 100 instances MAC <= P2P at every node, strictly when degree >= 2."""
    rng = np.random.default_rng(99)
    cfg = ChannelConfig(power_limit=10.0, noise_std=1.0)
    for _ in range(100):
        n = int(rng.integers(3, 21))
        gains, topo = sample_connected_topology(n, 2.0, float(rng.choice([0.8, 1.2, 1.6])) * 2.0, rng)
        mixing = laplacian_mixing(topo)
        mac = effective_noise_variance(Scheme.MAC, gains, topo, mixing, cfg, 2.0)
        p2p = effective_noise_variance(Scheme.P2P, gains, topo, mixing, cfg, 2.0)
        assert np.all(mac <= p2p * (1 + 1e-12))
        multi = topo.degrees >= 2
        assert np.all(mac[multi] < p2p[multi])
        assert np.allclose(mac[~multi], p2p[~multi])


def test_round_noise_matches_analytic_variance():
    """Monte Carlo variance of a zero-state round over 2e5 components is within 2% of the formula."""
    gains, topo, mixing = _instance(n=8, tau_factor=1.2, seed=7)
    cfg = ChannelConfig(power_limit=3.0, noise_std=0.5)
    bound = 2.0
    d = 200_000
    states = np.zeros((topo.n, d))

    for scheme in (Scheme.P2P, Scheme.MAC):
        schedule = build_schedule(topo, scheme)
        plan = build_scaling_plan(scheme, gains, topo, mixing, cfg, bound)
        out = channel_round(scheme, states, schedule, gains, mixing, cfg, plan, np.random.default_rng(1))
        empirical = out.var(axis=1)
        analytic = effective_noise_variance(scheme, gains, topo, mixing, cfg, bound)
        assert np.allclose(empirical, analytic, rtol=0.02), (scheme.value, empirical, analytic)
    print("✅ Empirical round noise matches the effective noise variance")


def test_norm_bound_violation():
    gains, topo, mixing = _instance(seed=3)
    cfg = ChannelConfig()
    plan = build_scaling_plan(Scheme.MAC, gains, topo, mixing, cfg, norm_bound=1.0)
    schedule = build_schedule(topo, Scheme.MAC)
    states = np.zeros((topo.n, 3))
    states[4] = [2.0, 0.0, 0.0]
    with pytest.raises(PowerBoundViolationError) as info:
        channel_round(Scheme.MAC, states, schedule, gains, mixing, cfg, plan, np.random.default_rng(0))
    assert info.value.node == 4


def test_invalid_channel_settings():
    with pytest.raises(InvalidArgumentError):
        ChannelConfig(power_limit=0.0)
    with pytest.raises(InvalidArgumentError):
        ChannelConfig(noise_std=-1.0)
    gains, topo, mixing = _instance()
    with pytest.raises(InvalidArgumentError):
        build_scaling_plan(Scheme.P2P, gains, topo, mixing, ChannelConfig(), norm_bound=0.0)
    with pytest.raises(InvalidArgumentError):
        build_scaling_plan(Scheme.IDEAL, gains, topo, mixing, ChannelConfig(), norm_bound=1.0)


def test_interference_absent_on_complete_graph():
    """Every transmitter is an intended neighbor, so leakage adds nothing."""
    n = 4
    gains, topo, mixing = _instance(n=n, tau_factor=0.01, seed=5)
    assert topo.edge_count == n * (n - 1) // 2
    cfg = ChannelConfig(power_limit=1.0, noise_std=0.0, sub_threshold_interference=True)
    states = _states_on_bound(n, 3, 1.0)
    for scheme in (Scheme.P2P, Scheme.MAC):
        plan = build_scaling_plan(scheme, gains, topo, mixing, cfg, 1.0)
        out = channel_round(scheme, states, build_schedule(topo, scheme), gains, mixing, cfg, plan,
                            np.random.default_rng(0))
        assert np.allclose(out, ideal_round(states, mixing), atol=1e-12)


def test_sub_threshold_interference_on_path():
    """Node 1 on path 0-1-2-3-4 picks up leakage from transmitters 3 and 4."""
    rng = np.random.default_rng(8)
    h = np.triu(rng.rayleigh(1.0, size=(5, 5)), 1)
    gains = ChannelGains(n=5, gains=h + h.T, sigma=1.0)
    topo = Topology.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    mixing = laplacian_mixing(topo)
    slot = Slot(receivers=(0, 1, 3, 4), links=((0, 1), (1, 0), (3, 4), (4, 3)))
    schedule = Schedule(scheme=Scheme.P2P, slots=(slot,))
    states = _states_on_bound(5, 2, 1.0)

    quiet = ChannelConfig(power_limit=2.0, noise_std=0.0)
    leaky = ChannelConfig(power_limit=2.0, noise_std=0.0, sub_threshold_interference=True)
    plan = build_scaling_plan(Scheme.P2P, gains, topo, mixing, quiet, 1.0)
    base = p2p_round(states, schedule, gains, mixing, quiet, plan, np.random.default_rng(0))
    noisy = p2p_round(states, schedule, gains, mixing, leaky, plan, np.random.default_rng(0))

    x = np.sqrt(2.0) * states
    expected = plan.combine_weights[1, 0] * (gains.gains[1, 3] * x[3] + gains.gains[1, 4] * x[4])
    assert np.allclose(noisy[1] - base[1], expected, atol=1e-12)
    assert np.allclose(noisy[2], base[2]), "Idle node 2 is unaffected"


def test_two_neighbor_noise_example():
    """Center of path 0-1-2 with unit gains: weights 1/3, B = P = noise_std = 1."""
    gains = ChannelGains(n=3, gains=np.ones((3, 3)) - np.eye(3), sigma=1.0)
    topo = Topology.from_edges(3, [(0, 1), (1, 2)])
    mixing = laplacian_mixing(topo)
    cfg = ChannelConfig(power_limit=1.0, noise_std=1.0)

    p2p = effective_noise_variance(Scheme.P2P, gains, topo, mixing, cfg, 1.0)
    mac = effective_noise_variance(Scheme.MAC, gains, topo, mixing, cfg, 1.0)
    assert p2p[1] == pytest.approx(2 / 9)
    assert mac[1] == pytest.approx(1 / 9)

    plan = build_scaling_plan(Scheme.MAC, gains, topo, mixing, cfg, 1.0)
    assert plan.alignment_gains[1] == pytest.approx(3.0)
    print("✅ Two-neighbor example: P2P 2/9, MAC 1/9, gamma 3")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
