"""
Unit tests for the DSGD engine.
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.engine import (
    NodeState,
    TrainConfig,
    consensus_distance,
    fixed_point,
    max_disagreement,
    run_dsgd,
)
from src.errors import InvalidArgumentError, NumericalDivergenceError, PowerBoundViolationError
from src.mixing import laplacian_mixing
from src.scheduling import Scheme, build_schedule
from src.tasks import QuadraticTask, logistic_task, quadratic_task
from src.datasets import partition_iid, synthetic_classification
from src.topology import Topology, sample_channel_gains, sample_connected_topology


def _setup(n=20, d=10, tau_factor=0.8, seed=0, noise=0.0):
    gains, topo = sample_connected_topology(n, 2.0, tau_factor * 2.0, seed)
    mixing = laplacian_mixing(topo)
    task = quadratic_task(n, d, seed=seed + 100, gradient_noise_std=noise)
    return gains, topo, mixing, task


def _run(scheme, gains, topo, mixing, task, cfg, seed=0):
    schedule = build_schedule(topo, scheme)
    return run_dsgd(task, gains, topo, mixing, schedule, scheme, cfg, seed)


def test_consensus_distance_examples():
    assert consensus_distance(np.ones((4, 3))) == 0.0
    assert consensus_distance(np.array([[0.0], [2.0]])) == pytest.approx(1.0)
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert consensus_distance(x + 7.5) == pytest.approx(consensus_distance(x))


def test_max_disagreement_examples():
    task = QuadraticTask(np.array([[0.0], [2.0]]))
    assert max_disagreement(np.array([[0.0], [2.0]]), task) == pytest.approx(0.5)
    assert max_disagreement(np.array([[1.0], [1.0]]), task) == pytest.approx(0.0)
    assert max_disagreement(np.array([[3.0]]), task) == pytest.approx(task.global_loss(np.array([3.0])) - 0.5)


def test_node_state_running_average():
    state = NodeState(theta=np.zeros((2, 1)))
    assert np.array_equal(state.running_average(), np.zeros((2, 1)))
    for value in (1.0, 2.0, 6.0):
        state.update(np.full((2, 1), value))
    assert state.step_count == 3
    assert np.allclose(state.running_average(), 3.0)


def test_zero_iterations_keeps_initial_states():
    gains, topo, mixing, task = _setup(n=5, d=2)
    init = np.random.default_rng(1).normal(size=(5, 2))
    log = run_dsgd(task, gains, topo, mixing, build_schedule(topo, Scheme.MAC), Scheme.MAC,
                   TrainConfig(iterations=0), seed=0, initial_states=init)
    assert log.records == []
    assert np.array_equal(log.states.theta, init)
    assert log.final_metric is None


def test_noiseless_convergence_and_ideal_equivalence():
    """Noise off: every scheme tracks the ideal run and lands on the closed-form fixed point."""
    gains, topo, mixing, task = _setup()
    cfg = TrainConfig(learning_rate=0.1, iterations=500, noise_std=0.0, eval_interval=1)
    logs = {scheme: _run(scheme, gains, topo, mixing, task, cfg) for scheme in Scheme}

    ideal = logs[Scheme.IDEAL]
    target = fixed_point(task, mixing, 0.1)
    for scheme in (Scheme.P2P, Scheme.MAC):
        log = logs[scheme]
        assert len(log.records) == 500
        for rec, ref in zip(log.records, ideal.records):
            assert abs(rec.consensus_distance - ref.consensus_distance) <= 1e-9
            assert abs(rec.test_metric - ref.test_metric) <= 1e-9
        theta = log.states.theta
        assert np.allclose(theta, ideal.states.theta, atol=1e-9)
        assert np.linalg.norm(theta.mean(axis=0) - task.optimum()) <= 1e-3
        assert np.max(np.linalg.norm(theta - target, axis=1)) <= 1e-3
        assert log.records[-1].channel_uses == 500 * log.metadata["T"]
    print("✅ Noiseless P2P/MAC runs match the ideal run and converge")


def test_noiseless_consensus_preserves_mean():
    gains, topo, mixing, task = _setup(n=8, d=3, seed=3)
    init = np.random.default_rng(5).normal(size=(8, 3))
    # tiny step isolates the consensus part
    cfg = TrainConfig(learning_rate=1e-300, iterations=5, noise_std=0.0)
    log = run_dsgd(task, gains, topo, mixing, build_schedule(topo, Scheme.MAC), Scheme.MAC, cfg, 0, init)
    assert np.allclose(log.states.theta.mean(axis=0), init.mean(axis=0), atol=1e-10)


def test_single_node_is_plain_sgd():
    topo = Topology.from_adjacency([[0]])
    gains = sample_channel_gains(1, 1.0, seed=0)
    mixing = laplacian_mixing(topo)
    task = QuadraticTask(np.array([[3.0, -1.0]]))
    theta0 = np.array([[0.0, 0.0]])
    cfg = TrainConfig(learning_rate=0.1, iterations=10, noise_std=1.0, eval_interval=5)
    log = run_dsgd(task, gains, topo, mixing, build_schedule(topo, Scheme.MAC), Scheme.MAC, cfg, 0, theta0)
    expected = task.centers[0] + 0.9 ** 10 * (theta0[0] - task.centers[0])
    assert np.allclose(log.states.theta[0], expected, atol=1e-12)


def test_mac_consensus_error_below_p2p():
    """Same topology, seed and mixing: MAC's steady consensus distance is not above P2P's."""
    mac_means, p2p_means = [], []
    for trial in range(8):
        gains, topo, mixing, task = _setup(n=10, d=5, tau_factor=1.2, seed=trial, noise=0.1)
        cfg = TrainConfig(iterations=150, noise_std=1.0, power=100.0, norm_bound=50.0, eval_interval=50)
        for scheme, bucket in ((Scheme.MAC, mac_means), (Scheme.P2P, p2p_means)):
            log = _run(scheme, gains, topo, mixing, task, cfg, seed=trial)
            bucket.append(np.mean([r.consensus_distance for r in log.records[-50:]]))
    print(f"✅ Consensus distance MAC={np.mean(mac_means):.4f} P2P={np.mean(p2p_means):.4f}")
    assert np.mean(mac_means) <= np.mean(p2p_means)


def test_seed_determinism():
    gains, topo, mixing, task = _setup(n=6, d=3, seed=2, noise=0.1)
    cfg = TrainConfig(iterations=30, noise_std=1.0, norm_bound=50.0, eval_interval=3)
    a = _run(Scheme.P2P, gains, topo, mixing, task, cfg, seed=42)
    b = _run(Scheme.P2P, gains, topo, mixing, task, cfg, seed=42)
    assert [vars(r) for r in a.records] == [vars(r) for r in b.records]
    assert np.array_equal(a.states.theta, b.states.theta)


def test_divergence_reports_iteration():
    gains, topo, mixing, task = _setup(n=4, d=2, seed=1)
    cfg = TrainConfig(learning_rate=1e200, iterations=10, noise_std=0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericalDivergenceError) as info:
            _run(Scheme.IDEAL, gains, topo, mixing, task, cfg)
    assert info.value.iteration == 2


def test_power_bound_violation_propagates():
    gains, topo, mixing, task = _setup(n=4, d=2, seed=1)
    cfg = TrainConfig(iterations=3, norm_bound=1e-3)
    with pytest.raises(PowerBoundViolationError):
        _run(Scheme.P2P, gains, topo, mixing, task, cfg)


def test_mismatched_components_rejected():
    gains, topo, mixing, _ = _setup(n=4, d=2)
    task = quadratic_task(5, 2, seed=0)
    with pytest.raises(InvalidArgumentError):
        run_dsgd(task, gains, topo, mixing, build_schedule(topo, Scheme.MAC), Scheme.MAC, TrainConfig(), 0)
    task = quadratic_task(4, 2, seed=0)
    with pytest.raises(InvalidArgumentError):
        run_dsgd(task, gains, topo, mixing, build_schedule(topo, Scheme.P2P), Scheme.MAC, TrainConfig(), 0)


def test_classifier_run_reports_accuracy():
    data = synthetic_classification(300, 5, 3, seed=0, spread=0.5)
    train, test = data.subset(np.arange(200)), data.subset(np.arange(200, 300))
    task = logistic_task(train, partition_iid(train, 6, seed=0), l2=1e-3, batch_size=16, test_set=test)
    gains, topo = sample_connected_topology(6, 2.0, 1.6, seed=1)
    mixing = laplacian_mixing(topo)
    cfg = TrainConfig(iterations=60, noise_std=0.0, eval_interval=20)
    log = _run(Scheme.MAC, gains, topo, mixing, task, cfg)

    evaluated = [r for r in log.records if r.test_metric is not None]
    assert [r.iteration for r in evaluated] == [20, 40, 60]
    assert all(r.max_disagreement is not None for r in log.records)
    assert log.best_metric >= log.final_metric > 0.5
    assert log.metadata["metric"] == "accuracy"

    with pytest.raises(InvalidArgumentError):
        fixed_point(task, mixing, 0.1)


def test_disagreement_tracked_every_iteration():
    gains, topo, mixing, task = _setup(n=6, d=3, seed=4, noise=0.1)
    cfg = TrainConfig(iterations=12, noise_std=0.5, norm_bound=50.0, eval_interval=5)
    log = _run(Scheme.MAC, gains, topo, mixing, task, cfg, seed=9)

    assert all(r.max_disagreement is not None and r.max_disagreement >= 0 for r in log.records)
    assert [r.iteration for r in log.records if r.test_metric is not None] == [5, 10, 12]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
