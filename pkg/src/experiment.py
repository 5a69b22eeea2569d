"""
Experiment harness for the wireless DSGD simulator.
Sweeps the (sigma, tau) grid over repeated trials for every scheme, aggregates
slot counts and test metrics, and writes summary, trace and metadata files.
"""

import asyncio
import json
import os
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd
import pytz
import scipy

from src import __version__
from src.config import SCHEMES, TIMEZONE, ExperimentConfig
from src.datasets import load_mnist, partition_iid, synthetic_classification
from src.engine import IterationRecord, TrainConfig, run_dsgd
from src.errors import ConfigError, NumericalDivergenceError, PowerBoundViolationError, TopologyGenerationError
from src.formatter import ResultFormatter
from src.logger import logger
from src.mixing import laplacian_mixing, spectral_gap
from src.scheduling import Scheme, build_schedule
from src.tasks import Task, logistic_task, mlp_task, quadratic_task, reference_optimum
from src.topology import sample_connected_topology

SUMMARY_COLUMNS = [
    "sigma", "tau_factor", "scheme", "trials_ok", "trials_failed",
    "T_mean", "T_std", "acc_final_mean", "acc_final_std", "acc_best_mean",
    "T_min", "T_max", "edge_density_mean", "spectral_gap_mean",
]
TRACE_COLUMNS = [
    "scenario", "trial", "iteration", "max_disagreement",
    "consensus_distance", "test_metric", "channel_uses",
]

# Synthetic stand-in shape when MNIST is not used.
SYNTHETIC_CLASSES = 10


@dataclass
class TrialResult:
    """Outcome of one scheme on one sampled topology."""

    sigma: float
    tau_factor: float
    scheme: str
    trial: int
    failure: Optional[str] = None
    T: Optional[int] = None
    final_metric: Optional[float] = None
    best_metric: Optional[float] = None
    edge_density: Optional[float] = None
    spectral_gap: Optional[float] = None
    records: List[IterationRecord] = field(default_factory=list)
    schedule: Optional[Dict[str, Any]] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def scenario(self) -> str:
        return scenario_id(self.sigma, self.tau_factor, self.scheme)


@dataclass
class ExperimentResult:
    summary: pd.DataFrame
    trials: List[TrialResult]
    paths: Dict[str, str] = field(default_factory=dict)


def scenario_id(sigma: float, tau_factor: float, scheme: str) -> str:
    return f"sigma{sigma:g}_tau{tau_factor:g}_{scheme}"


def trial_seeds(base_seed: int, sigma_idx: int, tau_idx: int, trial: int) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """(topology seed, training seed) derived only from the base seed and grid position."""
    key = (sigma_idx, tau_idx, trial)
    return (
        np.random.SeedSequence(entropy=base_seed, spawn_key=key + (0,)),
        np.random.SeedSequence(entropy=base_seed, spawn_key=key + (1,)),
    )


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        learning_rate_decay=cfg.learning_rate_decay,
        iterations=cfg.iterations,
        noise_std=cfg.noise_std,
        power=cfg.power,
        norm_bound=cfg.norm_bound,
        interference=cfg.interference,
        eval_interval=cfg.eval_interval,
    )


def build_task(cfg: ExperimentConfig) -> Task:
    """Instantiate the configured task; data tasks get their reference optimum up front."""
    if cfg.task == "quadratic":
        return quadratic_task(cfg.n, cfg.dimension, seed=cfg.seed, gradient_noise_std=cfg.gradient_noise_std)

    if cfg.dataset == "mnist":
        train = load_mnist(cfg.data_dir, "train", cfg.train_size)
        test = load_mnist(cfg.data_dir, "test", cfg.test_size)
    else:
        full = synthetic_classification(cfg.train_size + cfg.test_size, cfg.dimension, SYNTHETIC_CLASSES, seed=cfg.seed)
        train = full.subset(np.arange(cfg.train_size))
        test = full.subset(np.arange(cfg.train_size, cfg.train_size + cfg.test_size))

    partitions = partition_iid(train, cfg.n, seed=cfg.seed)
    if cfg.task == "logistic":
        task = logistic_task(train, partitions, l2=cfg.l2, batch_size=cfg.batch_size, test_set=test)
    else:
        task = mlp_task(train, partitions, hidden_units=cfg.hidden_units, l2=cfg.l2,
                        batch_size=cfg.batch_size, seed=cfg.seed, test_set=test)
    reference_optimum(task)
    return task


def run_trial(cfg: ExperimentConfig, task: Task, sigma_idx: int, tau_idx: int, trial: int) -> List[TrialResult]:
    """One topology draw, every configured scheme run on it with the same training seed."""
    sigma = cfg.sigma[sigma_idx]
    tau_factor = cfg.tau_factor[tau_idx]
    topo_seed, run_seed = trial_seeds(cfg.seed, sigma_idx, tau_idx, trial)
    base = {"sigma": sigma, "tau_factor": tau_factor, "trial": trial}

    try:
        gains, topology = sample_connected_topology(cfg.n, sigma, tau_factor * sigma, topo_seed, cfg.max_attempts)
    except TopologyGenerationError as e:
        logger.warning(f"⚠️ Trial {scenario_id(sigma, tau_factor, '*')}#{trial} failed: {e}")
        return [TrialResult(scheme=name, failure=type(e).__name__, **base) for name in cfg.scheme]

    mixing = laplacian_mixing(topology)
    gap = spectral_gap(mixing)
    settings = train_config(cfg)
    results: List[TrialResult] = []

    for name in cfg.scheme:
        scheme = Scheme(name)
        schedule = build_schedule(topology, scheme, cfg.coloring)
        result = TrialResult(scheme=scheme.value, T=schedule.T, edge_density=topology.edge_density,
                             spectral_gap=gap, **base)
        if trial == 0:
            result.schedule = ResultFormatter.schedule_to_dict(schedule)
        try:
            log = run_dsgd(task, gains, topology, mixing, schedule, scheme, settings, run_seed)
        except (NumericalDivergenceError, PowerBoundViolationError) as e:
            logger.warning(f"⚠️ Trial {result.scenario}#{trial} failed: {e}")
            result.failure = type(e).__name__
        else:
            result.records = log.records
            result.final_metric = log.final_metric
            result.best_metric = log.best_metric
        results.append(result)
    return results


# Per-process context for pool workers; set by the pool initializer.
_WORKER_CONTEXT: Dict[str, Any] = {}


def _init_worker(cfg: ExperimentConfig, task: Task) -> None:
    _WORKER_CONTEXT["cfg"] = cfg
    _WORKER_CONTEXT["task"] = task


def _run_trial_in_worker(sigma_idx: int, tau_idx: int, trial: int) -> List[TrialResult]:
    return run_trial(_WORKER_CONTEXT["cfg"], _WORKER_CONTEXT["task"], sigma_idx, tau_idx, trial)


class TrialRunner:
    """Runs trials concurrently, bounded by a semaphore of `workers` slots."""

    def __init__(self, cfg: ExperimentConfig, task: Task):
        self.cfg = cfg
        self.task = task
        self.semaphore: Optional[asyncio.Semaphore] = None
        self.executor: Optional[Executor] = None

    async def __aenter__(self):
        self.semaphore = asyncio.Semaphore(self.cfg.workers)
        if self.cfg.workers > 1:
            self.executor = ProcessPoolExecutor(
                max_workers=self.cfg.workers,
                initializer=_init_worker,
                initargs=(self.cfg, self.task),
            )
        else:
            _init_worker(self.cfg, self.task)
            self.executor = ThreadPoolExecutor(max_workers=1)
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb):
        if self.executor:
            self.executor.shutdown(wait=True)

    async def _run_one(self, job: Tuple[int, int, int]) -> List[TrialResult]:
        if not self.executor:
            raise RuntimeError("Runner not initialized.")
        async with self.semaphore:
            loop = asyncio.get_running_loop()
            return await loop.run_in_executor(self.executor, _run_trial_in_worker, *job)

    async def run_all(self, jobs: List[Tuple[int, int, int]]) -> List[TrialResult]:
        batches = await asyncio.gather(*(self._run_one(job) for job in jobs))
        return [result for batch in batches for result in batch]


def _jobs(cfg: ExperimentConfig) -> List[Tuple[int, int, int]]:
    return [
        (si, ti, trial)
        for si in range(len(cfg.sigma))
        for ti in range(len(cfg.tau_factor))
        for trial in range(cfg.trials)
    ]


def summarize_table(trials: List[TrialResult]) -> pd.DataFrame:
    """One row per (sigma, tau_factor, scheme); failed trials are counted but excluded from means."""
    frame = pd.DataFrame([
        {
            "sigma": r.sigma,
            "tau_factor": r.tau_factor,
            "scheme": r.scheme,
            "ok": r.ok,
            "T": np.nan if r.T is None else float(r.T),
            "final_metric": np.nan if r.final_metric is None else r.final_metric,
            "best_metric": np.nan if r.best_metric is None else r.best_metric,
            "edge_density": np.nan if r.edge_density is None else r.edge_density,
            "spectral_gap": np.nan if r.spectral_gap is None else r.spectral_gap,
        }
        for r in trials
    ])
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)

    frame["scheme"] = pd.Categorical(frame["scheme"], categories=list(SCHEMES), ordered=True)
    keys = ["sigma", "tau_factor", "scheme"]

    def pop_std(values: pd.Series) -> float:
        return float(values.std(ddof=0)) if values.notna().any() else np.nan

    counts = frame.groupby(keys, observed=True).agg(trials_ok=("ok", "sum"), trials_total=("ok", "size"))
    stats = frame[frame["ok"]].groupby(keys, observed=True).agg(
        T_mean=("T", "mean"),
        T_std=("T", pop_std),
        acc_final_mean=("final_metric", "mean"),
        acc_final_std=("final_metric", pop_std),
        acc_best_mean=("best_metric", "mean"),
        T_min=("T", "min"),
        T_max=("T", "max"),
        edge_density_mean=("edge_density", "mean"),
        spectral_gap_mean=("spectral_gap", "mean"),
    )
    summary = counts.join(stats, how="left").reset_index()
    summary["trials_ok"] = summary["trials_ok"].astype(int)
    summary["trials_failed"] = summary["trials_total"].astype(int) - summary["trials_ok"]
    summary = summary.sort_values(keys).reset_index(drop=True)
    summary["scheme"] = summary["scheme"].astype(str)
    return summary[SUMMARY_COLUMNS]


def trace_frame(trials: List[TrialResult], scenario: str) -> pd.DataFrame:
    rows = [
        {
            "scenario": scenario,
            "trial": r.trial,
            "iteration": rec.iteration,
            "max_disagreement": rec.max_disagreement,
            "consensus_distance": rec.consensus_distance,
            "test_metric": rec.test_metric,
            "channel_uses": rec.channel_uses,
        }
        for r in trials if r.ok and r.scenario == scenario
        for rec in r.records
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_outputs(cfg: ExperimentConfig, summary: pd.DataFrame, trials: List[TrialResult]) -> Dict[str, str]:
    """summary.csv, traces/<scenario>.csv, schedules.json and meta.json under cfg.out_dir."""
    trace_dir = os.path.join(cfg.out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    paths: Dict[str, str] = {}

    paths["summary"] = os.path.join(cfg.out_dir, "summary.csv")
    summary.to_csv(paths["summary"], index=False, float_format="%.6f")

    for sigma, tau_factor, scheme in summary[["sigma", "tau_factor", "scheme"]].itertuples(index=False):
        scenario = scenario_id(sigma, tau_factor, scheme)
        path = os.path.join(trace_dir, f"{scenario}.csv")
        trace_frame(trials, scenario).to_csv(path, index=False, float_format="%.6g")
        paths[f"trace:{scenario}"] = path

    schedules = {r.scenario: r.schedule for r in trials if r.schedule is not None}
    paths["schedules"] = os.path.join(cfg.out_dir, "schedules.json")
    with open(paths["schedules"], "w", encoding="utf-8") as f:
        json.dump(schedules, f, indent=2, sort_keys=True)

    meta = {
        "config": cfg.to_dict(),
        "timestamp": datetime.now(pytz.timezone(TIMEZONE)).isoformat(),
        "versions": {
            "ota_dsgd": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "networkx": nx.__version__,
            "pandas": pd.__version__,
        },
        "seeds": {
            "base_seed": cfg.seed,
            "derivation": "SeedSequence(entropy=base_seed, spawn_key=(sigma_idx, tau_idx, trial, stream))",
        },
        "failures": [
            {"scenario": r.scenario, "trial": r.trial, "kind": r.failure}
            for r in trials if not r.ok
        ],
    }
    paths["meta"] = os.path.join(cfg.out_dir, "meta.json")
    with open(paths["meta"], "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    return paths


async def run_experiment_async(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    errors = cfg.validate()
    if errors:
        raise ConfigError("; ".join(errors))

    logger.info(">>> [STEP 1] Building task...")
    task = build_task(cfg)
    logger.info(f">>> [STEP 1 DONE] {cfg.task} task with d={task.dimension} over n={task.n_nodes} nodes")

    jobs = _jobs(cfg)
    logger.info(f">>> [STEP 2] Running {len(jobs)} trials x {len(cfg.scheme)} schemes on {cfg.workers} worker(s)...")
    async with TrialRunner(cfg, task) as runner:
        trials = await runner.run_all(jobs)
    failed = sum(1 for r in trials if not r.ok)
    logger.info(f">>> [STEP 2 DONE] {len(trials) - failed} runs ok, {failed} failed")

    logger.info(">>> [STEP 3] Summarizing...")
    summary = summarize_table(trials)
    logger.info(f">>> [STEP 3 DONE] {len(summary)} summary rows")

    result = ExperimentResult(summary=summary, trials=trials)
    if write:
        logger.info(f">>> [STEP 4] Writing results to {cfg.out_dir}...")
        result.paths = write_outputs(cfg, summary, trials)
        logger.info(f">>> [STEP 4 DONE] Wrote {len(result.paths)} files")
    return result


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Synchronous wrapper around the async trial runner."""
    return asyncio.run(run_experiment_async(cfg, write=write))
