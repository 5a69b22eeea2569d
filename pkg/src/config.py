"""
Configuration module for the wireless DSGD simulator.
Manages environment variables, constants, experiment settings and presets.
"""

import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from src.errors import ConfigError

# Load environment variables
load_dotenv()


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


# ==================== Runtime Configuration ====================
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
LOG_TO_FILE: bool = _env_bool("LOG_TO_FILE", "true")
MAX_WORKERS: int = int(os.getenv("MAX_WORKERS", "1"))
TIMEZONE: str = os.getenv("TIMEZONE", "UTC")

# ==================== Data & Output Directories ====================
MNIST_DATA_DIR: str = os.getenv("MNIST_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
RESULTS_DIR: str = os.getenv("RESULTS_DIR", os.path.join(os.path.dirname(__file__), "..", "results"))
LOG_DIR: str = os.getenv("LOG_DIR", os.path.join(os.path.dirname(__file__), "..", "logs"))
os.makedirs(LOG_DIR, exist_ok=True)

# ==================== Simulation Constants ====================
MAX_TOPOLOGY_ATTEMPTS: int = 1000
BRUTE_FORCE_MAX_VERTICES: int = 16
NORM_BOUND_FACTOR: float = 10.0
STOCHASTIC_TOL: float = 1e-12

SCHEMES = ("MAC", "P2P", "IDEAL")
TASKS = ("quadratic", "logistic", "mlp")
DATASETS = ("mnist", "synthetic")
COLORING_POLICIES = ("saturation", "largest_degree")


# ==================== Value Parsers ====================
def _strip_list(raw: str) -> List[str]:
    raw = raw.strip()
    if raw.startswith("[") and raw.endswith("]"):
        raw = raw[1:-1]
    return [part.strip().strip("'\"") for part in raw.split(",") if part.strip()]


def _float_list(raw: str) -> List[float]:
    return [float(v) for v in _strip_list(raw)]


def _upper_list(raw: str) -> List[str]:
    return [v.upper() for v in _strip_list(raw)]


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _optional_float(raw: str) -> Optional[float]:
    if raw.strip().lower() in ("", "none", "auto"):
        return None
    return float(raw)


def _parser(fn: Callable[[str], Any]) -> Dict[str, Any]:
    return {"parse": fn}


@dataclass
class ExperimentConfig:
    """Every knob of a scenario sweep. Field names double as file keys and CLI flags."""

    n: int = field(default=20, metadata=_parser(int))
    sigma: List[float] = field(default_factory=lambda: [2.0, 5.0], metadata=_parser(_float_list))
    tau_factor: List[float] = field(default_factory=lambda: [0.8, 1.2, 1.6], metadata=_parser(_float_list))
    scheme: List[str] = field(default_factory=lambda: ["MAC", "P2P"], metadata=_parser(_upper_list))
    trials: int = field(default=50, metadata=_parser(int))
    iterations: int = field(default=250, metadata=_parser(int))
    learning_rate: float = field(default=0.1, metadata=_parser(float))
    learning_rate_decay: float = field(default=0.0, metadata=_parser(float))

    # Channel
    noise_std: float = field(default=1.0, metadata=_parser(float))
    power: float = field(default=100.0, metadata=_parser(float))
    norm_bound: Optional[float] = field(default=None, metadata=_parser(_optional_float))
    interference: bool = field(default=False, metadata=_parser(_bool))

    # Task
    task: str = field(default="quadratic", metadata=_parser(str.lower))
    dimension: int = field(default=10, metadata=_parser(int))
    gradient_noise_std: float = field(default=0.1, metadata=_parser(float))
    dataset: str = field(default="mnist", metadata=_parser(str.lower))
    data_dir: str = field(default=MNIST_DATA_DIR, metadata=_parser(str))
    train_size: int = field(default=2000, metadata=_parser(int))
    test_size: int = field(default=1000, metadata=_parser(int))
    l2: float = field(default=1e-4, metadata=_parser(float))
    batch_size: int = field(default=32, metadata=_parser(int))
    hidden_units: int = field(default=32, metadata=_parser(int))
    eval_interval: int = field(default=10, metadata=_parser(int))

    # Harness
    coloring: str = field(default="saturation", metadata=_parser(str.lower))
    max_attempts: int = field(default=MAX_TOPOLOGY_ATTEMPTS, metadata=_parser(int))
    seed: int = field(default=0, metadata=_parser(int))
    out_dir: str = field(default=RESULTS_DIR, metadata=_parser(str))
    workers: int = field(default=MAX_WORKERS, metadata=_parser(int))

    def validate(self) -> List[str]:
        """Return one `field: message` line per invalid field (empty when valid)."""
        errors: List[str] = []

        def check(ok: bool, name: str, message: str) -> None:
            if not ok:
                errors.append(f"{name}: {message}")

        check(self.n >= 1, "n", "must be >= 1")
        check(bool(self.sigma), "sigma", "must be a nonempty list")
        check(all(s > 0 for s in self.sigma), "sigma", "entries must be > 0")
        check(bool(self.tau_factor), "tau_factor", "must be a nonempty list")
        check(all(t > 0 for t in self.tau_factor), "tau_factor", "entries must be > 0")
        check(bool(self.scheme), "scheme", "must be a nonempty list")
        check(all(s in SCHEMES for s in self.scheme), "scheme", f"entries must be in {SCHEMES}")
        check(len(set(self.scheme)) == len(self.scheme), "scheme", "entries must be distinct")
        check(self.trials >= 1, "trials", "must be >= 1")
        check(self.iterations >= 0, "iterations", "must be >= 0")
        check(self.learning_rate > 0, "learning_rate", "must be > 0")
        check(self.learning_rate_decay >= 0, "learning_rate_decay", "must be >= 0")
        check(self.noise_std >= 0, "noise_std", "must be >= 0")
        check(self.power > 0, "power", "must be > 0")
        check(self.norm_bound is None or self.norm_bound > 0, "norm_bound", "must be > 0 or auto")
        check(self.task in TASKS, "task", f"must be one of {TASKS}")
        check(self.dimension >= 1, "dimension", "must be >= 1")
        check(self.gradient_noise_std >= 0, "gradient_noise_std", "must be >= 0")
        check(self.dataset in DATASETS, "dataset", f"must be one of {DATASETS}")
        check(self.train_size >= self.n, "train_size", "must be >= n (one sample per node)")
        check(self.test_size >= 1, "test_size", "must be >= 1")
        check(self.l2 >= 0, "l2", "must be >= 0")
        check(self.batch_size >= 1, "batch_size", "must be >= 1")
        check(self.hidden_units >= 1, "hidden_units", "must be >= 1")
        check(self.eval_interval >= 1, "eval_interval", "must be >= 1")
        check(self.coloring in COLORING_POLICIES, "coloring", f"must be one of {COLORING_POLICIES}")
        check(self.max_attempts >= 1, "max_attempts", "must be >= 1")
        check(self.workers >= 1, "workers", "must be >= 1")
        return errors

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def override(self, values: Dict[str, Any]) -> "ExperimentConfig":
        """Apply values keyed by field name; typed values are parsed like their string form."""
        known = {f.name: f for f in fields(self)}
        for key, raw in values.items():
            name = key.strip().lower().replace("-", "_")
            if name not in known:
                raise ConfigError(f"{key}: unknown configuration key")
            text = ", ".join(str(v) for v in raw) if isinstance(raw, (list, tuple)) else str(raw)
            try:
                value = known[name].metadata["parse"](text)
            except ValueError as e:
                raise ConfigError(f"{name}: cannot parse {raw!r} ({e})") from e
            setattr(self, name, value)
        return self


# ==================== Presets ====================
# Reduced grid for CI-speed runs.
QUICK_PRESET: Dict[str, Any] = {
    "n": 10,
    "trials": 3,
    "iterations": 40,
    "task": "quadratic",
    "dimension": 5,
    "eval_interval": 5,
}


def load_config_file(path: str) -> Dict[str, str]:
    """Read a flat `key = value` file; list values are comma separated."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    return {k: (v if v is not None else "") for k, v in values.items()}


def build_config(
    quick: bool = False,
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """Resolve defaults < quick preset < config file < overrides."""
    cfg = ExperimentConfig()
    if quick:
        cfg.override(dict(QUICK_PRESET))
    if config_path:
        cfg.override(load_config_file(config_path))
    if overrides:
        cfg.override(overrides)
    return cfg


def validate_config(cfg: ExperimentConfig) -> bool:
    """Validate experiment configuration, logging each invalid field."""
    from src.logger import logger

    errors = cfg.validate()
    for message in errors:
        logger.error(f"❌ Invalid config: {message}")
    return not errors
