"""
Learning task module for the wireless DSGD simulator.
Each task exposes per-node losses, gradients, stochastic gradients and a test metric
over a flat parameter vector.
"""

from abc import ABC, abstractmethod
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, softmax

from src.datasets import Dataset
from src.errors import InvalidArgumentError, InvalidPartitionError, UnsupportedMetricError
from src.logger import logger
from src.topology import SeedLike, make_rng


class Task(ABC):
    """Distributed objective f(theta) = (1/n) * sum_i f_i(theta)."""

    metric_name: str = "metric"
    maximize: bool = False
    has_reference: bool = True

    def __init__(self, n_nodes: int, dimension: int):
        self.n_nodes = n_nodes
        self.dimension = dimension
        self._reference: Optional[float] = None
        self._reference_theta: Optional[np.ndarray] = None

    @abstractmethod
    def local_loss(self, i: int, theta: np.ndarray) -> float:
        ...

    @abstractmethod
    def local_gradient(self, i: int, theta: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def stochastic_gradient(self, i: int, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def evaluate(self, theta: np.ndarray) -> float:
        """Test metric of a single model."""

    def global_loss(self, theta: np.ndarray) -> float:
        return float(np.mean([self.local_loss(i, theta) for i in range(self.n_nodes)]))

    def full_gradient(self, theta: np.ndarray) -> np.ndarray:
        return np.mean([self.local_gradient(i, theta) for i in range(self.n_nodes)], axis=0)

    def stochastic_gradients(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One stochastic gradient per node, drawn in node order."""
        return np.stack([self.stochastic_gradient(i, states[i], rng) for i in range(self.n_nodes)])

    def initial_states(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros((self.n_nodes, self.dimension))

    def optimum(self) -> Optional[np.ndarray]:
        """Exact minimizer when known in closed form."""
        return None

    @property
    def reference_value(self) -> float:
        """f(theta*), exact where available, otherwise the best centralized optimum found."""
        if not self.has_reference:
            raise UnsupportedMetricError(f"{type(self).__name__} has no reference optimum")
        if self._reference is None:
            reference_optimum(self)
        return self._reference


def reference_optimum(task: Task, max_iter: int = 1000) -> float:
    """Centralized full-batch minimization of f; the result is cached on the task."""
    if task._reference is not None:
        return task._reference

    exact = task.optimum()
    if exact is not None:
        task._reference_theta = exact
        task._reference = task.global_loss(exact)
        return task._reference

    x0 = task.initial_states(np.random.default_rng(0))[0]
    result = minimize(
        task.global_loss,
        x0,
        jac=task.full_gradient,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": 1e-10, "ftol": 1e-15},
    )
    if not result.success:
        logger.warning(f"⚠️ Reference optimum did not fully converge: {result.message}")
    task._reference_theta = np.asarray(result.x)
    task._reference = float(result.fun)
    logger.info(f"Reference optimum f* = {task._reference:.6f} after {result.nit} iterations")
    return task._reference


# ==================== Quadratic ====================
class QuadraticTask(Task):
    """f_i(theta) = 0.5 * ||theta - c_i||^2 with an exact optimum at mean(c)."""

    metric_name = "optimality_gap"
    maximize = False

    def __init__(self, centers: np.ndarray, gradient_noise_std: float = 0.0):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        super().__init__(n_nodes=centers.shape[0], dimension=centers.shape[1])
        if gradient_noise_std < 0:
            raise InvalidArgumentError(f"gradient_noise_std must be >= 0, got {gradient_noise_std}")
        self.centers = centers
        self.gradient_noise_std = gradient_noise_std

    def optimum(self) -> np.ndarray:
        return self.centers.mean(axis=0)

    def local_loss(self, i: int, theta: np.ndarray) -> float:
        return 0.5 * float(np.sum((theta - self.centers[i]) ** 2))

    def global_loss(self, theta: np.ndarray) -> float:
        return 0.5 * float(np.mean(np.sum((theta - self.centers) ** 2, axis=1)))

    def local_gradient(self, i: int, theta: np.ndarray) -> np.ndarray:
        return theta - self.centers[i]

    def full_gradient(self, theta: np.ndarray) -> np.ndarray:
        return theta - self.optimum()

    def stochastic_gradient(self, i: int, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = self.gradient_noise_std * rng.standard_normal(self.dimension) if self.gradient_noise_std else 0.0
        return self.local_gradient(i, theta) + noise

    def stochastic_gradients(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        grads = states - self.centers
        if self.gradient_noise_std:
            grads = grads + self.gradient_noise_std * rng.standard_normal(grads.shape)
        return grads

    def initial_states(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((self.n_nodes, self.dimension))

    def evaluate(self, theta: np.ndarray) -> float:
        return self.global_loss(theta) - self.reference_value


def quadratic_task(n: int, d: int, seed: SeedLike, gradient_noise_std: float = 0.0) -> QuadraticTask:
    if n < 1 or d < 1:
        raise InvalidArgumentError(f"n and d must be >= 1, got n={n}, d={d}")
    centers = make_rng(seed).normal(size=(n, d))
    return QuadraticTask(centers, gradient_noise_std=gradient_noise_std)


# ==================== Classification ====================
class _ClassifierTask(Task):
    """Shared partition handling, minibatch sampling and accuracy for classifiers."""

    metric_name = "accuracy"
    maximize = True

    def __init__(
        self,
        train: Dataset,
        partitions: Sequence[np.ndarray],
        dimension: int,
        l2: float,
        batch_size: int,
        test_set: Optional[Dataset] = None,
    ):
        if not partitions:
            raise InvalidPartitionError("at least one partition is required")
        for i, part in enumerate(partitions):
            if len(part) == 0:
                raise InvalidPartitionError(f"partition {i} is empty")
        if batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
        if l2 < 0:
            raise InvalidArgumentError(f"l2 must be >= 0, got {l2}")
        super().__init__(n_nodes=len(partitions), dimension=dimension)
        self.train = train
        self.partitions: List[np.ndarray] = [np.asarray(p, dtype=np.int64) for p in partitions]
        self.l2 = l2
        self.batch_size = batch_size
        self.test_set = test_set if test_set is not None else train
        self.num_features = train.num_features
        self.num_classes = train.num_classes

    @abstractmethod
    def _loss_grad(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray, need_grad: bool):
        """Mean cross-entropy (plus l2) and its gradient on a batch."""

    @abstractmethod
    def predict(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        ...

    def _batch(self, i: int):
        idx = self.partitions[i]
        return self.train.features[idx], self.train.labels[idx]

    def local_loss(self, i: int, theta: np.ndarray) -> float:
        x, y = self._batch(i)
        return self._loss_grad(theta, x, y, need_grad=False)[0]

    def local_gradient(self, i: int, theta: np.ndarray) -> np.ndarray:
        x, y = self._batch(i)
        return self._loss_grad(theta, x, y, need_grad=True)[1]

    def stochastic_gradient(self, i: int, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        # sampled with replacement from the node's own partition
        idx = self.partitions[i]
        pick = idx[rng.integers(0, idx.size, size=self.batch_size)]
        return self._loss_grad(theta, self.train.features[pick], self.train.labels[pick], need_grad=True)[1]

    def evaluate(self, theta: np.ndarray) -> float:
        pred = self.predict(theta, self.test_set.features)
        return float(np.mean(pred == self.test_set.labels))


class LogisticTask(_ClassifierTask):
    """Multinomial logistic regression; theta packs the weight matrix then the bias."""

    def __init__(self, train, partitions, l2=1e-4, batch_size=32, test_set=None):
        dimension = (train.num_features + 1) * train.num_classes
        super().__init__(train, partitions, dimension, l2, batch_size, test_set)

    def _unpack(self, theta: np.ndarray):
        f, c = self.num_features, self.num_classes
        return theta[: f * c].reshape(f, c), theta[f * c:]

    def predict(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        w, b = self._unpack(theta)
        return np.argmax(x @ w + b, axis=1)

    def _loss_grad(self, theta, x, y, need_grad):
        w, b = self._unpack(theta)
        logits = x @ w + b
        log_p = log_softmax(logits, axis=1)
        m = x.shape[0]
        loss = -float(np.mean(log_p[np.arange(m), y])) + 0.5 * self.l2 * float(theta @ theta)
        if not need_grad:
            return loss, None
        delta = softmax(logits, axis=1)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        grad = np.concatenate([(x.T @ delta).ravel(), delta.sum(axis=0)]) + self.l2 * theta
        return loss, grad


def logistic_task(
    train: Dataset,
    partitions: Sequence[np.ndarray],
    l2: float = 1e-4,
    batch_size: int = 32,
    test_set: Optional[Dataset] = None,
) -> LogisticTask:
    return LogisticTask(train, partitions, l2=l2, batch_size=batch_size, test_set=test_set)


class MLPTask(_ClassifierTask):
    """One tanh hidden layer; theta packs W1, b1, W2, b2 in that order."""

    def __init__(self, train, partitions, hidden_units=32, l2=1e-4, batch_size=32, test_set=None, seed=0):
        if hidden_units < 1:
            raise InvalidArgumentError(f"hidden_units must be >= 1, got {hidden_units}")
        self.hidden_units = hidden_units
        f, c = train.num_features, train.num_classes
        dimension = f * hidden_units + hidden_units + hidden_units * c + c
        super().__init__(train, partitions, dimension, l2, batch_size, test_set)
        self._init_seed = seed

    def _unpack(self, theta: np.ndarray):
        f, h, c = self.num_features, self.hidden_units, self.num_classes
        s1 = f * h
        s2 = s1 + h
        s3 = s2 + h * c
        return theta[:s1].reshape(f, h), theta[s1:s2], theta[s2:s3].reshape(h, c), theta[s3:]

    def _forward(self, theta, x):
        w1, b1, w2, b2 = self._unpack(theta)
        hidden = np.tanh(x @ w1 + b1)
        return hidden, hidden @ w2 + b2

    def predict(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.argmax(self._forward(theta, x)[1], axis=1)

    def _loss_grad(self, theta, x, y, need_grad):
        _, _, w2, _ = self._unpack(theta)
        hidden, logits = self._forward(theta, x)
        m = x.shape[0]
        loss = -float(np.mean(log_softmax(logits, axis=1)[np.arange(m), y])) + 0.5 * self.l2 * float(theta @ theta)
        if not need_grad:
            return loss, None
        delta = softmax(logits, axis=1)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        back = (delta @ w2.T) * (1.0 - hidden ** 2)
        grad = np.concatenate([
            (x.T @ back).ravel(),
            back.sum(axis=0),
            (hidden.T @ delta).ravel(),
            delta.sum(axis=0),
        ]) + self.l2 * theta
        return loss, grad

    def initial_states(self, rng: np.random.Generator) -> np.ndarray:
        # every node starts from the same seeded initialization
        init_rng = np.random.default_rng(self._init_seed)
        f, h, c = self.num_features, self.hidden_units, self.num_classes
        theta = np.concatenate([
            init_rng.normal(scale=1.0 / np.sqrt(f), size=f * h),
            np.zeros(h),
            init_rng.normal(scale=1.0 / np.sqrt(h), size=h * c),
            np.zeros(c),
        ])
        return np.tile(theta, (self.n_nodes, 1))


def mlp_task(
    train: Dataset,
    partitions: Sequence[np.ndarray],
    hidden_units: int = 32,
    l2: float = 1e-4,
    batch_size: int = 32,
    seed: int = 0,
    test_set: Optional[Dataset] = None,
) -> MLPTask:
    return MLPTask(train, partitions, hidden_units=hidden_units, l2=l2,
                   batch_size=batch_size, test_set=test_set, seed=seed)
