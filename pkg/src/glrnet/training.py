"""Stochastic-approximation training with the GLR or BP estimator."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import seeding
from .data import SampleSet
from .errors import ConfigurationError, UndefinedMetricError
from .estimators import bp_gradient, glr_gradient_averaged
from .losses import LOSSES, cross_entropy_grad, get_loss
from .network import (
    Activation,
    NetworkSpec,
    ParameterSet,
    forward,
    forward_deterministic,
    init_params,
)

ESTIMATORS = ("glr", "bp")


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    The noise variance lives on :class:`~glrnet.network.NetworkSpec`.
    ``replicates`` is the GLR replicate count ``K``; BP draws one noise
    sample per item (or none for a noise-free network).
    """

    estimator: str = "glr"
    learning_rate: float = 0.1
    batch_size: int = 25
    replicates: int = 10_000
    epochs: int = 12
    seed: int = 0
    loss: str = "cross_entropy"
    max_iterations: int | None = None
    eval_every: int | None = None
    block_size: int = 1000
    workers: int = 1

    def validate(self, spec: NetworkSpec) -> None:
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.learning_rate < 0:
            raise ConfigurationError("learning rate must be non-negative")
        for name in ("batch_size", "replicates", "epochs", "block_size", "workers"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.estimator == "bp":
            if spec.activation.kind is not Activation.SIGMOID:
                raise ConfigurationError(
                    f"BP cannot train a {spec.activation.kind.value} network; use GLR"
                )
            if self.loss != "cross_entropy":
                raise ConfigurationError(f"BP cannot train with the {self.loss} loss; use GLR")
        elif spec.noise is None:
            raise ConfigurationError("GLR needs neuronal noise (sigma2 > 0)")


@dataclass
class LogRecord:
    iteration: int
    epoch: int
    train_loss: float
    val_loss: float = math.nan
    val_acc: float = math.nan
    wall_time: float = 0.0


@dataclass
class TrainingLog:
    records: list[LogRecord] = field(default_factory=list)

    COLUMNS = ("iteration", "epoch", "train_loss", "val_loss", "val_acc")

    def append(self, record: LogRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iterations must increase")
        self.records.append(record)

    @property
    def train_loss(self) -> np.ndarray:
        return np.array([r.train_loss for r in self.records])

    @property
    def evaluated(self) -> list[LogRecord]:
        return [r for r in self.records if not math.isnan(r.val_acc)]

    def write_csv(self, path, header_lines=()) -> None:
        """Write one row per iteration; validation columns are empty where not evaluated.

        Wall time is kept in memory only so that the file is reproducible.
        """
        with open(path, "w", newline="") as f:
            for line in header_lines:
                f.write(f"# {line}\n")
            w = csv.writer(f)
            w.writerow(self.COLUMNS)
            for r in self.records:
                row = asdict(r)
                w.writerow([
                    "" if isinstance(row[c], float) and math.isnan(row[c]) else
                    (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in self.COLUMNS
                ])


def estimate_gradient(spec: NetworkSpec, params: ParameterSet, x, targets,
                      config: TrainConfig, rng: np.random.Generator):
    """Batch-averaged gradient estimate and the mean loss seen while computing it."""
    if config.estimator == "glr":
        return glr_gradient_averaged(
            spec, params, x, targets, config.replicates, rng, loss=config.loss,
            block_size=config.block_size, workers=config.workers, with_loss=True,
        )
    if spec.noise is None:
        trace = forward_deterministic(spec, params, x)
    else:
        trace = forward(spec, params, x, rng)
    loss = get_loss(config.loss)(trace.output, targets)
    grads = bp_gradient(trace, spec, params, cross_entropy_grad(trace.output, targets))
    return grads, float(np.mean(loss))


def sa_step(spec: NetworkSpec, params: ParameterSet, x, targets, config: TrainConfig,
            rng: np.random.Generator) -> ParameterSet:
    """One update ``theta - lr * G`` on a mini-batch; ``params`` is left untouched."""
    if len(np.asarray(x)) == 0:
        raise ConfigurationError("empty batch")
    grads, _ = estimate_gradient(spec, params, x, targets, config, rng)
    return params.step(grads, config.learning_rate)


def evaluate(spec: NetworkSpec, params: ParameterSet, samples: SampleSet,
             votes: int = 0, rng: np.random.Generator | None = None) -> float:
    """Fraction of samples whose predicted class matches the label.

    Prediction is noise-free by default. With ``votes > 0`` each sample gets
    that many noisy forward passes and the most frequent arg-max wins.
    """
    if len(samples) == 0:
        raise UndefinedMetricError("accuracy of an empty set is undefined")
    if votes <= 0:
        pred = np.argmax(forward_deterministic(spec, params, samples.x).output, axis=-1)
    else:
        if rng is None:
            raise ConfigurationError("noisy evaluation needs a random stream")
        out = forward(spec, params, samples.x, rng, replicates=votes).output
        counts = np.zeros((len(samples), out.shape[-1]), dtype=np.int64)
        for k in range(votes):
            np.add.at(counts, (np.arange(len(samples)), np.argmax(out[k], axis=-1)), 1)
        pred = np.argmax(counts, axis=-1)
    return float(np.mean(pred == samples.labels))


def validation_metrics(spec: NetworkSpec, params: ParameterSet, samples: SampleSet,
                       loss: str) -> tuple[float, float]:
    out = forward_deterministic(spec, params, samples.x).output
    val_loss = float(np.mean(get_loss(loss)(out, samples.targets)))
    val_acc = float(np.mean(np.argmax(out, axis=-1) == samples.labels))
    return val_loss, val_acc


def iterations_per_epoch(n_train: int, batch_size: int) -> int:
    return math.ceil(n_train / batch_size)


def train(spec: NetworkSpec, train_set: SampleSet, config: TrainConfig,
          validation: SampleSet | None = None, params: ParameterSet | None = None,
          on_epoch: Callable[[int, ParameterSet], None] | None = None):
    """Run the SA loop and return ``(params, log)``.

    Every random choice (initial weights, per-epoch shuffles, per-iteration
    noise) comes from its own stream derived from ``config.seed``, so the
    result is a function of ``(spec, train_set, config)`` alone.
    """
    config.validate(spec)
    if params is None:
        params = init_params(spec, seeding.derive(config.seed, seeding.INIT))
    params.check(spec)
    n = len(train_set)
    targets = train_set.targets
    per_epoch = iterations_per_epoch(n, config.batch_size)
    total = config.epochs * per_epoch
    if config.max_iterations is not None:
        total = min(total, config.max_iterations)

    log = TrainingLog()
    start = time.perf_counter()
    it = 0
    for epoch in range(config.epochs):
        if it >= total:
            break
        order = seeding.derive(config.seed, seeding.SHUFFLE, epoch).permutation(n)
        for k in range(per_epoch):
            if it >= total:
                break
            idx = order[k * config.batch_size:(k + 1) * config.batch_size]
            rng = seeding.derive(config.seed, seeding.STEP, it)
            grads, batch_loss = estimate_gradient(
                spec, params, train_set.x[idx], targets[idx], config, rng
            )
            params = params.step(grads, config.learning_rate)
            it += 1
            record = LogRecord(it, epoch, batch_loss)
            epoch_end = k == per_epoch - 1 or it == total
            periodic = config.eval_every is not None and it % config.eval_every == 0
            if validation is not None and len(validation) and (epoch_end or periodic):
                record.val_loss, record.val_acc = validation_metrics(
                    spec, params, validation, config.loss
                )
            record.wall_time = time.perf_counter() - start
            log.append(record)
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params, log


def two_blobs(n: int, seed: int, distance: float = 10.0, std: float = 0.5) -> SampleSet:
    """Two isotropic Gaussian blobs in 2-D, class 0 at the origin and class 1 at
    ``distance * (1, 1) / sqrt(2)``.

    The pair is deliberately not symmetric about the origin, which an
    even activation such as ``|v|`` could not separate without bias.
    Labels alternate so that any prefix is balanced.
    """
    rng = seeding.derive(seed, seeding.DATA)
    labels = np.arange(n) % 2
    centre = distance / np.sqrt(2) * np.array([1.0, 1.0])
    pts = rng.normal(0.0, std, size=(n, 2)) + labels[:, None] * centre
    x = np.concatenate([np.ones((n, 1)), pts], axis=1)
    return SampleSet(x, labels, n_classes=2)
