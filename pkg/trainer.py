"""
trainer.py

This module trains a Network on a FrameSet: mini-batch SGD with classical momentum,
a step learning-rate schedule, softmax cross-entropy loss and a per-neuron max-norm
constraint applied after every update.

Key Classes:
- TrainConfig: Hyperparameters, schedule and seed (`for_preset` gives the dnn/cnn defaults).
- OptimizerState: Momentum velocities plus epoch and step counters.
- FitResult: Trained network, per-epoch history and final optimizer state.

Key Functions:
- cross_entropy(probs, label), batch_cross_entropy(probs, labels)
- softmax_cross_entropy_grad(probs, labels): probs - onehot(labels).
- lr_at(epoch, cfg): Step schedule.
- sgd_momentum_step(params, grads, state, lr, momentum)
- max_norm_project(params, limit), constrained_norms(params)
- glorot_init(shape, rng), init_parameters(spec, rng)
- rng_streams(seed): Independent init / shuffle / dropout generators.
- fit(network, train_set, cfg, ...): The training loop.

Dependencies:
- numpy
- pandas
- neural_core, evaluator, errors

Usage:
    network = Network(spec, init_parameters(spec, rng_streams(cfg.seed)["init"]))
    result = fit(network, train_set, cfg, validation=val_set, metrics_path="metrics.csv")
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DivergenceError
from evaluator import frame_fscore
from neural_core import Parameters, parameter_shapes, save_checkpoint

EPSILON = 1e-12
METRIC_COLUMNS = ["epoch", "lr", "train_loss", "train_frame_fscore", "val_frame_fscore"]
SCHEDULES = ("recurring", "single")

# preset -> (lr_halving_period, epochs)
PRESET_TRAINING = {
    "dnn": (20, 100),
    "cnn": (5, 20),
}


@dataclass
class TrainConfig:
    """
    Training hyperparameters.

    Attributes:
        base_lr (float): Learning rate of the first epochs.
        lr_halving_period (int): Epochs between halvings.
        epochs (int): Number of passes over all training frames.
        batch_size (int): Frames per update; the last batch may be smaller.
        momentum (float): Momentum coefficient in [0, 1).
        max_norm_limit (float): Upper bound on every incoming-weight vector norm.
        seed (int): Seed for initialization, shuffling and dropout.
        schedule (str): 'recurring' halves every period, 'single' halves once.
    """
    base_lr: float = 0.05
    lr_halving_period: int = 20
    epochs: int = 100
    batch_size: int = 256
    momentum: float = 0.9
    max_norm_limit: float = 1.0
    seed: int = 0
    schedule: str = "recurring"

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.max_norm_limit > 0:
            raise ValueError(f"max_norm_limit must be positive, got {self.max_norm_limit}")
        if self.lr_halving_period < 1:
            raise ValueError(f"lr_halving_period must be >= 1, got {self.lr_halving_period}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got '{self.schedule}'")

    @classmethod
    def for_preset(cls, arch, **overrides):
        period, epochs = PRESET_TRAINING[arch]
        values = {"lr_halving_period": period, "epochs": epochs}
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return asdict(self)


@dataclass
class OptimizerState:
    velocities: Parameters
    epoch: int = 0
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(params.zeros_like())


@dataclass
class FitResult:
    network: object
    history: pd.DataFrame
    state: OptimizerState = field(default=None)


def cross_entropy(probs, label):
    """
    -ln(max(probs[label], 1e-12)).

    Raises:
        ValueError: `label` outside 0..len(probs)-1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range for {probs.shape[-1]} classes")
    return float(-np.log(max(probs[label], EPSILON)))


def batch_cross_entropy(probs, labels):
    """Per-example cross-entropy in float64, shape (batch,)."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"labels out of range for {probs.shape[1]} classes")
    picked = probs[np.arange(labels.shape[0]), labels].astype(np.float64)
    return -np.log(np.maximum(picked, EPSILON))


def softmax_cross_entropy_grad(probs, labels):
    """Gradient of the summed cross-entropy with respect to the logits."""
    grad = np.array(probs, copy=True)
    grad[np.arange(grad.shape[0]), labels] -= 1
    return grad


def lr_at(epoch, cfg):
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    halvings = epoch // cfg.lr_halving_period
    if cfg.schedule == "single":
        halvings = min(halvings, 1)
    return cfg.base_lr * 0.5 ** halvings


def sgd_momentum_step(params, grads, state, lr, momentum):
    """
    Classical momentum, in place: v <- momentum * v - lr * g; w <- w + v.

    Returns:
        tuple: (params, state).
    """
    for store, grad_store, velocity_store in ((params.weights, grads.weights, state.velocities.weights),
                                               (params.biases, grads.biases, state.velocities.biases)):
        for index, value in store.items():
            velocity = velocity_store[index]
            velocity *= momentum
            velocity -= lr * grad_store[index]
            value += velocity
    state.step += 1
    return params, state


def _neuron_rows(weight):
    # one row per neuron: dense rows or one flattened (in_channels, k) slice per kernel
    return weight.reshape(weight.shape[0], -1)


def max_norm_project(params, limit=1.0):
    """Rescale every incoming-weight vector whose L2 norm exceeds `limit`; biases are left alone."""
    for index, weight in params.weights.items():
        rows = _neuron_rows(weight)
        norms = np.sqrt(np.sum(rows.astype(np.float64) ** 2, axis=1))
        over = norms > limit
        if np.any(over):
            scale = np.ones_like(norms)
            scale[over] = limit / norms[over]
            params.weights[index] = (rows * scale[:, None].astype(weight.dtype)).reshape(weight.shape)
    return params


def constrained_norms(params):
    """L2 norms of all constrained vectors, concatenated across layers."""
    if not params.weights:
        return np.zeros(0)
    return np.concatenate([np.sqrt(np.sum(_neuron_rows(w).astype(np.float64) ** 2, axis=1))
                           for _, w in sorted(params.weights.items())])


def glorot_init(shape, rng):
    """
    Glorot-uniform weights on [-a, a], a = sqrt(6 / (fan_in + fan_out)).

    Dense shapes are (out, in); convolution shapes are (out_channels, in_channels, k)
    with fan_in = in_channels * k and fan_out = out_channels * k.
    """
    if len(shape) == 2:
        fan_out, fan_in = shape
    elif len(shape) == 3:
        fan_in, fan_out = shape[1] * shape[2], shape[0] * shape[2]
    else:
        raise ValueError(f"cannot derive fan-in/fan-out from shape {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_parameters(spec, rng, dtype=np.float32):
    """Glorot weights and zero biases for every parameterised layer of `spec`."""
    params = Parameters()
    for index, (w_shape, b_shape) in parameter_shapes(spec).items():
        params.weights[index] = glorot_init(w_shape, rng).astype(dtype)
        params.biases[index] = np.zeros(b_shape, dtype=dtype)
    return params


def rng_streams(seed):
    """Independent generators for parameter init, epoch shuffling and dropout masks."""
    init, shuffle, dropout = np.random.SeedSequence(seed).spawn(3)
    return {"init": np.random.default_rng(init),
            "shuffle": np.random.default_rng(shuffle),
            "dropout": np.random.default_rng(dropout)}


def write_history(history, path):
    history.to_csv(path, index=False, float_format="%.10g")


def fit(network, train_set, cfg, validation=None, metrics_path=None, checkpoint_dir=None,
        checkpoint_every=0, checkpoint_metadata=None, step_callback=None, epoch_callback=None):
    """
    Train `network` in place.

    Args:
        network (Network): Initialized network.
        train_set (FrameSet): Training frames; each frame carries its clip's label.
        cfg (TrainConfig): Hyperparameters.
        validation (FrameSet): Optional frames for the per-epoch validation f-score.
        metrics_path (str | Path): CSV rewritten after every epoch.
        checkpoint_dir (str | Path): Directory for periodic checkpoints.
        checkpoint_every (int): Checkpoint interval in epochs; 0 disables.
        checkpoint_metadata (dict): Stored in every checkpoint header.
        step_callback (callable): Called as step_callback(epoch, step, network) after each update.
        epoch_callback (callable): Called with each metrics row (dict).

    Returns:
        FitResult

    Raises:
        DivergenceError: The loss of a batch is NaN or infinite.
    """
    features, labels = train_set.features, train_set.labels
    n = features.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    if features.shape[1] != network.spec.input_length:
        raise ValueError(f"frames have {features.shape[1]} values, network input is "
                         f"{network.spec.input_length}")
    num_classes = network.num_classes
    streams = rng_streams(cfg.seed)
    state = OptimizerState.zeros_like(network.params)
    rows = []
    history = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    logging.info("Training %s on %d frames: %s", network.spec.name, n, cfg.to_dict())

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = streams["shuffle"].permutation(n)
        predictions = np.empty(n, dtype=np.int64)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            probs, _, tape = network.forward(features[batch], training=True, rng=streams["dropout"])
            losses = batch_cross_entropy(probs, labels[batch])
            batch_loss = losses.mean()
            if not np.isfinite(batch_loss):
                logging.error("Loss became %s at epoch %d, step %d", batch_loss, epoch, state.step)
                raise DivergenceError(epoch, state.step, float(batch_loss))
            grad_logits = softmax_cross_entropy_grad(probs, labels[batch]) / batch.shape[0]
            grads = network.backward(tape, grad_logits)
            sgd_momentum_step(network.params, grads, state, lr, cfg.momentum)
            max_norm_project(network.params, cfg.max_norm_limit)
            if step_callback is not None:
                step_callback(epoch, state.step, network)
            loss_sum += losses.sum()
            predictions[batch] = probs.argmax(axis=1)

        row = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": loss_sum / n,
            "train_frame_fscore": frame_fscore(labels, predictions, num_classes),
            "val_frame_fscore": np.nan,
        }
        if validation is not None and validation.num_frames:
            val_pred = network.predict_proba(validation.features).argmax(axis=1)
            row["val_frame_fscore"] = frame_fscore(validation.labels, val_pred, num_classes)
        rows.append(row)
        state.epoch = epoch + 1
        history = pd.DataFrame(rows, columns=METRIC_COLUMNS)
        logging.info("Epoch %d: lr=%g loss=%.6f train_f=%.4f val_f=%.4f", epoch, lr,
                     row["train_loss"], row["train_frame_fscore"], row["val_frame_fscore"])
        if metrics_path is not None:
            write_history(history, metrics_path)
        if epoch_callback is not None:
            epoch_callback(row)
        if checkpoint_dir is not None and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            metadata = dict(checkpoint_metadata or {}, epoch=epoch + 1)
            save_checkpoint(Path(checkpoint_dir) / f"epoch_{epoch + 1:04d}.ckpt", network, metadata)

    if metrics_path is not None and not rows:
        write_history(history, metrics_path)
    return FitResult(network, history, state)
