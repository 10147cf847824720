"""
neural_core.py

This module is the from-scratch neural engine: architecture descriptions, shape and
parameter bookkeeping, the layer kinds of the standard deep network and the
convolutional network (dropout, fully connected, 1-D convolution, max pooling,
softmax, with ReLU activations) and a checkpoint format.

Key Classes:
- LayerSpec: One layer of an architecture, declared as data.
- NetworkSpec: Ordered layer list with validation and the `dnn` / `cnn` presets.
- Parameters: Weight and bias arrays keyed by layer index.
- Network: Batched forward and backward passes over a NetworkSpec.

Key Functions:
- shape_infer(spec, input_len): (rows, cols) of every layer output.
- param_count(spec): Trainable parameters per layer and in total.
- dense_forward / dense_backward, conv1d_forward / conv1d_backward,
  maxpool1d_forward / maxpool1d_backward, relu / relu_backward, softmax,
  dropout_forward / dropout_backward: the layer operations.
- save_checkpoint(path, network, metadata), load_checkpoint(path).

Dependencies:
- numpy
- json, struct, logging
- errors

Usage:
Activations are float32 by default; pass dtype=np.float64 for gradient checks.
Every layer op accepts a single example or a batch with a leading batch axis.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import CheckpointError, NonFiniteError, ShapeError

INPUT = "input"
DROPOUT = "dropout"
FULLY_CONNECTED = "fully_connected"
CONVOLUTION = "convolution"
POOLING = "pooling"
SOFTMAX = "softmax"
LAYER_KINDS = (INPUT, DROPOUT, FULLY_CONNECTED, CONVOLUTION, POOLING, SOFTMAX)

# which optional fields each kind carries
_KIND_FIELDS = {
    INPUT: {"out_units"},
    DROPOUT: {"dropout_probability"},
    FULLY_CONNECTED: {"out_units"},
    CONVOLUTION: {"size", "stride", "out_channels"},
    POOLING: {"size", "stride"},
    SOFTMAX: set(),
}
_OPTIONAL_FIELDS = ("size", "stride", "out_channels", "out_units", "dropout_probability")


@dataclass(frozen=True)
class LayerSpec:
    """
    One layer of an architecture.

    Attributes:
        kind (str): input, dropout, fully_connected, convolution, pooling or softmax.
        size (int): Kernel width (convolution) or pool width (pooling).
        stride (int): Convolution stride (always 1) or pool stride.
        out_channels (int): Number of convolution kernels.
        out_units (int): Input length (input) or output units (fully_connected).
        dropout_probability (float): Drop probability in [0, 1).
    """
    kind: str
    size: int = None
    stride: int = None
    out_channels: int = None
    out_units: int = None
    dropout_probability: float = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind '{self.kind}'")
        wanted = _KIND_FIELDS[self.kind]
        for name in _OPTIONAL_FIELDS:
            present = getattr(self, name) is not None
            if present != (name in wanted):
                state = "requires" if name in wanted else "does not take"
                raise ValueError(f"{self.kind} layer {state} '{name}'")
        for name in ("size", "stride", "out_channels", "out_units"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{self.kind} layer: {name} must be >= 1, got {value}")
        if self.kind == CONVOLUTION and self.stride != 1:
            raise ValueError("only stride-1 convolutions are supported")
        if self.dropout_probability is not None and not 0.0 <= self.dropout_probability < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {self.dropout_probability}")

    @classmethod
    def input(cls, length):
        return cls(INPUT, out_units=length)

    @classmethod
    def dropout(cls, probability):
        return cls(DROPOUT, dropout_probability=probability)

    @classmethod
    def dense(cls, units):
        return cls(FULLY_CONNECTED, out_units=units)

    @classmethod
    def conv(cls, channels, kernel):
        return cls(CONVOLUTION, size=kernel, stride=1, out_channels=channels)

    @classmethod
    def pool(cls, size, stride):
        return cls(POOLING, size=size, stride=stride)

    @classmethod
    def softmax(cls):
        return cls(SOFTMAX)

    @property
    def has_parameters(self):
        return self.kind in (FULLY_CONNECTED, CONVOLUTION)

    def to_dict(self):
        data = {"kind": self.kind}
        for name in _OPTIONAL_FIELDS:
            if getattr(self, name) is not None:
                data[name] = getattr(self, name)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class NetworkSpec:
    """
    Declarative architecture.

    The first layer is an input layer, the last two are the class layer
    (fully_connected with one unit per class) and softmax.
    """
    layers: tuple
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 3:
            raise ValueError("a network needs at least input, fully_connected and softmax layers")
        if self.layers[0].kind != INPUT:
            raise ValueError("first layer must be an input layer")
        if any(layer.kind == INPUT for layer in self.layers[1:]):
            raise ValueError("only the first layer may be an input layer")
        if self.layers[-1].kind != SOFTMAX or self.layers[-2].kind != FULLY_CONNECTED:
            raise ValueError("last two layers must be fully_connected then softmax")
        if any(layer.kind == SOFTMAX for layer in self.layers[:-1]):
            raise ValueError("softmax is only allowed as the last layer")
        shape_infer(self)

    @property
    def input_length(self):
        return self.layers[0].out_units

    @property
    def num_classes(self):
        return self.layers[-2].out_units

    @property
    def output_layer(self):
        """Index of the class layer, the one fully connected layer without ReLU."""
        return len(self.layers) - 2

    def to_dict(self):
        return {"name": self.name, "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(LayerSpec.from_dict(layer) for layer in data["layers"]),
                   data.get("name", "custom"))

    @classmethod
    def from_json_file(cls, path):
        with open(path, "r", encoding="utf-8") as file:
            return cls.from_dict(json.load(file))


def dnn_spec(num_classes, input_length=2400):
    """Standard deep network: five 384-unit hidden layers with dropout 0.2 / 0.5."""
    layers = [LayerSpec.input(input_length), LayerSpec.dropout(0.2)]
    for _ in range(5):
        layers += [LayerSpec.dense(384), LayerSpec.dropout(0.5)]
    layers += [LayerSpec.dense(num_classes), LayerSpec.softmax()]
    return NetworkSpec(tuple(layers), "dnn")


def cnn_spec(num_classes, input_length=2400):
    """Convolutional network: four conv(9)/maxpool(4, 4) stages, then three dense layers."""
    layers = [LayerSpec.input(input_length), LayerSpec.dropout(0.2)]
    for channels in (48, 96, 192, 384):
        layers += [LayerSpec.conv(channels, 9), LayerSpec.pool(4, 4)]
    layers += [LayerSpec.dense(384), LayerSpec.dropout(0.5),
               LayerSpec.dense(384), LayerSpec.dropout(0.5),
               LayerSpec.dense(num_classes), LayerSpec.softmax()]
    return NetworkSpec(tuple(layers), "cnn")


PRESETS = {"dnn": dnn_spec, "cnn": cnn_spec}


def shape_infer(spec, input_len=None):
    """
    Output (rows, cols) of every layer.

    Args:
        spec (NetworkSpec): Architecture.
        input_len (int): Input length; defaults to the input layer's length.

    Returns:
        list[tuple[int, int]]: One (channels, length) pair per layer.

    Raises:
        ShapeError: A layer would produce fewer than one column.
    """
    rows, cols = 1, input_len if input_len is not None else spec.layers[0].out_units
    shapes = []
    for index, layer in enumerate(spec.layers):
        if layer.kind == CONVOLUTION:
            rows, cols = layer.out_channels, cols - layer.size + 1
        elif layer.kind == POOLING:
            cols = (cols - layer.size) // layer.stride + 1 if cols >= layer.size else 0
        elif layer.kind == FULLY_CONNECTED:
            rows, cols = 1, layer.out_units
        if cols < 1:
            raise ShapeError(f"{layer.kind} (size {layer.size}) leaves no output columns", index)
        shapes.append((rows, cols))
    return shapes


def param_count(spec):
    """
    Trainable parameter counts.

    Returns:
        tuple[list[int], int]: Count per layer and the total.
    """
    shapes = shape_infer(spec)
    counts = []
    for index, layer in enumerate(spec.layers):
        in_rows, in_cols = shapes[index - 1] if index else shapes[0]
        if layer.kind == FULLY_CONNECTED:
            counts.append(in_rows * in_cols * layer.out_units + layer.out_units)
        elif layer.kind == CONVOLUTION:
            counts.append(layer.out_channels * layer.size * in_rows + layer.out_channels)
        else:
            counts.append(0)
    return counts, sum(counts)


def parameter_shapes(spec):
    """Expected (weight shape, bias shape) per parameterised layer index."""
    shapes = shape_infer(spec)
    expected = {}
    for index, layer in enumerate(spec.layers):
        in_rows, in_cols = shapes[index - 1] if index else shapes[0]
        if layer.kind == FULLY_CONNECTED:
            expected[index] = ((layer.out_units, in_rows * in_cols), (layer.out_units,))
        elif layer.kind == CONVOLUTION:
            expected[index] = ((layer.out_channels, in_rows, layer.size), (layer.out_channels,))
    return expected


@dataclass
class Parameters:
    """Weights and biases keyed by layer index."""
    weights: dict = field(default_factory=dict)
    biases: dict = field(default_factory=dict)

    def layer_indices(self):
        return sorted(self.weights)

    def tensors(self):
        """(layer index, 'W' | 'b', array) in layer order."""
        for index in self.layer_indices():
            yield index, "W", self.weights[index]
            yield index, "b", self.biases[index]

    def copy(self):
        return Parameters({i: w.copy() for i, w in self.weights.items()},
                          {i: b.copy() for i, b in self.biases.items()})

    def zeros_like(self):
        return Parameters({i: np.zeros_like(w) for i, w in self.weights.items()},
                          {i: np.zeros_like(b) for i, b in self.biases.items()})

    def validate(self, spec):
        expected = parameter_shapes(spec)
        if set(expected) != set(self.weights) or set(expected) != set(self.biases):
            raise ShapeError(f"parameters cover layers {sorted(self.weights)}, "
                             f"spec needs {sorted(expected)}")
        for index, (w_shape, b_shape) in expected.items():
            if self.weights[index].shape != w_shape:
                raise ShapeError(f"weight shape {self.weights[index].shape}, expected {w_shape}", index)
            if self.biases[index].shape != b_shape:
                raise ShapeError(f"bias shape {self.biases[index].shape}, expected {b_shape}", index)
            if not (np.all(np.isfinite(self.weights[index])) and np.all(np.isfinite(self.biases[index]))):
                raise NonFiniteError(f"layer {index}: non-finite parameter")


# --- layer operations ---

def dense_forward(x, W, b):
    """
    Fully connected layer y = W x + b.

    Args:
        x (np.ndarray): (in,) for one example or (batch, ...) flattened per example.
        W (np.ndarray): (out, in).
        b (np.ndarray): (out,).

    Returns:
        tuple: (y, cache) with y of shape (out,) or (batch, out).
    """
    x = np.asarray(x)
    single = x.ndim == 1
    flat = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    if flat.shape[1] != W.shape[1]:
        raise ShapeError(f"dense input has {flat.shape[1]} values, weights expect {W.shape[1]}")
    y = flat @ W.T + b
    return (y[0] if single else y), (flat, W, x.shape)


def dense_backward(grad_out, cache):
    """Returns (grad_x, grad_W, grad_b) for `dense_forward`."""
    flat, W, in_shape = cache
    grad = np.asarray(grad_out).reshape(flat.shape[0], -1)
    grad_W = grad.T @ flat
    grad_b = grad.sum(axis=0)
    grad_x = (grad @ W).reshape(in_shape)
    return grad_x, grad_W, grad_b


def conv1d_forward(x, K, b):
    """
    Valid, stride-1, cross-correlation convolution.

    y[c, i] = b[c] + sum_{c', j} x[c', i + j] K[c, c', j]

    Args:
        x (np.ndarray): (C_in, L) or (batch, C_in, L).
        K (np.ndarray): (C_out, C_in, k).
        b (np.ndarray): (C_out,).

    Returns:
        tuple: (y, cache) with y of shape (C_out, L - k + 1), batched if x was.
    """
    x = np.asarray(x)
    single = x.ndim == 2
    xb = x[None] if single else x
    _, channels, length = xb.shape
    out_channels, in_channels, width = K.shape
    if in_channels != channels:
        raise ShapeError(f"conv input has {channels} channels, kernels expect {in_channels}")
    if width > length:
        raise ShapeError(f"kernel width {width} exceeds input length {length}")
    out_len = length - width + 1
    y = np.zeros((xb.shape[0], out_channels, out_len), dtype=np.result_type(xb, K))
    for j in range(width):
        y += np.matmul(K[:, :, j], xb[:, :, j:j + out_len])
    y += b[None, :, None]
    return (y[0] if single else y), (xb, K, single)


def conv1d_backward(grad_out, cache):
    """Returns (grad_x, grad_K, grad_b) for `conv1d_forward`."""
    xb, K, single = cache
    grad = np.asarray(grad_out)
    if single:
        grad = grad[None]
    width = K.shape[2]
    out_len = grad.shape[2]
    grad_x = np.zeros(xb.shape, dtype=np.result_type(xb, grad))
    grad_K = np.empty(K.shape, dtype=np.result_type(K, grad))
    for j in range(width):
        window = xb[:, :, j:j + out_len]
        grad_K[:, :, j] = np.tensordot(grad, window, axes=([0, 2], [0, 2]))
        grad_x[:, :, j:j + out_len] += np.matmul(K[:, :, j].T, grad)
    grad_b = grad.sum(axis=(0, 2))
    return (grad_x[0] if single else grad_x), grad_K, grad_b


def maxpool1d_forward(x, size, stride):
    """
    Max pooling without padding; trailing samples that do not fill a window are dropped.

    Args:
        x (np.ndarray): (C, L) or (batch, C, L).
        size (int): Window width.
        stride (int): Hop between windows.

    Returns:
        tuple: (y, cache) with y of shape (C, (L - size) // stride + 1).
    """
    x = np.asarray(x)
    single = x.ndim == 2
    xb = x[None] if single else x
    length = xb.shape[2]
    if size > length:
        raise ShapeError(f"pool width {size} exceeds input length {length}")
    windows = sliding_window_view(xb, size, axis=2)[:, :, ::stride]
    # argmax returns the first maximum, which fixes tie-breaking
    arg = windows.argmax(axis=3)
    y = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    return (y[0] if single else y), (arg, xb.shape, size, stride, single)


def maxpool1d_backward(grad_out, cache):
    """Routes each output gradient to the position of its window maximum."""
    arg, in_shape, size, stride, single = cache
    grad = np.asarray(grad_out)
    if single:
        grad = grad[None]
    positions = arg + (np.arange(arg.shape[2]) * stride)[None, None, :]
    grad_x = np.zeros(in_shape, dtype=grad.dtype)
    if stride >= size:
        np.put_along_axis(grad_x, positions, grad, axis=2)
    else:
        batch, channel = np.indices(positions.shape)[:2]
        np.add.at(grad_x, (batch, channel, positions), grad)
    return grad_x[0] if single else grad_x


def relu(x):
    """max(0, x) elementwise."""
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    """Gradient of relu at `x`; the subgradient at 0 is 0."""
    return grad_out * (x > 0)


def softmax(x):
    """Softmax over the last axis, computed with the row maximum subtracted."""
    x = np.asarray(x)
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def dropout_forward(x, p, rng=None, training=True):
    """
    Inverted dropout.

    Args:
        x (np.ndarray): Activations.
        p (float): Drop probability in [0, 1).
        rng (np.random.Generator): Source of the mask; needed when training with p > 0.
        training (bool): Inference mode is the identity.

    Returns:
        tuple: (y, mask) with survivors scaled by 1 / (1 - p).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = np.asarray(x)
    if not training or p == 0.0:
        return x, np.ones(x.shape, dtype=bool)
    mask = rng.random(x.shape) >= p
    return x * mask * x.dtype.type(1.0 / (1.0 - p)), mask


def dropout_backward(grad_out, mask, p):
    if p == 0.0:
        return grad_out
    return grad_out * mask * grad_out.dtype.type(1.0 / (1.0 - p))


# --- network ---

class Network:
    """
    A NetworkSpec with its parameters.

    ReLU follows every convolution and every fully connected layer except the class
    layer, whose output feeds softmax.

    Args:
        spec (NetworkSpec): Architecture.
        params (Parameters): Weights; validated against the spec.
        dtype: Activation dtype (float32 unless gradients are being checked).
        debug (bool): Check activations for NaN/Inf after every layer.
    """

    def __init__(self, spec, params, dtype=np.float32, debug=False):
        params.validate(spec)
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.params = Parameters({i: w.astype(self.dtype, copy=False) for i, w in params.weights.items()},
                                 {i: b.astype(self.dtype, copy=False) for i, b in params.biases.items()})
        self.debug = debug

    @property
    def num_classes(self):
        return self.spec.num_classes

    def _check(self, h, index, layer):
        if self.debug and not np.all(np.isfinite(h)):
            raise NonFiniteError(f"layer {index} ({layer.kind}) produced non-finite activations")

    def forward(self, x, training=False, rng=None):
        """
        Run the network.

        Args:
            x (np.ndarray): (batch, input_length) or (input_length,).
            training (bool): Enables dropout.
            rng (np.random.Generator): Dropout mask source.

        Returns:
            tuple: (probs, logits, tape); tape feeds `backward`.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None]
        if x.shape[1] != self.spec.input_length:
            raise ShapeError(f"input has {x.shape[1]} values, network expects {self.spec.input_length}", 0)
        h = x[:, None, :]
        tape = []
        logits = None
        for index, layer in enumerate(self.spec.layers):
            if layer.kind == DROPOUT:
                h, mask = dropout_forward(h, layer.dropout_probability, rng, training)
                # (mask, effective drop probability)
                tape.append((index, (mask, layer.dropout_probability if training else 0.0)))
            elif layer.kind == FULLY_CONNECTED:
                h, cache = dense_forward(h, self.params.weights[index], self.params.biases[index])
                # activations stay (batch, rows, cols) so conv and pool can follow a dense layer
                h = h[:, None, :]
                pre = None
                if index != self.spec.output_layer:
                    pre, h = h, relu(h)
                tape.append((index, (cache, pre)))
            elif layer.kind == CONVOLUTION:
                pre, cache = conv1d_forward(h, self.params.weights[index], self.params.biases[index])
                h = relu(pre)
                tape.append((index, (cache, pre)))
            elif layer.kind == POOLING:
                h, cache = maxpool1d_forward(h, layer.size, layer.stride)
                tape.append((index, cache))
            elif layer.kind == SOFTMAX:
                logits = h.reshape(h.shape[0], -1)
                h = softmax(logits)
            self._check(h, index, layer)
        return h, logits, tape

    def backward(self, tape, grad_logits):
        """
        Back-propagate a gradient with respect to the logits.

        Returns:
            Parameters: Gradients with the same layout as `self.params`.
        """
        grads = Parameters()
        grad = np.asarray(grad_logits, dtype=self.dtype)
        for index, cache in reversed(tape):
            layer = self.spec.layers[index]
            if layer.kind == DROPOUT:
                mask, p = cache
                grad = dropout_backward(grad, mask, p)
            elif layer.kind == FULLY_CONNECTED:
                dense_cache, pre = cache
                if pre is not None:
                    grad = relu_backward(grad, pre)
                grad, grads.weights[index], grads.biases[index] = dense_backward(grad, dense_cache)
            elif layer.kind == CONVOLUTION:
                conv_cache, pre = cache
                grad = relu_backward(grad, pre)
                grad, grads.weights[index], grads.biases[index] = conv1d_backward(grad, conv_cache)
            elif layer.kind == POOLING:
                grad = maxpool1d_backward(grad, cache)
        return grads

    def predict_proba(self, x, batch_size=1024):
        """Inference-mode class probabilities, (n, num_classes)."""
        x = np.asarray(x)
        if x.shape[0] == 0:
            return np.zeros((0, self.num_classes), dtype=self.dtype)
        chunks = [self.forward(x[start:start + batch_size])[0]
                  for start in range(0, x.shape[0], batch_size)]
        return np.concatenate(chunks, axis=0)


# --- checkpoints ---

CHECKPOINT_MAGIC = b"AERCKPT\n"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, network, metadata=None):
    """
    Write a checkpoint.

    Layout: the 8-byte magic, u32 version, u32 header length, a UTF-8 JSON header
    (version, network spec, tensor table with layer/name/shape, metadata), then
    little-endian float32 tensors in the order of the tensor table.
    """
    tensors = list(network.params.tensors())
    header = {
        "version": CHECKPOINT_VERSION,
        "network": network.spec.to_dict(),
        "tensors": [{"layer": index, "name": name, "shape": list(array.shape)}
                    for index, name, array in tensors],
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, indent=2, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
    parts += [np.ascontiguousarray(array, dtype="<f4").tobytes() for _, _, array in tensors]
    Path(path).write_bytes(b"".join(parts))
    logging.info("Checkpoint written: %s", path)


def load_checkpoint(path, dtype=np.float32):
    """
    Read a checkpoint.

    Returns:
        tuple: (Network, metadata dict).

    Raises:
        CheckpointError: Bad magic/version, truncated payload or shapes that do not
        match the stored spec.
    """
    data = Path(path).read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + 8
    if len(data) < prefix or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", data, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[prefix:prefix + header_len].decode("utf-8"))
        spec = NetworkSpec.from_dict(header["network"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: unreadable header ({e})") from e

    expected = parameter_shapes(spec)
    params = Parameters()
    offset = prefix + header_len
    for entry in header["tensors"]:
        index, name, shape = int(entry["layer"]), entry["name"], tuple(entry["shape"])
        if index not in expected:
            raise CheckpointError(f"{path}: tensor for layer {index}, which has no parameters")
        want = expected[index][0 if name == "W" else 1]
        if shape != want:
            raise CheckpointError(f"{path}: layer {index} {name} has shape {shape}, spec needs {want}")
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise CheckpointError(f"{path}: truncated tensor data at layer {index} {name}")
        array = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        target = params.weights if name == "W" else params.biases
        target[index] = array.astype(dtype)
    try:
        network = Network(spec, params, dtype=dtype)
    except ShapeError as e:
        raise CheckpointError(f"{path}: {e}") from e
    return network, header.get("metadata", {})
