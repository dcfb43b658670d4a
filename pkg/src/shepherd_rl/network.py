"""Fully-connected Q-network on plain numpy.

Float64 multilayer perceptron with ReLU hidden layers and a linear output
head, trained by minibatch gradient descent on the squared TD error of the
selected action only.  Includes an Adam optimizer with bias correction and a
self-describing binary checkpoint format with an integrity digest.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"SHEPQNET"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Raised when a checkpoint file is corrupt, truncated or incompatible."""


@dataclass
class QNetwork:
    """Layer parameters: weights[l] has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "QNetwork":
        return QNetwork(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_network(layer_dims: tuple[int, ...], rng: np.random.Generator) -> QNetwork:
    """He-initialized network: W ~ N(0, 2/fan_in), zero biases.

    Draws one standard-normal block per layer, in layer order, so a given rng
    state always produces the same parameters.
    """
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ValueError(f"need at least two positive layer dims, got {layer_dims}")
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return QNetwork(weights=weights, biases=biases)


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Action values for one observation (d,) or a batch (B, d)."""
    single = x.ndim == 1
    a = x[None, :] if single else x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w + b
        if i < last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def backward_mse(
    net: QNetwork, states: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Loss and parameter gradients of the selected-action squared error.

    L = (1/B) * sum_b (targets[b] - Q(states[b])[actions[b]])^2, with the
    gradient flowing only through the selected output of each row.
    """
    batch = states.shape[0]
    last = len(net.weights) - 1

    activations = [states]
    a = states
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w + b
        if i < last:
            a = np.maximum(a, 0.0)
        activations.append(a)

    q_selected = activations[-1][np.arange(batch), actions]
    residual = q_selected - targets
    loss = float(np.mean(residual * residual))

    delta = np.zeros_like(activations[-1])
    delta[np.arange(batch), actions] = (2.0 / batch) * residual

    grads_w: list[np.ndarray] = [np.empty(0)] * len(net.weights)
    grads_b: list[np.ndarray] = [np.empty(0)] * len(net.biases)
    for i in range(last, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = np.sum(delta, axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (activations[i] > 0.0)
    return loss, grads_w, grads_b


@dataclass
class Adam:
    """Adam with bias correction, one moment pair per parameter tensor."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: list[np.ndarray] = field(default_factory=list)
    _v: list[np.ndarray] = field(default_factory=list)

    def update(
        self, net: QNetwork, grads_w: list[np.ndarray], grads_b: list[np.ndarray]
    ) -> None:
        params = net.weights + net.biases
        grads = grads_w + grads_b
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        correct1 = 1.0 - self.beta1 ** self.step_count
        correct2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def sync(dst: QNetwork, src: QNetwork) -> None:
    """Copy all parameters of src into dst in place."""
    for dw, sw in zip(dst.weights, src.weights):
        dw[...] = sw
    for db, sb in zip(dst.biases, src.biases):
        db[...] = sb


def save_checkpoint(path: str | Path, net: QNetwork, meta: dict | None = None) -> None:
    """Write net to a single self-describing binary file.

    Layout: magic, format version (u32 LE), length-prefixed JSON header with
    the layer dims and caller metadata, then per layer the weight matrix
    (row-major float64 LE) followed by the bias vector, and finally a sha256
    digest of everything before it.
    """
    header = {"layer_dims": list(net.layer_dims), "meta": meta or {}}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for w, b in zip(net.weights, net.biases):
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(
    path: str | Path, expected_dims: tuple[int, ...] | None = None
) -> tuple[QNetwork, dict]:
    """Read a checkpoint back, verifying integrity and optionally the dims."""
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint ({len(raw)} bytes)")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: integrity digest mismatch")
    offset = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", body, offset)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset += 8
    try:
        header = json.loads(body[offset : offset + header_len].decode("utf-8"))
        layer_dims = tuple(int(d) for d in header["layer_dims"])
        meta = dict(header["meta"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc
    offset += header_len
    if expected_dims is not None and layer_dims != tuple(expected_dims):
        raise CheckpointError(
            f"{path}: layer dims {layer_dims} do not match expected {tuple(expected_dims)}"
        )
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        w_bytes = fan_in * fan_out * 8
        b_bytes = fan_out * 8
        if offset + w_bytes + b_bytes > len(body):
            raise CheckpointError(f"{path}: parameter payload shorter than header claims")
        weights.append(
            np.frombuffer(body, dtype="<f8", count=fan_in * fan_out, offset=offset)
            .reshape(fan_in, fan_out)
            .copy()
        )
        offset += w_bytes
        biases.append(np.frombuffer(body, dtype="<f8", count=fan_out, offset=offset).copy())
        offset += b_bytes
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after parameter payload")
    return QNetwork(weights=weights, biases=biases), meta
