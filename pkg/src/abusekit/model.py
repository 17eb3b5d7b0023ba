"""CNN-BiLSTM network assembly, training step, prediction, checkpoints.

The trunk is shared by every classification head: embedding lookup, spatial
dropout, width-2 convolution, bidirectional LSTM over all timesteps, a
per-timestep dense layer, global average pooling, and a final dropout.
Tasks with one label use a single softmax head; the two-label task attaches
two heads to the same pooled vector and averages their losses.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .embeddings import EmbeddingTable
from .errors import (ConfigurationError, CorruptionError, NumericError,
                     ShapeError)
from .layers import (AdamConfig, BiLstm, Conv1D, Dense, Dropout,
                     EmbeddingLookup, GlobalAveragePool1D, SpatialDropout1D,
                     adam_step, softmax, softmax_cross_entropy)

__all__ = [
    "ModelConfig",
    "Network",
    "build_model",
    "labels_from_probs",
    "load_checkpoint",
    "predict",
    "save_checkpoint",
    "train_step",
]

_MANIFEST_NAME = "manifest.json"
_WEIGHTS_NAME = "weights.bin"


@dataclass
class ModelConfig:
    seq_len: int = 100
    embed_dim: int = 300
    conv_filters: int = 64
    conv_kernel: int = 2
    lstm_units: int = 128
    lstm_dropout: float = 0.1
    lstm_recurrent_dropout: float = 0.1
    dense_units: int = 128
    spatial_dropout_rate: float = 0.2
    final_dropout_rate: float = 0.1
    num_heads: int = 1
    classes_per_head: int = 2
    conv_activation: str = "relu"
    dense_activation: str = "relu"
    pool_before_dense: bool = False
    seed: int = 0

    def validate(self) -> None:
        for name in ("seq_len", "embed_dim", "conv_filters", "conv_kernel",
                     "lstm_units", "dense_units", "classes_per_head"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("lstm_dropout", "lstm_recurrent_dropout",
                     "spatial_dropout_rate", "final_dropout_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigurationError(f"{name}={rate} outside [0, 1)")
        if self.num_heads not in (1, 2):
            raise ConfigurationError(f"num_heads must be 1 or 2, got {self.num_heads}")
        if self.seq_len < self.conv_kernel:
            raise ConfigurationError("seq_len shorter than conv kernel")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config


class Network:
    """Built model: layer stack, head layers, and the frozen embedding."""

    def __init__(self, config: ModelConfig, embedding: EmbeddingLookup,
                 rng: np.random.Generator, coverage: float = 0.0,
                 dtype=np.float32):
        config.validate()
        self.config = config
        self.coverage = coverage
        self.dtype = dtype
        self.embedding = embedding
        self.spatial_dropout = SpatialDropout1D(config.spatial_dropout_rate)
        self.conv = Conv1D(config.embed_dim, config.conv_filters,
                           config.conv_kernel, rng,
                           activation=config.conv_activation, dtype=dtype)
        self.bilstm = BiLstm(config.conv_filters, config.lstm_units, rng,
                             dropout=config.lstm_dropout,
                             recurrent_dropout=config.lstm_recurrent_dropout,
                             dtype=dtype)
        self.dense = Dense(2 * config.lstm_units, config.dense_units, rng,
                           activation=config.dense_activation, dtype=dtype)
        self.pool = GlobalAveragePool1D()
        self.final_dropout = Dropout(config.final_dropout_rate)
        self.heads = [
            Dense(config.dense_units, config.classes_per_head, rng,
                  activation="linear", dtype=dtype)
            for _ in range(config.num_heads)
        ]
        for h, head in enumerate(self.heads):
            head.weight.name = f"head{h}.weight"
            head.bias.name = f"head{h}.bias"

    def parameters(self):
        params = (self.conv.parameters() + self.bilstm.parameters()
                  + self.dense.parameters())
        for head in self.heads:
            params += head.parameters()
        return params

    def trunk_forward(self, batch: np.ndarray, train_mode: bool = False,
                      rng: np.random.Generator | None = None) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.ndim != 2 or batch.shape[1] != self.config.seq_len:
            raise ShapeError(
                f"expected batch of shape (B, {self.config.seq_len}), got {batch.shape}")
        x = self.embedding.forward(batch)
        if x.dtype != self.dtype:
            x = x.astype(self.dtype)
        x = self.spatial_dropout.forward(x, train_mode, rng)
        x = self.conv.forward(x)
        x = self.bilstm.forward(x, train_mode, rng)
        if self.config.pool_before_dense:
            x = self.pool.forward(x)
            x = self.dense.forward(x)
        else:
            x = self.dense.forward(x)
            x = self.pool.forward(x)
        x = self.final_dropout.forward(x, train_mode, rng)
        if __debug__:
            assert x.shape == (batch.shape[0], self.config.dense_units)
        return x

    def trunk_backward(self, grad: np.ndarray) -> None:
        grad = self.final_dropout.backward(grad)
        if self.config.pool_before_dense:
            grad = self.dense.backward(grad)
            grad = self.pool.backward(grad)
        else:
            grad = self.pool.backward(grad)
            grad = self.dense.backward(grad)
        grad = self.bilstm.backward(grad)
        grad = self.conv.backward(grad)
        grad = self.spatial_dropout.backward(grad)
        self.embedding.backward(grad)

    def head_logits(self, shared: np.ndarray) -> list[np.ndarray]:
        return [head.forward(shared) for head in self.heads]

    def forward(self, batch: np.ndarray, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
        """Per-head softmax probability matrices, each B x classes."""
        shared = self.trunk_forward(batch, train_mode, rng)
        return [softmax(logits) for logits in self.head_logits(shared)]


def build_model(config: ModelConfig, table: EmbeddingTable,
                rng: np.random.Generator | None = None,
                dtype=np.float32) -> Network:
    """Initialize a network; deterministic given config.seed."""
    config.validate()
    if table.matrix.shape[1] != config.embed_dim:
        raise ConfigurationError(
            f"embedding table dim {table.matrix.shape[1]} != config {config.embed_dim}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    embedding = EmbeddingLookup(table.matrix, dtype=dtype)
    return Network(config, embedding, rng, coverage=table.coverage, dtype=dtype)


def train_step(network: Network, batch: np.ndarray,
               onehot_labels: list[np.ndarray],
               optimizer: AdamConfig = AdamConfig(),
               rng: np.random.Generator | None = None) -> float:
    """One forward/backward/Adam update; returns the averaged head loss."""
    if len(onehot_labels) != len(network.heads):
        raise ConfigurationError(
            f"{len(network.heads)} heads need {len(network.heads)} label arrays, "
            f"got {len(onehot_labels)}")
    shared = network.trunk_forward(batch, train_mode=True, rng=rng)
    num_heads = len(network.heads)
    total_loss = 0.0
    grad_shared = np.zeros_like(shared)
    for head, target in zip(network.heads, onehot_labels):
        logits = head.forward(shared)
        loss, grad_logits = softmax_cross_entropy(logits, target)
        total_loss += loss / num_heads
        grad_shared += head.backward(grad_logits / num_heads)
    if not np.isfinite(total_loss):
        raise NumericError(f"non-finite training loss {total_loss}")
    network.trunk_backward(grad_shared)
    for param in network.parameters():
        adam_step(param, optimizer)
    return total_loss


def labels_from_probs(probs: np.ndarray) -> np.ndarray:
    """Argmax with ties resolved to the HIGHEST tied class index.

    For two classes an exact (0.5, 0.5) row yields 1, matching the
    annotation tie rule.
    """
    classes = probs.shape[1]
    return classes - 1 - np.argmax(probs[:, ::-1], axis=1)


def predict(network: Network, sequences: np.ndarray,
            batch_size: int = 256) -> list[np.ndarray]:
    """Per-head hard labels in eval mode."""
    sequences = np.asarray(sequences)
    outs = [[] for _ in network.heads]
    for start in range(0, len(sequences), batch_size):
        probs = network.forward(sequences[start:start + batch_size])
        for h, p in enumerate(probs):
            outs[h].append(labels_from_probs(p))
    return [np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
            for chunks in outs]


def _named_arrays(network: Network) -> list[tuple[str, np.ndarray, bool]]:
    entries = [("embedding.matrix", network.embedding.matrix, False)]
    names = ["conv.kernels", "conv.bias",
             "bilstm.fwd.W", "bilstm.fwd.U", "bilstm.fwd.b",
             "bilstm.bwd.W", "bilstm.bwd.U", "bilstm.bwd.b",
             "dense.weight", "dense.bias"]
    params = (network.conv.parameters() + network.bilstm.parameters()
              + network.dense.parameters())
    for h, head in enumerate(network.heads):
        names += [f"head{h}.weight", f"head{h}.bias"]
        params += head.parameters()
    entries += [(name, p.value, True) for name, p in zip(names, params)]
    return entries


def save_checkpoint(network: Network, directory) -> None:
    """Write manifest.json plus weights.bin (all arrays as f32 LE).

    The frozen embedding matrix is stored too, so a checkpoint reloads
    without the original vector file.
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name, value, trainable in _named_arrays(network):
        blob = np.ascontiguousarray(value, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(value.shape),
                        "offset": offset, "trainable": trainable})
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": 1,
        "config": network.config.to_dict(),
        "coverage": network.coverage,
        "entries": entries,
        "total_bytes": offset,
    }
    with open(os.path.join(directory, _MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, _WEIGHTS_NAME), "wb") as fh:
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(directory, expected: dict | None = None) -> Network:
    """Rebuild a network from a checkpoint directory.

    expected, when given, is a partial config dict checked against the
    stored config (mismatch raises a configuration error).
    """
    manifest_path = os.path.join(directory, _MANIFEST_NAME)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise CorruptionError(f"missing {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{manifest_path}: invalid JSON ({exc})") from None

    config = ModelConfig.from_dict(manifest["config"])
    if expected:
        for key, want in expected.items():
            have = getattr(config, key, None)
            if have != want:
                raise ConfigurationError(
                    f"checkpoint has {key}={have}, expected {want}")

    raw = open(os.path.join(directory, _WEIGHTS_NAME), "rb").read()
    if len(raw) != manifest["total_bytes"]:
        raise CorruptionError(
            f"weights.bin holds {len(raw)} bytes, manifest says {manifest['total_bytes']}")

    arrays = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape))
        chunk = raw[entry["offset"]:entry["offset"] + nbytes]
        if len(chunk) != nbytes:
            raise CorruptionError(f"entry {entry['name']} extends past file end")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()

    if "embedding.matrix" not in arrays:
        raise CorruptionError("checkpoint lacks the embedding matrix")
    if arrays["embedding.matrix"].shape[1] != config.embed_dim:
        raise CorruptionError("stored embedding dimension contradicts config")

    table = EmbeddingTable(matrix=arrays["embedding.matrix"],
                           coverage=manifest.get("coverage", 0.0))
    network = build_model(config, table, rng=np.random.default_rng(config.seed))
    for name, value, trainable in _named_arrays(network):
        if name == "embedding.matrix":
            continue
        stored = arrays.get(name)
        if stored is None:
            raise CorruptionError(f"checkpoint lacks parameter {name}")
        if stored.shape != value.shape:
            raise CorruptionError(
                f"parameter {name}: stored shape {stored.shape} != built {value.shape}")
        value[...] = stored
    return network
