"""Per-parameter classifiers: one small MLP per head over flattened 53 x Z grids.

Each head is an independent single-hidden-layer network (ReLU hidden, softmax
output) trained with mini-batch SGD with momentum on cross-entropy. Training
is fully deterministic given the seed: init and shuffling both draw from one
seeded generator, and parameters are float32 end to end so a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import HEAD_ORDER, HEADS_BY_NAME, Corpus, DatasetBundle, HeadSpec
from .errors import (
    ConfigHashMismatch,
    DimensionMismatch,
    IoFailure,
    MissingHead,
    NumericalDivergence,
    SchemaVersionMismatch,
)
from .features import FeatureGrid

HEADS_MAGIC = b"FTMH"
HEADS_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 300
    batch_size: int = 8
    seed: int = 0
    hidden_width: int = 128
    weight_decay: float = 0.0
    momentum: float = 0.9
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MlpParams:
    """Weights for [input, hidden, classes]; float32, finite by construction."""

    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: sizes[i] x sizes[i+1]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, sizes: tuple[int, ...], rng: np.random.Generator) -> "MlpParams":
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)).astype(np.float32))
            biases.append(np.zeros(fan_out, dtype=np.float32))
        return cls(sizes=tuple(sizes), weights=weights, biases=biases)

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and hidden activations for a batch (n x input)."""
    hidden = np.maximum(0.0, x @ params.weights[0] + params.biases[0])
    probs = softmax(hidden @ params.weights[1] + params.biases[1])
    return probs, hidden


def backward(params: MlpParams, x: np.ndarray, labels: np.ndarray,
             probs: np.ndarray, hidden: np.ndarray):
    """Cross-entropy gradients for one batch, averaged over the batch."""
    n = x.shape[0]
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grad_w1 = hidden.T @ delta
    grad_b1 = delta.sum(axis=0)
    back = delta @ params.weights[1].T
    back[hidden <= 0.0] = 0.0
    grad_w0 = x.T @ back
    grad_b0 = back.sum(axis=0)
    return [grad_w0, grad_w1], [grad_b0, grad_b1]


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    eps = np.finfo(probs.dtype).tiny
    return float(-np.log(np.maximum(probs[np.arange(len(labels)), labels], eps)).mean())


@dataclass
class TrainedHead:
    head: HeadSpec
    params: MlpParams
    config_hash: str
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    loss_history: list[float] = field(default_factory=list)

    def predict_probs(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float32)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.shape[1] != self.params.sizes[0]:
            raise DimensionMismatch(
                f"head {self.head.name}: rows have width {rows.shape[1]}, "
                f"expected {self.params.sizes[0]}")
        return forward(self.params, rows)[0]


def _accuracy(params: MlpParams, data: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    probs, _ = forward(params, data)
    return float((probs.argmax(axis=1) == labels).mean())


def train_head(bundle: DatasetBundle, cfg: TrainConfig) -> TrainedHead:
    """Fit one head on its dataset bundle; deterministic for a fixed seed."""
    x = np.asarray(bundle.train_data, dtype=np.float32)
    y = np.asarray(bundle.train_labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DimensionMismatch(f"head {bundle.head.name}: empty or non-2D train data")

    rng = np.random.default_rng(cfg.seed)
    params = MlpParams.init((x.shape[1], cfg.hidden_width, bundle.head.class_count), rng)
    velocity_w = [np.zeros_like(w) for w in params.weights]
    velocity_b = [np.zeros_like(b) for b in params.biases]

    n = x.shape[0]
    loss_history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bx, by = x[idx], y[idx]
            probs, hidden = forward(params, bx)
            total += cross_entropy(probs, by) * len(idx)
            grads_w, grads_b = backward(params, bx, by, probs, hidden)
            lr = np.float32(cfg.learning_rate)
            mom = np.float32(cfg.momentum)
            wd = np.float32(cfg.weight_decay)
            for i in range(2):
                velocity_w[i] = mom * velocity_w[i] - lr * (grads_w[i] + wd * params.weights[i])
                velocity_b[i] = mom * velocity_b[i] - lr * grads_b[i]
                params.weights[i] += velocity_w[i]
                params.biases[i] += velocity_b[i]
        epoch_loss = total / n
        if not np.isfinite(epoch_loss) or not all(
                np.isfinite(w).all() for w in params.weights):
            raise NumericalDivergence(epoch)
        loss_history.append(epoch_loss)

    return TrainedHead(
        head=bundle.head,
        params=params,
        config_hash=bundle.cfg_hash,
        train_accuracy=_accuracy(params, x, y),
        test_accuracy=_accuracy(params, np.asarray(bundle.test_data, dtype=np.float32),
                                np.asarray(bundle.test_labels, dtype=np.int64)),
        loss_history=loss_history,
    )


def train_all_heads(corpus: Corpus, cfg: TrainConfig) -> dict[str, TrainedHead]:
    """Train the full head table; each head gets a seed offset by its table index."""
    heads = {}
    for i, name in enumerate(HEAD_ORDER):
        bundle = corpus.build_dataset(name)
        head_cfg = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + i})
        heads[name] = train_head(bundle, head_cfg)
    return heads


@dataclass
class Prediction:
    """Seven per-head distributions in head-table order."""

    probs: dict[str, np.ndarray]

    def vectors(self) -> list[np.ndarray]:
        return [self.probs[name] for name in HEAD_ORDER]

    def argmax(self, name: str) -> int:
        return int(self.probs[name].argmax())

    def confidence(self, name: str) -> float:
        return float(self.probs[name].max())

    def to_json_dict(self) -> dict:
        return {name: [float(p) for p in self.probs[name]] for name in HEAD_ORDER}


def predict(heads: dict[str, TrainedHead], grid: FeatureGrid) -> Prediction:
    """Run every head on one grid; refuses partial head sets and config drift."""
    missing = [name for name in HEAD_ORDER if name not in heads]
    if missing:
        raise MissingHead(", ".join(missing))
    hashes = {heads[name].config_hash for name in HEAD_ORDER}
    if len(hashes) > 1:
        raise ConfigHashMismatch("heads were trained under different feature configs")
    if grid.cfg_hash and hashes != {grid.cfg_hash}:
        raise ConfigHashMismatch("grid feature config differs from training config")
    row = grid.flat()
    return Prediction(probs={name: heads[name].predict_probs(row)[0]
                             for name in HEAD_ORDER})


def evaluate(head: TrainedHead, bundle: DatasetBundle) -> dict:
    """Accuracy and confusion counts (rows true, cols predicted) on the test split."""
    if bundle.head.name != head.head.name:
        raise DimensionMismatch(
            f"bundle is for {bundle.head.name}, head is {head.head.name}")
    data = np.asarray(bundle.test_data, dtype=np.float32)
    labels = np.asarray(bundle.test_labels, dtype=np.int64)
    c = head.head.class_count
    confusion = np.zeros((c, c), dtype=np.int64)
    if len(labels):
        predicted = head.predict_probs(data).argmax(axis=1)
        for t, p in zip(labels, predicted):
            confusion[t, p] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    return {"accuracy": accuracy, "confusion": confusion}


# --- serialization ---------------------------------------------------------

def save_heads(heads: dict[str, TrainedHead], path: str) -> None:
    """Write all heads to one little-endian binary bundle."""
    names = [n for n in HEAD_ORDER if n in heads] + \
            [n for n in heads if n not in HEAD_ORDER]
    hashes = {heads[n].config_hash for n in names}
    if len(hashes) != 1:
        raise ConfigHashMismatch("cannot mix feature configs in one head bundle")
    digest = bytes.fromhex(next(iter(hashes)))
    if len(digest) != 32:
        raise IoFailure("config hash must be a 32-byte hex digest")

    out = bytearray()
    out += struct.pack("<4sH", HEADS_MAGIC, HEADS_VERSION)
    out += digest
    out += struct.pack("<B", len(names))
    for name in names:
        th = heads[name]
        encoded = name.encode()
        out += struct.pack("<B", len(encoded)) + encoded
        out += struct.pack("<B", len(th.params.sizes))
        out += struct.pack(f"<{len(th.params.sizes)}I", *th.params.sizes)
        for w, b in zip(th.params.weights, th.params.biases):
            out += np.ascontiguousarray(w, dtype="<f4").tobytes()
            out += np.ascontiguousarray(b, dtype="<f4").tobytes()
    from .corpus import _atomic_write
    _atomic_write(path, bytes(out))


def load_heads(path: str) -> dict[str, TrainedHead]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    view = memoryview(blob)
    if len(blob) < 39 or bytes(view[:4]) != HEADS_MAGIC:
        raise SchemaVersionMismatch("not a head bundle (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != HEADS_VERSION:
        raise SchemaVersionMismatch(f"head bundle version {version}")
    config_hash = bytes(view[6:38]).hex()
    pos = 38
    (count,) = struct.unpack_from("<B", blob, pos)
    pos += 1

    heads: dict[str, TrainedHead] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        name = bytes(view[pos:pos + name_len]).decode()
        pos += name_len
        (n_sizes,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, pos)
        pos += 4 * n_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            w = np.frombuffer(blob, dtype="<f4", count=fan_in * fan_out, offset=pos)
            pos += 4 * fan_in * fan_out
            b = np.frombuffer(blob, dtype="<f4", count=fan_out, offset=pos)
            pos += 4 * fan_out
            weights.append(w.reshape(fan_in, fan_out).copy())
            biases.append(b.copy())
        spec = HEADS_BY_NAME.get(name)
        if spec is None:
            spec = HeadSpec(name, sizes[-1], "unknown", "utterance")
        elif spec.class_count != sizes[-1]:
            raise SchemaVersionMismatch(
                f"head {name} has {sizes[-1]} outputs, table says {spec.class_count}")
        heads[name] = TrainedHead(head=spec, params=MlpParams(tuple(sizes), weights, biases),
                                  config_hash=config_hash)
    return heads
