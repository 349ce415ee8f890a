"""A small frame classifier trained with CTC.

Two architectures share one flat parameter vector:

* ``hidden_dim == 0``: logits_t = W x_t + b
* ``hidden_dim > 0``: h_t = tanh(Wx x_t + Wh h_{t-1} + bh), h_0 = 0,
  logits_t = Wo h_t + bo

Gradients are analytic (backpropagation through time for the recurrent
case).
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ctc
from .errors import ConfigError, InputError, ParseError, TrainingError

CHECKPOINT_SCHEMA = 1


@dataclass(frozen=True)
class Alphabet:
    """Output symbols; class 0 is the CTC blank, symbol i maps to class i+1."""

    symbols: tuple

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ConfigError("alphabet symbols must be unique")
        if any(len(s) != 1 for s in self.symbols):
            raise ConfigError("alphabet symbols must be single characters")

    @classmethod
    def default(cls, size: int) -> "Alphabet":
        """Lowercase letters with a space as the last symbol (so WER is meaningful)."""
        if not 1 <= size <= 27:
            raise ConfigError("default alphabet supports 1..27 symbols")
        if size == 1:
            return cls(("a",))
        return cls(tuple(string.ascii_lowercase[: size - 1]) + (" ",))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def n_classes(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> tuple:
        index = {s: i + 1 for i, s in enumerate(self.symbols)}
        try:
            return tuple(index[ch] for ch in text)
        except KeyError as exc:
            raise InputError(f"symbol {exc.args[0]!r} not in alphabet") from None

    def decode(self, label: Sequence[int]) -> str:
        return "".join(self.symbols[k - 1] for k in label)


@dataclass(frozen=True)
class ModelShape:
    feature_dim: int
    hidden_dim: int
    n_classes: int

    @property
    def n_params(self) -> int:
        F, H, C = self.feature_dim, self.hidden_dim, self.n_classes
        if H == 0:
            return C * (F + 1)
        return H * F + H * H + H + C * H + C


@dataclass
class ModelParams:
    values: np.ndarray
    shape: ModelShape

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.shape.n_params:
            raise InputError(
                f"parameter vector has {self.values.size} entries, shape needs {self.shape.n_params}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InputError("parameters must be finite")

    def copy(self) -> "ModelParams":
        return ModelParams(self.values.copy(), self.shape)

    def unpack(self) -> dict:
        """Views into ``values`` keyed by weight name."""
        F, H, C = self.shape.feature_dim, self.shape.hidden_dim, self.shape.n_classes
        v = self.values
        if H == 0:
            return {"W": v[: C * F].reshape(C, F), "b": v[C * F :]}
        out, i = {}, 0
        for name, shp in (("Wx", (H, F)), ("Wh", (H, H)), ("bh", (H,)), ("Wo", (C, H)), ("bo", (C,))):
            n = int(np.prod(shp))
            out[name] = v[i : i + n].reshape(shp)
            i += n
        return out

    def layer_mask(self, layers: Sequence[str]) -> np.ndarray:
        """Boolean mask over ``values`` selecting the named weight blocks."""
        mask = ModelParams(np.zeros_like(self.values), self.shape)
        blocks = mask.unpack()
        unknown = set(layers) - set(blocks)
        if unknown:
            raise InputError(f"unknown layers {sorted(unknown)}; have {sorted(blocks)}")
        for name in layers:
            blocks[name][...] = 1.0
        return mask.values.astype(bool)


def init_params(shape: ModelShape, seed: int, scale: float = 0.1) -> ModelParams:
    rng = np.random.default_rng(seed)
    return ModelParams(rng.uniform(-scale, scale, size=shape.n_params), shape)


def zero_params(shape: ModelShape) -> ModelParams:
    return ModelParams(np.zeros(shape.n_params), shape)


@dataclass
class Utterance:
    features: np.ndarray  # (T, F)
    reference: str | None = None
    id: str = ""
    silence: bool = False

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        if self.features.shape[0] < 1:
            raise InputError("an utterance needs at least one frame")
        if not np.all(np.isfinite(self.features)):
            raise InputError(f"utterance {self.id!r} has non-finite features")

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


def _check_dims(params: ModelParams, features: np.ndarray) -> None:
    if features.shape[1] != params.shape.feature_dim:
        raise InputError(
            f"feature dim {features.shape[1]} does not match model input dim {params.shape.feature_dim}"
        )


def _features(utt) -> np.ndarray:
    return utt.features if isinstance(utt, Utterance) else np.atleast_2d(np.asarray(utt, dtype=np.float64))


def _recurrent_states(p: dict, X: np.ndarray) -> np.ndarray:
    T = X.shape[0]
    H = p["bh"].shape[0]
    hs = np.zeros((T, H))
    pre = X @ p["Wx"].T + p["bh"]
    h = np.zeros(H)
    for t in range(T):
        h = np.tanh(pre[t] + p["Wh"] @ h)
        hs[t] = h
    return hs


def forward(params: ModelParams, utt) -> np.ndarray:
    """(T, V+1) logit lattice for an utterance (or a raw (T, F) feature matrix)."""
    X = _features(utt)
    _check_dims(params, X)
    p = params.unpack()
    if params.shape.hidden_dim == 0:
        return X @ p["W"].T + p["b"]
    return _recurrent_states(p, X) @ p["Wo"].T + p["bo"]


def log_softmax_rows(lattice: np.ndarray) -> np.ndarray:
    z = lattice - lattice.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_rows(lattice: np.ndarray) -> np.ndarray:
    z = np.exp(lattice - lattice.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def backprop(params: ModelParams, X: np.ndarray, dlogits: np.ndarray, hs: np.ndarray | None = None) -> np.ndarray:
    """Parameter gradient given d(loss)/d(logits)."""
    p = params.unpack()
    if params.shape.hidden_dim == 0:
        return np.concatenate([(dlogits.T @ X).ravel(), dlogits.sum(axis=0)])
    if hs is None:
        hs = _recurrent_states(p, X)
    T, H = hs.shape
    dWo = dlogits.T @ hs
    dbo = dlogits.sum(axis=0)
    dh_out = dlogits @ p["Wo"]
    dpre = np.zeros((T, H))
    carry = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dpre[t] = (dh_out[t] + carry) * (1.0 - hs[t] ** 2)
        carry = p["Wh"].T @ dpre[t]
    h_prev = np.vstack([np.zeros((1, H)), hs[:-1]])
    return np.concatenate(
        [(dpre.T @ X).ravel(), (dpre.T @ h_prev).ravel(), dpre.sum(axis=0), dWo.ravel(), dbo]
    )


def loss_and_grad(params: ModelParams, utt, label: Sequence[int]) -> tuple[float, np.ndarray]:
    """CTC negative log-likelihood of ``label`` and its gradient in parameter space."""
    X = _features(utt)
    _check_dims(params, X)
    ctc.check_representable(label, X.shape[0])
    p = params.unpack()
    hs = None
    if params.shape.hidden_dim == 0:
        logits = X @ p["W"].T + p["b"]
    else:
        hs = _recurrent_states(p, X)
        logits = hs @ p["Wo"].T + p["bo"]
    res = ctc.ctc_from_log_probs(log_softmax_rows(logits), label)
    return res.neg_log_lik, backprop(params, X, res.logit_grad, hs)


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 40
    batch_size: int = 16
    seed: int = 0
    lr_decay: float = 1.0
    # Early stop when the epoch-mean loss improves by less than ``tol``
    # (relative) for ``patience`` consecutive epochs. ``tol=None`` disables.
    tol: float | None = 1e-4
    patience: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("learning_rate > 0, epochs >= 0 and batch_size >= 1 required")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")


def mean_loss(params: ModelParams, data: Sequence[tuple[Utterance, Sequence[int]]]) -> float:
    return float(np.mean([loss_and_grad(params, u, y)[0] for u, y in data]))


def train(
    params: ModelParams,
    data: Sequence[tuple[Utterance, Sequence[int]]],
    config: TrainConfig,
    history: list | None = None,
) -> ModelParams:
    """Minibatch gradient descent on the mean CTC loss over ``(utterance, label)`` pairs.

    Epoch-mean losses are appended to ``history`` if given. The result is a
    deterministic function of the inputs and ``config.seed``.
    """
    params = params.copy()
    if config.epochs == 0 or not data:
        return params
    for utt, label in data:
        ctc.check_representable(label, utt.n_frames)
    rng = np.random.default_rng(config.seed)
    n = len(data)
    lr = config.learning_rate
    prev = None
    stalled = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(params.values)
            for i in batch:
                loss, g = loss_and_grad(params, data[i][0], data[i][1])
                total += loss
                grad += g
            with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
                params.values -= lr * grad / len(batch)
            if not (np.isfinite(total) and np.all(np.isfinite(params.values))):
                raise TrainingError(epoch)
        epoch_loss = total / n
        if history is not None:
            history.append(epoch_loss)
        lr *= config.lr_decay
        if config.tol is not None and prev is not None:
            if (prev - epoch_loss) < config.tol * abs(prev):
                stalled += 1
                if stalled >= config.patience:
                    break
            else:
                stalled = 0
        prev = epoch_loss
    return params


def save_checkpoint(path, params: ModelParams) -> None:
    s = params.shape
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "shape": {"F": s.feature_dim, "H": s.hidden_dim, "V": s.n_classes - 1},
        # json writes float repr, the shortest decimal that round-trips exactly
        "values": [float(v) for v in params.values],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_text())
        shape = ModelShape(int(doc["shape"]["F"]), int(doc["shape"]["H"]), int(doc["shape"]["V"]) + 1)
        if doc.get("schema_version") != CHECKPOINT_SCHEMA:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
        return ModelParams(np.array(doc["values"], dtype=np.float64), shape)
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(str(path), 1, f"bad checkpoint: {exc}") from None
