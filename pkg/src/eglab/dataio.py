"""Synthetic utterances, dataset splits, the labeling oracle and file formats.

Each symbol is rendered as a run of noisy copies of a fixed embedding.
A configurable share of the corpus consists of short "silence"
utterances: pure noise whose reference is either empty or a single filler
symbol, so the same kind of input carries an ambiguous label.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .seqmodel import Alphabet, Utterance


@dataclass(frozen=True)
class GenConfig:
    alphabet_size: int = 8
    feature_dim: int = 8
    min_len: int = 2
    max_len: int = 8
    min_frames: int = 2  # frames per symbol
    max_frames: int = 4
    noise_sigma: float = 0.45
    silence_fraction: float = 0.1
    silence_sigma: float | None = None  # defaults to noise_sigma
    filler_prob: float = 0.5
    filler_symbol: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.alphabet_size < 1 or self.feature_dim < 1:
            raise ConfigError("alphabet_size and feature_dim must be positive")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError("need 1 <= min_len <= max_len")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ConfigError("need 1 <= min_frames <= max_frames")
        if self.noise_sigma < 0 or (self.silence_sigma is not None and self.silence_sigma < 0):
            raise ConfigError("noise levels must be nonnegative")
        if not 0 <= self.silence_fraction <= 1 or not 0 <= self.filler_prob <= 1:
            raise ConfigError("silence_fraction and filler_prob must lie in [0, 1]")
        if not 1 <= self.filler_symbol <= self.alphabet_size:
            raise ConfigError("filler_symbol must index into the alphabet")

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet.default(self.alphabet_size)

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


def symbol_embeddings(config: GenConfig) -> np.ndarray:
    """(V, F) unit-norm embedding per symbol: basis vectors when V <= F."""
    V, F = config.alphabet_size, config.feature_dim
    if V <= F:
        return np.eye(V, F)
    rng = np.random.default_rng([config.seed, 0xE3B])
    E = rng.normal(size=(V, F))
    return E / np.linalg.norm(E, axis=1, keepdims=True)


def _draw_label(rng: np.random.Generator, config: GenConfig) -> list[int]:
    # Adjacent repeats are excluded: a repeated symbol renders as one longer
    # run of identical frames, which no frame classifier can split.
    V = config.alphabet_size
    L = int(rng.integers(config.min_len, config.max_len + 1))
    label = [int(rng.integers(1, V + 1))]
    for _ in range(L - 1):
        if V == 1:
            break
        nxt = int(rng.integers(1, V))
        label.append(nxt if nxt < label[-1] else nxt + 1)
    return label


def generate(config: GenConfig, n: int, prefix: str = "u", start: int = 0) -> list[Utterance]:
    """``n`` utterances, a deterministic function of ``config`` (seed included)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(config.seed)
    E = symbol_embeddings(config)
    alphabet = config.alphabet
    sil_sigma = config.noise_sigma if config.silence_sigma is None else config.silence_sigma
    out = []
    for i in range(n):
        uid = f"{prefix}{start + i:06d}"
        if rng.random() < config.silence_fraction:
            T = int(rng.integers(config.min_frames, config.max_frames + 1))
            frames = sil_sigma * rng.normal(size=(T, config.feature_dim))
            ref = alphabet.decode([config.filler_symbol]) if rng.random() < config.filler_prob else ""
            out.append(Utterance(frames, ref, uid, silence=True))
            continue
        label = _draw_label(rng, config)
        durations = rng.integers(config.min_frames, config.max_frames + 1, size=len(label))
        clean = np.repeat(E[np.array(label) - 1], durations, axis=0)
        frames = clean + config.noise_sigma * rng.normal(size=clean.shape)
        out.append(Utterance(frames, alphabet.decode(label), uid))
    return out


def hide_reference(utt: Utterance) -> Utterance:
    return dataclasses.replace(utt, reference=None)


class LabelOracle:
    """Reveals held-back pool references and bills each distinct id once."""

    def __init__(self, pool: Sequence[Utterance]):
        self._refs = {u.id: u for u in pool}
        self.queried: set[str] = set()

    @property
    def budget(self) -> int:
        return len(self.queried)

    def query(self, ids: Iterable[str]) -> list[tuple[Utterance, str]]:
        ids = list(ids)
        unknown = [i for i in ids if i not in self._refs]
        if unknown:
            raise InputError(f"unknown utterance ids: {unknown[:5]}")
        self.queried.update(ids)
        return [(self._refs[i], self._refs[i].reference) for i in ids]

    def fork(self) -> "LabelOracle":
        """Fresh oracle over the same pool with an empty budget."""
        return LabelOracle(self._refs.values())

    def inspect(self) -> list[Utterance]:
        """Unbilled view of the labeled pool, for reporting only."""
        return list(self._refs.values())

    def ledger(self) -> dict:
        return {"queried_ids": sorted(self.queried), "total": self.budget}

    def save_ledger(self, path) -> None:
        Path(path).write_text(json.dumps(self.ledger()) + "\n")


def label_oracle(pool: Sequence[Utterance], ids: Iterable[str], oracle: LabelOracle | None = None):
    """One-shot form of :class:`LabelOracle` for callers that do not track budget."""
    return (oracle or LabelOracle(pool)).query(ids)


@dataclass
class DatasetSplit:
    labeled_seed: list
    unlabeled_pool: list  # references hidden; see ``oracle``
    test: list
    oracle: LabelOracle = field(repr=False, default=None)


def make_splits(config: GenConfig, n_seed: int, n_pool: int, n_test: int) -> DatasetSplit:
    data = generate(config, n_seed + n_pool + n_test)
    seed_set = data[:n_seed]
    pool = data[n_seed : n_seed + n_pool]
    test = data[n_seed + n_pool :]
    return DatasetSplit(seed_set, [hide_reference(u) for u in pool], test, LabelOracle(pool))


def save_dataset(path, data: Sequence[Utterance]) -> None:
    with open(path, "w") as fh:
        for u in data:
            rec = {"id": u.id, "frames": u.features.tolist(), "reference": u.reference}
            if u.silence:
                rec["silence"] = True
            fh.write(json.dumps(rec) + "\n")


def load_dataset(path) -> list[Utterance]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                ref = d["reference"]
                if ref is not None and not isinstance(ref, str):
                    raise ValueError("reference must be a string or null")
                out.append(Utterance(np.array(d["frames"], dtype=np.float64), ref, str(d["id"]),
                                     bool(d.get("silence", False))))
            except (ValueError, KeyError, TypeError, InputError) as exc:
                raise ParseError(str(path), lineno, str(exc)) from None
    return out
