"""Pool scoring for active learning: random, entropy, pCTC and EGL.

Higher scores mean more informative. EGL scores an utterance by the
expected (squared) parameter-gradient norm over its most probable
labelings under the current model.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ctc
from .decode import DEFAULT_TOP1_WIDTH, beam_search, default_beam_width, top1
from .errors import ConfigError, InputError, ParseError, RepresentabilityError
from .seqmodel import ModelParams, Utterance, forward, log_softmax_rows, loss_and_grad, softmax_rows

log = logging.getLogger(__name__)

KINDS = ("random", "entropy", "pctc", "egl")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    k: int = 100
    squared: bool = True
    renormalize_topk: bool = False
    length_normalize: bool = False
    seed: int = 0
    beam_width: int | None = None
    greedy_top1: bool = False
    layers: tuple | None = None  # restrict EGL gradients to these weight blocks

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; choose from {KINDS}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.beam_width is not None and self.beam_width < self.k:
            raise ConfigError("beam_width must be >= k")

    @property
    def width(self) -> int:
        return self.beam_width if self.beam_width is not None else default_beam_width(self.k)

    @property
    def name(self) -> str:
        """Kind plus a suffix per non-default EGL option, so sweeps get distinct names."""
        if self.kind != "egl":
            return self.kind
        parts = ["egl"]
        if not self.squared:
            parts.append("unsquared")
        if self.k != 100:
            parts.append(f"k{self.k}")
        if self.renormalize_topk:
            parts.append("renorm")
        if self.length_normalize:
            parts.append("pertime")
        if self.layers:
            parts.append("+".join(self.layers))
        return "_".join(parts)

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        d = dict(d)
        if d.get("layers") is not None:
            d["layers"] = tuple(d["layers"])
        return cls(**d)


@dataclass
class ScoreRecord:
    utterance_id: str
    score: float
    strategy: str
    rank: int = 0
    normalized_rank: float = 0.0


def score_entropy(params: ModelParams, utt: Utterance) -> float:
    """Mean per-frame entropy (nats) of the output distributions."""
    logp = log_softmax_rows(forward(params, utt))
    p = np.exp(logp)
    per_frame = -np.sum(np.where(p > 0, p * logp, 0.0), axis=1)
    return float(per_frame.mean())


def score_pctc(params: ModelParams, utt: Utterance, beam_width: int = DEFAULT_TOP1_WIDTH, greedy: bool = False) -> float:
    """CTC loss of the model's own best labeling, divided by the frame count."""
    logp = log_softmax_rows(forward(params, utt))
    best = top1(np.exp(logp), beam_width=beam_width, greedy=greedy)
    loss = ctc.ctc_from_log_probs(logp, best.label).neg_log_lik
    return max(loss, 0.0) / utt.n_frames


def egl_terms(params: ModelParams, utt: Utterance, k: int, beam_width: int, mask=None):
    """(p(y|x), gradient) for each of the top-``k`` labelings, most probable first."""
    probs = softmax_rows(forward(params, utt))
    out = []
    for hyp in beam_search(probs, beam_width, k):
        try:
            loss, grad = loss_and_grad(params, utt, hyp.label)
        except RepresentabilityError as exc:
            log.warning("skipping hypothesis for %s: %s", utt.id, exc)
            continue
        if mask is not None:
            grad = grad[mask]
        out.append((math.exp(-loss), grad))
    return out


def score_egl(params: ModelParams, utt: Utterance, cfg: StrategyConfig) -> float:
    """Expected gradient length over the ``cfg.k`` most probable labelings."""
    mask = params.layer_mask(cfg.layers) if cfg.layers else None
    terms = egl_terms(params, utt, cfg.k, cfg.width, mask)
    weights = [p for p, _ in terms]
    if cfg.renormalize_topk:
        z = sum(weights)
        weights = [w / z for w in weights] if z > 0 else weights
    score = 0.0
    for w, (_, g) in zip(weights, terms):
        sq = float(g @ g)
        score += w * (sq if cfg.squared else math.sqrt(sq))
    if cfg.length_normalize:
        score /= utt.n_frames
    return score


def random_score(seed: int, utterance_id: str) -> float:
    """Uniform value in [0, 1) that depends only on (seed, id)."""
    h = hashlib.blake2b(f"{seed}:{utterance_id}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0**64


def rank_records(ids: Sequence[str], scores: Sequence[float], strategy: str) -> list[ScoreRecord]:
    """Attach ranks (1 = highest score, ties by ascending id); output keeps input order."""
    if len(set(ids)) != len(ids):
        raise InputError("utterance ids must be unique")
    n = len(ids)
    order = sorted(range(n), key=lambda i: (-scores[i], ids[i]))
    recs = [ScoreRecord(ids[i], float(scores[i]), strategy) for i in range(n)]
    for r, i in enumerate(order, start=1):
        recs[i].rank = r
        recs[i].normalized_rank = (n - r) / (n - 1) if n > 1 else 1.0
    return recs


def score_random(pool: Sequence[Utterance], seed: int) -> list[ScoreRecord]:
    if not pool:
        raise InputError("empty pool")
    ids = [u.id for u in pool]
    return rank_records(ids, [random_score(seed, i) for i in ids], "random")


def score_utterance(params: ModelParams, utt: Utterance, cfg: StrategyConfig) -> float:
    if cfg.kind == "random":
        return random_score(cfg.seed, utt.id)
    if cfg.kind == "entropy":
        return score_entropy(params, utt)
    if cfg.kind == "pctc":
        return score_pctc(params, utt, beam_width=cfg.beam_width or DEFAULT_TOP1_WIDTH, greedy=cfg.greedy_top1)
    return score_egl(params, utt, cfg)


def score_pool(params: ModelParams, pool: Sequence[Utterance], cfg: StrategyConfig) -> list[ScoreRecord]:
    """Score and rank every utterance; each score depends only on its own utterance."""
    if not pool:
        raise InputError("empty pool")
    scores = [score_utterance(params, u, cfg) for u in pool]
    return rank_records([u.id for u in pool], scores, cfg.name)


def select_batch(records: Sequence[ScoreRecord], fraction: float) -> list[str]:
    """Ids of the ceil(fraction * N) highest-scoring records (ties by ascending id)."""
    if not records:
        raise InputError("no records to select from")
    if not 0 < fraction <= 1:
        raise InputError("fraction must lie in (0, 1]")
    n = len(records)
    # guard against 0.1 * 2000 = 200.00000000000003 style round-up
    m = min(n, math.ceil(round(fraction * n, 9)))
    ranked = sorted(records, key=lambda r: (-r.score, r.utterance_id))
    return [r.utterance_id for r in ranked[:m]]


def dump_scores(path, records: Sequence[ScoreRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.utterance_id, "strategy": r.strategy, "score": r.score,
                                 "rank": r.rank, "normalized_rank": r.normalized_rank}) + "\n")


def load_scores(path) -> list[ScoreRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(ScoreRecord(str(d["id"]), float(d["score"]), str(d["strategy"]),
                                   int(d["rank"]), float(d["normalized_rank"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(path), lineno, str(exc)) from None
    return out
