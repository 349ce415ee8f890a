"""Error rates, test-set evaluation and rank agreement between strategies."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .ctc import ctc_from_log_probs
from .decode import DEFAULT_TOP1_WIDTH, top1
from .errors import InputError, RepresentabilityError
from .seqmodel import Alphabet, ModelParams, Utterance, forward, log_softmax_rows


class UndefinedMetricError(InputError):
    """Error rate requested over references with zero total length."""


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insertion, deletion and substitution costs."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def words(text: str) -> list[str]:
    return text.split(" ") if text else []


def _error_rate(refs, hyps, tokenize) -> float:
    if len(refs) != len(hyps):
        raise InputError("refs and hyps differ in length")
    errors = sum(edit_distance(tokenize(r), tokenize(h)) for r, h in zip(refs, hyps))
    total = sum(len(tokenize(r)) for r in refs)
    if total == 0:
        raise UndefinedMetricError("total reference length is zero")
    return errors / total


def cer(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """Corpus character error rate; spaces count as characters."""
    return _error_rate(refs, hyps, list)


def wer(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """Corpus word error rate with tokens split on single spaces."""
    return _error_rate(refs, hyps, words)


@dataclass
class EvalReport:
    mean_ctc: float
    cer: float
    wer: float
    n_utts: int
    n_excluded: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate(params: ModelParams, test_set: Sequence[Utterance], alphabet: Alphabet,
             beam_width: int = DEFAULT_TOP1_WIDTH) -> EvalReport:
    """Mean reference CTC loss plus corpus CER/WER of top-1 beam decodes.

    Utterances whose reference cannot be emitted in their frame count are
    excluded from all three figures and counted in ``n_excluded``.
    """
    losses, refs, hyps = [], [], []
    excluded = 0
    for utt in test_set:
        if utt.reference is None:
            raise InputError(f"test utterance {utt.id!r} has no reference")
        logp = log_softmax_rows(forward(params, utt))
        try:
            loss = ctc_from_log_probs(logp, alphabet.encode(utt.reference)).neg_log_lik
        except RepresentabilityError:
            excluded += 1
            continue
        losses.append(loss)
        refs.append(utt.reference)
        hyps.append(alphabet.decode(top1(np.exp(logp), beam_width=beam_width).label))
    if not refs:
        raise UndefinedMetricError("no evaluable utterances")
    return EvalReport(float(np.mean(losses)), cer(refs, hyps), wer(refs, hyps), len(refs), excluded)


@dataclass
class RankAgreement:
    spearman_rho: float
    kendall_tau: float
    scatter: list = field(repr=False)  # (normalized_rank_a, normalized_rank_b) per id
    ids: list = field(repr=False, default_factory=list)

    def write_scatter_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank_a", "rank_b"])
            w.writerows([repr(a), repr(b)] for a, b in self.scatter)


def normalized_ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks mapped to [0, 1] with 1 for the highest value."""
    r = stats.rankdata(values, method="average")
    n = len(values)
    return (r - 1) / (n - 1)


def rank_agreement(scores_a: dict, scores_b: dict) -> RankAgreement:
    """Spearman rho and Kendall tau-b between two {id: score} mappings."""
    if set(scores_a) != set(scores_b):
        raise InputError("score sets cover different utterance ids")
    ids = sorted(scores_a)
    if len(ids) < 2:
        raise InputError("rank agreement needs at least two utterances")
    a = np.array([scores_a[i] for i in ids], dtype=np.float64)
    b = np.array([scores_b[i] for i in ids], dtype=np.float64)
    rho = stats.spearmanr(a, b).statistic
    tau = stats.kendalltau(a, b, variant="b").statistic
    na, nb = normalized_ranks(a), normalized_ranks(b)
    return RankAgreement(float(rho), float(tau), list(zip(na.tolist(), nb.tolist())), ids)
