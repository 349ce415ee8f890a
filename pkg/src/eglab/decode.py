"""Greedy and prefix beam-search decoding of CTC lattices.

The beam search merges paths by collapsed prefix, so each hypothesis
carries the full labeling probability p(y|x) rather than a single path's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .ctc import BLANK, collapse

DEFAULT_TOP1_WIDTH = 16


@dataclass(frozen=True)
class Hypothesis:
    label: tuple
    log_prob: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)


def default_beam_width(k: int) -> int:
    return max(4 * k, 32)


def greedy_decode(probs: np.ndarray) -> tuple:
    """Per-frame argmax (ties to the lower index), then collapse."""
    return collapse(np.argmax(np.asarray(probs), axis=1))


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(probs, dtype=np.float64))


def beam_search(probs: np.ndarray, beam_width: int, k: int) -> list[Hypothesis]:
    """Top-``k`` labelings by prefix beam search with ``beam_width`` live prefixes.

    Prefixes are nodes in a trie (``parent``/``char`` arrays). A beam entry
    extended by symbol c can only coincide with another live prefix whose
    parent is that entry and whose last symbol is c, which lets the merge
    step run as array operations.
    """
    if not 1 <= k <= beam_width:
        raise ValueError("need 1 <= k <= beam_width")
    logp = _log(probs)
    T, C = logp.shape
    V = C - 1

    cap = 1 + T * min(beam_width, n_labelings_upper_bound(T, V))
    parent = np.full(cap, -1, dtype=np.int64)
    char = np.zeros(cap, dtype=np.int64)
    where = np.full(cap, -1, dtype=np.int64)  # node -> beam slot, refreshed each step
    # (parent node, symbol) -> node; a pruned prefix that re-enters gets its old id
    children: dict[int, int] = {}
    n_nodes = 1

    ids = np.zeros(1, dtype=np.int64)
    lpb = np.zeros(1)
    lpnb = np.full(1, -np.inf)
    syms = np.arange(1, C)

    for t in range(T):
        row = logp[t]
        B = ids.shape[0]
        last = char[ids]
        total = np.logaddexp(lpb, lpnb)

        stay_b = total + row[BLANK]
        stay_nb = np.where(last > 0, lpnb + row[last], -np.inf)
        # extension by a repeat of the last symbol must pass through a blank
        src = np.where(last[:, None] == syms[None, :], lpb[:, None], total[:, None])
        ext = src + row[1:][None, :]

        where[ids] = np.arange(B)
        par = parent[ids]
        has_par = par >= 0
        pslot = np.full(B, -1, dtype=np.int64)
        pslot[has_par] = where[par[has_par]]
        merged = np.nonzero(pslot >= 0)[0]
        if merged.size:
            pi, ci = pslot[merged], last[merged] - 1
            stay_nb[merged] = np.logaddexp(stay_nb[merged], ext[pi, ci])
            ext[pi, ci] = -np.inf
        where[ids] = -1

        stay_score = np.logaddexp(stay_b, stay_nb)
        scores = np.concatenate([stay_score, ext.ravel()])
        finite = np.nonzero(scores > -np.inf)[0]
        if finite.size > beam_width:
            # stable sort on score keeps pruning deterministic under ties
            order = finite[np.argsort(-scores[finite], kind="stable")[:beam_width]]
        else:
            order = finite
        order = np.sort(order)

        keep_stay = order[order < B]
        keep_ext = order[order >= B] - B
        ei, ec = np.divmod(keep_ext, V)
        n_new = keep_ext.shape[0]
        new_ids = np.empty(n_new, dtype=np.int64)
        for j, key in enumerate((ids[ei] * C + ec + 1).tolist()):
            node = children.get(key)
            if node is None:
                node = children[key] = n_nodes
                parent[node], char[node] = divmod(key, C)
                n_nodes += 1
            new_ids[j] = node

        ids = np.concatenate([ids[keep_stay], new_ids])
        lpb = np.concatenate([stay_b[keep_stay], np.full(n_new, -np.inf)])
        lpnb = np.concatenate([stay_nb[keep_stay], ext[ei, ec]])

    final = np.logaddexp(lpb, lpnb)
    hyps = []
    for node, lp in zip(ids.tolist(), final.tolist()):
        label = []
        while node > 0:
            label.append(int(char[node]))
            node = int(parent[node])
        hyps.append(Hypothesis(tuple(reversed(label)), float(lp)))
    hyps.sort(key=lambda h: (-h.log_prob, h.label))
    return hyps[:k]


def top1(probs: np.ndarray, beam_width: int = DEFAULT_TOP1_WIDTH, greedy: bool = False) -> Hypothesis:
    """Most probable labeling. With ``greedy`` the label comes from the argmax path
    and ``log_prob`` is its CTC log-likelihood."""
    if greedy:
        from .ctc import ctc_loss

        label = greedy_decode(probs)
        return Hypothesis(label, -ctc_loss(probs, label).neg_log_lik)
    return beam_search(probs, beam_width, 1)[0]


def n_labelings_upper_bound(T: int, V: int, limit: int = 10**9) -> int:
    """Count of label strings of length <= T (clipped at ``limit``); a beam this
    wide never prunes."""
    total, term = 0, 1
    for _ in range(T + 1):
        total += term
        if total >= limit:
            return limit
        term *= V
    return total
