"""Connectionist temporal classification in log space.

Labels are sequences of class indices in ``1..V``; index 0 is the blank.
The dynamic programme runs over the blank-augmented label of length
``2L + 1``. Kernels are compiled with numba since the harness calls them
hundreds of thousands of times per experiment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .errors import InputError, RepresentabilityError, SizeError

BLANK = 0
NEG_INF = -np.inf
MAX_ENUMERATION = 10**6

LabelSeq = tuple  # tuple[int, ...] of class indices, blank excluded


@dataclass
class CtcResult:
    neg_log_lik: float
    logit_grad: np.ndarray  # (T, V+1)


def collapse(path: Sequence[int], n_classes: int | None = None) -> LabelSeq:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = -1
    for k in path:
        k = int(k)
        if k < 0 or (n_classes is not None and k >= n_classes):
            raise InputError(f"class index {k} out of range")
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return tuple(out)


def min_frames(label: Sequence[int]) -> int:
    """Fewest frames able to emit ``label``: one per symbol plus a blank per repeat."""
    repeats = sum(1 for a, b in zip(label, label[1:]) if a == b)
    return len(label) + repeats


def check_representable(label: Sequence[int], n_frames: int) -> None:
    need = min_frames(label)
    if n_frames < need:
        raise RepresentabilityError(len(label), n_frames, need)


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
        raise InputError(f"expected a (T, V+1) probability matrix, got shape {probs.shape}")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise InputError("probabilities must be finite and nonnegative")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-8:
        raise InputError("probability rows must sum to 1")
    return probs


def _check_label(label: Sequence[int], n_classes: int) -> np.ndarray:
    arr = np.asarray(label, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 1 or arr.max() >= n_classes):
        raise InputError("label symbols must lie in 1..V (blank excluded)")
    return arr


def _safe_log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


@njit(cache=True)
def _lse2(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _lse3(a, b, c):
    return _lse2(_lse2(a, b), c)


@njit(cache=True)
def _extend(label):
    S = 2 * label.shape[0] + 1
    ext = np.zeros(S, dtype=np.int64)
    for i in range(label.shape[0]):
        ext[2 * i + 1] = label[i]
    return ext


@njit(cache=True)
def _alpha_beta(logp, label):
    T = logp.shape[0]
    ext = _extend(label)
    S = ext.shape[0]
    alpha = np.full((T, S), -np.inf)
    beta = np.full((T, S), -np.inf)

    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _lse2(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != 0 and ext[s] != ext[s - 2]:
                a = _lse2(a, alpha[t - 1, s - 2])
            if a != -np.inf:
                alpha[t, s] = a + logp[t, ext[s]]

    beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[t + 1, s]
            if s + 1 < S:
                b = _lse2(b, beta[t + 1, s + 1])
            if s + 2 < S and ext[s + 2] != 0 and ext[s + 2] != ext[s]:
                b = _lse2(b, beta[t + 1, s + 2])
            if b != -np.inf:
                beta[t, s] = b + logp[t, ext[s]]
    return alpha, beta, ext


@njit(cache=True)
def _ctc_kernel(logp, label):
    """Return (forward log-lik, backward log-lik, per-class posteriors)."""
    T, C = logp.shape
    alpha, beta, ext = _alpha_beta(logp, label)
    S = ext.shape[0]
    fwd = alpha[T - 1, S - 1]
    if S > 1:
        fwd = _lse2(fwd, alpha[T - 1, S - 2])
    bwd = beta[0, 0]
    if S > 1:
        bwd = _lse2(bwd, beta[0, 1])
    gamma = np.zeros((T, C))
    if fwd == -np.inf:
        return fwd, bwd, gamma
    for t in range(T):
        for s in range(S):
            v = alpha[t, s] + beta[t, s]
            if v != -np.inf:
                gamma[t, ext[s]] += math.exp(v - logp[t, ext[s]] - fwd)
    return fwd, bwd, gamma


def forward_backward(logp: np.ndarray, label: Sequence[int]):
    """Log-likelihood from both recursions plus the (T, V+1) posterior occupancy."""
    lab = np.asarray(label, dtype=np.int64).reshape(-1)
    fwd, bwd, gamma = _ctc_kernel(np.ascontiguousarray(logp, dtype=np.float64), lab)
    return float(fwd), float(bwd), gamma


def ctc_from_log_probs(logp: np.ndarray, label: Sequence[int]) -> CtcResult:
    """Loss and logit gradient from log-softmax outputs; no input validation."""
    check_representable(label, logp.shape[0])
    fwd, _, gamma = forward_backward(logp, label)
    if fwd == -np.inf:
        # Representable but every admissible path has zero probability.
        return CtcResult(math.inf, np.exp(logp) - gamma)
    return CtcResult(-fwd, np.exp(logp) - gamma)


def ctc_loss(probs: np.ndarray, label: Sequence[int]) -> CtcResult:
    """CTC negative log-likelihood of ``label`` under per-frame ``probs``.

    ``logit_grad`` is the derivative with respect to the pre-softmax scores,
    i.e. ``probs - gamma`` with ``gamma`` the label-conditional occupancy.
    """
    probs = _check_probs(probs)
    lab = _check_label(label, probs.shape[1])
    check_representable(tuple(lab.tolist()), probs.shape[0])
    fwd, _, gamma = forward_backward(_safe_log(probs), lab)
    nll = -fwd if fwd != -np.inf else math.inf
    return CtcResult(nll, probs - gamma)


def _paths(probs: np.ndarray):
    T, C = probs.shape
    if C**T > MAX_ENUMERATION:
        raise SizeError(f"(V+1)^T = {C}^{T} exceeds {MAX_ENUMERATION}")
    rows = probs.tolist()
    for path in itertools.product(range(C), repeat=T):
        p = 1.0
        for t, k in enumerate(path):
            p *= rows[t][k]
        yield path, p


def ctc_brute_force(probs: np.ndarray, label: Sequence[int]) -> float:
    """-ln of the summed probability of every path collapsing to ``label``.

    Returns ``math.inf`` when no path collapses to the label.
    """
    probs = np.asarray(probs, dtype=np.float64)
    target = tuple(int(k) for k in label)
    total = 0.0
    for path, p in _paths(probs):
        if collapse(path) == target:
            total += p
    return -math.log(total) if total > 0 else math.inf


def marginal_over_labels(probs: np.ndarray, max_len: int | None = None) -> list[tuple[LabelSeq, float]]:
    """Exact p(y|x) for every labeling reachable by some path, by enumeration.

    Labels longer than ``max_len`` are dropped. Result is sorted by
    descending probability, ties by label.
    """
    probs = np.asarray(probs, dtype=np.float64)
    mass: dict[LabelSeq, float] = {}
    for path, p in _paths(probs):
        y = collapse(path)
        if max_len is not None and len(y) > max_len:
            continue
        mass[y] = mass.get(y, 0.0) + p
    return sorted(mass.items(), key=lambda item: (-item[1], item[0]))
