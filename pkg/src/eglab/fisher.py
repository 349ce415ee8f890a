"""Fisher information checks linking EGL to estimator variance.

For a sampling design q over candidate inputs the Fisher matrix is

    I_q = sum_x q(x) sum_y p(y|x) g_xy g_xy^T,   g_xy = grad_theta loss(x, y)

so its trace is the design-weighted expected squared gradient norm, i.e.
the EGL score averaged under q. The asymptotic check fits maximum
likelihood estimates on many simulated samples and compares their spread
with I_q^{-1} / n.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .ctc import marginal_over_labels
from .decode import beam_search, default_beam_width, n_labelings_upper_bound
from .errors import InputError, SingularFisherError, SizeError
from .seqmodel import ModelParams, ModelShape, Utterance, forward, loss_and_grad, softmax_rows
from .strategies import StrategyConfig, score_egl

MAX_FISHER_PARAMS = 200
MAX_ASYMPTOTIC_PARAMS = 10
MAX_CONDITION = 1e12


@dataclass
class FisherMatrix:
    matrix: np.ndarray
    n_samples: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass
class PoolDesign:
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InputError("design weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, n: int) -> "PoolDesign":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, i: int) -> "PoolDesign":
        w = np.zeros(n)
        w[i] = 1.0
        return cls(w)


def _free(params: ModelParams, mask) -> np.ndarray:
    return np.ones(params.values.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)


def labelings(params: ModelParams, utt: Utterance, k: int | None = None) -> list[tuple[tuple, float]]:
    """(label, p(y|x)) pairs: exhaustive when ``k`` is None, else beam top-k."""
    probs = softmax_rows(forward(params, utt))
    if k is None:
        return [(y, p) for y, p in marginal_over_labels(probs) if p > 0]
    return [(h.label, h.prob) for h in beam_search(probs, default_beam_width(k), k)]


def estimate_fisher(params: ModelParams, design: PoolDesign, candidates: Sequence[Utterance],
                    k: int | None = None, mask=None) -> FisherMatrix:
    """Design-weighted sum of p(y|x) g g^T over labelings of each candidate."""
    free = _free(params, mask)
    P = int(free.sum())
    if P > MAX_FISHER_PARAMS:
        raise SizeError(f"{P} free parameters exceeds the limit of {MAX_FISHER_PARAMS}")
    if len(design.weights) != len(candidates):
        raise InputError("design and candidate list differ in length")
    M = np.zeros((P, P))
    count = 0
    for w, utt in zip(design.weights, candidates):
        if w == 0:
            continue
        for y, p in labelings(params, utt, k):
            g = loss_and_grad(params, utt, y)[1][free]
            M += (w * p) * np.outer(g, g)
            count += 1
    return FisherMatrix(M, count)


def trace_surrogate(fisher: FisherMatrix) -> float:
    return float(np.trace(fisher.matrix))


def expected_sq_grad_norm(params: ModelParams, design: PoolDesign, candidates: Sequence[Utterance],
                          k: int | None = None, mask=None) -> float:
    """sum_x q(x) sum_y p(y|x) |g|^2 computed directly, without forming the matrix."""
    free = _free(params, mask)
    total = 0.0
    for w, utt in zip(design.weights, candidates):
        if w == 0:
            continue
        for y, p in labelings(params, utt, k):
            g = loss_and_grad(params, utt, y)[1][free]
            total += w * p * float(g @ g)
    return total


def inverse_fisher(fisher: FisherMatrix) -> tuple[np.ndarray, float]:
    cond = float(np.linalg.cond(fisher.matrix)) if fisher.dim else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularFisherError(cond)
    return np.linalg.inv(fisher.matrix), cond


def predicted_loss_variance(params: ModelParams, design: PoolDesign, candidates: Sequence[Utterance],
                            probe: tuple[Utterance, tuple], n: int, mask=None) -> float:
    """First-order variance of loss(probe; theta_hat_n): g^T I_q^{-1} g / n."""
    free = _free(params, mask)
    inv, _ = inverse_fisher(estimate_fisher(params, design, candidates, mask=free))
    g = loss_and_grad(params, probe[0], probe[1])[1][free]
    return float(g @ inv @ g) / n


def _mean_loss_and_grad(theta, params, free, samples):
    """Weighted mean loss/gradient over (utterance, label, weight) samples at free coords ``theta``."""
    full = params.values.copy()
    full[free] = theta
    trial = ModelParams(full, params.shape)
    loss, grad = 0.0, np.zeros(int(free.sum()))
    for utt, y, w in samples:
        l, g = loss_and_grad(trial, utt, y)
        loss += w * l
        grad += w * g[free]
    return loss, grad


def fit_mle(params: ModelParams, samples, mask=None, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Newton's method on the free coordinates, started at ``params``.

    ``samples`` holds (utterance, label, weight) triples with weights summing
    to 1. The Hessian comes from central differences of the analytic gradient.
    """
    free = _free(params, mask)
    theta = params.values[free].copy()
    P = theta.size
    loss, grad = _mean_loss_and_grad(theta, params, free, samples)
    h = 1e-5
    for _ in range(max_iter):
        if np.max(np.abs(grad)) < tol:
            break
        Hm = np.zeros((P, P))
        for j in range(P):
            e = np.zeros(P)
            e[j] = h
            Hm[:, j] = (_mean_loss_and_grad(theta + e, params, free, samples)[1]
                        - _mean_loss_and_grad(theta - e, params, free, samples)[1]) / (2 * h)
        Hm = 0.5 * (Hm + Hm.T)
        try:
            step = -np.linalg.solve(Hm, grad)
        except np.linalg.LinAlgError:
            step = -grad
        if step @ grad >= 0:
            step = -grad
        t = 1.0
        while True:
            cand = theta + t * step
            c_loss, c_grad = _mean_loss_and_grad(cand, params, free, samples)
            if np.isfinite(c_loss) and c_loss <= loss + 1e-4 * t * (step @ grad):
                break
            t *= 0.5
            if t < 1e-12:
                return theta
        theta, loss, grad = cand, c_loss, c_grad
    return theta


@dataclass
class AsymptoticReport:
    design: list
    n: int
    replicates: int
    cov_rel_err: float
    loss_var_rel_err: float
    loss_var_rel_err_test_avg: float
    condition_number: float
    n_cov: list = field(repr=False)
    inverse_fisher: list = field(repr=False)
    probe_loss_var: float = 0.0
    probe_loss_var_predicted: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def asymptotic_check(true_params: ModelParams, design: PoolDesign, candidates: Sequence[Utterance],
                     n: int, replicates: int, seed: int, mask=None,
                     probe: tuple[Utterance, tuple] | None = None) -> AsymptoticReport:
    """Compare the replicate spread of MLE fits with I_q^{-1}/n.

    Each replicate draws n inputs from ``design`` and labels from the exact
    model distribution at ``true_params``, refits the free parameters and
    records the estimate. Replicates are processed in index order.
    """
    free = _free(true_params, mask)
    P = int(free.sum())
    if P > MAX_ASYMPTOTIC_PARAMS:
        raise SizeError(f"asymptotic check supports at most {MAX_ASYMPTOTIC_PARAMS} free parameters")
    if n < 1 or replicates < 2:
        raise InputError("need n >= 1 and replicates >= 2")
    fisher = estimate_fisher(true_params, design, candidates, mask=free)
    inv, cond = inverse_fisher(fisher)

    label_sets = [labelings(true_params, u) for u in candidates]
    if probe is None:
        probe = (candidates[0], label_sets[0][0][0])

    rng = np.random.default_rng(seed)
    estimates = np.zeros((replicates, P))
    for r in range(replicates):
        samples = []
        for i, c in enumerate(rng.multinomial(n, design.weights)):
            if c == 0:
                continue
            labels, probs = zip(*label_sets[i])
            pv = np.array(probs) / np.sum(probs)
            for y, cy in zip(labels, rng.multinomial(c, pv)):
                if cy:
                    samples.append((candidates[i], y, cy / n))
        estimates[r] = fit_mle(true_params, samples, free)

    n_cov = n * np.atleast_2d(np.cov(estimates, rowvar=False, ddof=1))
    cov_rel_err = float(np.linalg.norm(n_cov - inv) / np.linalg.norm(inv))

    def loss_at(theta, utt, y):
        full = true_params.values.copy()
        full[free] = theta
        return loss_and_grad(ModelParams(full, true_params.shape), utt, y)[0]

    def empirical_and_predicted(utt, y):
        emp = float(np.var([loss_at(th, utt, y) for th in estimates], ddof=1))
        g = loss_and_grad(true_params, utt, y)[1][free]
        return emp, float(g @ inv @ g) / n

    probe_emp, probe_pred = empirical_and_predicted(*probe)
    # test-averaged form: p(x) uniform over candidates, y ~ p(y|x)
    emp_avg = pred_avg = 0.0
    for utt, labs in zip(candidates, label_sets):
        for y, p in labs:
            e, q = empirical_and_predicted(utt, y)
            emp_avg += p * e / len(candidates)
            pred_avg += p * q / len(candidates)

    return AsymptoticReport(
        design=design.weights.tolist(), n=n, replicates=replicates, cov_rel_err=cov_rel_err,
        loss_var_rel_err=abs(probe_emp - probe_pred) / probe_pred if probe_pred > 0 else math.nan,
        loss_var_rel_err_test_avg=abs(emp_avg - pred_avg) / pred_avg if pred_avg > 0 else math.nan,
        condition_number=cond, n_cov=n_cov.tolist(), inverse_fisher=inv.tolist(),
        probe_loss_var=probe_emp, probe_loss_var_predicted=probe_pred,
    )


@dataclass
class TraceReport:
    egl_scores: list
    traces: list
    max_abs_diff: float
    orderings_equal: bool


def egl_maximizes_trace(candidates: Sequence[Utterance], params: ModelParams, k: int | None = None) -> TraceReport:
    """EGL (squared, all labelings) against the trace of each candidate's Fisher term.

    EGL runs through beam search wide enough never to prune; the traces come
    from exhaustive path enumeration, so the two routes share only the
    gradient code.
    """
    V = params.shape.n_classes - 1
    egl, traces = [], []
    for i, utt in enumerate(candidates):
        kk = k or n_labelings_upper_bound(utt.n_frames, V)
        cfg = StrategyConfig("egl", k=kk, beam_width=kk, squared=True)
        egl.append(score_egl(params, utt, cfg))
        traces.append(trace_surrogate(estimate_fisher(params, PoolDesign([1.0]), [utt])))
    order_e = sorted(range(len(egl)), key=lambda i: (-egl[i], i))
    order_t = sorted(range(len(traces)), key=lambda i: (-traces[i], i))
    diff = float(np.max(np.abs(np.array(egl) - np.array(traces)))) if egl else 0.0
    return TraceReport(egl, traces, diff, order_e == order_t)


def bernoulli_toy(x: float = 1.0, theta: float = 0.0):
    """One free parameter: a single-frame, blank-vs-'a' linear model with scalar input.

    Logits are (0, theta * x), so p('a') = sigmoid(theta * x) and the Fisher
    information is s (1 - s) x^2 with s = sigmoid(theta * x), so 1/4 at theta = 0, x = 1.
    Returns (params, candidate utterance, mask).
    """
    shape = ModelShape(feature_dim=1, hidden_dim=0, n_classes=2)
    values = np.zeros(shape.n_params)  # [W_blank, W_a, b_blank, b_a]
    values[1] = theta
    mask = np.array([False, True, False, False])
    return ModelParams(values, shape), Utterance(np.array([[x]]), None, f"x={x:g}"), mask
