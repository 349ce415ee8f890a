import math
import random

import numpy as np
import pytest

from eglab import ctc
from eglab.decode import n_labelings_upper_bound
from eglab.errors import ConfigError, InputError, ParseError
from eglab.seqmodel import ModelShape, Utterance, forward, init_params, softmax_rows, zero_params
from eglab.strategies import (
    StrategyConfig, dump_scores, load_scores, rank_records, score_egl, score_entropy, score_pctc,
    score_pool, score_random, select_batch,
)

from _oracles import brute_force_label_probs, exhaustive_egl


def utt(X, uid="u0"):
    return Utterance(np.asarray(X, dtype=float), None, uid)


def saturating(T, V, **kw):
    n = n_labelings_upper_bound(T, V)
    return StrategyConfig("egl", k=n, beam_width=n, **kw)


def lattice_params(probs):
    """Linear model whose logits on identity features reproduce log(probs)."""
    T, C = probs.shape
    p = zero_params(ModelShape(T, 0, C))
    p.unpack()["W"][...] = np.log(probs).T
    return p, utt(np.eye(T))


class TestConfig:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            StrategyConfig("oracle")

    def test_beam_must_cover_k(self):
        with pytest.raises(ConfigError):
            StrategyConfig("egl", k=10, beam_width=5)

    def test_names(self):
        assert StrategyConfig("egl", squared=False).name == "egl_unsquared"
        assert StrategyConfig("egl").width == 400
        # sweeps over EGL options need distinct names
        assert StrategyConfig("egl", k=10, renormalize_topk=True).name == "egl_k10_renorm"
        assert StrategyConfig("entropy", k=10).name == "entropy"


class TestEntropy:
    def test_uniform(self):
        p = zero_params(ModelShape(2, 0, 3))
        assert score_entropy(p, utt(np.ones((4, 2)))) == pytest.approx(math.log(3), abs=1e-12)

    def test_concentrated_rows(self):
        p, u = lattice_params(np.array([[1 - 1e-300, 1e-300, 0.0]] * 3) + 1e-320)
        assert score_entropy(p, u) == pytest.approx(0.0, abs=1e-12)

    def test_two_point_rows(self):
        p, u = lattice_params(np.array([[0.5, 0.5, 1e-300]] * 3))
        assert score_entropy(p, u) == pytest.approx(math.log(2), abs=1e-12)

    def test_bounded(self):
        rng = np.random.default_rng(0)
        for s in range(20):
            p = init_params(ModelShape(3, 2, 5), seed=s, scale=3.0)
            h = score_entropy(p, utt(rng.normal(size=(5, 3))))
            assert 0.0 <= h <= math.log(5) + 1e-12


class TestPctc:
    def test_confident_model_scores_zero(self):
        p, u = lattice_params(np.eye(3)[[1, 0, 2]] * (1 - 2e-300) + 1e-300)
        assert score_pctc(p, u) == pytest.approx(0.0, abs=1e-12)

    def test_single_uniform_frame(self):
        p = zero_params(ModelShape(1, 0, 2))
        assert score_pctc(p, utt([[0.0]])) == pytest.approx(math.log(2), abs=1e-12)

    def test_matches_exhaustive_argmax_label(self):
        rng = np.random.default_rng(12)
        for s in range(30):
            T, V = int(rng.integers(1, 5)), int(rng.integers(1, 3))
            p = init_params(ModelShape(2, 0, V + 1), seed=s, scale=2.0)
            u = utt(rng.normal(size=(T, 2)))
            probs = softmax_rows(forward(p, u))
            best = min(brute_force_label_probs(probs).items(), key=lambda kv: (-kv[1], kv[0]))[0]
            want = ctc.ctc_brute_force(probs, best) / T
            got = score_pctc(p, u, beam_width=n_labelings_upper_bound(T, V))
            assert got == pytest.approx(want, abs=1e-10)
            assert got >= 0


class TestEgl:
    def test_exhaustive_oracle(self):
        rng = np.random.default_rng(31)
        for s in range(25):
            T, V, H = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(0, 3))
            p = init_params(ModelShape(3, H, V + 1), seed=s, scale=1.0)
            u = utt(rng.normal(size=(T, 3)))
            assert score_egl(p, u, saturating(T, V)) == pytest.approx(exhaustive_egl(p, u), rel=1e-10, abs=1e-8)

    def test_unsquared_oracle(self):
        rng = np.random.default_rng(3)
        p = init_params(ModelShape(3, 1, 3), seed=1, scale=1.0)
        u = utt(rng.normal(size=(3, 3)))
        got = score_egl(p, u, saturating(3, 2, squared=False))
        assert got == pytest.approx(exhaustive_egl(p, u, squared=False), abs=1e-8)

    def test_saturated_model_scores_near_zero(self):
        p, u = lattice_params(np.full((3, 3), 1e-30) + np.eye(3)[[1, 0, 2]])
        assert score_egl(p, u, saturating(3, 2)) < 1e-20

    def test_zero_gradients_give_zero(self):
        # silent input: weight gradients vanish, so restricting to W gives exactly 0
        p = init_params(ModelShape(3, 0, 3), seed=0)
        cfg = StrategyConfig("egl", k=5, layers=("W",))
        assert score_egl(p, utt(np.zeros((3, 3))), cfg) == 0.0

    def test_squared_and_unsquared_can_disagree(self):
        # search random pairs for one where the oracle orderings flip
        rng = np.random.default_rng(77)
        p = init_params(ModelShape(2, 0, 3), seed=2, scale=1.5)
        cands = [utt(rng.normal(size=(int(rng.integers(1, 4)), 2)), f"c{i}") for i in range(12)]
        sq = [exhaustive_egl(p, c) for c in cands]
        un = [exhaustive_egl(p, c, squared=False) for c in cands]
        flips = [(i, j) for i in range(12) for j in range(i + 1, 12)
                 if (sq[i] - sq[j]) * (un[i] - un[j]) < 0]
        assert flips
        i, j = flips[0]
        a = [score_egl(p, cands[m], saturating(3, 2)) for m in (i, j)]
        b = [score_egl(p, cands[m], saturating(3, 2, squared=False)) for m in (i, j)]
        assert (a[0] - a[1]) * (b[0] - b[1]) < 0

    def test_renormalized_weights(self):
        rng = np.random.default_rng(5)
        p = init_params(ModelShape(3, 0, 4), seed=3, scale=1.0)
        u = utt(rng.normal(size=(4, 3)))
        full = score_egl(p, u, saturating(4, 3))
        renorm = score_egl(p, u, saturating(4, 3, renormalize_topk=True))
        assert renorm == pytest.approx(full, rel=1e-9)  # all mass kept, so weights already sum to 1
        top2 = score_egl(p, u, StrategyConfig("egl", k=2, renormalize_topk=True))
        raw2 = score_egl(p, u, StrategyConfig("egl", k=2))
        assert top2 > raw2

    def test_length_normalized(self):
        p = init_params(ModelShape(3, 0, 4), seed=3, scale=1.0)
        u = utt(np.random.default_rng(1).normal(size=(4, 3)))
        a = score_egl(p, u, StrategyConfig("egl", k=3))
        b = score_egl(p, u, StrategyConfig("egl", k=3, length_normalize=True))
        assert b == pytest.approx(a / 4)


class TestRandom:
    def test_order_independent(self):
        pool = [utt(np.zeros((1, 1)), f"u{i}") for i in range(30)]
        shuffled = pool[:]
        random.Random(0).shuffle(shuffled)
        a = {r.utterance_id: r.score for r in score_random(pool, 3)}
        b = {r.utterance_id: r.score for r in score_random(shuffled, 3)}
        assert a == b

    def test_seeds_differ(self):
        pool = [utt(np.zeros((1, 1)), f"u{i}") for i in range(30)]
        ra = [r.rank for r in score_random(pool, 1)]
        rb = [r.rank for r in score_random(pool, 2)]
        assert ra != rb

    def test_single_utterance(self):
        (rec,) = score_random([utt(np.zeros((1, 1)))], 0)
        assert rec.rank == 1 and rec.normalized_rank == 1.0


class TestRanking:
    def test_ranks_are_a_permutation(self):
        recs = rank_records(["b", "a", "c", "d"], [0.5, 0.5, 0.9, 0.1], "x")
        assert {r.utterance_id: r.rank for r in recs} == {"c": 1, "a": 2, "b": 3, "d": 4}
        assert {r.utterance_id: r.normalized_rank for r in recs}["c"] == 1.0
        assert {r.utterance_id: r.normalized_rank for r in recs}["d"] == 0.0

    def test_pool_scoring_is_order_independent(self):
        rng = np.random.default_rng(0)
        p = init_params(ModelShape(2, 2, 3), seed=0, scale=1.0)
        pool = [utt(rng.normal(size=(3, 2)), f"u{i}") for i in range(8)]
        cfg = StrategyConfig("egl", k=4)
        a = {r.utterance_id: r.score for r in score_pool(p, pool, cfg)}
        b = {r.utterance_id: r.score for r in score_pool(p, pool[::-1], cfg)}
        assert a == b


class TestSelect:
    def _records(self, scores):
        return rank_records([f"u{i:02d}" for i in range(len(scores))], scores, "x")

    def test_full_fraction(self):
        recs = self._records(list(range(10)))
        assert sorted(select_batch(recs, 1.0)) == sorted(r.utterance_id for r in recs)

    def test_ceiling(self):
        assert len(select_batch(self._records(list(range(10))), 0.25)) == 3

    def test_no_spurious_round_up(self):
        assert len(select_batch(self._records(list(range(2000))), 0.1)) == 200

    def test_top_scores(self):
        recs = self._records([0.3, 0.9, 0.1, 0.7, 0.5])
        assert select_batch(recs, 0.4) == ["u01", "u03"]

    def test_permutation_invariant(self):
        recs = self._records([1.0, 1.0, 2.0, 0.0, 1.0])
        assert select_batch(recs, 0.6) == select_batch(recs[::-1], 0.6) == ["u02", "u00", "u01"]

    def test_empty(self):
        with pytest.raises(InputError):
            select_batch([], 0.5)

    def test_bad_fraction(self):
        with pytest.raises(InputError):
            select_batch(self._records([1.0]), 0.0)


class TestScoreFiles:
    def test_round_trip(self, tmp_path):
        recs = rank_records(["a", "b"], [0.1 + 0.2, 1e-17], "egl")
        dump_scores(tmp_path / "s.jsonl", recs)
        assert load_scores(tmp_path / "s.jsonl") == recs

    def test_bad_line_reports_number(self, tmp_path):
        path = tmp_path / "s.jsonl"
        dump_scores(path, rank_records(["a"], [1.0], "x"))
        path.write_text(path.read_text() + '{"id": "b"}\n')
        with pytest.raises(ParseError) as info:
            load_scores(path)
        assert info.value.line == 2
