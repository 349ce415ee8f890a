import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eglab.errors import InputError
from eglab.metrics import (
    UndefinedMetricError, cer, edit_distance, evaluate, normalized_ranks, rank_agreement, wer, words,
)
from eglab.seqmodel import Alphabet, ModelShape, Utterance, zero_params

from _oracles import spearman_by_formula


def recursive_distance(a, b):
    """Textbook recursion, exhaustive over all edit scripts for short strings."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(recursive_distance(a[1:], b) + 1, recursive_distance(a, b[1:]) + 1,
               recursive_distance(a[1:], b[1:]) + (a[0] != b[0]))


class TestEditDistance:
    def test_kitten_sitting(self):
        assert edit_distance("kitten", "sitting") == 3

    def test_identity(self):
        assert edit_distance("abc", "abc") == 0

    def test_insertions(self):
        assert edit_distance("", "abc") == 3

    def test_swap(self):
        assert edit_distance("ab", "ba") == 2

    @given(st.text("abc", max_size=6), st.text("abc", max_size=6))
    def test_matches_recursion(self, a, b):
        assert edit_distance(a, b) == recursive_distance(a, b)

    @given(st.text("ab", max_size=8), st.text("ab", max_size=8))
    def test_symmetric(self, a, b):
        assert edit_distance(a, b) == edit_distance(b, a)


class TestErrorRates:
    def test_perfect(self):
        assert cer(["ab c"], ["ab c"]) == 0.0 and wer(["ab c"], ["ab c"]) == 0.0

    def test_word_deletion(self):
        assert wer(["the cat sat"], ["the cat"]) == pytest.approx(1 / 3)

    def test_char_swap(self):
        assert cer(["ab"], ["ba"]) == 1.0

    def test_corpus_level_pooling(self):
        assert cer(["abcd", "a"], ["abcd", "b"]) == pytest.approx(1 / 5)

    def test_zero_reference_length(self):
        with pytest.raises(UndefinedMetricError):
            cer([""], ["a"])
        with pytest.raises(UndefinedMetricError):
            wer(["", ""], ["", "a"])

    def test_mismatched_lengths(self):
        with pytest.raises(InputError):
            cer(["a"], [])

    def test_word_split(self):
        assert words("") == [] and words("a b") == ["a", "b"]


class TestEvaluate:
    def _data(self, n=6):
        rng = np.random.default_rng(0)
        out = []
        for i in range(n):
            label = [1 + (i + j) % 3 for j in range(2)]
            X = np.repeat(np.eye(3)[np.array(label) - 1], 2, axis=0)
            out.append(Utterance(X + 0.01 * rng.normal(size=X.shape), "abc"[label[0] - 1] + "abc"[label[1] - 1], f"t{i}"))
        return out

    def test_perfect_model(self):
        shape = ModelShape(3, 0, 4)
        p = zero_params(shape)
        W = p.unpack()["W"]
        W[1:, :] = 20 * np.eye(3)
        report = evaluate(p, self._data(), Alphabet(("a", "b", "c")))
        assert report.cer == 0.0 and report.wer == 0.0 and report.n_utts == 6

    def test_zero_model_reproducible(self):
        p = zero_params(ModelShape(3, 0, 4))
        a = evaluate(p, self._data(), Alphabet(("a", "b", "c")))
        b = evaluate(p, self._data(), Alphabet(("a", "b", "c")))
        assert a == b and np.isfinite(a.cer)

    def test_unrepresentable_excluded(self):
        data = self._data(2) + [Utterance(np.zeros((1, 3)), "abc", "short")]
        report = evaluate(zero_params(ModelShape(3, 0, 4)), data, Alphabet(("a", "b", "c")))
        assert report.n_excluded == 1 and report.n_utts == 2


class TestRankAgreement:
    def test_identical(self):
        s = {"a": 1.0, "b": 2.0, "c": 5.0}
        r = rank_agreement(s, s)
        assert r.spearman_rho == pytest.approx(1.0) and r.kendall_tau == pytest.approx(1.0)
        assert all(x == y for x, y in r.scatter)

    def test_reversed(self):
        r = rank_agreement({"a": 1, "b": 2, "c": 3}, {"a": 3, "b": 2, "c": 1})
        assert r.spearman_rho == pytest.approx(-1.0) and r.kendall_tau == pytest.approx(-1.0)

    def test_one_swap(self):
        ids = "wxyz"
        r = rank_agreement(dict(zip(ids, (1, 2, 3, 4))), dict(zip(ids, (1, 3, 2, 4))))
        assert r.spearman_rho == pytest.approx(0.8)

    def test_against_formula(self):
        for perm in itertools.permutations(range(5)):
            a = {str(i): float(i) for i in range(5)}
            b = {str(i): float(perm[i]) for i in range(5)}
            want = spearman_by_formula(list(a.values()), list(b.values()))
            assert rank_agreement(a, b).spearman_rho == pytest.approx(want)

    def test_mismatched_ids(self):
        with pytest.raises(InputError):
            rank_agreement({"a": 1, "b": 2}, {"a": 1, "c": 2})

    def test_scatter_csv(self, tmp_path):
        r = rank_agreement({"a": 1, "b": 2}, {"a": 2, "b": 1})
        r.write_scatter_csv(tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text() == "rank_a,rank_b\n0.0,1.0\n1.0,0.0\n"

    def test_normalized_ranks(self):
        np.testing.assert_allclose(normalized_ranks(np.array([3.0, 1.0, 2.0])), [1.0, 0.0, 0.5])
