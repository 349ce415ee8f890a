import json
import math

import numpy as np
import pytest

from eglab.errors import InputError, ParseError, RepresentabilityError, TrainingError
from eglab.seqmodel import (
    Alphabet, ModelParams, ModelShape, TrainConfig, Utterance, forward, init_params,
    load_checkpoint, log_softmax_rows, loss_and_grad, mean_loss, save_checkpoint,
    softmax_rows, train, zero_params,
)

from _oracles import finite_difference_grad, max_relative_error, recurrent_logits


class TestAlphabet:
    def test_default_ends_with_space(self):
        a = Alphabet.default(8)
        assert a.symbols[-1] == " " and a.size == 8 and a.n_classes == 9

    def test_round_trip(self):
        a = Alphabet.default(5)
        assert a.decode(a.encode("ab cd")) == "ab cd"
        assert a.encode("ab") == (1, 2)

    def test_unknown_symbol(self):
        with pytest.raises(InputError):
            Alphabet.default(3).encode("z")


class TestForward:
    def test_zero_params_give_zero_lattice(self):
        p = zero_params(ModelShape(4, 0, 3))
        np.testing.assert_array_equal(forward(p, np.ones((3, 4))), np.zeros((3, 3)))

    def test_identity_linear_map_on_basis(self):
        shape = ModelShape(3, 0, 3)
        p = zero_params(shape)
        p.unpack()["W"][...] = np.eye(3)
        X = np.eye(3)[[2, 0, 1]]
        np.testing.assert_array_equal(forward(p, X), X)

    def test_recurrent_matches_scalar_loop(self):
        rng = np.random.default_rng(7)
        for H in (1, 3):
            p = init_params(ModelShape(4, H, 3), seed=H, scale=0.8)
            X = rng.normal(size=(6, 4))
            np.testing.assert_allclose(forward(p, X), recurrent_logits(p, X), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            forward(zero_params(ModelShape(4, 0, 3)), np.ones((2, 5)))

    def test_parameter_count_checked(self):
        with pytest.raises(InputError):
            ModelParams(np.zeros(5), ModelShape(4, 0, 3))


class TestSoftmax:
    def test_zero_row_is_uniform(self):
        np.testing.assert_allclose(softmax_rows(np.zeros((1, 3))), [[1 / 3] * 3])

    def test_large_logit_is_stable(self):
        out = softmax_rows(np.array([[1000.0, 0.0, 0.0]]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1.0, 0.0, 0.0]], atol=1e-300)

    def test_exponent_ratios(self):
        out = softmax_rows(np.log([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)

    def test_log_softmax_consistent(self):
        z = np.random.default_rng(0).normal(size=(4, 5))
        np.testing.assert_allclose(np.exp(log_softmax_rows(z)), softmax_rows(z), atol=1e-15)


class TestLossAndGrad:
    def test_single_frame_zero_params(self):
        p = zero_params(ModelShape(1, 0, 2))
        loss, _ = loss_and_grad(p, np.zeros((1, 1)), [1])
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    @pytest.mark.parametrize("H", [0, 1, 3])
    def test_gradient_matches_finite_differences(self, H):
        rng = np.random.default_rng(100 + H)
        for trial in range(4):
            p = init_params(ModelShape(3, H, 4), seed=trial, scale=0.7)
            X = rng.normal(size=(5, 3))
            label = [int(c) for c in rng.integers(1, 4, size=int(rng.integers(0, 3)))]
            g = loss_and_grad(p, X, label)[1]
            assert max_relative_error(g, finite_difference_grad(p, X, label)) < 1e-4

    def test_unrepresentable(self):
        with pytest.raises(RepresentabilityError):
            loss_and_grad(zero_params(ModelShape(2, 0, 3)), np.zeros((2, 2)), [1, 1])


def _separable_set(V=3, reps=4):
    data = []
    for i in range(reps):
        for a in range(1, V + 1):
            b = a % V + 1
            X = np.vstack([np.eye(V)[a - 1]] * 2 + [np.eye(V)[b - 1]] * 2)
            data.append((Utterance(X, None, f"s{i}{a}"), (a, b)))
    return data


class TestTrain:
    def test_zero_epochs_is_identity(self):
        p = init_params(ModelShape(3, 0, 4), seed=1)
        out = train(p, _separable_set(), TrainConfig(epochs=0))
        np.testing.assert_array_equal(out.values, p.values)
        assert out is not p

    def test_descends_on_realizable_task(self):
        data = _separable_set()
        p = init_params(ModelShape(3, 0, 4), seed=1)
        out = train(p, data, TrainConfig(epochs=200, learning_rate=0.5, tol=None))
        assert mean_loss(out, data) < mean_loss(p, data)

    def test_seeded_runs_identical(self):
        data = _separable_set()
        p = init_params(ModelShape(3, 2, 4), seed=1)
        cfg = TrainConfig(epochs=5, batch_size=3, seed=9)
        np.testing.assert_array_equal(train(p, data, cfg).values, train(p, data, cfg).values)

    def test_history_recorded(self):
        hist = []
        train(init_params(ModelShape(3, 0, 4), 0), _separable_set(), TrainConfig(epochs=3, tol=None), hist)
        assert len(hist) == 3 and hist[-1] < hist[0]

    def test_divergence_names_epoch(self):
        p = init_params(ModelShape(3, 0, 4), seed=1)
        with pytest.raises(TrainingError) as info:
            train(p, _separable_set(), TrainConfig(epochs=5, learning_rate=1e308))
        assert info.value.epoch == 0


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = init_params(ModelShape(3, 2, 4), seed=4)
        save_checkpoint(tmp_path / "m.json", p)
        q = load_checkpoint(tmp_path / "m.json")
        assert q.shape == p.shape
        np.testing.assert_array_equal(q.values, p.values)

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "m.json"
        save_checkpoint(path, zero_params(ModelShape(1, 0, 2)))
        doc = json.loads(path.read_text())
        doc["schema_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            load_checkpoint(path)

    def test_garbage(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_checkpoint(path)
