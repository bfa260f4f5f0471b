"""Encoders: shapes, thought vector, parameter counting, bidirectional width
matching, palindrome symmetry, and gradient flow."""

import numpy as np
import pytest

from conftest import finite_difference_check
from lipseq.gradcore import Tensor, ops
from lipseq.model import (init_encoder, encode, lstm_param_count,
                          uni2_param_count, solve_bi_width, reverse_sequence)


def small_encoder(mode, feat_dim=6, hidden=8, seed=0):
    rng = np.random.default_rng(seed)
    return init_encoder(rng, feat_dim, hidden=hidden, mode=mode,
                        dec_hidden=hidden, dtype=np.float64)


class TestParameterCounts:
    def test_uni2_closed_form_at_reference_widths(self):
        # per layer: 4H(D+H) weights plus a 4H bias
        assert lstm_param_count(132, 128) == 4 * 128 * (132 + 128) + 4 * 128
        expected = (4 * 128 * (132 + 128) + 4 * 128) + (4 * 128 * (128 + 128) + 4 * 128)
        assert expected == 265216
        assert uni2_param_count(132, 128) == expected

    def test_registry_matches_closed_form(self):
        enc = small_encoder("uni2", feat_dim=132, hidden=128)
        total = sum(t.data.size for t in enc.named().values())
        assert total == uni2_param_count(132, 128)

    def test_bi_width_within_two_percent(self):
        budget = uni2_param_count(132, 128)
        w = solve_bi_width(132, budget)
        assert w == 127
        bi_total = 2 * lstm_param_count(132, w)
        assert bi_total <= budget
        assert bi_total >= 0.98 * budget
        # and w+1 would overshoot
        assert 2 * lstm_param_count(132, w + 1) > budget

    @pytest.mark.parametrize("d", [20, 64, 132, 500])
    def test_bi_width_is_maximal(self, d):
        budget = uni2_param_count(d, 128)
        w = solve_bi_width(d, budget)
        assert 2 * lstm_param_count(d, w) <= budget < 2 * lstm_param_count(d, w + 1)


class TestUni2:
    def test_single_step_memory_equals_thought(self, rng):
        enc = small_encoder("uni2")
        feats = Tensor(rng.normal(0, 1, (1, 2, 6)))
        out = encode(enc, feats, np.array([1, 1]))
        assert out.memory.shape == (1, 2, 8)
        (h1, c1), (h2, c2) = out.init_states
        np.testing.assert_allclose(out.memory.data[0], h2.data, atol=1e-12)

    def test_memory_rows_match_lengths(self, rng):
        enc = small_encoder("uni2")
        feats = Tensor(rng.normal(0, 1, (9, 3, 6)))
        lengths = np.array([9, 5, 2])
        out = encode(enc, feats, lengths)
        assert out.memory.shape[0] == 9
        assert out.mask.sum(axis=0).tolist() == [9, 5, 2]
        np.testing.assert_array_equal(out.memory.data[6, 1], 0.0)

    def test_empty_input_rejected(self, rng):
        enc = small_encoder("uni2")
        with pytest.raises(ValueError):
            encode(enc, Tensor(np.zeros((0, 1, 6))), np.array([0]))

    def test_gradients_through_encoder(self):
        rng = np.random.default_rng(3)
        enc = small_encoder("uni2", feat_dim=4, hidden=3, seed=5)
        feats = Tensor(rng.normal(0, 1, (4, 2, 4)), requires_grad=True, name="f")
        w = rng.normal(0, 1, (4, 2, 3))

        def loss(tape):
            out = encode(enc, feats, np.array([4, 2]), tape=tape)
            return ops.sum_(ops.mul(out.memory, Tensor(w), tape), tape=tape)

        params = [feats, enc.layers[0].wx, enc.layers[1].wh]
        finite_difference_check(loss, params)


class TestBi1:
    def test_palindrome_mirror_with_shared_weights(self, rng):
        enc = small_encoder("bi1")
        # share the two directions' weights
        for a, b in zip(enc.layers[0].named("x").values(),
                        enc.layers[1].named("x").values()):
            b.data = a.data.copy()
        half = rng.normal(0, 1, (3, 1, 6))
        feats = np.concatenate([half, half[::-1]], axis=0)   # palindrome, T=6
        out = encode(enc, Tensor(feats), np.array([6]))
        w = enc.hidden
        fwd, bwd = out.memory.data[:, 0, :w], out.memory.data[:, 0, w:]
        np.testing.assert_allclose(bwd, fwd[::-1], atol=1e-10)

    def test_memory_width_is_two_directions(self, rng):
        enc = small_encoder("bi1")
        out = encode(enc, Tensor(rng.normal(0, 1, (4, 2, 6))), np.array([4, 3]))
        assert out.memory.shape == (4, 2, 2 * enc.hidden)
        assert len(out.init_states) == 2
        assert out.init_states[0][0].shape == (2, 8)

    def test_backward_direction_sees_true_suffix(self, rng):
        # padded positions must not leak into the reversed pass
        enc = small_encoder("bi1")
        feats = rng.normal(0, 1, (6, 2, 6))
        feats[4:, 1] = 123.0    # garbage in the padding of sequence 1
        lengths = np.array([6, 4])
        out_a = encode(enc, Tensor(feats), lengths)
        feats2 = feats.copy()
        feats2[4:, 1] = -55.0
        out_b = encode(enc, Tensor(feats2), lengths)
        np.testing.assert_allclose(out_a.memory.data[:4, 1], out_b.memory.data[:4, 1],
                                   atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(4)
        enc = small_encoder("bi1", feat_dim=3, hidden=4, seed=6)
        feats = Tensor(rng.normal(0, 1, (4, 2, 3)), requires_grad=True, name="f")
        w = rng.normal(0, 1, (4, 2, 2 * enc.hidden))
        wh = rng.normal(0, 1, (2, 4))

        def loss(tape):
            out = encode(enc, feats, np.array([4, 3]), tape=tape)
            a = ops.sum_(ops.mul(out.memory, Tensor(w), tape), tape=tape)
            b = ops.sum_(ops.mul(out.init_states[0][0], Tensor(wh), tape), tape=tape)
            return ops.add(a, b, tape)

        finite_difference_check(loss, [feats, enc.layers[1].wx,
                                       enc.projections[0][0]])


class TestReverseSequence:
    def test_reverses_valid_prefix_only(self):
        x = np.arange(12).reshape(4, 3, 1).astype(float)
        out = reverse_sequence(Tensor(x), np.array([4, 2, 3]))
        np.testing.assert_array_equal(out.data[:, 0, 0], [9, 6, 3, 0])
        np.testing.assert_array_equal(out.data[:, 1, 0], [4, 1, 7, 10])
        np.testing.assert_array_equal(out.data[:, 2, 0], [8, 5, 2, 11])

    def test_involution(self, rng):
        x = rng.normal(0, 1, (5, 3, 2))
        lengths = np.array([5, 2, 4])
        once = reverse_sequence(Tensor(x), lengths)
        twice = reverse_sequence(once, lengths)
        np.testing.assert_array_equal(twice.data, x)

    def test_gradient(self, rng):
        x = Tensor(rng.normal(0, 1, (4, 2, 3)), requires_grad=True)
        w = rng.normal(0, 1, (4, 2, 3))

        def loss(tape):
            return ops.sum_(ops.mul(reverse_sequence(x, np.array([3, 4]), tape),
                                    Tensor(w), tape), tape=tape)

        finite_difference_check(loss, [x])
