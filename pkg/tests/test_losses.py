import numpy as np
import pytest

from switchdet.exceptions import DomainError
from switchdet.losses import (
    batched_cc_loss,
    conservativeness_term,
    log_softmax,
    sequence_loss_and_grad,
)


def logits_for_probs(probs):
    return np.log(np.asarray(probs, dtype=np.float64))


def random_case(rng, t_max=16, s_max=8, tie_margin=1e-3):
    """Random logits with no argmax near-tie, plus random targets."""
    while True:
        t = int(rng.integers(1, t_max + 1))
        s = int(rng.integers(2, s_max + 1))
        logits = rng.normal(size=(t, s)) * 2.0
        top2 = np.sort(logits, axis=1)[:, -2:]
        if (top2[:, 1] - top2[:, 0]).min() > tie_margin:
            return logits, rng.integers(0, s, size=t)


def fd_grad(logits, y, alpha, eps=1e-4):
    grad = np.zeros_like(logits)
    for i in range(logits.shape[0]):
        for j in range(logits.shape[1]):
            lp = logits.copy()
            lp[i, j] += eps
            lm = logits.copy()
            lm[i, j] -= eps
            grad[i, j] = (
                sequence_loss_and_grad(lp, y, alpha).total
                - sequence_loss_and_grad(lm, y, alpha).total
            ) / (2 * eps)
    return grad


class TestConservativenessTerm:
    def test_penalizes_moving_off_previous_state(self):
        logits = logits_for_probs([0.2, 0.7, 0.05, 0.05])
        assert conservativeness_term(logits, 0) == pytest.approx(
            -np.log(0.2), rel=1e-6
        )

    def test_zero_when_argmax_stays(self):
        logits = logits_for_probs([0.2, 0.7, 0.05, 0.05])
        assert conservativeness_term(logits, 1) == 0.0

    def test_tie_breaks_to_lowest_index(self):
        logits = np.array([10.0, 10.0 - 1e-9, 0.0, 0.0])
        # argmax resolves to index 0 != 1, so the penalty is active;
        # softmax mass sits almost entirely on the two tied entries.
        assert conservativeness_term(logits, 1) == pytest.approx(
            np.log(2), abs=1e-3
        )

    def test_rejects_single_state(self):
        with pytest.raises(DomainError):
            conservativeness_term(np.array([1.0]), 0)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            conservativeness_term(np.array([np.nan, 0.0]), 0)

    def test_no_overflow_for_large_logits(self):
        logits = np.array([1e4, -1e4, 0.0])
        assert np.isfinite(conservativeness_term(logits, 1))


class TestSequenceLoss:
    def test_single_frame_has_no_penalty(self):
        logits = logits_for_probs([[0.5, 0.5]])
        res = sequence_loss_and_grad(logits, [1], alpha=1.0)
        assert res.total == pytest.approx(np.log(2), rel=1e-9)
        assert res.cons_part == 0.0
        assert res.num_cc_positions == 0

    def test_confident_correct_constant_prediction(self):
        logits = np.tile([20.0, 0.0, 0.0, 0.0], (6, 1))
        res = sequence_loss_and_grad(logits, [0] * 6, alpha=0.1)
        assert res.total == pytest.approx(0.0, abs=1e-8)
        assert res.num_cc_positions == 0

    def test_total_is_ce_plus_weighted_cons(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            logits, y = random_case(rng)
            res = sequence_loss_and_grad(logits, y, alpha=0.3)
            assert res.total == pytest.approx(
                res.ce_part + 0.3 * res.cons_part, rel=1e-12
            )

    def test_alpha_linearity(self):
        rng = np.random.default_rng(6)
        logits, y = random_case(rng, t_max=12)
        r0 = sequence_loss_and_grad(logits, y, 0.0)
        r1 = sequence_loss_and_grad(logits, y, 1.0)
        r2 = sequence_loss_and_grad(logits, y, 2.0)
        slope = r1.total - r0.total
        assert slope == pytest.approx(r0.cons_part, rel=1e-9, abs=1e-12)
        assert r2.total - r1.total == pytest.approx(slope, rel=1e-9, abs=1e-12)

    def test_zero_change_law(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            logits, y = random_case(rng)
            res = sequence_loss_and_grad(logits, y, 1.0)
            pred = logits.argmax(axis=1)
            changed = bool((pred[1:] != pred[:-1]).any())
            assert (res.cons_part > 0) == changed

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        logits, y = random_case(rng)
        shifted = logits + rng.normal(size=(logits.shape[0], 1)) * 5.0
        a = sequence_loss_and_grad(logits, y, 0.05)
        b = sequence_loss_and_grad(shifted, y, 0.05)
        assert abs(a.total - b.total) < 1e-10
        assert np.abs(a.grad - b.grad).max() < 1e-10

    @pytest.mark.parametrize("alpha", [0.0, 0.025, 0.1])
    def test_gradient_matches_finite_differences(self, alpha):
        rng = np.random.default_rng(9)
        for _ in range(25):
            logits, y = random_case(rng)
            res = sequence_loss_and_grad(logits, y, alpha)
            fd = fd_grad(logits, y, alpha)
            rel = np.abs(fd - res.grad) / np.maximum(
                1e-8, np.abs(fd) + np.abs(res.grad)
            )
            assert rel.max() < 1e-5

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            sequence_loss_and_grad(np.zeros((3, 2)), [0, 1], 0.0)

    def test_negative_alpha(self):
        with pytest.raises(DomainError):
            sequence_loss_and_grad(np.zeros((2, 2)), [0, 0], -0.1)

    def test_target_out_of_range(self):
        with pytest.raises(DomainError):
            sequence_loss_and_grad(np.zeros((2, 2)), [0, 2], 0.0)


class TestBatchedLoss:
    def test_constant_prediction_is_zero(self):
        logits = np.tile([3.0, 0.0, 1.0], (2, 5, 1))
        assert batched_cc_loss(logits) == 0.0

    def test_single_change(self):
        logits = logits_for_probs([[[0.9, 0.1], [0.1, 0.9]]])
        assert batched_cc_loss(logits) == pytest.approx(-np.log(0.1), rel=1e-9)

    def test_constant_sequence_contributes_nothing(self):
        changing = logits_for_probs([[0.9, 0.1], [0.1, 0.9], [0.2, 0.8]])
        constant = np.tile([5.0, 0.0], (3, 1))
        both = batched_cc_loss(np.stack([changing, constant]))
        alone = batched_cc_loss(changing[None])
        assert both == pytest.approx(alone, rel=1e-12)

    def test_matches_sequence_form_for_single_batch(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            logits, y = random_case(rng, t_max=16)
            if logits.shape[0] < 2:
                continue
            res = sequence_loss_and_grad(logits, y, alpha=1.0)
            batched = batched_cc_loss(logits[None])
            assert batched == pytest.approx(res.cons_part, rel=1e-12, abs=1e-15)

    def test_rejects_short_sequences(self):
        with pytest.raises(DomainError):
            batched_cc_loss(np.zeros((1, 1, 3)))


def test_log_softmax_normalizes():
    rng = np.random.default_rng(1)
    rows = rng.normal(size=(4, 6)) * 100
    assert np.exp(log_softmax(rows)).sum(axis=1) == pytest.approx(np.ones(4))
