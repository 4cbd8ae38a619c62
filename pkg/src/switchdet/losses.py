"""Conservativeness-regularized training loss with analytic gradients.

The per-frame classifier is trained with cross entropy against ground-truth
state labels plus an auxiliary penalty applied only where its own argmax
prediction changes between consecutive frames: at such a frame t the previous
prediction acts as a pseudo-label and the penalty is -log softmax(logits_t)
at that pseudo-label.  Pseudo-labels and the change mask are treated as
constants when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError


@dataclass
class LossResult:
    total: float
    ce_part: float
    cons_part: float
    grad: np.ndarray  # d(total)/d(logits), same shape as the logits
    num_cc_positions: int


def _as_finite(x, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite values in {name}")
    return arr


def log_softmax(rows: np.ndarray) -> np.ndarray:
    """Row-wise log softmax with max subtraction; rows along the last axis."""
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def conservativeness_term(logits_t, prev_state: int) -> float:
    """Penalty at one frame: -log p[prev_state] if argmax moved off it, else 0."""
    row = _as_finite(logits_t, "logits_t", ndim=1)
    s = row.shape[0]
    if s < 2:
        raise DomainError(f"need at least 2 states, got {s}")
    if not (0 <= prev_state < s):
        raise DomainError(f"prev_state {prev_state} out of range for {s} states")
    if int(np.argmax(row)) == prev_state:
        return 0.0
    return float(-log_softmax(row)[prev_state])


def sequence_loss_and_grad(logits, gt_states, alpha: float) -> LossResult:
    """Combined loss over one sequence and its exact gradient w.r.t. logits.

    ce_part averages cross entropy against gt_states over all T frames.
    cons_part averages the conservativeness penalty over the frames t >= 1
    where argmax(logits_t) != argmax(logits_{t-1}) (0 when there are none).
    total = ce_part + alpha * cons_part.
    """
    if alpha < 0:
        raise DomainError(f"negative alpha {alpha}")
    rows = _as_finite(logits, "logits", ndim=2)
    t, s = rows.shape
    if t < 1:
        raise DomainError("empty logit sequence")
    y = np.asarray(gt_states, dtype=np.int64)
    if y.shape != (t,):
        raise DomainError(f"gt length {y.shape} does not match logits length {t}")
    if y.size and (y.min() < 0 or y.max() >= s):
        raise DomainError("ground-truth state out of range")

    logp = log_softmax(rows)
    probs = np.exp(logp)
    idx = np.arange(t)

    ce_part = float(-logp[idx, y].mean())
    grad = probs.copy()
    grad[idx, y] -= 1.0
    grad /= t

    pred = rows.argmax(axis=1)  # ties resolve to the lowest index
    cc = np.flatnonzero(pred[1:] != pred[:-1]) + 1
    num_cc = int(cc.size)
    if num_cc:
        targets = pred[cc - 1]
        cons_part = float(-logp[cc, targets].mean())
        gcons = np.zeros_like(rows)
        gcons[cc] = probs[cc]
        gcons[cc, targets] -= 1.0
        grad += (alpha / num_cc) * gcons
    else:
        cons_part = 0.0

    return LossResult(
        total=ce_part + alpha * cons_part,
        ce_part=ce_part,
        cons_part=cons_part,
        grad=grad,
        num_cc_positions=num_cc,
    )


def batched_cc_loss(logits) -> float:
    """Batched conservativeness penalty over a (B, L, S) logit tensor.

    Mean over all (batch, frame) positions with t >= 1 whose argmax differs
    from the previous frame's, of -log softmax at the previous argmax;
    0 when no position changes.
    """
    arr = _as_finite(logits, "logits", ndim=3)
    if arr.shape[1] < 2:
        raise DomainError(f"need sequence length >= 2, got {arr.shape[1]}")
    pred = arr.argmax(axis=2)
    mask = pred[:, 1:] != pred[:, :-1]
    if not mask.any():
        return 0.0
    targets = pred[:, :-1][mask]
    logp = log_softmax(arr[:, 1:][mask])
    return float(-logp[np.arange(targets.size), targets].mean())
