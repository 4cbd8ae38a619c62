"""Deterministic training loop, end-to-end inference and parameter sweeps.

One optimization step per truncated-backprop window, Adam updates, hidden
state carried across window boundaries without gradient flow.  Everything is
deterministic given (dataset, config, seed).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DomainError
from .losses import sequence_loss_and_grad
from .metrics import f1_at_tiou
from .scorer import (
    ScorerParams,
    backward_sequence,
    forward_sequence,
    forward_step,
    init_params,
)
from .switchboard import (
    ActionInterval,
    StreamDecoder,
    SwitchConfig,
    encode_instances,
)

# One video is (T x D feature matrix, list of ground-truth instances).
Video = tuple[np.ndarray, list[ActionInterval]]


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.0
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 1
    bptt_len: int = 128
    seed: int = 0
    num_switches: int = 2
    hidden_dim: int = 32

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise DomainError(f"negative alpha {self.alpha}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")
        if self.bptt_len < 2:
            raise DomainError(f"bptt_len must be >= 2, got {self.bptt_len}")


@dataclass
class EpochStats:
    """Per-epoch aggregate of the window losses."""

    epoch: int
    mean_total: float
    mean_ce: float
    mean_cons: float
    num_cc_positions: int
    num_windows: int

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "mean_total": self.mean_total,
            "mean_ce": self.mean_ce,
            "mean_cons": self.mean_cons,
            "num_cc_positions": self.num_cc_positions,
            "num_windows": self.num_windows,
        }


class Adam:
    """Bias-corrected Adam over the scorer's parameter arrays, in place."""

    def __init__(self, params: ScorerParams, lr, beta1, beta2, eps):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, params: ScorerParams, grads: ScorerParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for arr, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def train(
    dataset: list[Video], config: TrainConfig
) -> tuple[ScorerParams, list[EpochStats]]:
    """Train the scorer on encoded ground-truth states.

    Ground truth is encoded with the drop-newest policy, so videos whose
    overlap exceeds the switch count still train on what fits.
    """
    if not dataset:
        raise DomainError("empty dataset")
    switch_cfg = SwitchConfig(config.num_switches)
    feature_dim = np.asarray(dataset[0][0]).shape[1]
    encoded = []
    for feats, insts in dataset:
        feats = np.asarray(feats, dtype=np.float64)
        labels, _ = encode_instances(insts, feats.shape[0], switch_cfg)
        encoded.append((feats, labels))

    params = init_params(
        feature_dim, config.hidden_dim, switch_cfg.num_states, config.seed
    )
    opt = Adam(
        params,
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    )

    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        totals, ces, conss = [], [], []
        num_cc = 0
        for feats, labels in encoded:
            h = np.zeros(config.hidden_dim)
            for start in range(0, feats.shape[0], config.bptt_len):
                stop = min(start + config.bptt_len, feats.shape[0])
                logits, cache = forward_sequence(params, feats[start:stop], h0=h)
                result = sequence_loss_and_grad(
                    logits, labels[start:stop], config.alpha
                )
                grads = backward_sequence(cache, result.grad)
                opt.step(params, grads)
                h = cache.h[-1].copy()  # carry state, no gradient across windows
                totals.append(result.total)
                ces.append(result.ce_part)
                conss.append(result.cons_part)
                num_cc += result.num_cc_positions
        history.append(
            EpochStats(
                epoch=epoch,
                mean_total=float(np.mean(totals)),
                mean_ce=float(np.mean(ces)),
                mean_cons=float(np.mean(conss)),
                num_cc_positions=num_cc,
                num_windows=len(totals),
            )
        )
    return params, history


def infer_instances(
    params: ScorerParams, features, config: SwitchConfig
) -> list[ActionInterval]:
    """Streaming inference: per-frame argmax state into the online decoder.

    No thresholds anywhere; equals decoding the full argmax state sequence.
    """
    if params.num_states != config.num_states:
        raise DomainError(
            f"checkpoint has {params.num_states} states, config expects "
            f"{config.num_states}"
        )
    features = np.asarray(features, dtype=np.float64)
    decoder = StreamDecoder(config)
    h = np.zeros(params.hidden_dim)
    out: list[ActionInterval] = []
    for t in range(features.shape[0]):
        logits, h = forward_step(params, features[t], h)
        out.extend(decoder.step(int(np.argmax(logits)), t))
    out.extend(decoder.finalize())
    out.sort(key=lambda a: a.span)
    return out


@dataclass
class SweepRow:
    num_switches: int
    alpha: float
    f1: float
    precision: float
    recall: float
    num_proposals: int
    num_gt: int
    seed: int
    error: str | None = None

    CSV_HEADER = "num_switches,alpha,f1,precision,recall,num_proposals,num_gt,seed"

    def to_csv(self) -> str:
        return (
            f"{self.num_switches},{self.alpha},{self.f1:.6f},"
            f"{self.precision:.6f},{self.recall:.6f},"
            f"{self.num_proposals},{self.num_gt},{self.seed}"
        )


def run_cell(
    train_set: list[Video],
    eval_set: list[Video],
    config: TrainConfig,
    tiou_threshold: float = 0.5,
) -> SweepRow:
    """Train one configuration and evaluate it on the held-out videos."""
    params, _ = train(train_set, config)
    switch_cfg = SwitchConfig(config.num_switches)
    preds = {}
    gts = {}
    for i, (feats, insts) in enumerate(eval_set):
        vid = f"eval{i:04d}"
        preds[vid] = infer_instances(params, feats, switch_cfg)
        gts[vid] = insts
    report = f1_at_tiou(preds, gts, tiou_threshold)
    return SweepRow(
        num_switches=config.num_switches,
        alpha=config.alpha,
        f1=report.f1,
        precision=report.precision,
        recall=report.recall,
        num_proposals=report.num_pred,
        num_gt=report.num_gt,
        seed=config.seed,
    )


def _run_cell_task(args) -> SweepRow:
    train_set, eval_set, config, tiou_threshold = args
    try:
        return run_cell(train_set, eval_set, config, tiou_threshold)
    except DomainError as exc:
        return SweepRow(
            num_switches=config.num_switches,
            alpha=config.alpha,
            f1=math.nan,
            precision=math.nan,
            recall=math.nan,
            num_proposals=0,
            num_gt=0,
            seed=config.seed,
            error=str(exc),
        )


def sweep_alpha(
    train_set: list[Video],
    eval_set: list[Video],
    alphas: list[float],
    switch_counts: list[int],
    base: TrainConfig,
    seeds: tuple[int, ...] = (0, 1, 2),
    tiou_threshold: float = 0.5,
    jobs: int = 1,
) -> list[SweepRow]:
    """Train one model per (num_switches, alpha, seed) cell.

    Each reported row is the componentwise median across seeds.  Failed
    cells come back with NaN metrics and their error message instead of
    aborting the whole sweep.  Rows are sorted by (num_switches, alpha).
    """
    if not alphas or not switch_counts or not seeds:
        raise DomainError("empty sweep grid")
    tasks = []
    for k in sorted(switch_counts):
        for alpha in sorted(alphas):
            for seed in seeds:
                cfg = replace(base, num_switches=k, alpha=alpha, seed=seed)
                tasks.append((train_set, eval_set, cfg, tiou_threshold))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_task, tasks))
    else:
        results = [_run_cell_task(t) for t in tasks]

    rows = []
    n_seeds = len(seeds)
    for i in range(0, len(results), n_seeds):
        cell = results[i : i + n_seeds]
        ok = [r for r in cell if r.error is None]
        if not ok:
            rows.append(cell[0])
            continue
        rows.append(
            SweepRow(
                num_switches=ok[0].num_switches,
                alpha=ok[0].alpha,
                f1=float(np.median([r.f1 for r in ok])),
                precision=float(np.median([r.precision for r in ok])),
                recall=float(np.median([r.recall for r in ok])),
                num_proposals=int(np.median([r.num_proposals for r in ok])),
                num_gt=ok[0].num_gt,
                seed=ok[0].seed,
            )
        )
    rows.sort(key=lambda r: (r.num_switches, r.alpha))
    return rows


def rows_to_csv(rows: list[SweepRow]) -> str:
    return "\n".join([SweepRow.CSV_HEADER] + [r.to_csv() for r in rows]) + "\n"
