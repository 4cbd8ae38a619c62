"""Class-agnostic online detection of overlapping action intervals in streams."""

__version__ = "0.1.0"

from .exceptions import (
    CapacityError,
    DomainError,
    ProtocolError,
    SwitchDetError,
)
from .losses import (
    LossResult,
    batched_cc_loss,
    conservativeness_term,
    sequence_loss_and_grad,
)
from .metrics import (
    APReport,
    MatchReport,
    PointAPReport,
    f1_at_tiou,
    hungarian_assign,
    interval_map,
    point_map,
    tiou,
)
from .scorer import (
    ScorerParams,
    backward_sequence,
    forward_sequence,
    forward_step,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .switchboard import (
    ActionInterval,
    EncodeReport,
    StreamDecoder,
    SwitchConfig,
    active_switches,
    decode_sequence,
    decode_streaming,
    encode_instances,
)
from .synthgen import SynthConfig, generate_stream
from .trainer import (
    SweepRow,
    TrainConfig,
    infer_instances,
    run_cell,
    sweep_alpha,
    train,
)

__all__ = [
    "ActionInterval",
    "APReport",
    "CapacityError",
    "DomainError",
    "EncodeReport",
    "LossResult",
    "MatchReport",
    "PointAPReport",
    "ProtocolError",
    "ScorerParams",
    "StreamDecoder",
    "SweepRow",
    "SwitchConfig",
    "SwitchDetError",
    "SynthConfig",
    "TrainConfig",
    "active_switches",
    "backward_sequence",
    "batched_cc_loss",
    "conservativeness_term",
    "decode_sequence",
    "decode_streaming",
    "encode_instances",
    "f1_at_tiou",
    "forward_sequence",
    "forward_step",
    "generate_stream",
    "hungarian_assign",
    "infer_instances",
    "init_params",
    "interval_map",
    "load_checkpoint",
    "point_map",
    "run_cell",
    "save_checkpoint",
    "sequence_loss_and_grad",
    "sweep_alpha",
    "tiou",
    "train",
]
