"""On-disk formats: instance JSON Lines and state-sequence JSON.

Instance records are one JSON object per line:
  {"video_id": str, "start": int, "end": int,
   "class_id": int|null, "score": number|null, "truncated": bool}

State sequences are a single JSON object:
  {"video_id": str, "num_switches": int, "labels": [int, ...]}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import DomainError
from .switchboard import ActionInterval, SwitchConfig


def instance_to_record(video_id: str, inst: ActionInterval) -> dict:
    return {
        "video_id": video_id,
        "start": inst.start_frame,
        "end": inst.end_frame,
        "class_id": inst.class_id,
        "score": inst.score,
        "truncated": inst.truncated,
    }


def instance_from_record(rec: dict) -> tuple[str, ActionInterval]:
    try:
        return rec["video_id"], ActionInterval(
            start_frame=int(rec["start"]),
            end_frame=int(rec["end"]),
            class_id=None if rec.get("class_id") is None else int(rec["class_id"]),
            score=None if rec.get("score") is None else float(rec["score"]),
            truncated=bool(rec.get("truncated", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"bad instance record {rec!r}: {exc}") from exc


def write_instances(path, videos: dict[str, list[ActionInterval]]) -> None:
    """Write per-video instance lists as JSON Lines, sorted for reproducibility."""
    with open(path, "w", encoding="utf-8") as fh:
        for video_id in sorted(videos):
            for inst in sorted(videos[video_id], key=lambda a: a.span):
                fh.write(json.dumps(instance_to_record(video_id, inst)) + "\n")


def read_instances(path) -> dict[str, list[ActionInterval]]:
    videos: dict[str, list[ActionInterval]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            video_id, inst = instance_from_record(rec)
            videos.setdefault(video_id, []).append(inst)
    return videos


def write_state_sequence(path, video_id: str, config: SwitchConfig, labels) -> None:
    obj = {
        "video_id": video_id,
        "num_switches": config.num_switches,
        "labels": [int(v) for v in np.asarray(labels)],
    }
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")


def read_state_sequence(path) -> tuple[str, SwitchConfig, np.ndarray]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        video_id = obj["video_id"]
        config = SwitchConfig(int(obj["num_switches"]))
        labels = np.asarray(obj["labels"], dtype=np.int64)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"bad state-sequence file {path}: {exc}") from exc
    if labels.size and (labels.min() < 0 or labels.max() >= config.num_states):
        raise DomainError(f"{path}: label out of range for config")
    return video_id, config, labels
