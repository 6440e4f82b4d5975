"""Anchor-based face-box propagation through per-frame detections by maximum IOU."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

ANCHORED, MATCHED, CARRIED, AMBIGUOUS = "anchored", "matched", "carried", "ambiguous"


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite: {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box needs x1 < x2 and y1 < y2: {vals}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def shifted(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass
class TrackInput:
    frames: int
    detections: list[list[Box]]
    anchors: dict[int, Box]

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("need at least one frame")
        if len(self.detections) != self.frames:
            raise ValueError(f"{len(self.detections)} detection lists for {self.frames} frames")
        if not self.anchors:
            raise ValueError("need at least one anchor frame")
        for f in self.anchors:
            if not 0 <= f < self.frames:
                raise ValueError(f"anchor frame {f} outside [0, {self.frames})")

    @classmethod
    def from_dict(cls, d: dict) -> "TrackInput":
        return cls(
            int(d["frames"]),
            [[Box(*b) for b in frame] for frame in d["detections"]],
            {int(k): Box(*v) for k, v in d["anchors"].items()},
        )

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "detections": [[b.as_list() for b in frame] for frame in self.detections],
            "anchors": {str(k): v.as_list() for k, v in sorted(self.anchors.items())},
        }

    def mirrored(self) -> "TrackInput":
        """Same input with time reversed."""
        F = self.frames
        return TrackInput(F, self.detections[::-1], {F - 1 - f: b for f, b in self.anchors.items()})


@dataclass
class Track:
    boxes: list[Box]
    flags: list[str]
    detection_index: list[int | None] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "track": [b.as_list() for b in self.boxes],
            "flags": list(self.flags),
            "detection_index": list(self.detection_index),
        }


def _best(prev: Box, candidates: Sequence[Box]) -> tuple[int | None, str]:
    if not candidates:
        return None, CARRIED
    scores = [iou(prev, c) for c in candidates]
    j = max(range(len(scores)), key=lambda k: (scores[k], -k))  # lowest index on ties
    if scores[j] == 0.0:
        return None, AMBIGUOUS
    return j, MATCHED


def _walk(inp: TrackInput, start: int, stop: int, step: int):
    """Chain from anchor ``start`` towards ``stop`` (exclusive); yields (frame, box, flag, det_idx)."""
    prev = inp.anchors[start]
    for f in range(start + step, stop, step):
        j, flag = _best(prev, inp.detections[f])
        if j is not None:
            prev = inp.detections[f][j]
        yield f, prev, flag, j


def propagate(inp: TrackInput) -> Track:
    """Select one box per frame by chaining max-IOU matches out of every anchor.

    Each non-anchor frame takes the selection propagated from its nearest anchor;
    equidistant frames take the earlier anchor's.  Propagation from an anchor
    stops at the neighbouring anchors.
    """
    F = inp.frames
    anchors = sorted(inp.anchors)
    boxes: list[Box | None] = [None] * F
    flags: list[str | None] = [None] * F
    dets: list[int | None] = [None] * F
    dist = [math.inf] * F
    for f in anchors:
        boxes[f], flags[f], dist[f] = inp.anchors[f], ANCHORED, 0
    for k, a in enumerate(anchors):
        lo = anchors[k - 1] if k > 0 else -1
        hi = anchors[k + 1] if k + 1 < len(anchors) else F
        for step, stop in ((1, hi), (-1, lo)):
            for f, box, flag, j in _walk(inp, a, stop, step):
                d = abs(f - a)
                # strict '<' keeps the earlier anchor on ties: anchors are visited in order
                if d < dist[f]:
                    boxes[f], flags[f], dets[f], dist[f] = box, flag, j, d
    return Track(boxes, flags, dets)


def track_from_json(path) -> Track:
    with open(path) as fh:
        return propagate(TrackInput.from_dict(json.load(fh)))
