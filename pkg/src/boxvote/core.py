"""Geometry primitives and detection records shared by every other module.

Boxes are axis-aligned, corner format (x1, y1, x2, y2), continuous pixel
coordinates with the origin at the top-left. All types are immutable values;
every operation here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

GROUND_TRUTH_SOURCE = "GT"
ENSEMBLE_SOURCE = "ENSEMBLE"


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box with strictly positive area and finite coordinates."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.x1, self.y1, self.x2, self.y2
        if type(x1) is not float or type(y1) is not float or type(x2) is not float or type(y2) is not float:
            # Coerce to native floats so repr-based serialization round-trips.
            x1, y1, x2, y2 = float(x1), float(y1), float(x2), float(y2)
            object.__setattr__(self, "x1", x1)
            object.__setattr__(self, "y1", y1)
            object.__setattr__(self, "x2", x2)
            object.__setattr__(self, "y2", y2)
        # The ordering test also rejects NaN; the summed finiteness test
        # catches infinities (coordinates are far below overflow scale).
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"box must satisfy x1 < x2 and y1 < y2, got {(x1, y1, x2, y2)}")
        if not math.isfinite(x1 + y1 + x2 + y2):
            raise ValueError(f"box coordinates must be finite, got {(x1, y1, x2, y2)}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True, slots=True)
class Detection:
    """One detector output: box, class, confidence and the emitting model's id."""

    box: BBox
    class_id: int
    confidence: float
    source: str

    def __post_init__(self):
        if type(self.confidence) is not float:
            object.__setattr__(self, "confidence", float(self.confidence))
        if type(self.class_id) is not int:
            object.__setattr__(self, "class_id", int(self.class_id))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True, slots=True)
class GroundTruthBox:
    box: BBox
    class_id: int


class LabelMap:
    """Bidirectional registry between class ids and display names.

    Ids must be non-negative and unique; names must be unique and free of
    whitespace and commas so they survive the line-oriented file formats.
    """

    def __init__(self, names_by_id: Mapping[int, str]):
        names = dict(names_by_id)
        if not names:
            raise ValueError("label map must contain at least one class")
        for class_id, name in names.items():
            if class_id < 0:
                raise ValueError(f"class id must be non-negative, got {class_id}")
            if not name or any(ch in name for ch in (",", "#", " ", "\t", "\n")):
                raise ValueError(f"invalid class name {name!r}")
        if len(set(names.values())) != len(names):
            raise ValueError("class names must be unique")
        self._names = dict(sorted(names.items()))
        self._ids = {name: class_id for class_id, name in self._names.items()}

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "LabelMap":
        return cls({i: name for i, name in enumerate(names)})

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(self._names)

    def name(self, class_id: int) -> str:
        return self._names[class_id]

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def items(self) -> Iterator[tuple[int, str]]:
        return iter(self._names.items())

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._names

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelMap) and self._names == other._names


@dataclass(frozen=True)
class ImageRecord:
    """One frame: ground truth plus per-model detection lists."""

    image_id: str
    width: int
    height: int
    ground_truth: tuple[GroundTruthBox, ...] = ()
    detections: Mapping[str, tuple[Detection, ...]] = field(default_factory=dict)

    def detections_for(self, source: str) -> tuple[Detection, ...]:
        return tuple(self.detections.get(source, ()))


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; exactly 0 when they do not overlap."""
    ix1 = a.x1 if a.x1 > b.x1 else b.x1
    iy1 = a.y1 if a.y1 > b.y1 else b.y1
    ix2 = a.x2 if a.x2 < b.x2 else b.x2
    iy2 = a.y2 if a.y2 < b.y2 else b.y2
    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def nms_classwise_split(
    dets: Sequence[Detection], iou_thresh: float
) -> tuple[list[int], list[int]]:
    """Greedy class-wise NMS returning (kept, suppressed) input indices.

    Kept indices come out in output order: confidence descending, ties broken
    by lower class id then input position. Cross-class pairs never suppress
    each other.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    order = sorted(
        range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].class_id, i)
    )
    kept: list[int] = []
    suppressed: list[int] = []
    kept_by_class: dict[int, list[BBox]] = {}
    for i in order:
        det = dets[i]
        group = kept_by_class.setdefault(det.class_id, [])
        if any(iou(det.box, kept_box) >= iou_thresh for kept_box in group):
            suppressed.append(i)
        else:
            group.append(det.box)
            kept.append(i)
    return kept, suppressed


def nms_classwise(dets: Sequence[Detection], iou_thresh: float) -> list[Detection]:
    """Class-wise NMS keeping the highest-confidence box per overlapping group."""
    kept, _ = nms_classwise_split(dets, iou_thresh)
    return [dets[i] for i in kept]


def clamp_box(box: BBox, width: float, height: float) -> BBox:
    """Clamp a box into [0, width] x [0, height], preserving validity."""
    x1 = min(max(box.x1, 0.0), width)
    y1 = min(max(box.y1, 0.0), height)
    x2 = min(max(box.x2, 0.0), width)
    y2 = min(max(box.y2, 0.0), height)
    if not (x1 < x2 and y1 < y2):
        raise ValueError(
            f"box {box.as_tuple()} collapses when clamped to {width}x{height}"
        )
    return BBox(x1, y1, x2, y2)
