"""Two-detector fusion by confidence-weighted voting.

Detections from two models are paired greedily by IoU within each class.
Paired detections merge through fusion scores (confidence ** gamma * per-class
F1); unmatched ones pass through three retention rules in order: a strong
confidence override, a per-class model-advantage test, and a near-tie
fallback. A final class-wise NMS removes residual duplicates. Every input
detection is accounted for by exactly one decision trace.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, Mapping, Sequence

from .core import (
    BBox,
    Detection,
    ENSEMBLE_SOURCE,
    ImageRecord,
    iou,
    nms_classwise_split,
)
from .errors import UnknownClass, ZeroWeight

DEFAULT_MODEL_A = "MODEL_A"
DEFAULT_MODEL_B = "MODEL_B"


class TraceKind(str, Enum):
    """Outcome of the voting rules for one input detection (or fused pair)."""

    AGREEMENT_FUSED = "AGREEMENT_FUSED"
    SOLO_STRONG = "SOLO_STRONG"
    SOLO_ADVANTAGE = "SOLO_ADVANTAGE"
    SOLO_NEAR_TIE = "SOLO_NEAR_TIE"
    DROPPED_UNMATCHED = "DROPPED_UNMATCHED"
    DROPPED_PREFILTER = "DROPPED_PREFILTER"
    DROPPED_NMS = "DROPPED_NMS"


@dataclass(frozen=True, slots=True)
class DecisionTrace:
    """Which rule produced, retained or dropped a detection.

    ``sources`` lists (model id, index into that model's input list). Fused
    traces reference exactly two detections from distinct models; all other
    kinds reference exactly one.
    """

    kind: TraceKind
    sources: tuple[tuple[str, int], ...]
    scores: tuple[tuple[str, float], ...] | None = None

    def __post_init__(self):
        if self.kind is TraceKind.AGREEMENT_FUSED:
            if len(self.sources) != 2 or self.sources[0][0] == self.sources[1][0]:
                raise ValueError(
                    "fused trace must reference two detections from distinct models"
                )
        elif len(self.sources) != 1:
            raise ValueError(f"{self.kind.value} trace must reference exactly one detection")


@dataclass(frozen=True, slots=True)
class FusedDetection:
    """An ensemble output detection annotated with its decision trace."""

    detection: Detection
    trace: DecisionTrace

    def __post_init__(self):
        if self.detection.source != ENSEMBLE_SOURCE:
            raise ValueError("fused detections must carry the ensemble source tag")


class SkillProfile:
    """Per-model, per-class validation F1 scores used as voting weights.

    Exactly two models; every class seen for one model must have an entry for
    the other (checked by the profile parser, re-checked here).
    """

    def __init__(self, f1: Mapping[tuple[str, int], float]):
        models = sorted({model for model, _ in f1})
        if len(models) != 2:
            raise ValueError(f"profile must cover exactly two models, got {models}")
        classes = sorted({class_id for _, class_id in f1})
        for model in models:
            for class_id in classes:
                if (model, class_id) not in f1:
                    raise ValueError(f"profile missing entry ({model}, {class_id})")
        for key, value in f1.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"F1 for {key} must be in [0, 1], got {value}")
        self._f1 = dict(f1)
        self._models: tuple[str, str] = (models[0], models[1])
        self._classes = tuple(classes)

    @property
    def models(self) -> tuple[str, str]:
        return self._models

    @property
    def class_ids(self) -> tuple[int, ...]:
        return self._classes

    def f1(self, model: str, class_id: int) -> float:
        try:
            return self._f1[(model, class_id)]
        except KeyError:
            raise UnknownClass(
                f"profile has no F1 entry for model {model!r}, class {class_id}"
            ) from None

    def other(self, model: str) -> str:
        a, b = self._models
        if model == a:
            return b
        if model == b:
            return a
        raise UnknownClass(f"model {model!r} is not covered by this profile")

    def entries(self) -> Iterator[tuple[str, int, float]]:
        for (model, class_id), value in sorted(self._f1.items()):
            yield model, class_id, value

    def all_ones(self) -> "SkillProfile":
        """Uniform variant: every weight replaced by 1.0 (ablation helper)."""
        return SkillProfile({key: 1.0 for key in self._f1})

    def renamed(self, mapping: Mapping[str, str]) -> "SkillProfile":
        return SkillProfile(
            {(mapping.get(m, m), c): v for (m, c), v in self._f1.items()}
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, SkillProfile) and self._f1 == other._f1


def _default_floors() -> dict[str, float]:
    return {DEFAULT_MODEL_A: 0.6, DEFAULT_MODEL_B: 0.9}


@dataclass(frozen=True)
class VoterParams:
    """All tunable fusion knobs, shipped with the documented defaults.

    ``rule_i_enabled`` exists so the strong-override rule can be switched off
    outright for ablations; ``solo_strong`` alone cannot express that because
    confidence-1.0 detections would still pass at solo_strong=1.0.
    """

    t_iou: float = 0.4
    gamma: float = 2.0
    f1_margin: float = 0.05
    conf_thresh: float = 0.6
    solo_strong: float = 0.95
    near_tie_conf: float = 0.95
    model_conf_floor: Mapping[str, float] = field(default_factory=_default_floors)
    fuse_coords: bool = True
    nms_iou: float = 0.5
    rule_i_enabled: bool = True

    def __post_init__(self):
        _require_range("t_iou", self.t_iou, 0.0, 1.0, low_open=True)
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.f1_margin < 0:
            raise ValueError(f"f1_margin must be >= 0, got {self.f1_margin}")
        _require_range("conf_thresh", self.conf_thresh, 0.0, 1.0)
        _require_range("solo_strong", self.solo_strong, 0.0, 1.0)
        _require_range("near_tie_conf", self.near_tie_conf, 0.0, 1.0)
        _require_range("nms_iou", self.nms_iou, 0.0, 1.0, low_open=True)
        for model, floor in self.model_conf_floor.items():
            _require_range(f"model_conf_floor[{model}]", floor, 0.0, 1.0)
        if self.conf_thresh > self.solo_strong:
            warnings.warn(
                f"conf_thresh ({self.conf_thresh}) exceeds solo_strong "
                f"({self.solo_strong}); rule II is stricter than rule I",
                stacklevel=2,
            )

    def with_overrides(self, **overrides) -> "VoterParams":
        return replace(self, **overrides)

    def floor_for(self, model: str) -> float:
        return self.model_conf_floor.get(model, 0.0)

    def as_dict(self) -> dict:
        return {
            "t_iou": self.t_iou,
            "gamma": self.gamma,
            "f1_margin": self.f1_margin,
            "conf_thresh": self.conf_thresh,
            "solo_strong": self.solo_strong,
            "near_tie_conf": self.near_tie_conf,
            "model_conf_floor": dict(self.model_conf_floor),
            "fuse_coords": self.fuse_coords,
            "nms_iou": self.nms_iou,
            "rule_i_enabled": self.rule_i_enabled,
        }


def _require_range(name, value, lo, hi, low_open=False):
    ok = (lo < value <= hi) if low_open else (lo <= value <= hi)
    if not ok:
        bracket = "(" if low_open else "["
        raise ValueError(f"{name} must be in {bracket}{lo}, {hi}], got {value}")


def fusion_score(confidence: float, gamma: float, class_f1: float) -> float:
    """Weight a detection carries in agreement fusion: confidence**gamma * F1."""
    return confidence**gamma * class_f1


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    unmatched_a: tuple[int, ...]
    unmatched_b: tuple[int, ...]


def match_detections(
    dets_a: Sequence[Detection], dets_b: Sequence[Detection], t_iou: float
) -> MatchResult:
    """Greedily pair same-class detections across two models by descending IoU.

    Only pairs with IoU >= t_iou are candidates; each detection joins at most
    one pair. Equal-IoU ties break on (lower a-index, lower b-index).
    """
    by_class_b: dict[int, list[tuple[int, BBox]]] = defaultdict(list)
    for j, det in enumerate(dets_b):
        by_class_b[det.class_id].append((j, det.box))

    candidates: list[tuple[float, int, int]] = []
    for i, det_a in enumerate(dets_a):
        group = by_class_b.get(det_a.class_id)
        if not group:
            continue
        box_a = det_a.box
        for j, box_b in group:
            overlap = iou(box_a, box_b)
            if overlap >= t_iou:
                candidates.append((overlap, i, j))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        pairs.append((i, j))
        used_a.add(i)
        used_b.add(j)
    unmatched_a = tuple(i for i in range(len(dets_a)) if i not in used_a)
    unmatched_b = tuple(j for j in range(len(dets_b)) if j not in used_b)
    return MatchResult(tuple(pairs), unmatched_a, unmatched_b)


def _mix(coord_a: float, coord_b: float, s_a: float, s_b: float, total: float) -> float:
    # Symmetric weighted mean, clamped inside the coordinate span so rounding
    # can never push the fused box outside its sources. The products and sums
    # commute in IEEE arithmetic, so swapping (a, s_a) with (b, s_b) is exact.
    if coord_a == coord_b:
        return coord_a
    lo, hi = (coord_a, coord_b) if coord_a < coord_b else (coord_b, coord_a)
    value = (s_a * coord_a + s_b * coord_b) / total
    if value < lo:
        return lo
    if value > hi:
        return hi
    return value


def fuse_pair(
    det_a: Detection,
    det_b: Detection,
    s_a: float,
    s_b: float,
    fuse_coords: bool,
    *,
    index_a: int = 0,
    index_b: int = 0,
) -> FusedDetection:
    """Merge one agreement pair into a single ensemble detection.

    With ``fuse_coords`` the box is the score-weighted average of the two
    boxes; otherwise the higher-scoring box wins outright (score ties break on
    higher confidence, then lexicographically smaller coordinates, which keeps
    the result independent of argument order). Fused confidence is the max of
    the two input confidences.

    Raises ZeroWeight when both scores are zero; the caller decides the
    fallback.
    """
    if det_a.class_id != det_b.class_id:
        raise ValueError("cannot fuse detections of different classes")
    total = s_a + s_b
    if total <= 0.0:
        raise ZeroWeight(
            f"both fusion scores are zero for class {det_a.class_id}; "
            "weighted average undefined"
        )
    if fuse_coords:
        box = BBox(
            _mix(det_a.box.x1, det_b.box.x1, s_a, s_b, total),
            _mix(det_a.box.y1, det_b.box.y1, s_a, s_b, total),
            _mix(det_a.box.x2, det_b.box.x2, s_a, s_b, total),
            _mix(det_a.box.y2, det_b.box.y2, s_a, s_b, total),
        )
    else:
        key_a = (s_a, det_a.confidence, det_b.box.as_tuple())
        key_b = (s_b, det_b.confidence, det_a.box.as_tuple())
        box = det_a.box if key_a >= key_b else det_b.box
    confidence = max(det_a.confidence, det_b.confidence)
    trace = DecisionTrace(
        TraceKind.AGREEMENT_FUSED,
        ((det_a.source, index_a), (det_b.source, index_b)),
        scores=((det_a.source, s_a), (det_b.source, s_b)),
    )
    return FusedDetection(
        Detection(box, det_a.class_id, confidence, ENSEMBLE_SOURCE), trace
    )


def solo_decide(
    det: Detection,
    profile: SkillProfile,
    params: VoterParams,
    *,
    index: int = 0,
) -> tuple[bool, DecisionTrace]:
    """Apply the three retention rules, in order, to an unmatched detection.

    I.   keep when confidence >= solo_strong;
    II.  keep when the model's class F1 is strictly higher than the other
         model's and confidence >= conf_thresh;
    III. keep when the two class F1s are within f1_margin and confidence
         >= near_tie_conf.
    """
    own_f1 = profile.f1(det.source, det.class_id)
    other_f1 = profile.f1(profile.other(det.source), det.class_id)
    source = ((det.source, index),)
    confidence = det.confidence
    if params.rule_i_enabled and confidence >= params.solo_strong:
        return True, DecisionTrace(TraceKind.SOLO_STRONG, source)
    if own_f1 > other_f1 and confidence >= params.conf_thresh:
        return True, DecisionTrace(TraceKind.SOLO_ADVANTAGE, source)
    if abs(own_f1 - other_f1) <= params.f1_margin and confidence >= params.near_tie_conf:
        return True, DecisionTrace(TraceKind.SOLO_NEAR_TIE, source)
    return False, DecisionTrace(TraceKind.DROPPED_UNMATCHED, source)


@dataclass(frozen=True)
class FusionResult:
    """Kept ensemble detections plus traces for every dropped input."""

    kept: tuple[FusedDetection, ...]
    dropped: tuple[DecisionTrace, ...]

    def counts(self) -> dict[str, int]:
        counts = {kind.value: 0 for kind in TraceKind}
        for fused in self.kept:
            counts[fused.trace.kind.value] += 1
        for trace in self.dropped:
            counts[trace.kind.value] += 1
        return counts

    def all_traces(self) -> list[DecisionTrace]:
        return [f.trace for f in self.kept] + list(self.dropped)


def fuse_frame(
    frame: ImageRecord, profile: SkillProfile, params: VoterParams
) -> FusionResult:
    """Run the full voting pipeline on one frame.

    Stages: per-model confidence pre-filter, greedy cross-model matching,
    agreement fusion, solo rules for the unmatched remainder, final class-wise
    NMS. Output detections are sorted by descending confidence.
    """
    model_a, model_b = profile.models
    for source in frame.detections:
        if source not in (model_a, model_b):
            raise ValueError(
                f"frame {frame.image_id!r} carries detections for {source!r}, "
                f"but the profile covers {profile.models}"
            )
    dropped: list[DecisionTrace] = []

    def prefilter(source: str) -> tuple[list[Detection], list[int]]:
        floor = params.floor_for(source)
        kept_dets: list[Detection] = []
        kept_idx: list[int] = []
        for idx, det in enumerate(frame.detections_for(source)):
            if det.confidence < floor:
                dropped.append(
                    DecisionTrace(TraceKind.DROPPED_PREFILTER, ((source, idx),))
                )
            else:
                kept_dets.append(det)
                kept_idx.append(idx)
        return kept_dets, kept_idx

    dets_a, orig_a = prefilter(model_a)
    dets_b, orig_b = prefilter(model_b)

    match = match_detections(dets_a, dets_b, params.t_iou)

    candidates: list[FusedDetection] = []
    for i, j in match.pairs:
        det_a, det_b = dets_a[i], dets_b[j]
        s_a = fusion_score(det_a.confidence, params.gamma, profile.f1(model_a, det_a.class_id))
        s_b = fusion_score(det_b.confidence, params.gamma, profile.f1(model_b, det_b.class_id))
        try:
            fused = fuse_pair(
                det_a, det_b, s_a, s_b, params.fuse_coords,
                index_a=orig_a[i], index_b=orig_b[j],
            )
        except ZeroWeight:
            # Degenerate all-zero profile: keep the higher-confidence box.
            winner = det_a if det_a.confidence >= det_b.confidence else det_b
            trace = DecisionTrace(
                TraceKind.AGREEMENT_FUSED,
                ((model_a, orig_a[i]), (model_b, orig_b[j])),
                scores=((model_a, 0.0), (model_b, 0.0)),
            )
            fused = FusedDetection(
                Detection(winner.box, winner.class_id, max(det_a.confidence, det_b.confidence), ENSEMBLE_SOURCE),
                trace,
            )
        candidates.append(fused)

    for dets, orig, unmatched in (
        (dets_a, orig_a, match.unmatched_a),
        (dets_b, orig_b, match.unmatched_b),
    ):
        for i in unmatched:
            det = dets[i]
            keep, trace = solo_decide(det, profile, params, index=orig[i])
            if keep:
                candidates.append(
                    FusedDetection(
                        Detection(det.box, det.class_id, det.confidence, ENSEMBLE_SOURCE),
                        trace,
                    )
                )
            else:
                dropped.append(trace)

    kept_idx, suppressed_idx = nms_classwise_split(
        [c.detection for c in candidates], params.nms_iou
    )
    for idx in suppressed_idx:
        for contributor in candidates[idx].trace.sources:
            dropped.append(DecisionTrace(TraceKind.DROPPED_NMS, (contributor,)))
    kept = tuple(candidates[i] for i in kept_idx)
    return FusionResult(kept, tuple(dropped))
