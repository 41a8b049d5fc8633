"""boxvote: two-detector bounding-box fusion with interpretable voting rules,
plus an evaluation suite, perturbation tools, and a live tuning service."""

from .core import (
    BBox,
    Detection,
    ENSEMBLE_SOURCE,
    GROUND_TRUTH_SOURCE,
    GroundTruthBox,
    ImageRecord,
    LabelMap,
    iou,
    nms_classwise,
)
from .voter import (
    DecisionTrace,
    FusedDetection,
    FusionResult,
    SkillProfile,
    TraceKind,
    VoterParams,
    fuse_frame,
    fuse_pair,
    fusion_score,
    match_detections,
    solo_decide,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Detection",
    "DecisionTrace",
    "ENSEMBLE_SOURCE",
    "FusedDetection",
    "FusionResult",
    "GROUND_TRUTH_SOURCE",
    "GroundTruthBox",
    "ImageRecord",
    "LabelMap",
    "SkillProfile",
    "TraceKind",
    "VoterParams",
    "fuse_frame",
    "fuse_pair",
    "fusion_score",
    "iou",
    "match_detections",
    "nms_classwise",
    "solo_decide",
    "__version__",
]
