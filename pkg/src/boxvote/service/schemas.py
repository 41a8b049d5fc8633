"""Pydantic request/response models for the tuning service wire format."""

from __future__ import annotations

from typing import Annotated, Optional

from pydantic import BaseModel, ConfigDict, Field

UnitFloat = Annotated[float, Field(ge=0.0, le=1.0)]
OpenUnitFloat = Annotated[float, Field(gt=0.0, le=1.0)]


class BoxOut(BaseModel):
    x1: float
    y1: float
    x2: float
    y2: float


class DetectionOut(BaseModel):
    box: BoxOut
    class_id: int
    class_name: str
    confidence: float
    source: str


class GroundTruthOut(BaseModel):
    box: BoxOut
    class_id: int
    class_name: str


class ImageEntry(BaseModel):
    image_id: str
    width: int
    height: int
    conditions: list[str]
    has_pixels: bool


class ImagesPage(BaseModel):
    items: list[ImageEntry]
    page: int
    page_size: int
    total: int
    pages: int


class ParamsOverride(BaseModel):
    """Partial voter parameters; omitted fields keep the loaded defaults."""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    t_iou: Optional[OpenUnitFloat] = None
    gamma: Optional[Annotated[float, Field(ge=0.0)]] = None
    f1_margin: Optional[Annotated[float, Field(ge=0.0)]] = None
    conf_thresh: Optional[UnitFloat] = None
    solo_strong: Optional[UnitFloat] = None
    near_tie_conf: Optional[UnitFloat] = None
    model_conf_floor: Optional[dict[str, UnitFloat]] = None
    fuse_coords: Optional[bool] = None
    nms_iou: Optional[OpenUnitFloat] = None
    rule_i_enabled: Optional[bool] = None

    def overrides(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ParamsOut(BaseModel):
    t_iou: float
    gamma: float
    f1_margin: float
    conf_thresh: float
    solo_strong: float
    near_tie_conf: float
    model_conf_floor: dict[str, float]
    fuse_coords: bool
    nms_iou: float
    rule_i_enabled: bool


class ProfileEntry(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    class_id: int
    class_name: str
    f1: float


class ProfileOut(BaseModel):
    models: list[str]
    entries: list[ProfileEntry]


class TraceSourceOut(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_id: str
    index: int


class TraceOut(BaseModel):
    kind: str
    sources: list[TraceSourceOut]
    scores: Optional[dict[str, float]] = None


class FusedDetectionOut(BaseModel):
    detection: DetectionOut
    trace: TraceOut


class FuseRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    image_id: str
    condition: str = "N"
    params: ParamsOverride = Field(default_factory=ParamsOverride)


class FuseResponse(BaseModel):
    image_id: str
    condition: str
    params: ParamsOut
    kept: list[FusedDetectionOut]
    dropped: list[TraceOut]
    counts: dict[str, int]


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    condition: str = "N"
    source: str = "ENSEMBLE"
    params: ParamsOverride = Field(default_factory=ParamsOverride)


class ClassEvalOut(BaseModel):
    class_id: int
    class_name: str
    ap50: Optional[float]
    ap50_95: Optional[float]
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_gt: int


class EvaluateResponse(BaseModel):
    condition: str
    source: str
    params: ParamsOut
    per_class: list[ClassEvalOut]
    map50: float
    map50_95: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    tp: int
    fp: int
    fn: int
    confusion: list[list[float]]
    class_order: list[int]


class ErrorBody(BaseModel):
    detail: str
