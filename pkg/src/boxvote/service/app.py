"""HTTP facade over the fusion engine for live parameter tuning.

The service loads one dataset (manifest + skill profile) and answers
stateless queries against it: every fuse/evaluate response is a pure function
of the stored data and the request body, so the UI's what-if loop cannot
observe stale tuning state. Reloading swaps one state object atomically.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from PIL import Image as PilImage

from ..core import GROUND_TRUTH_SOURCE, ImageRecord
from ..datastore import BASE_CONDITION, Dataset, MANIFEST_NAME, PROFILE_NAME, load_dataset
from ..errors import MissingSource
from ..formats import parse_skill_profile
from ..harness import ENSEMBLE, evaluate_source
from ..metrics import EvalReport
from ..perturb import read_image
from ..voter import FusionResult, SkillProfile, VoterParams, fuse_frame
from . import schemas


@dataclass(frozen=True)
class ServiceState:
    """Immutable bundle the endpoints read; replaced wholesale on reload."""

    dataset: Dataset
    profile: SkillProfile
    defaults: VoterParams


def load_state(data_dir: str | Path, defaults: VoterParams | None = None) -> ServiceState:
    data_dir = Path(data_dir)
    dataset = load_dataset(data_dir / MANIFEST_NAME)
    profile = parse_skill_profile((data_dir / PROFILE_NAME).read_bytes())
    return ServiceState(dataset, profile, defaults or VoterParams())


def _params_out(params: VoterParams) -> schemas.ParamsOut:
    return schemas.ParamsOut(**params.as_dict())


def _detection_out(det, label_map) -> schemas.DetectionOut:
    return schemas.DetectionOut(
        box=schemas.BoxOut(x1=det.box.x1, y1=det.box.y1, x2=det.box.x2, y2=det.box.y2),
        class_id=det.class_id,
        class_name=label_map.name(det.class_id),
        confidence=det.confidence,
        source=det.source,
    )


def _trace_out(trace) -> schemas.TraceOut:
    return schemas.TraceOut(
        kind=trace.kind.value,
        sources=[
            schemas.TraceSourceOut(model_id=model, index=index)
            for model, index in trace.sources
        ],
        scores=dict(trace.scores) if trace.scores is not None else None,
    )


def _fuse_response(
    record: ImageRecord,
    result: FusionResult,
    params: VoterParams,
    condition: str,
    label_map,
) -> schemas.FuseResponse:
    return schemas.FuseResponse(
        image_id=record.image_id,
        condition=condition,
        params=_params_out(params),
        kept=[
            schemas.FusedDetectionOut(
                detection=_detection_out(f.detection, label_map),
                trace=_trace_out(f.trace),
            )
            for f in result.kept
        ],
        dropped=[_trace_out(t) for t in result.dropped],
        counts=result.counts(),
    )


def _eval_response(
    report: EvalReport, params: VoterParams, condition: str, source: str, label_map
) -> schemas.EvaluateResponse:
    per_class = [
        schemas.ClassEvalOut(
            class_id=class_id,
            class_name=label_map.name(class_id),
            ap50=entry.ap50,
            ap50_95=entry.ap_range,
            precision=entry.precision,
            recall=entry.recall,
            f1=entry.f1,
            tp=entry.tp,
            fp=entry.fp,
            fn=entry.fn,
            n_gt=entry.n_gt,
        )
        for class_id, entry in sorted(report.per_class.items())
    ]
    return schemas.EvaluateResponse(
        condition=condition,
        source=source,
        params=_params_out(params),
        per_class=per_class,
        map50=report.map50,
        map50_95=report.map_range,
        micro_precision=report.micro.precision,
        micro_recall=report.micro.recall,
        micro_f1=report.micro.f1,
        macro_f1=report.macro_f1,
        tp=report.tp,
        fp=report.fp,
        fn=report.fn,
        confusion=report.confusion.tolist(),
        class_order=list(report.class_order),
    )


def create_app(
    data_dir: str | Path | None = None,
    *,
    defaults: VoterParams | None = None,
    cors_origins: tuple[str, ...] = ("*",),
) -> FastAPI:
    """Build the service; ``data_dir`` must hold manifest.txt and profile.csv."""
    app = FastAPI(title="boxvote tuning service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.current = load_state(data_dir, defaults) if data_dir is not None else None

    def state() -> ServiceState:
        current = app.state.current
        if current is None:
            raise HTTPException(status_code=409, detail="no dataset loaded")
        return current

    def resolve_params(override: schemas.ParamsOverride, defaults: VoterParams) -> VoterParams:
        try:
            return defaults.with_overrides(**override.overrides())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None

    def find_record(dataset: Dataset, image_id: str, condition: str) -> ImageRecord:
        if condition not in dataset.manifest.conditions:
            raise HTTPException(status_code=404, detail=f"unknown condition {condition!r}")
        if image_id not in dataset.manifest.images:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")
        for record in dataset.records(condition):
            if record.image_id == image_id:
                return record
        raise HTTPException(status_code=404, detail=f"unknown image {image_id!r}")

    @app.get("/api/images", response_model=schemas.ImagesPage)
    def list_images(
        page: int = Query(1, ge=1), page_size: int = Query(50, ge=1, le=1000)
    ):
        current = state()
        manifest = current.dataset.manifest
        ids = manifest.image_ids
        total = len(ids)
        pages = max(1, -(-total // page_size))
        start = (page - 1) * page_size
        items = []
        conditions = current.dataset.conditions
        for image_id in ids[start : start + page_size]:
            info = manifest.images[image_id]
            items.append(
                schemas.ImageEntry(
                    image_id=image_id,
                    width=info.width,
                    height=info.height,
                    conditions=conditions,
                    has_pixels=current.dataset.image_path(image_id) is not None,
                )
            )
        return schemas.ImagesPage(
            items=items, page=page, page_size=page_size, total=total, pages=pages
        )

    @app.get(
        "/api/images/{image_id}/detections",
        response_model=list[schemas.DetectionOut] | list[schemas.GroundTruthOut],
    )
    def image_detections(
        image_id: str,
        source: str = Query(...),
        condition: str = Query(BASE_CONDITION),
    ):
        current = state()
        record = find_record(current.dataset, image_id, condition)
        label_map = current.dataset.label_map
        if source == GROUND_TRUTH_SOURCE:
            return [
                schemas.GroundTruthOut(
                    box=schemas.BoxOut(
                        x1=gt.box.x1, y1=gt.box.y1, x2=gt.box.x2, y2=gt.box.y2
                    ),
                    class_id=gt.class_id,
                    class_name=label_map.name(gt.class_id),
                )
                for gt in record.ground_truth
            ]
        if source not in current.dataset.models(condition):
            raise HTTPException(status_code=404, detail=f"unknown source {source!r}")
        return [_detection_out(d, label_map) for d in record.detections_for(source)]

    @app.get("/api/images/{image_id}/pixels")
    def image_pixels(image_id: str, condition: str = Query(BASE_CONDITION)):
        current = state()
        find_record(current.dataset, image_id, condition)
        path = current.dataset.image_path(image_id, condition)
        if path is None or not path.is_file():
            raise HTTPException(
                status_code=404, detail=f"no pixels stored for image {image_id!r}"
            )
        pixels = read_image(path)
        buffer = io.BytesIO()
        PilImage.fromarray(pixels).save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    @app.get("/api/params/defaults", response_model=schemas.ParamsOut)
    def params_defaults():
        return _params_out(state().defaults)

    @app.get("/api/profile", response_model=schemas.ProfileOut)
    def profile():
        current = state()
        label_map = current.dataset.label_map
        entries = [
            schemas.ProfileEntry(
                model_id=model,
                class_id=class_id,
                class_name=label_map.name(class_id) if class_id in label_map else str(class_id),
                f1=f1,
            )
            for model, class_id, f1 in current.profile.entries()
        ]
        return schemas.ProfileOut(models=list(current.profile.models), entries=entries)

    @app.post("/api/fuse", response_model=schemas.FuseResponse)
    def fuse(request: schemas.FuseRequest):
        current = state()
        params = resolve_params(request.params, current.defaults)
        record = find_record(current.dataset, request.image_id, request.condition)
        result = fuse_frame(record, current.profile, params)
        return _fuse_response(
            record, result, params, request.condition, current.dataset.label_map
        )

    @app.post("/api/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(request: schemas.EvaluateRequest):
        current = state()
        params = resolve_params(request.params, current.defaults)
        if request.condition not in current.dataset.manifest.conditions:
            raise HTTPException(
                status_code=404, detail=f"unknown condition {request.condition!r}"
            )
        try:
            report = evaluate_source(
                current.dataset,
                request.source,
                profile=current.profile,
                params=params,
                condition=request.condition,
            )
        except MissingSource as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None
        return _eval_response(
            report, params, request.condition, request.source, current.dataset.label_map
        )

    return app
