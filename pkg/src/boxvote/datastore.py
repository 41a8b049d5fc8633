"""Dataset manifests, on-disk layout, and reproducible run records.

A dataset directory is described by a line-based key-value manifest:

    name demo
    label <class_id> <class_name>
    image <image_id> <width> <height> [<relative image path>]
    gt <relative path>                          # baseline ground truth
    detections <model_id> <relative path>       # baseline detections
    condition <name> gt <relative path>
    condition <name> detections <model_id> <relative path>
    condition <name> image <image_id> <relative path>

The baseline entries form condition "N"; perturbed variants add their own
conditions. All referenced files must exist at load time, every class id must
be in the label map, and boxes are clamped to image bounds (with a warning
above half a pixel of overflow).

Run records are append-only directories keyed by run id; a run is committed
with an atomic rename so readers never observe a half-written record.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    BBox,
    Detection,
    GroundTruthBox,
    ImageRecord,
    LabelMap,
    clamp_box,
)
from .errors import MissingSource, ParseError
from .formats import (
    parse_canonical_detections,
    parse_canonical_gt,
    parse_skill_profile,
    serialize_detections,
    serialize_gt,
)
from .voter import SkillProfile, VoterParams

BASE_CONDITION = "N"
MANIFEST_NAME = "manifest.txt"
PROFILE_NAME = "profile.csv"

_CLAMP_WARN_OVERFLOW = 0.5


@dataclass
class ImageInfo:
    image_id: str
    width: int
    height: int
    path: str | None = None


@dataclass
class ConditionData:
    gt_path: str | None = None
    detection_paths: dict[str, str] = field(default_factory=dict)
    image_paths: dict[str, str] = field(default_factory=dict)


@dataclass
class DatasetManifest:
    """Parsed manifest: label map, image table and per-condition file refs."""

    name: str
    label_map: LabelMap
    images: dict[str, ImageInfo]
    conditions: dict[str, ConditionData]

    @property
    def image_ids(self) -> list[str]:
        return sorted(self.images)


def parse_manifest(text: str | bytes, name_fallback: str = "dataset") -> DatasetManifest:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"manifest is not valid UTF-8: {exc}") from None
    name = name_fallback
    labels: dict[int, str] = {}
    images: dict[str, ImageInfo] = {}
    conditions: dict[str, ConditionData] = {BASE_CONDITION: ConditionData()}

    def condition(cname: str) -> ConditionData:
        return conditions.setdefault(cname, ConditionData())

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0]
        try:
            if key == "name" and len(tokens) == 2:
                name = tokens[1]
            elif key == "label" and len(tokens) == 3:
                class_id = int(tokens[1])
                if class_id in labels:
                    raise ParseError(f"duplicate label id {class_id}", line=lineno)
                labels[class_id] = tokens[2]
            elif key == "image" and len(tokens) in (4, 5):
                image_id = tokens[1]
                if image_id in images:
                    raise ParseError(f"duplicate image id {image_id!r}", line=lineno)
                width, height = int(tokens[2]), int(tokens[3])
                if width <= 0 or height <= 0:
                    raise ParseError("image dimensions must be positive", line=lineno)
                path = tokens[4] if len(tokens) == 5 else None
                images[image_id] = ImageInfo(image_id, width, height, path)
            elif key == "gt" and len(tokens) == 2:
                condition(BASE_CONDITION).gt_path = tokens[1]
            elif key == "detections" and len(tokens) == 3:
                condition(BASE_CONDITION).detection_paths[tokens[1]] = tokens[2]
            elif key == "condition" and len(tokens) >= 4:
                cname, sub = tokens[1], tokens[2]
                if sub == "gt" and len(tokens) == 4:
                    condition(cname).gt_path = tokens[3]
                elif sub == "detections" and len(tokens) == 5:
                    condition(cname).detection_paths[tokens[3]] = tokens[4]
                elif sub == "image" and len(tokens) == 5:
                    condition(cname).image_paths[tokens[3]] = tokens[4]
                else:
                    raise ParseError(f"unrecognized condition entry: {line!r}", line=lineno)
            else:
                raise ParseError(f"unrecognized manifest entry: {line!r}", line=lineno)
        except ValueError:
            raise ParseError(f"malformed manifest entry: {line!r}", line=lineno) from None
    if not labels:
        raise ParseError("manifest defines no labels")
    if not images:
        raise ParseError("manifest defines no images")
    return DatasetManifest(name, LabelMap(labels), images, conditions)


def _clamped_box(box: BBox, info: ImageInfo, warnings_out: list[str], what: str) -> BBox:
    overflow = max(
        0.0 - box.x1, 0.0 - box.y1, box.x2 - info.width, box.y2 - info.height, 0.0
    )
    if overflow <= 0.0:
        return box
    clamped = clamp_box(box, info.width, info.height)
    if overflow > _CLAMP_WARN_OVERFLOW:
        warnings_out.append(
            f"{what}: box {box.as_tuple()} overflows image {info.image_id} "
            f"({info.width}x{info.height}) by {overflow:.2f}px; clamped"
        )
    return clamped


class Dataset:
    """A fully loaded dataset: frames per condition plus the label map."""

    def __init__(
        self,
        manifest: DatasetManifest,
        root: Path,
        gt_by_condition: Mapping[str, Mapping[str, tuple[GroundTruthBox, ...]]],
        dets_by_condition: Mapping[str, Mapping[str, Mapping[str, tuple[Detection, ...]]]],
        warnings: Sequence[str] = (),
    ):
        self.manifest = manifest
        self.root = root
        self._gt = {c: dict(v) for c, v in gt_by_condition.items()}
        self._dets = {
            c: {m: dict(per_img) for m, per_img in v.items()}
            for c, v in dets_by_condition.items()
        }
        self.warnings = list(warnings)

    @property
    def label_map(self) -> LabelMap:
        return self.manifest.label_map

    @property
    def conditions(self) -> list[str]:
        return sorted(self.manifest.conditions)

    def models(self, condition: str = BASE_CONDITION) -> list[str]:
        self._require_condition(condition)
        return sorted(self._dets.get(condition, {}))

    def _require_condition(self, condition: str) -> None:
        if condition not in self.manifest.conditions:
            raise MissingSource(f"unknown condition {condition!r}")

    def image_path(self, image_id: str, condition: str = BASE_CONDITION) -> Path | None:
        self._require_condition(condition)
        override = self.manifest.conditions[condition].image_paths.get(image_id)
        if override is not None:
            return self.root / override
        info = self.manifest.images.get(image_id)
        if info is None or info.path is None:
            return None
        return self.root / info.path

    def records(self, condition: str = BASE_CONDITION) -> list[ImageRecord]:
        """Frames (sorted by image id) with ground truth and all model detections."""
        self._require_condition(condition)
        gt = self._gt.get(condition, {})
        dets = self._dets.get(condition, {})
        records = []
        for image_id in self.manifest.image_ids:
            info = self.manifest.images[image_id]
            records.append(
                ImageRecord(
                    image_id=image_id,
                    width=info.width,
                    height=info.height,
                    ground_truth=gt.get(image_id, ()),
                    detections={
                        model: per_img.get(image_id, ())
                        for model, per_img in dets.items()
                    },
                )
            )
        return records


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load and validate a dataset directory from its manifest file."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    manifest = parse_manifest(
        manifest_path.read_bytes(), name_fallback=manifest_path.stem
    )
    label_map = manifest.label_map
    notes: list[str] = []

    def read_file(rel: str) -> bytes:
        path = root / rel
        if not path.is_file():
            raise ParseError(f"referenced file does not exist: {path}")
        return path.read_bytes()

    gt_by_condition: dict[str, dict[str, tuple[GroundTruthBox, ...]]] = {}
    dets_by_condition: dict[str, dict[str, dict[str, tuple[Detection, ...]]]] = {}
    for cname, cond in manifest.conditions.items():
        for image_id, rel in cond.image_paths.items():
            if image_id not in manifest.images:
                raise ParseError(
                    f"condition {cname!r} references unknown image {image_id!r}"
                )
            read_file(rel)
        if cond.gt_path is not None:
            grouped: dict[str, list[GroundTruthBox]] = {}
            for image_id, gt in parse_canonical_gt(read_file(cond.gt_path)):
                info = manifest.images.get(image_id)
                if info is None:
                    raise ParseError(
                        f"{cond.gt_path}: unknown image id {image_id!r}"
                    )
                if gt.class_id not in label_map:
                    raise ParseError(
                        f"{cond.gt_path}: class id {gt.class_id} not in label map"
                    )
                box = _clamped_box(gt.box, info, notes, cond.gt_path)
                grouped.setdefault(image_id, []).append(GroundTruthBox(box, gt.class_id))
            gt_by_condition[cname] = {k: tuple(v) for k, v in grouped.items()}
        for model, rel in cond.detection_paths.items():
            grouped_d: dict[str, list[Detection]] = {}
            for image_id, det in parse_canonical_detections(read_file(rel), source=model):
                info = manifest.images.get(image_id)
                if info is None:
                    raise ParseError(f"{rel}: unknown image id {image_id!r}")
                if det.class_id not in label_map:
                    raise ParseError(f"{rel}: class id {det.class_id} not in label map")
                box = _clamped_box(det.box, info, notes, rel)
                grouped_d.setdefault(image_id, []).append(
                    Detection(box, det.class_id, det.confidence, model)
                )
            dets_by_condition.setdefault(cname, {})[model] = {
                k: tuple(v) for k, v in grouped_d.items()
            }
    return Dataset(manifest, root, gt_by_condition, dets_by_condition, notes)


def write_dataset(
    out_dir: str | Path,
    name: str,
    label_map: LabelMap,
    records: Sequence[ImageRecord],
    *,
    image_paths: Mapping[str, str] | None = None,
) -> Path:
    """Write a baseline dataset directory (manifest, gt, per-model detections)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"name {name}"]
    for class_id, class_name in label_map.items():
        lines.append(f"label {class_id} {class_name}")
    for record in records:
        path_part = ""
        if image_paths and record.image_id in image_paths:
            path_part = f" {image_paths[record.image_id]}"
        lines.append(
            f"image {record.image_id} {record.width} {record.height}{path_part}"
        )
    lines.append("gt gt.txt")
    models = sorted({m for r in records for m in r.detections})
    for model in models:
        lines.append(f"detections {model} dets_{model}.txt")

    gt_rows = [
        (record.image_id, gt) for record in records for gt in record.ground_truth
    ]
    (out_dir / "gt.txt").write_text(serialize_gt(gt_rows), encoding="utf-8")
    for model in models:
        det_rows = [
            (record.image_id, det)
            for record in records
            for det in record.detections_for(model)
        ]
        (out_dir / f"dets_{model}.txt").write_text(
            serialize_detections(det_rows), encoding="utf-8"
        )
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest_path


def append_condition(
    manifest_path: str | Path,
    condition: str,
    *,
    gt_rel: str | None = None,
    detection_rels: Mapping[str, str] | None = None,
    image_rels: Mapping[str, str] | None = None,
) -> None:
    """Extend an existing manifest with entries for one condition."""
    manifest_path = Path(manifest_path)
    lines = []
    if gt_rel is not None:
        lines.append(f"condition {condition} gt {gt_rel}")
    for model, rel in sorted((detection_rels or {}).items()):
        lines.append(f"condition {condition} detections {model} {rel}")
    for image_id, rel in sorted((image_rels or {}).items()):
        lines.append(f"condition {condition} image {image_id} {rel}")
    with manifest_path.open("a", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


# --- run records -----------------------------------------------------------


@dataclass
class RunRecord:
    """Snapshot of one evaluation run, sufficient to reproduce it exactly."""

    run_id: str
    params: VoterParams
    profile: SkillProfile
    report: dict
    trace_counts: dict[str, int]
    meta: dict[str, str] = field(default_factory=dict)
    timestamp: float = 0.0


def _params_to_lines(params: VoterParams) -> str:
    data = params.as_dict()
    floors = data.pop("model_conf_floor")
    lines = [f"{key} {value!r}" for key, value in sorted(data.items())]
    for model, floor in sorted(floors.items()):
        lines.append(f"floor {model} {floor!r}")
    return "\n".join(lines) + "\n"


def _params_from_lines(text: str) -> VoterParams:
    kwargs: dict = {}
    floors: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "floor":
            floors[tokens[1]] = float(tokens[2])
        elif tokens[0] in ("fuse_coords", "rule_i_enabled"):
            kwargs[tokens[0]] = tokens[1] == "True"
        else:
            kwargs[tokens[0]] = float(tokens[1])
    kwargs["model_conf_floor"] = floors
    return VoterParams(**kwargs)


class RunStore:
    """Append-only store of run records under a root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def save(self, record: RunRecord) -> Path:
        from .formats import serialize_skill_profile

        final_dir = self.root / record.run_id
        if final_dir.exists():
            raise FileExistsError(f"run {record.run_id!r} already exists")
        tmp_dir = self.root / f".tmp-{record.run_id}"
        tmp_dir.mkdir(parents=True)
        timestamp = record.timestamp or time.time()
        meta_lines = [f"run_id {record.run_id}", f"timestamp {timestamp!r}"]
        for key, value in sorted(record.meta.items()):
            meta_lines.append(f"{key} {value}")
        (tmp_dir / "meta.txt").write_text("\n".join(meta_lines) + "\n", encoding="utf-8")
        (tmp_dir / "params.txt").write_text(_params_to_lines(record.params), encoding="utf-8")
        (tmp_dir / PROFILE_NAME).write_text(
            serialize_skill_profile(record.profile), encoding="utf-8"
        )
        (tmp_dir / "report.json").write_text(
            json.dumps(record.report, sort_keys=True), encoding="utf-8"
        )
        counts_lines = [f"{k} {v}" for k, v in sorted(record.trace_counts.items())]
        (tmp_dir / "traces.txt").write_text("\n".join(counts_lines) + "\n", encoding="utf-8")
        os.replace(tmp_dir, final_dir)
        with (self.root / "index.txt").open("a", encoding="utf-8") as handle:
            handle.write(f"{record.run_id}\n")
        return final_dir

    def load(self, run_id: str) -> RunRecord:
        run_dir = self.root / run_id
        if not run_dir.is_dir():
            raise FileNotFoundError(f"no run named {run_id!r} under {self.root}")
        meta: dict[str, str] = {}
        timestamp = 0.0
        for raw in (run_dir / "meta.txt").read_text(encoding="utf-8").splitlines():
            if not raw.strip():
                continue
            key, _, value = raw.partition(" ")
            if key == "timestamp":
                timestamp = float(value)
            elif key != "run_id":
                meta[key] = value
        params = _params_from_lines((run_dir / "params.txt").read_text(encoding="utf-8"))
        profile = parse_skill_profile((run_dir / PROFILE_NAME).read_bytes())
        report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
        counts: dict[str, int] = {}
        for raw in (run_dir / "traces.txt").read_text(encoding="utf-8").splitlines():
            if raw.strip():
                key, _, value = raw.partition(" ")
                counts[key] = int(value)
        return RunRecord(run_id, params, profile, report, counts, meta, timestamp)

    def run_ids(self) -> list[str]:
        index = self.root / "index.txt"
        if not index.is_file():
            return []
        return [line.strip() for line in index.read_text(encoding="utf-8").splitlines() if line.strip()]
