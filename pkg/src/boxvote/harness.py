"""Experiment orchestration: dataset-level fusion, evaluation, parameter
sweeps and rule ablations, with table/CSV report formatting.

Sweeps take the cartesian product of the configured axes (capped), evaluate
each point under each condition, and emit rows sorted lexicographically by
axis values. Ablations are named transformations of (params, profile).
"""

from __future__ import annotations

import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Detection, ImageRecord
from .datastore import BASE_CONDITION, Dataset
from .errors import GridTooLarge, MissingSource
from .metrics import EvalReport, evaluate_detections
from .voter import FusionResult, SkillProfile, TraceKind, VoterParams, fuse_frame

ENSEMBLE = "ENSEMBLE"

ABLATION_VARIANTS = ("FULL", "NO_HIGH_CONF", "NO_F1_WEIGHT", "ALWAYS_TIE")


def fuse_records(
    records: Sequence[ImageRecord], profile: SkillProfile, params: VoterParams
) -> list[tuple[ImageRecord, FusionResult]]:
    return [(record, fuse_frame(record, profile, params)) for record in records]


def trace_count_totals(results: Sequence[FusionResult]) -> dict[str, int]:
    totals = {kind.value: 0 for kind in TraceKind}
    for result in results:
        for kind, count in result.counts().items():
            totals[kind] += count
    return totals


def _frames_for_source(
    records: Sequence[ImageRecord],
    source: str,
    profile: SkillProfile | None,
    params: VoterParams | None,
) -> list[tuple[Sequence[Detection], Sequence]]:
    if source == ENSEMBLE:
        if profile is None or params is None:
            raise ValueError("ensemble evaluation needs a profile and params")
        frames = []
        for record in records:
            fused = fuse_frame(record, profile, params)
            frames.append(([f.detection for f in fused.kept], record.ground_truth))
        return frames
    missing = [r.image_id for r in records if source not in r.detections]
    if records and len(missing) == len(records):
        raise MissingSource(f"no detections for source {source!r}")
    return [(record.detections_for(source), record.ground_truth) for record in records]


def evaluate_source(
    dataset: Dataset,
    source: str,
    *,
    profile: SkillProfile | None = None,
    params: VoterParams | None = None,
    condition: str = BASE_CONDITION,
    primary_iou: float = 0.5,
) -> EvalReport:
    """Evaluate one detection source (a model id or ENSEMBLE) on a condition."""
    records = dataset.records(condition)
    if source != ENSEMBLE and source not in dataset.models(condition):
        raise MissingSource(
            f"source {source!r} not available for condition {condition!r}; "
            f"have {dataset.models(condition)}"
        )
    frames = _frames_for_source(records, source, profile, params)
    return evaluate_detections(frames, dataset.label_map.class_ids, primary_iou)


@dataclass(frozen=True)
class SweepSpec:
    """Axes to sweep (field name -> values) and the conditions to score."""

    axes: Mapping[str, Sequence]
    conditions: Sequence[str] = (BASE_CONDITION,)
    max_points: int = 10_000

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for v in self.axes.values()):
            raise ValueError("sweep axes must be non-empty")
        for name in self.axes:
            if name not in VoterParams.__dataclass_fields__:
                raise ValueError(f"unknown params field {name!r}")


@dataclass(frozen=True)
class SweepRow:
    settings: tuple[tuple[str, object], ...]
    condition: str
    map50: float
    map_range: float
    precision: float
    recall: float


def _sweep_point(args) -> list[SweepRow]:
    dataset, profile, base_params, axis_names, combo, conditions = args
    params = base_params.with_overrides(**dict(zip(axis_names, combo)))
    rows = []
    for condition in conditions:
        report = evaluate_source(
            dataset, ENSEMBLE, profile=profile, params=params, condition=condition
        )
        rows.append(
            SweepRow(
                settings=tuple(zip(axis_names, combo)),
                condition=condition,
                map50=report.map50,
                map_range=report.map_range,
                precision=report.micro.precision,
                recall=report.micro.recall,
            )
        )
    return rows


def run_sweep(
    dataset: Dataset,
    profile: SkillProfile,
    base_params: VoterParams,
    spec: SweepSpec,
    jobs: int = 1,
) -> list[SweepRow]:
    axis_names = list(spec.axes)
    values = [list(spec.axes[name]) for name in axis_names]
    n_points = 1
    for axis in values:
        n_points *= len(axis)
    if n_points > spec.max_points:
        raise GridTooLarge(
            f"sweep grid has {n_points} points, cap is {spec.max_points}"
        )
    tasks = [
        (dataset, profile, base_params, axis_names, combo, tuple(spec.conditions))
        for combo in itertools.product(*values)
    ]
    rows: list[SweepRow] = []
    if jobs > 1 and len(tasks) > 1:
        # Grid points are independent; reduce in submission order so the
        # result is identical to the serial run.
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for point_rows in pool.map(_sweep_point, tasks):
                rows.extend(point_rows)
    else:
        for task in tasks:
            rows.extend(_sweep_point(task))
    rows.sort(key=lambda r: ([s[1] for s in r.settings], r.condition))
    return rows


def apply_ablation(
    variant: str, params: VoterParams, profile: SkillProfile
) -> tuple[VoterParams, SkillProfile]:
    """Resolve a named ablation to a (params, profile) transformation.

    NO_HIGH_CONF switches the strong-confidence override off entirely;
    NO_F1_WEIGHT replaces every class weight with 1.0 (fusion scores and solo
    comparisons alike); ALWAYS_TIE widens the near-tie margin to cover any F1
    gap while keeping the rule's confidence floor.
    """
    if variant == "FULL":
        return params, profile
    if variant == "NO_HIGH_CONF":
        return params.with_overrides(rule_i_enabled=False), profile
    if variant == "NO_F1_WEIGHT":
        return params, profile.all_ones()
    if variant == "ALWAYS_TIE":
        return params.with_overrides(f1_margin=1.0), profile
    raise ValueError(f"unknown ablation variant {variant!r}")


@dataclass(frozen=True)
class AblationRow:
    variant: str
    map50: float
    map_range: float
    precision: float
    recall: float


def run_ablation(
    dataset: Dataset,
    profile: SkillProfile,
    params: VoterParams,
    variants: Sequence[str] = ABLATION_VARIANTS,
    condition: str = BASE_CONDITION,
) -> list[AblationRow]:
    if len(set(variants)) != len(variants):
        raise ValueError("ablation variant names must be unique")
    rows = []
    for variant in variants:
        v_params, v_profile = apply_ablation(variant, params, profile)
        report = evaluate_source(
            dataset, ENSEMBLE, profile=v_profile, params=v_params, condition=condition
        )
        rows.append(
            AblationRow(
                variant=variant,
                map50=report.map50,
                map_range=report.map_range,
                precision=report.micro.precision,
                recall=report.micro.recall,
            )
        )
    return rows


# --- report formatting -------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain text table with 3-decimal floats and right-aligned columns."""
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    out = io.StringIO()
    out.write("  ".join(h.rjust(widths[i]) for i, h in enumerate(headers)) + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in cells:
        out.write("  ".join(row[i].rjust(widths[i]) for i in range(len(headers))) + "\n")
    return out.getvalue()


def format_csv(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(headers)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def eval_report_rows(report: EvalReport, label_map) -> tuple[list[str], list[list]]:
    """Rows for the metric-per-row report: one column per class plus aggregate."""
    class_ids = list(report.class_order)
    headers = ["metric", *(label_map.name(c) for c in class_ids), "aggregate"]
    per = report.per_class

    def row(name: str, getter, aggregate) -> list:
        return [name, *(getter(per[c]) for c in class_ids), aggregate]

    rows = [
        row("ap50", lambda c: c.ap50, report.map50),
        row("ap50_95", lambda c: c.ap_range, report.map_range),
        row("precision", lambda c: c.precision, report.micro.precision),
        row("recall", lambda c: c.recall, report.micro.recall),
        row("f1", lambda c: c.f1, report.micro.f1),
        row("tp", lambda c: c.tp, report.tp),
        row("fp", lambda c: c.fp, report.fp),
        row("fn", lambda c: c.fn, report.fn),
        row("n_gt", lambda c: c.n_gt, report.tp + report.fn),
    ]
    rows.append(["macro_f1", *[""] * len(class_ids), report.macro_f1])
    return headers, rows


def sweep_rows_table(rows: Sequence[SweepRow]) -> tuple[list[str], list[list]]:
    if not rows:
        return ["condition", "map50", "map50_95", "precision", "recall"], []
    axis_names = [name for name, _ in rows[0].settings]
    headers = [*axis_names, "condition", "map50", "map50_95", "precision", "recall"]
    table = [
        [*(value for _, value in r.settings), r.condition, r.map50, r.map_range, r.precision, r.recall]
        for r in rows
    ]
    return headers, table


def ablation_rows_table(rows: Sequence[AblationRow]) -> tuple[list[str], list[list]]:
    headers = ["variant", "map50", "map50_95", "precision", "recall"]
    return headers, [[r.variant, r.map50, r.map_range, r.precision, r.recall] for r in rows]
