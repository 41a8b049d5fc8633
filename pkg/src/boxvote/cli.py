"""Command-line entry points: fuse, eval, sweep, ablate, perturb, simulate,
serve.

Parameter flags mirror the VoterParams field names and can also come from a
key-value config file (flags win). All commands are deterministic given their
inputs and seeds; distinct exit codes mark the error family:
3 parse, 4 validation, 5 grid cap, 6 I/O.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .datastore import (
    BASE_CONDITION,
    MANIFEST_NAME,
    PROFILE_NAME,
    RunRecord,
    RunStore,
    append_condition,
    load_dataset,
)
from .errors import DataError, GridTooLarge, ValidationError
from .formats import (
    parse_keyvalue,
    parse_skill_profile,
    serialize_detections,
    serialize_gt,
    serialize_skill_profile,
)
from .harness import (
    ABLATION_VARIANTS,
    ENSEMBLE,
    SweepSpec,
    ablation_rows_table,
    eval_report_rows,
    evaluate_source,
    format_csv,
    format_table,
    fuse_records,
    run_ablation,
    run_sweep,
    sweep_rows_table,
    trace_count_totals,
)
from .perturb import (
    PerturbKind,
    PerturbSpec,
    STANDARD_CONDITIONS,
    apply_perturbation,
    read_image,
    write_image,
)
from .synth import (
    ScenarioSpec,
    attach_detections,
    frcnn_like,
    generate_scenario,
    reference_profile,
    render_scenario_image,
    scaled_default_counts,
    simulate_detector,
    yolo_like,
    DEFAULT_LABEL_MAP,
)
from .voter import DEFAULT_MODEL_A, DEFAULT_MODEL_B, SkillProfile, VoterParams

EXIT_OK = 0
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_GRID = 5
EXIT_IO = 6

_PARAM_FLOATS = (
    "t_iou",
    "gamma",
    "f1_margin",
    "conf_thresh",
    "solo_strong",
    "near_tie_conf",
    "nms_iou",
)


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("voter parameters")
    for name in _PARAM_FLOATS:
        group.add_argument(f"--{name}", type=float, default=None)
    group.add_argument(
        "--fuse_coords", choices=("true", "false"), default=None,
        help="average coordinates on agreement (default true)",
    )
    group.add_argument(
        "--rule_i_enabled", choices=("true", "false"), default=None,
        help="strong-confidence solo override on/off",
    )
    group.add_argument(
        "--floor", action="append", default=[], metavar="MODEL=CONF",
        help="per-model confidence floor, repeatable",
    )
    group.add_argument(
        "--config", type=Path, default=None,
        help="key-value file of parameter defaults (flags win)",
    )


def _params_from_config(path: Path) -> dict:
    values = parse_keyvalue(path.read_bytes())
    overrides: dict = {}
    floors: dict[str, float] = {}
    for key, entries in values.items():
        if key == "floor":
            for entry in entries:
                model, _, value = entry.partition(" ")
                floors[model] = float(value)
        elif key in _PARAM_FLOATS:
            overrides[key] = float(entries[-1])
        elif key in ("fuse_coords", "rule_i_enabled"):
            overrides[key] = entries[-1].lower() == "true"
        else:
            raise ValidationError(f"unknown parameter {key!r} in {path}")
    if floors:
        overrides["model_conf_floor"] = floors
    return overrides


def resolve_params(args: argparse.Namespace) -> VoterParams:
    overrides: dict = {}
    if args.config is not None:
        overrides.update(_params_from_config(args.config))
    for name in _PARAM_FLOATS:
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    for name in ("fuse_coords", "rule_i_enabled"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value == "true"
    floors = dict(overrides.pop("model_conf_floor", VoterParams().model_conf_floor))
    for entry in args.floor:
        model, sep, value = entry.partition("=")
        if not sep:
            raise ValidationError(f"--floor expects MODEL=CONF, got {entry!r}")
        floors[model] = float(value)
    try:
        return VoterParams(model_conf_floor=floors, **overrides)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _load_profile(path: Path) -> SkillProfile:
    return parse_skill_profile(path.read_bytes())


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(args, headers, rows) -> str:
    if args.format == "csv":
        return format_csv(headers, rows)
    return format_table(headers, rows)


def cmd_fuse(args) -> int:
    params = resolve_params(args)
    dataset = load_dataset(args.manifest)
    profile = _load_profile(args.profile)
    for warning in dataset.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    results = fuse_records(dataset.records(args.condition), profile, params)

    fused_rows = []
    trace_lines = []
    for record, result in results:
        for fused in result.kept:
            fused_rows.append((record.image_id, fused.detection))
        for trace, kept in [(f.trace, True) for f in result.kept] + [
            (t, False) for t in result.dropped
        ]:
            sources = ",".join(f"{m}:{i}" for m, i in trace.sources)
            scores = ""
            if trace.scores is not None:
                scores = " scores " + " ".join(
                    f"{m}={s!r}" for m, s in trace.scores
                )
            status = "KEPT" if kept else "DROP"
            trace_lines.append(
                f"{record.image_id} {status} {trace.kind.value} {sources}{scores}"
            )
    counts = trace_count_totals([result for _, result in results])

    out_dir = Path(args.out)
    _write_text(out_dir / "fused.txt", serialize_detections(fused_rows))
    _write_text(out_dir / "traces.txt", "\n".join(trace_lines) + ("\n" if trace_lines else ""))
    summary = "\n".join(f"{kind} {count}" for kind, count in sorted(counts.items()))
    _write_text(out_dir / "summary.txt", summary + "\n")
    print(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    params = resolve_params(args)
    dataset = load_dataset(args.manifest)
    profile = _load_profile(args.profile) if args.profile else None
    if args.source == ENSEMBLE and profile is None:
        raise ValidationError("ensemble evaluation requires --profile")
    report = evaluate_source(
        dataset, args.source, profile=profile, params=params,
        condition=args.condition, primary_iou=args.iou,
    )
    headers, rows = eval_report_rows(report, dataset.label_map)
    output = _emit(args, headers, rows)
    print(output, end="")
    if args.out:
        _write_text(Path(args.out) / "report.csv", format_csv(headers, rows))
    if args.save_run:
        if profile is None:
            raise ValidationError("--save-run requires --profile")
        results = [r for _, r in fuse_records(dataset.records(args.condition), profile, params)]
        store = RunStore(args.save_run)
        record = RunRecord(
            run_id=args.run_id,
            params=params,
            profile=profile,
            report=report.as_dict(),
            trace_counts=trace_count_totals(results),
            meta={
                "manifest": str(args.manifest),
                "condition": args.condition,
                "source": args.source,
            },
        )
        store.save(record)
        print(f"saved run {args.run_id} to {args.save_run}", file=sys.stderr)
    return EXIT_OK


def _parse_axis(entries: list[str]) -> dict[str, list[float]]:
    axes: dict[str, list[float]] = {}
    for entry in entries:
        name, sep, values = entry.partition("=")
        if not sep:
            raise ValidationError(f"--axis expects FIELD=v1,v2,..., got {entry!r}")
        axes[name] = [float(v) for v in values.split(",") if v]
        if not axes[name]:
            raise ValidationError(f"axis {name!r} has no values")
    return axes


def cmd_sweep(args) -> int:
    params = resolve_params(args)
    dataset = load_dataset(args.manifest)
    profile = _load_profile(args.profile)
    axes = _parse_axis(args.axis)
    spec = SweepSpec(
        axes=axes,
        conditions=tuple(args.conditions.split(",")),
        max_points=args.max_grid,
    )
    rows = run_sweep(dataset, profile, params, spec, jobs=args.jobs)
    headers, table = sweep_rows_table(rows)
    output = _emit(args, headers, table)
    print(output, end="")
    if args.out:
        _write_text(Path(args.out), format_csv(headers, table))
    return EXIT_OK


def cmd_ablate(args) -> int:
    params = resolve_params(args)
    dataset = load_dataset(args.manifest)
    profile = _load_profile(args.profile)
    variants = tuple(args.variants.split(","))
    rows = run_ablation(dataset, profile, params, variants, condition=args.condition)
    headers, table = ablation_rows_table(rows)
    output = _emit(args, headers, table)
    print(output, end="")
    if args.out:
        _write_text(Path(args.out), format_csv(headers, table))
    return EXIT_OK


def cmd_perturb(args) -> int:
    import zlib

    from .core import ImageRecord

    dataset = load_dataset(args.manifest)
    conditions = [c for c in args.conditions.split(",") if c]
    unknown = [c for c in conditions if c not in STANDARD_CONDITIONS]
    if unknown:
        raise ValidationError(
            f"unknown conditions {unknown}; choose from {sorted(STANDARD_CONDITIONS)}"
        )
    root = dataset.root
    records = dataset.records(BASE_CONDITION)
    for name in conditions:
        spec = STANDARD_CONDITIONS[name]
        if spec is None:
            continue  # N is the stored baseline
        if spec.kind is PerturbKind.SHARPEN:
            spec = PerturbSpec(spec.kind, sigma=args.sigma, amount=args.amount)
        elif spec.kind is PerturbKind.BRIGHTNESS:
            factor = args.bright_up if name == "BUp" else args.bright_down
            spec = PerturbSpec(spec.kind, factor=factor)
        cond_dir = root / "conditions" / name
        (cond_dir / "images").mkdir(parents=True, exist_ok=True)
        gt_rows = []
        image_rels: dict[str, str] = {}
        cond_records: list[ImageRecord] = []
        for record in records:
            path = dataset.image_path(record.image_id)
            if path is None or not path.is_file():
                raise ValidationError(
                    f"image {record.image_id!r} has no stored pixels; "
                    "perturbation needs images"
                )
            img = read_image(path)
            out_img, out_gts = apply_perturbation(img, record.ground_truth, spec)
            rel = f"conditions/{name}/images/{record.image_id}{path.suffix}"
            write_image(root / rel, out_img)
            image_rels[record.image_id] = rel
            gt_rows.extend((record.image_id, gt) for gt in out_gts)
            cond_records.append(
                ImageRecord(record.image_id, record.width, record.height, tuple(out_gts))
            )
        gt_rel = f"conditions/{name}/gt.txt"
        _write_text(root / gt_rel, serialize_gt(gt_rows))

        detection_rels: dict[str, str] = {}
        if args.simulate_detections:
            # No real detectors here: emulate re-running inference on the
            # perturbed frames by pointing the synthetic presets at the
            # transformed ground truth with a condition-derived seed.
            cond_seed = args.seed + zlib.crc32(name.encode("ascii")) % 65_536
            for noise in (
                yolo_like(seed=cond_seed + 1),
                frcnn_like(seed=cond_seed + 2),
            ):
                dets = simulate_detector(cond_records, noise)
                det_rows = [
                    (record.image_id, det)
                    for record in cond_records
                    for det in dets[record.image_id]
                ]
                rel = f"conditions/{name}/dets_{noise.model_id}.txt"
                _write_text(root / rel, serialize_detections(det_rows))
                detection_rels[noise.model_id] = rel
        append_condition(
            args.manifest, name, gt_rel=gt_rel,
            detection_rels=detection_rels or None, image_rels=image_rels,
        )
        print(f"wrote condition {name}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.counts:
        counts = {}
        for entry in args.counts.split(","):
            class_id, sep, count = entry.partition("=")
            if not sep:
                raise ValidationError(f"--counts expects ID=N pairs, got {entry!r}")
            counts[int(class_id)] = int(count)
        label_map = DEFAULT_LABEL_MAP if set(counts) <= set(
            DEFAULT_LABEL_MAP.class_ids
        ) else None
        if label_map is None:
            raise ValidationError("--counts class ids must be in the default label map")
    else:
        counts = scaled_default_counts(args.scale)
        label_map = DEFAULT_LABEL_MAP
    spec = ScenarioSpec(
        n_images=args.images,
        width=args.width,
        height=args.height,
        class_counts=counts,
        box_size_range=(args.min_box, args.max_box),
        seed=args.seed,
    )
    records = generate_scenario(spec)
    noise_a = yolo_like(seed=args.seed + 1)
    noise_b = frcnn_like(seed=args.seed + 2)
    detections = {
        noise_a.model_id: simulate_detector(records, noise_a),
        noise_b.model_id: simulate_detector(records, noise_b),
    }
    full = attach_detections(records, detections)

    out_dir = Path(args.out)
    image_paths = None
    if args.render:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        image_paths = {}
        for record in full:
            rel = f"images/{record.image_id}.png"
            write_image(out_dir / rel, render_scenario_image(record, args.seed))
            image_paths[record.image_id] = rel
    from .datastore import write_dataset

    manifest = write_dataset(
        out_dir, args.name, label_map, full, image_paths=image_paths
    )
    profile = reference_profile()
    (out_dir / PROFILE_NAME).write_text(
        serialize_skill_profile(profile), encoding="utf-8"
    )
    n_instances = sum(len(r.ground_truth) for r in full)
    print(f"wrote {len(full)} images, {n_instances} instances to {manifest}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        args.data_dir, cors_origins=tuple(args.cors_origin)
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxvote",
        description="Two-detector box fusion, evaluation and tuning tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p, needs_profile=True):
        p.add_argument("--manifest", type=Path, required=True)
        if needs_profile:
            p.add_argument("--profile", type=Path, required=True)
        p.add_argument("--condition", default=BASE_CONDITION)
        p.add_argument("--format", choices=("csv", "table"), default="table")

    p_fuse = sub.add_parser("fuse", help="fuse two detection sets into one")
    common_io(p_fuse)
    p_fuse.add_argument("--out", type=Path, required=True)
    _add_param_flags(p_fuse)
    p_fuse.set_defaults(func=cmd_fuse)

    p_eval = sub.add_parser("eval", help="score a source against ground truth")
    p_eval.add_argument("--manifest", type=Path, required=True)
    p_eval.add_argument("--profile", type=Path, default=None)
    p_eval.add_argument("--condition", default=BASE_CONDITION)
    p_eval.add_argument("--format", choices=("csv", "table"), default="table")
    p_eval.add_argument("--source", default=ENSEMBLE)
    p_eval.add_argument("--iou", type=float, default=0.5)
    p_eval.add_argument("--out", type=Path, default=None)
    p_eval.add_argument("--save-run", type=Path, default=None)
    p_eval.add_argument("--run-id", default="run-0001")
    _add_param_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="grid-evaluate parameter axes")
    common_io(p_sweep)
    p_sweep.add_argument("--axis", action="append", required=True,
                         metavar="FIELD=v1,v2,...")
    p_sweep.add_argument("--conditions", default=BASE_CONDITION)
    p_sweep.add_argument("--max-grid", type=int, default=10_000)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", type=Path, default=None)
    _add_param_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_ablate = sub.add_parser("ablate", help="compare named rule ablations")
    common_io(p_ablate)
    p_ablate.add_argument("--variants", default=",".join(ABLATION_VARIANTS))
    p_ablate.add_argument("--out", type=Path, default=None)
    _add_param_flags(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_perturb = sub.add_parser("perturb", help="write perturbed dataset conditions")
    p_perturb.add_argument("--manifest", type=Path, required=True)
    p_perturb.add_argument("--conditions", default="F,SUp,BUp,BDn")
    p_perturb.add_argument("--sigma", type=float, default=2.0)
    p_perturb.add_argument("--amount", type=float, default=1.0)
    p_perturb.add_argument("--bright-up", type=float, default=1.3)
    p_perturb.add_argument("--bright-down", type=float, default=0.7)
    p_perturb.add_argument(
        "--simulate-detections", action="store_true",
        help="emit synthetic per-condition detections alongside images and gt",
    )
    p_perturb.add_argument("--seed", type=int, default=0)
    p_perturb.set_defaults(func=cmd_perturb)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--out", type=Path, required=True)
    p_sim.add_argument("--name", default="synthetic")
    p_sim.add_argument("--images", type=int, default=45)
    p_sim.add_argument("--width", type=int, default=640)
    p_sim.add_argument("--height", type=int, default=640)
    p_sim.add_argument("--scale", type=float, default=0.125,
                       help="scale factor on the default class mix")
    p_sim.add_argument("--counts", default=None, metavar="ID=N,ID=N")
    p_sim.add_argument("--min-box", type=int, default=24)
    p_sim.add_argument("--max-box", type=int, default=96)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--render", action="store_true",
                       help="also write flat synthetic PNGs for the UI")
    p_sim.set_defaults(func=cmd_simulate)

    p_serve = sub.add_parser("serve", help="run the HTTP tuning service")
    p_serve.add_argument("--data-dir", type=Path, required=True,
                         help=f"directory holding {MANIFEST_NAME} and {PROFILE_NAME}")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8437)
    p_serve.add_argument("--cors-origin", action="append", default=["*"])
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GRID
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
