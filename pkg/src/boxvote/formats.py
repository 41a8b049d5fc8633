"""Line-oriented text formats: detections, ground truth, skill profiles,
key-value configs.

The canonical detection format is one record per line,
``image_id,class_id,confidence,x1,y1,x2,y2`` (ground truth omits the
confidence column). '#' starts a comment, blank lines are ignored, floats are
serialized with shortest round-trip repr so parse(serialize(x)) == x exactly.
Parsers accept arbitrary bytes and either return values or raise structured
errors; they never crash.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import BBox, Detection, GroundTruthBox
from .errors import IncompleteProfile, MissingImageSize, ParseError, RangeError
from .voter import SkillProfile


def _decode(text: str | bytes, what: str) -> str:
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{what} is not valid UTF-8: {exc}") from None
    return text


def _content_lines(text: str) -> Iterable[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_float(token: str, what: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} is not a number: {token!r}", line=lineno) from None
    if not math.isfinite(value):
        raise RangeError(f"{what} must be finite, got {token!r}", line=lineno)
    return value


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} is not an integer: {token!r}", line=lineno) from None


def _parse_box(tokens: Sequence[str], lineno: int) -> BBox:
    x1, y1, x2, y2 = (
        _parse_float(tok, name, lineno)
        for tok, name in zip(tokens, ("x1", "y1", "x2", "y2"))
    )
    if not (x1 < x2 and y1 < y2):
        raise RangeError(
            f"inverted or empty box ({x1}, {y1}, {x2}, {y2})", line=lineno
        )
    return BBox(x1, y1, x2, y2)


def _check_id(token: str, what: str, lineno: int) -> str:
    if not token:
        raise ParseError(f"empty {what}", line=lineno)
    return token


def parse_canonical_detections(
    text: str | bytes, source: str = "unknown"
) -> list[tuple[str, Detection]]:
    """Parse canonical detection lines into (image_id, Detection) pairs."""
    out: list[tuple[str, Detection]] = []
    for lineno, line in _content_lines(_decode(text, "detections file")):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 7:
            raise ParseError(
                f"expected 7 comma-separated fields, got {len(fields)}", line=lineno
            )
        image_id = _check_id(fields[0], "image id", lineno)
        class_id = _parse_int(fields[1], "class id", lineno)
        if class_id < 0:
            raise RangeError(f"class id must be >= 0, got {class_id}", line=lineno)
        confidence = _parse_float(fields[2], "confidence", lineno)
        if not (0.0 <= confidence <= 1.0):
            raise RangeError(
                f"confidence must be in [0, 1], got {confidence}", line=lineno
            )
        box = _parse_box(fields[3:7], lineno)
        out.append((image_id, Detection(box, class_id, confidence, source)))
    return out


def serialize_detections(records: Iterable[tuple[str, Detection]]) -> str:
    """Canonical text for (image_id, Detection) pairs, one line each."""
    lines = []
    for image_id, det in records:
        box = det.box
        lines.append(
            f"{image_id},{det.class_id},{det.confidence!r},"
            f"{box.x1!r},{box.y1!r},{box.x2!r},{box.y2!r}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_canonical_gt(text: str | bytes) -> list[tuple[str, GroundTruthBox]]:
    """Parse ground-truth lines: image_id,class_id,x1,y1,x2,y2."""
    out: list[tuple[str, GroundTruthBox]] = []
    for lineno, line in _content_lines(_decode(text, "ground-truth file")):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 6:
            raise ParseError(
                f"expected 6 comma-separated fields, got {len(fields)}", line=lineno
            )
        image_id = _check_id(fields[0], "image id", lineno)
        class_id = _parse_int(fields[1], "class id", lineno)
        if class_id < 0:
            raise RangeError(f"class id must be >= 0, got {class_id}", line=lineno)
        box = _parse_box(fields[2:6], lineno)
        out.append((image_id, GroundTruthBox(box, class_id)))
    return out


def serialize_gt(records: Iterable[tuple[str, GroundTruthBox]]) -> str:
    lines = []
    for image_id, gt in records:
        box = gt.box
        lines.append(
            f"{image_id},{gt.class_id},{box.x1!r},{box.y1!r},{box.x2!r},{box.y2!r}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


def parse_yolo_txt(
    text: str | bytes,
    image_width: int | None,
    image_height: int | None,
    source: str = "unknown",
    *,
    clamp_tolerance: float = 0.001,
) -> tuple[list[Detection], list[str]]:
    """Parse center-normalized detector lines: class cx cy w h [conf].

    Coordinates are fractions of the image size, converted here to absolute
    corner format; a missing confidence defaults to 1.0 (ground-truth files).
    Values up to ``1 + clamp_tolerance`` are clamped with a warning; returns
    (detections, warnings).
    """
    if image_width is None or image_height is None:
        raise MissingImageSize("image dimensions are required for normalized input")
    detections: list[Detection] = []
    notes: list[str] = []
    for lineno, line in _content_lines(_decode(text, "normalized detections file")):
        fields = line.split()
        if len(fields) not in (5, 6):
            raise ParseError(
                f"expected 5 or 6 whitespace-separated fields, got {len(fields)}",
                line=lineno,
            )
        class_id = _parse_int(fields[0], "class id", lineno)
        if class_id < 0:
            raise RangeError(f"class id must be >= 0, got {class_id}", line=lineno)
        values = [
            _parse_float(tok, name, lineno)
            for tok, name in zip(fields[1:5], ("cx", "cy", "w", "h"))
        ]
        clamped = []
        for name, value in zip(("cx", "cy", "w", "h"), values):
            if value < 0.0 or value > 1.0 + clamp_tolerance:
                raise RangeError(
                    f"normalized {name} out of range: {value}", line=lineno
                )
            if value > 1.0:
                notes.append(f"line {lineno}: clamped {name} from {value} to 1.0")
                value = 1.0
            clamped.append(value)
        cx, cy, w, h = clamped
        confidence = 1.0
        if len(fields) == 6:
            confidence = _parse_float(fields[5], "confidence", lineno)
            if not (0.0 <= confidence <= 1.0):
                raise RangeError(
                    f"confidence must be in [0, 1], got {confidence}", line=lineno
                )
        x1 = max((cx - w / 2.0) * image_width, 0.0)
        y1 = max((cy - h / 2.0) * image_height, 0.0)
        x2 = min((cx + w / 2.0) * image_width, float(image_width))
        y2 = min((cy + h / 2.0) * image_height, float(image_height))
        if not (x1 < x2 and y1 < y2):
            raise RangeError("degenerate box after conversion", line=lineno)
        detections.append(Detection(BBox(x1, y1, x2, y2), class_id, confidence, source))
    return detections, notes


def load_yolo_dir(
    directory: str | Path,
    image_sizes: Mapping[str, tuple[int, int]],
    source: str = "unknown",
) -> tuple[dict[str, list[Detection]], list[str]]:
    """Load a directory of center-normalized files, one ``<image_id>.txt`` each.

    ``image_sizes`` maps image id to (width, height); a file whose stem has
    no size entry raises MissingImageSize. Returns (detections per image,
    warnings).
    """
    directory = Path(directory)
    per_image: dict[str, list[Detection]] = {}
    notes: list[str] = []
    for path in sorted(directory.glob("*.txt")):
        image_id = path.stem
        size = image_sizes.get(image_id)
        if size is None:
            raise MissingImageSize(f"no image size known for {image_id!r} ({path})")
        try:
            dets, file_notes = parse_yolo_txt(
                path.read_bytes(), size[0], size[1], source=source
            )
        except ParseError as exc:
            raise ParseError(str(exc), path=str(path)) from None
        per_image[image_id] = dets
        notes.extend(f"{path.name}: {note}" for note in file_notes)
    return per_image, notes


def parse_skill_profile(text: str | bytes) -> SkillProfile:
    """Parse ``model_id,class_id,f1`` lines into a validated skill profile."""
    entries: dict[tuple[str, int], float] = {}
    for lineno, line in _content_lines(_decode(text, "skill profile")):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 3:
            raise ParseError(
                f"expected 3 comma-separated fields, got {len(fields)}", line=lineno
            )
        model = _check_id(fields[0], "model id", lineno)
        class_id = _parse_int(fields[1], "class id", lineno)
        f1 = _parse_float(fields[2], "f1", lineno)
        if not (0.0 <= f1 <= 1.0):
            raise RangeError(f"f1 must be in [0, 1], got {f1}", line=lineno)
        if (model, class_id) in entries:
            raise ParseError(
                f"duplicate profile entry ({model}, {class_id})", line=lineno
            )
        entries[(model, class_id)] = f1
    if not entries:
        raise ParseError("skill profile is empty")
    models = sorted({m for m, _ in entries})
    if len(models) != 2:
        raise ParseError(f"skill profile must cover exactly 2 models, found {models}")
    classes = sorted({c for _, c in entries})
    missing = [
        (model, class_id)
        for model in models
        for class_id in classes
        if (model, class_id) not in entries
    ]
    if missing:
        raise IncompleteProfile(missing)
    return SkillProfile(entries)


def serialize_skill_profile(profile: SkillProfile) -> str:
    lines = [f"{model},{class_id},{f1!r}" for model, class_id, f1 in profile.entries()]
    return "\n".join(lines) + "\n"


def parse_keyvalue(text: str | bytes) -> dict[str, list[str]]:
    """Whitespace-separated key-value lines; first token is the key.

    Repeated keys accumulate, so callers can model multi-entry sections.
    """
    out: dict[str, list[str]] = {}
    for lineno, line in _content_lines(_decode(text, "key-value file")):
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError("expected 'key value...' line", line=lineno)
        out.setdefault(tokens[0], []).append(" ".join(tokens[1:]))
    return out
