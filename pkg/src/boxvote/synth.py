"""Synthetic ground truth and noisy detector simulation.

Generates scenarios with controllable per-class skill so the fusion and
evaluation pipeline can be exercised end to end without trained models.
Everything is deterministic under a fixed seed; each image draws from its own
derived RNG stream, so images are independently reproducible.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import BBox, Detection, GroundTruthBox, ImageRecord, LabelMap, iou
from .errors import PackingInfeasible
from .voter import DEFAULT_MODEL_A, DEFAULT_MODEL_B

# Default label map and instance counts for the shipped demo preset. The
# per-class totals follow the assembly-defect class mix this toolkit targets
# (screw/fan/scratch conditions with a heavy class imbalance).
DEFAULT_CLASS_NAMES = (
    "Screws",
    "CPU_FAN_Screws",
    "CPU_FAN_NO_Screws",
    "CPU_fan",
    "No_Screws",
    "CPU_fan_port",
    "CPU_FAN_Screw_loose",
    "Scratch",
    "Incorrect_Screws",
    "CPU_fan_port_detached",
    "Loose_Screws",
)
DEFAULT_CLASS_COUNTS = (806, 685, 326, 313, 196, 159, 99, 95, 63, 60, 58)

DEFAULT_LABEL_MAP = LabelMap.from_names(DEFAULT_CLASS_NAMES)


@dataclass(frozen=True)
class ScenarioSpec:
    """Ground-truth generator settings: totals per class across the dataset."""

    n_images: int
    width: int = 640
    height: int = 640
    class_counts: Mapping[int, int] = field(
        default_factory=lambda: dict(enumerate(DEFAULT_CLASS_COUNTS))
    )
    box_size_range: tuple[int, int] = (24, 96)
    max_pair_iou: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 0:
            raise ValueError("n_images must be >= 0")
        lo, hi = self.box_size_range
        if not (0 < lo <= hi):
            raise ValueError(f"invalid box size range {self.box_size_range}")
        if hi > min(self.width, self.height):
            raise ValueError("boxes larger than the image cannot be placed")
        if any(count < 0 for count in self.class_counts.values()):
            raise ValueError("class counts must be >= 0")


def scaled_default_counts(scale: float) -> dict[int, int]:
    """Default class mix scaled by a factor (rounded, at least 0)."""
    return {i: int(round(count * scale)) for i, count in enumerate(DEFAULT_CLASS_COUNTS)}


_MAX_PLACEMENT_TRIES = 200


def generate_scenario(spec: ScenarioSpec) -> list[ImageRecord]:
    """Place ground-truth boxes for a whole dataset.

    Instances are assigned to images uniformly, then placed per image by
    rejection sampling against the pairwise-IoU separation cap. Coordinates
    are integer-valued so flips and file round-trips are exact.
    """
    if spec.n_images == 0:
        if any(c > 0 for c in spec.class_counts.values()):
            raise PackingInfeasible("instances requested but n_images is 0")
        return []
    assign_rng = np.random.default_rng([spec.seed, 0xA551])
    per_image: list[list[int]] = [[] for _ in range(spec.n_images)]
    for class_id in sorted(spec.class_counts):
        for _ in range(spec.class_counts[class_id]):
            per_image[int(assign_rng.integers(0, spec.n_images))].append(class_id)

    records = []
    lo, hi = spec.box_size_range
    for img_idx in range(spec.n_images):
        rng = np.random.default_rng([spec.seed, img_idx])
        placed: list[GroundTruthBox] = []
        for class_id in per_image[img_idx]:
            for attempt in range(_MAX_PLACEMENT_TRIES):
                w = int(rng.integers(lo, hi + 1))
                h = int(rng.integers(lo, hi + 1))
                x1 = int(rng.integers(0, spec.width - w + 1))
                y1 = int(rng.integers(0, spec.height - h + 1))
                box = BBox(float(x1), float(y1), float(x1 + w), float(y1 + h))
                if all(iou(box, other.box) < spec.max_pair_iou for other in placed):
                    placed.append(GroundTruthBox(box, class_id))
                    break
            else:
                raise PackingInfeasible(
                    f"could not place a class-{class_id} box in image {img_idx} "
                    f"after {_MAX_PLACEMENT_TRIES} tries"
                )
        records.append(
            ImageRecord(
                image_id=f"img{img_idx:05d}",
                width=spec.width,
                height=spec.height,
                ground_truth=tuple(placed),
            )
        )
    return records


@dataclass(frozen=True)
class DetectorNoiseSpec:
    """Noise model for one simulated detector.

    recall_prob: chance each ground-truth instance is detected (per-class
    overrides win over the default). conf_range bounds sampled confidences of
    true detections; jitter_sigma perturbs each coordinate; fp_rate is the
    Poisson mean of spurious boxes per image.
    """

    model_id: str
    recall_prob: float = 1.0
    recall_per_class: Mapping[int, float] = field(default_factory=dict)
    conf_range: tuple[float, float] = (0.5, 1.0)
    jitter_sigma: float = 0.0
    fp_rate: float = 0.0
    fp_conf_range: tuple[float, float] = (0.5, 0.9)
    fp_size_range: tuple[int, int] = (24, 96)
    label_confusion_prob: float = 0.0
    confusion_target: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name, prob in (("recall_prob", self.recall_prob), ("label_confusion_prob", self.label_confusion_prob)):
            if not (0.0 <= prob <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {prob}")
        for prob in self.recall_per_class.values():
            if not (0.0 <= prob <= 1.0):
                raise ValueError("per-class recall must be in [0, 1]")
        for name, rng_pair in (("conf_range", self.conf_range), ("fp_conf_range", self.fp_conf_range)):
            lo, hi = rng_pair
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} must be ordered within [0, 1], got {rng_pair}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if self.fp_rate < 0:
            raise ValueError("fp_rate must be >= 0")
        if self.label_confusion_prob > 0 and self.confusion_target is None:
            raise ValueError("label confusion requires a confusion_target class")

    def recall_for(self, class_id: int) -> float:
        return self.recall_per_class.get(class_id, self.recall_prob)


def _jitter_box(box: BBox, sigma: float, width: int, height: int, rng) -> BBox:
    if sigma == 0.0:
        return box
    # Truncated jitter: redraw until the box stays valid and inside the
    # image, then fall back to clipping the offsets.
    for _ in range(20):
        deltas = rng.normal(0.0, sigma, size=4)
        x1, y1 = box.x1 + deltas[0], box.y1 + deltas[1]
        x2, y2 = box.x2 + deltas[2], box.y2 + deltas[3]
        if 0 <= x1 < x2 <= width and 0 <= y1 < y2 <= height:
            return BBox(x1, y1, x2, y2)
    return box


def simulate_detector(
    records: Sequence[ImageRecord], noise: DetectorNoiseSpec
) -> dict[str, tuple[Detection, ...]]:
    """Produce per-image detections for one simulated model.

    Each ground-truth instance fires with its class recall probability; fired
    boxes get jittered coordinates, a sampled confidence, and (optionally) a
    confused label. Spurious boxes arrive at Poisson(fp_rate) per image with
    classes drawn from the classes present in the dataset.
    """
    class_pool = sorted({gt.class_id for rec in records for gt in rec.ground_truth})
    results: dict[str, tuple[Detection, ...]] = {}
    for img_idx, record in enumerate(records):
        rng = np.random.default_rng([noise.seed, img_idx])
        dets: list[Detection] = []
        lo, hi = noise.conf_range
        for gt in record.ground_truth:
            if rng.random() >= noise.recall_for(gt.class_id):
                continue
            box = _jitter_box(gt.box, noise.jitter_sigma, record.width, record.height, rng)
            confidence = float(rng.uniform(lo, hi))
            class_id = gt.class_id
            if noise.label_confusion_prob > 0 and rng.random() < noise.label_confusion_prob:
                class_id = noise.confusion_target
            dets.append(Detection(box, class_id, confidence, noise.model_id))
        n_fp = int(rng.poisson(noise.fp_rate)) if noise.fp_rate > 0 else 0
        fp_lo, fp_hi = noise.fp_conf_range
        size_lo, size_hi = noise.fp_size_range
        for _ in range(n_fp):
            if not class_pool:
                break
            w = int(rng.integers(size_lo, min(size_hi, record.width) + 1))
            h = int(rng.integers(size_lo, min(size_hi, record.height) + 1))
            x1 = int(rng.integers(0, record.width - w + 1))
            y1 = int(rng.integers(0, record.height - h + 1))
            class_id = int(class_pool[int(rng.integers(0, len(class_pool)))])
            confidence = float(rng.uniform(fp_lo, fp_hi))
            dets.append(
                Detection(BBox(x1, y1, x1 + w, y1 + h), class_id, confidence, noise.model_id)
            )
        results[record.image_id] = tuple(dets)
    return results


def attach_detections(
    records: Sequence[ImageRecord],
    per_model: Mapping[str, Mapping[str, tuple[Detection, ...]]],
) -> list[ImageRecord]:
    """Return new records with detection maps filled in per model."""
    out = []
    for record in records:
        detections = {
            model: tuple(dets.get(record.image_id, ()))
            for model, dets in per_model.items()
        }
        out.append(
            ImageRecord(
                record.image_id, record.width, record.height,
                record.ground_truth, detections,
            )
        )
    return out


def yolo_like(seed: int = 1, model_id: str = DEFAULT_MODEL_A) -> DetectorNoiseSpec:
    """High-recall, moderately confident detector preset."""
    return DetectorNoiseSpec(
        model_id=model_id,
        recall_prob=0.95,
        conf_range=(0.65, 0.94),
        jitter_sigma=1.5,
        fp_rate=0.3,
        fp_conf_range=(0.65, 0.9),
        seed=seed,
    )


def frcnn_like(seed: int = 2, model_id: str = DEFAULT_MODEL_B) -> DetectorNoiseSpec:
    """Low-recall detector preset with confidences skewed high."""
    return DetectorNoiseSpec(
        model_id=model_id,
        recall_prob=0.72,
        conf_range=(0.90, 0.99),
        jitter_sigma=2.0,
        fp_rate=0.3,
        fp_conf_range=(0.90, 0.96),
        seed=seed,
    )


def noiseless(model_id: str, seed: int = 0) -> DetectorNoiseSpec:
    """Perfect detector: reproduces ground truth with high confidences."""
    return DetectorNoiseSpec(
        model_id=model_id,
        recall_prob=1.0,
        conf_range=(0.95, 1.0),
        jitter_sigma=0.0,
        fp_rate=0.0,
        seed=seed,
    )


def reference_profile():
    """The shipped per-class F1 profile for the default 11-class label map."""
    from importlib.resources import files

    from .formats import parse_skill_profile

    text = files("boxvote.data").joinpath("reference_profile.csv").read_bytes()
    return parse_skill_profile(text)


def render_scenario_image(record: ImageRecord, rng_seed: int = 0) -> np.ndarray:
    """Draw a flat synthetic frame: gray background, one tinted patch per box.

    Purely cosmetic; gives the tuning UI pixels to overlay on.
    """
    stable_id = zlib.crc32(record.image_id.encode("utf-8"))
    rng = np.random.default_rng([rng_seed, stable_id])
    img = np.full((record.height, record.width, 3), 58, dtype=np.uint8)
    noise = rng.integers(0, 12, size=img.shape, dtype=np.uint8)
    img += noise
    palette = np.array(
        [
            [204, 102, 102], [102, 204, 102], [102, 102, 204], [204, 204, 102],
            [204, 102, 204], [102, 204, 204], [230, 150, 80], [150, 230, 80],
            [80, 150, 230], [230, 80, 150], [150, 80, 230],
        ],
        dtype=np.uint8,
    )
    for gt in record.ground_truth:
        x1, y1, x2, y2 = (int(round(v)) for v in gt.box.as_tuple())
        color = palette[gt.class_id % len(palette)]
        img[y1:y2, x1:x2] = color
        img[y1:y2, x1:min(x1 + 2, x2)] = 20
        img[y1:y2, max(x2 - 2, x1):x2] = 20
        img[y1:min(y1 + 2, y2), x1:x2] = 20
        img[max(y2 - 2, y1):y2, x1:x2] = 20
    return img
