import pytest

from boxvote.core import BBox, Detection, GroundTruthBox, ImageRecord, LabelMap
from boxvote.datastore import load_dataset, write_dataset
from boxvote.synth import (
    ScenarioSpec,
    attach_detections,
    generate_scenario,
    simulate_detector,
)
from boxvote.voter import SkillProfile, VoterParams


@pytest.fixture
def flat_profile():
    """Two models, three classes, asymmetric skill (A stronger except class 2)."""
    return SkillProfile(
        {
            ("MODEL_A", 0): 0.9, ("MODEL_B", 0): 0.6,
            ("MODEL_A", 1): 0.8, ("MODEL_B", 1): 0.8,
            ("MODEL_A", 2): 0.5, ("MODEL_B", 2): 0.95,
        }
    )


@pytest.fixture
def default_params():
    return VoterParams()


def make_frame(dets_a=(), dets_b=(), gts=(), image_id="img0", size=640):
    """Build an ImageRecord from loose (box-tuple, class, conf) specs."""
    def det(source, spec):
        box, class_id, conf = spec
        return Detection(BBox(*box), class_id, conf, source)

    return ImageRecord(
        image_id=image_id,
        width=size,
        height=size,
        ground_truth=tuple(GroundTruthBox(BBox(*box), cid) for box, cid in gts),
        detections={
            "MODEL_A": tuple(det("MODEL_A", s) for s in dets_a),
            "MODEL_B": tuple(det("MODEL_B", s) for s in dets_b),
        },
    )


def build_paired_dataset(
    out_dir,
    noise_a,
    noise_b,
    *,
    n_images=40,
    class_counts=None,
    f1_a=0.95,
    f1_b=0.70,
    seed=0,
    name="paired",
):
    """Generate a two-detector synthetic dataset on disk and load it back.

    Returns (dataset, profile) with MODEL_A assigned f1_a for every class and
    MODEL_B f1_b.
    """
    counts = class_counts or {0: 240, 1: 120, 2: 60}
    records = generate_scenario(
        ScenarioSpec(
            n_images=n_images, class_counts=counts,
            box_size_range=(24, 72), max_pair_iou=0.15, seed=seed,
        )
    )
    dets = {
        noise_a.model_id: simulate_detector(records, noise_a),
        noise_b.model_id: simulate_detector(records, noise_b),
    }
    full = attach_detections(records, dets)
    label_map = LabelMap({c: f"class{c}" for c in sorted(counts)})
    manifest = write_dataset(out_dir, name, label_map, full)
    dataset = load_dataset(manifest)
    profile = SkillProfile(
        {
            **{(noise_a.model_id, c): f1_a for c in sorted(counts)},
            **{(noise_b.model_id, c): f1_b for c in sorted(counts)},
        }
    )
    return dataset, profile
