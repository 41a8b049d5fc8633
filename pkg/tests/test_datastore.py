import json

import pytest

from boxvote.core import BBox, Detection, GroundTruthBox, ImageRecord, LabelMap
from boxvote.datastore import (
    BASE_CONDITION,
    RunRecord,
    RunStore,
    append_condition,
    load_dataset,
    parse_manifest,
    write_dataset,
)
from boxvote.errors import MissingSource, ParseError
from boxvote.voter import SkillProfile, VoterParams


def tiny_records():
    det_a = Detection(BBox(10, 10, 50, 50), 0, 0.9, "MODEL_A")
    det_b = Detection(BBox(12, 11, 52, 49), 0, 0.95, "MODEL_B")
    gt = GroundTruthBox(BBox(10, 10, 50, 50), 0)
    return [
        ImageRecord("img0", 100, 100, (gt,), {"MODEL_A": (det_a,), "MODEL_B": (det_b,)}),
        ImageRecord("img1", 100, 100, (), {"MODEL_A": (), "MODEL_B": ()}),
    ]


@pytest.fixture
def dataset_dir(tmp_path):
    label_map = LabelMap.from_names(["Screws", "Scratch"])
    manifest = write_dataset(tmp_path / "ds", "tiny", label_map, tiny_records())
    return manifest


class TestManifestParsing:
    def test_minimal(self):
        manifest = parse_manifest(
            "name t\nlabel 0 Screws\nimage img0 640 480\ngt gt.txt\n"
        )
        assert manifest.name == "t"
        assert manifest.images["img0"].width == 640
        assert manifest.conditions[BASE_CONDITION].gt_path == "gt.txt"

    def test_duplicate_image_rejected(self):
        with pytest.raises(ParseError):
            parse_manifest("label 0 a\nimage i 10 10\nimage i 10 10")

    def test_unknown_entry_rejected(self):
        with pytest.raises(ParseError):
            parse_manifest("label 0 a\nimage i 10 10\nwhatisthis x")

    def test_condition_entries(self):
        manifest = parse_manifest(
            "label 0 a\nimage i 10 10\n"
            "condition F gt f/gt.txt\n"
            "condition F detections MODEL_A f/a.txt\n"
            "condition F image i f/i.png\n"
        )
        cond = manifest.conditions["F"]
        assert cond.gt_path == "f/gt.txt"
        assert cond.detection_paths == {"MODEL_A": "f/a.txt"}
        assert cond.image_paths == {"i": "f/i.png"}


class TestDatasetRoundTrip:
    def test_write_then_load(self, dataset_dir):
        dataset = load_dataset(dataset_dir)
        assert dataset.conditions == [BASE_CONDITION]
        assert dataset.models() == ["MODEL_A", "MODEL_B"]
        records = dataset.records()
        assert [r.image_id for r in records] == ["img0", "img1"]
        assert records[0].detections_for("MODEL_A")[0].box == BBox(10, 10, 50, 50)
        assert records[0].ground_truth[0].class_id == 0
        assert records[1].detections_for("MODEL_B") == ()

    def test_missing_file_rejected(self, dataset_dir):
        (dataset_dir.parent / "gt.txt").unlink()
        with pytest.raises(ParseError):
            load_dataset(dataset_dir)

    def test_unknown_class_rejected(self, dataset_dir):
        gt_path = dataset_dir.parent / "gt.txt"
        gt_path.write_text("img0,7,10,10,50,50\n")
        with pytest.raises(ParseError):
            load_dataset(dataset_dir)

    def test_unknown_image_rejected(self, dataset_dir):
        gt_path = dataset_dir.parent / "gt.txt"
        gt_path.write_text("ghost,0,10,10,50,50\n")
        with pytest.raises(ParseError):
            load_dataset(dataset_dir)

    def test_overflowing_box_clamped_with_warning(self, dataset_dir):
        det_path = dataset_dir.parent / "dets_MODEL_A.txt"
        det_path.write_text("img0,0,0.9,10,10,110,50\n")
        dataset = load_dataset(dataset_dir)
        det = dataset.records()[0].detections_for("MODEL_A")[0]
        assert det.box.x2 == 100.0
        assert any("overflows" in w for w in dataset.warnings)

    def test_small_overflow_clamped_silently(self, dataset_dir):
        det_path = dataset_dir.parent / "dets_MODEL_A.txt"
        det_path.write_text("img0,0,0.9,10,10,100.3,50\n")
        dataset = load_dataset(dataset_dir)
        det = dataset.records()[0].detections_for("MODEL_A")[0]
        assert det.box.x2 == 100.0
        assert dataset.warnings == []

    def test_unknown_condition_raises(self, dataset_dir):
        dataset = load_dataset(dataset_dir)
        with pytest.raises(MissingSource):
            dataset.records("SUp")

    def test_append_condition(self, dataset_dir):
        root = dataset_dir.parent
        (root / "flip_gt.txt").write_text("img0,0,50,10,90,50\n")
        (root / "flip_a.txt").write_text("img0,0,0.9,50,10,90,50\n")
        append_condition(
            dataset_dir, "F", gt_rel="flip_gt.txt",
            detection_rels={"MODEL_A": "flip_a.txt"},
        )
        dataset = load_dataset(dataset_dir)
        assert dataset.conditions == ["F", BASE_CONDITION]
        records = dataset.records("F")
        assert records[0].ground_truth[0].box == BBox(50, 10, 90, 50)


class TestRunStore:
    def _record(self, run_id="run-001"):
        profile = SkillProfile(
            {("MODEL_A", 0): 0.9, ("MODEL_B", 0): 0.6}
        )
        return RunRecord(
            run_id=run_id,
            params=VoterParams(gamma=1.5, model_conf_floor={"MODEL_A": 0.5, "MODEL_B": 0.7}),
            profile=profile,
            report={"map50": 0.875, "micro_precision": 1.0},
            trace_counts={"AGREEMENT_FUSED": 3, "DROPPED_NMS": 1},
            meta={"condition": BASE_CONDITION, "source": "ENSEMBLE"},
        )

    def test_save_load_round_trip(self, tmp_path):
        store = RunStore(tmp_path / "runs")
        record = self._record()
        store.save(record)
        loaded = store.load("run-001")
        assert loaded.params == record.params
        assert loaded.profile == record.profile
        assert loaded.report == record.report
        assert loaded.trace_counts == record.trace_counts
        assert loaded.meta["condition"] == BASE_CONDITION
        assert loaded.timestamp > 0

    def test_duplicate_id_rejected(self, tmp_path):
        store = RunStore(tmp_path / "runs")
        store.save(self._record())
        with pytest.raises(FileExistsError):
            store.save(self._record())

    def test_index_lists_runs(self, tmp_path):
        store = RunStore(tmp_path / "runs")
        store.save(self._record("a"))
        store.save(self._record("b"))
        assert store.run_ids() == ["a", "b"]

    def test_no_temp_dirs_left(self, tmp_path):
        store = RunStore(tmp_path / "runs")
        store.save(self._record())
        leftovers = [p for p in (tmp_path / "runs").iterdir() if p.name.startswith(".tmp")]
        assert leftovers == []

    def test_report_json_exact(self, tmp_path):
        store = RunStore(tmp_path / "runs")
        record = self._record()
        record.report["map50"] = 0.12345678901234567
        path = store.save(record)
        stored = json.loads((path / "report.json").read_text())
        assert stored["map50"] == 0.12345678901234567
