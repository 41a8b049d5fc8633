#!/usr/bin/env python3
"""Regenerate frontend/tests/fixtures from the real service and CLI.

Builds a tiny tuning dataset containing:
  - a stable agreement pair (class 1) that always fuses, and
  - a MODEL_B solo detection (class 0, confidence 0.93) that only the
    strong-confidence override can keep: its model's class F1 is far below
    the other model's, so rules II/III never fire. At the default
    solo_strong=0.95 the box is dropped; at 0.90 it appears.

Everything is deterministic, so the committed fixtures are stable.
"""

import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from boxvote.cli import main as cli_main
from boxvote.core import BBox, Detection, GroundTruthBox, ImageRecord, LabelMap
from boxvote.datastore import PROFILE_NAME, write_dataset
from boxvote.formats import parse_canonical_detections, serialize_skill_profile
from boxvote.service import create_app
from boxvote.voter import SkillProfile

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "frontend" / "tests" / "fixtures"


def build_dataset(root: Path) -> Path:
    label_map = LabelMap.from_names(["Screws", "CPU_fan"])
    solo_b = Detection(BBox(50, 50, 150, 150), 0, 0.93, "MODEL_B")
    pair_a = Detection(BBox(300, 300, 400, 400), 1, 0.90, "MODEL_A")
    pair_b = Detection(BBox(304, 298, 404, 396), 1, 0.92, "MODEL_B")
    record = ImageRecord(
        "tune0", 640, 640,
        (
            GroundTruthBox(BBox(50, 50, 150, 150), 0),
            GroundTruthBox(BBox(300, 300, 400, 400), 1),
        ),
        {"MODEL_A": (pair_a,), "MODEL_B": (solo_b, pair_b)},
    )
    out = root / "tuneset"
    manifest = write_dataset(out, "tuneset", label_map, [record])
    profile = SkillProfile(
        {
            ("MODEL_A", 0): 0.95, ("MODEL_B", 0): 0.60,
            ("MODEL_A", 1): 0.90, ("MODEL_B", 1): 0.85,
        }
    )
    (out / PROFILE_NAME).write_text(serialize_skill_profile(profile))
    return manifest


def main() -> int:
    import tempfile

    FIXTURES.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        manifest = build_dataset(root)
        data_dir = manifest.parent
        client = TestClient(create_app(data_dir))

        def dump(name: str, payload) -> None:
            (FIXTURES / name).write_text(json.dumps(payload, indent=1, sort_keys=True))

        dump("defaults.json", client.get("/api/params/defaults").json())
        dump("images.json", client.get("/api/images").json())
        dump(
            "detections_a.json",
            client.get("/api/images/tune0/detections?source=MODEL_A").json(),
        )
        dump(
            "detections_b.json",
            client.get("/api/images/tune0/detections?source=MODEL_B").json(),
        )
        dump("gt.json", client.get("/api/images/tune0/detections?source=GT").json())
        dump(
            "fuse_default.json",
            client.post("/api/fuse", json={"image_id": "tune0"}).json(),
        )
        dump(
            "fuse_lowered.json",
            client.post(
                "/api/fuse",
                json={"image_id": "tune0", "params": {"solo_strong": 0.90}},
            ).json(),
        )
        dump(
            "evaluate_default.json",
            client.post("/api/evaluate", json={}).json(),
        )
        dump(
            "evaluate_lowered.json",
            client.post(
                "/api/evaluate", json={"params": {"solo_strong": 0.90}}
            ).json(),
        )

        cli_out = root / "cli-out"
        code = cli_main(
            [
                "fuse", "--manifest", str(manifest),
                "--profile", str(data_dir / PROFILE_NAME),
                "--out", str(cli_out),
            ]
        )
        assert code == 0, "CLI fuse failed"
        rows = parse_canonical_detections((cli_out / "fused.txt").read_text())
        dump(
            "cli_fused_default.json",
            [
                {
                    "image_id": image_id,
                    "class_id": det.class_id,
                    "confidence": det.confidence,
                    "box": {
                        "x1": det.box.x1, "y1": det.box.y1,
                        "x2": det.box.x2, "y2": det.box.y2,
                    },
                }
                for image_id, det in rows
            ],
        )
    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
