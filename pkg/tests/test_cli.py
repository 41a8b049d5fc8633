import numpy as np
import pytest

from boxvote.cli import EXIT_GRID, EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, main
from boxvote.datastore import load_dataset
from boxvote.formats import parse_canonical_detections
from boxvote.perturb import read_image


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-demo") / "ds"
    code = main(
        [
            "simulate", "--out", str(out), "--images", "10",
            "--scale", "0.015", "--seed", "7", "--render",
        ]
    )
    assert code == EXIT_OK
    return out


def run(args):
    return main([str(a) for a in args])


class TestSimulate:
    def test_outputs_exist(self, demo):
        for name in ("manifest.txt", "gt.txt", "dets_MODEL_A.txt",
                     "dets_MODEL_B.txt", "profile.csv"):
            assert (demo / name).is_file()
        assert (demo / "images").is_dir()

    def test_deterministic(self, tmp_path, demo):
        other = tmp_path / "again"
        run(["simulate", "--out", other, "--images", "10",
             "--scale", "0.015", "--seed", "7", "--render"])
        for name in ("manifest.txt", "gt.txt", "dets_MODEL_A.txt", "dets_MODEL_B.txt"):
            assert (other / name).read_bytes() == (demo / name).read_bytes()


class TestFuse:
    def test_outputs_and_determinism(self, demo, tmp_path, capsys):
        out1, out2 = tmp_path / "f1", tmp_path / "f2"
        for out in (out1, out2):
            code = run([
                "fuse", "--manifest", demo / "manifest.txt",
                "--profile", demo / "profile.csv", "--out", out,
            ])
            assert code == EXIT_OK
        assert (out1 / "fused.txt").read_bytes() == (out2 / "fused.txt").read_bytes()
        assert (out1 / "traces.txt").read_bytes() == (out2 / "traces.txt").read_bytes()
        fused = parse_canonical_detections((out1 / "fused.txt").read_text())
        assert fused, "fusion produced no detections"

    def test_param_flag_changes_output(self, demo, tmp_path):
        base, tweaked = tmp_path / "base", tmp_path / "tweaked"
        run(["fuse", "--manifest", demo / "manifest.txt",
             "--profile", demo / "profile.csv", "--out", base])
        run(["fuse", "--manifest", demo / "manifest.txt",
             "--profile", demo / "profile.csv", "--out", tweaked,
             "--floor", "MODEL_A=0.99", "--floor", "MODEL_B=0.99"])
        assert (base / "fused.txt").read_text() != (tweaked / "fused.txt").read_text()

    def test_config_file_with_flag_override(self, demo, tmp_path, capsys):
        config = tmp_path / "params.conf"
        config.write_text("gamma 3\nt_iou 0.5\n")
        out = tmp_path / "cfg"
        code = run([
            "fuse", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--out", out,
            "--config", config, "--gamma", "1.0",
        ])
        assert code == EXIT_OK


class TestEval:
    def test_report_written(self, demo, tmp_path, capsys):
        out = tmp_path / "report"
        code = run([
            "eval", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--out", out, "--format", "csv",
        ])
        assert code == EXIT_OK
        captured = capsys.readouterr().out
        assert captured.startswith("metric,")
        assert (out / "report.csv").is_file()

    def test_single_model_without_profile(self, demo, capsys):
        code = run([
            "eval", "--manifest", demo / "manifest.txt", "--source", "MODEL_A",
        ])
        assert code == EXIT_OK

    def test_ensemble_without_profile_fails(self, demo, capsys):
        code = run(["eval", "--manifest", demo / "manifest.txt"])
        assert code == EXIT_VALIDATION

    def test_unknown_source_is_validation_error(self, demo, capsys):
        code = run([
            "eval", "--manifest", demo / "manifest.txt", "--source", "MODEL_Z",
        ])
        assert code == EXIT_VALIDATION

    def test_save_run_replays_identically(self, demo, tmp_path, capsys):
        from boxvote.datastore import RunStore
        from boxvote.harness import ENSEMBLE, evaluate_source

        runs = tmp_path / "runs"
        code = run([
            "eval", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv",
            "--save-run", runs, "--run-id", "r1",
        ])
        assert code == EXIT_OK
        record = RunStore(runs).load("r1")
        dataset = load_dataset(demo / "manifest.txt")
        replayed = evaluate_source(
            dataset, ENSEMBLE, profile=record.profile, params=record.params
        )
        assert replayed.as_dict() == record.report


class TestSweepCli:
    def test_ten_row_grid(self, demo, capsys):
        code = run([
            "sweep", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--format", "csv",
            "--axis", "t_iou=0.3,0.5,0.7",
        ])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4  # header + 3 rows

    def test_grid_cap_exit_code(self, demo, capsys):
        code = run([
            "sweep", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv",
            "--axis", "gamma=0,1,2,3", "--max-grid", "2",
        ])
        assert code == EXIT_GRID

    def test_bad_axis_spec(self, demo, capsys):
        code = run([
            "sweep", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--axis", "gamma",
        ])
        assert code == EXIT_VALIDATION


class TestAblateCli:
    def test_four_variants(self, demo, capsys):
        code = run([
            "ablate", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--format", "csv",
        ])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        assert lines[1].startswith("FULL,")


class TestPerturbCli:
    def test_conditions_written_and_flip_inverts(self, demo, capsys):
        code = run([
            "perturb", "--manifest", demo / "manifest.txt",
            "--simulate-detections", "--seed", "3",
        ])
        assert code == EXIT_OK
        dataset = load_dataset(demo / "manifest.txt")
        assert dataset.conditions == ["BDn", "BUp", "F", "N", "SUp"]
        # Flip involution: flipping the F condition's pixels restores the
        # original PNG pixels bit-exactly.
        image_id = dataset.manifest.image_ids[0]
        original = read_image(dataset.image_path(image_id, "N"))
        flipped = read_image(dataset.image_path(image_id, "F"))
        assert np.array_equal(flipped[:, ::-1, :], original)

    def test_perturbed_conditions_evaluable(self, demo, capsys):
        code = run([
            "eval", "--manifest", demo / "manifest.txt",
            "--profile", demo / "profile.csv", "--condition", "F",
        ])
        assert code == EXIT_OK

    def test_unknown_condition_name(self, demo, capsys):
        code = run([
            "perturb", "--manifest", demo / "manifest.txt", "--conditions", "Wobble",
        ])
        assert code == EXIT_VALIDATION


class TestParser:
    def test_all_subcommands_registered(self):
        from boxvote.cli import build_parser

        parser = build_parser()
        args = parser.parse_args(["serve", "--data-dir", "x", "--port", "9000"])
        assert args.port == 9000
        for command in ("fuse", "eval", "sweep", "ablate", "perturb", "simulate", "serve"):
            assert command in parser.format_help()

    def test_param_flags_mirror_field_names(self):
        from boxvote.cli import build_parser

        helptext = build_parser().parse_args(["fuse", "--manifest", "m",
                                              "--profile", "p", "--out", "o"])
        for field in ("t_iou", "gamma", "f1_margin", "conf_thresh",
                      "solo_strong", "near_tie_conf", "nms_iou"):
            assert hasattr(helptext, field)


class TestEvalDeterminism:
    def test_report_bytes_identical_across_runs(self, demo, tmp_path, capsys):
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            code = run([
                "eval", "--manifest", demo / "manifest.txt",
                "--profile", demo / "profile.csv", "--out", out,
            ])
            assert code == EXIT_OK
            outs.append((out / "report.csv").read_bytes())
        assert outs[0] == outs[1]


class TestErrorFamilies:
    def test_parse_error_exit_code(self, demo, tmp_path, capsys):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "manifest.txt").write_text("label 0 a\nimage i 10 10\ngt gt.txt\n")
        (bad / "gt.txt").write_text("i,0,not_a_number,0,10,10\n")
        code = run([
            "eval", "--manifest", bad / "manifest.txt", "--source", "MODEL_A",
        ])
        assert code == EXIT_PARSE

    def test_missing_manifest_is_parse_error(self, tmp_path, capsys):
        code = run([
            "eval", "--manifest", tmp_path / "nope.txt", "--source", "MODEL_A",
        ])
        assert code in (EXIT_PARSE, 6)  # unreadable path surfaces as I/O or parse
