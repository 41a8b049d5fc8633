import pytest

from boxvote.datastore import BASE_CONDITION
from boxvote.errors import GridTooLarge, MissingSource
from boxvote.harness import (
    ABLATION_VARIANTS,
    ENSEMBLE,
    SweepSpec,
    apply_ablation,
    evaluate_source,
    format_csv,
    format_table,
    run_ablation,
    run_sweep,
    sweep_rows_table,
    trace_count_totals,
)
from boxvote.synth import DetectorNoiseSpec, frcnn_like, noiseless, yolo_like
from boxvote.voter import VoterParams, fuse_frame

from conftest import build_paired_dataset, make_frame


@pytest.fixture(scope="module")
def noiseless_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("noiseless")
    return build_paired_dataset(
        out,
        noiseless("MODEL_A", seed=1),
        noiseless("MODEL_B", seed=2),
        n_images=20,
        seed=10,
    )


@pytest.fixture(scope="module")
def noisy_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("noisy")
    return build_paired_dataset(
        out, yolo_like(seed=3), frcnn_like(seed=4), n_images=30, seed=11
    )


class TestEvaluateSource:
    def test_noiseless_single_model_all_ones(self, noiseless_dataset):
        dataset, _ = noiseless_dataset
        report = evaluate_source(dataset, "MODEL_A")
        assert report.micro.precision == 1.0
        assert report.micro.recall == 1.0
        assert report.map50 == 1.0

    def test_noiseless_ensemble_all_ones(self, noiseless_dataset):
        dataset, profile = noiseless_dataset
        report = evaluate_source(
            dataset, ENSEMBLE, profile=profile, params=VoterParams()
        )
        assert report.micro.precision == 1.0
        assert report.micro.recall == 1.0
        assert report.map50 == 1.0

    def test_missing_source(self, noiseless_dataset):
        dataset, _ = noiseless_dataset
        with pytest.raises(MissingSource):
            evaluate_source(dataset, "MODEL_X")

    def test_unknown_condition(self, noiseless_dataset):
        dataset, _ = noiseless_dataset
        with pytest.raises(MissingSource):
            evaluate_source(dataset, "MODEL_A", condition="F")

    def test_deterministic(self, noisy_dataset):
        dataset, profile = noisy_dataset
        params = VoterParams()
        first = evaluate_source(dataset, ENSEMBLE, profile=profile, params=params)
        second = evaluate_source(dataset, ENSEMBLE, profile=profile, params=params)
        assert first.as_dict() == second.as_dict()


class TestSweep:
    def test_single_point_equals_eval(self, noisy_dataset):
        dataset, profile = noisy_dataset
        params = VoterParams()
        rows = run_sweep(dataset, profile, params, SweepSpec(axes={"t_iou": [0.4]}))
        assert len(rows) == 1
        report = evaluate_source(dataset, ENSEMBLE, profile=profile, params=params)
        assert rows[0].map50 == report.map50
        assert rows[0].map_range == report.map_range
        assert rows[0].precision == report.micro.precision
        assert rows[0].recall == report.micro.recall

    def test_three_single_axis_sweeps_emit_ten_rows(self, noisy_dataset):
        dataset, profile = noisy_dataset
        params = VoterParams()
        axes = [
            {"t_iou": [0.3, 0.5, 0.7]},
            {"gamma": [0, 1, 2, 3]},
            {"solo_strong": [0.90, 0.95, 0.98]},
        ]
        rows = []
        for axis in axes:
            rows.extend(run_sweep(dataset, profile, params, SweepSpec(axes=axis)))
        assert len(rows) == 10
        for row in rows:
            for value in (row.map50, row.map_range, row.precision, row.recall):
                assert 0.0 <= value <= 1.0

    def test_rows_sorted_lexicographically(self, noisy_dataset):
        dataset, profile = noisy_dataset
        rows = run_sweep(
            dataset, profile, VoterParams(),
            SweepSpec(axes={"gamma": [2, 0, 1], "t_iou": [0.5, 0.3]}),
        )
        keys = [[v for _, v in row.settings] for row in rows]
        assert keys == sorted(keys)
        assert len(rows) == 6

    def test_parallel_equals_serial(self, noisy_dataset):
        dataset, profile = noisy_dataset
        spec = SweepSpec(axes={"gamma": [0, 2], "t_iou": [0.3, 0.5]})
        serial = run_sweep(dataset, profile, VoterParams(), spec, jobs=1)
        parallel = run_sweep(dataset, profile, VoterParams(), spec, jobs=2)
        assert serial == parallel

    def test_grid_cap(self, noisy_dataset):
        dataset, profile = noisy_dataset
        with pytest.raises(GridTooLarge):
            run_sweep(
                dataset, profile, VoterParams(),
                SweepSpec(axes={"gamma": list(range(6))}, max_points=5),
            )

    def test_unknown_axis_rejected(self):
        with pytest.raises(ValueError):
            SweepSpec(axes={"not_a_field": [1]})

    def test_gamma_decides_fused_box_monotonically(self):
        # A low-confidence strong-F1 model vs a high-confidence weak-F1 model:
        # raising gamma shifts the fused box toward the confident one.
        frame = make_frame(
            dets_a=[((0, 0, 100, 100), 0, 0.6)],
            dets_b=[((40, 0, 140, 100), 0, 0.99)],
        )
        from boxvote.voter import SkillProfile

        profile = SkillProfile({("MODEL_A", 0): 0.95, ("MODEL_B", 0): 0.55})
        x1s = []
        for gamma in (0.0, 1.0, 2.0, 4.0):
            params = VoterParams(gamma=gamma, t_iou=0.2, model_conf_floor={})
            result = fuse_frame(frame, profile, params)
            assert len(result.kept) == 1
            x1s.append(result.kept[0].detection.box.x1)
        assert x1s == sorted(x1s)
        assert x1s[0] < x1s[-1]


class TestAblation:
    def test_full_variant_is_identity(self, noisy_dataset):
        _, profile = noisy_dataset
        params = VoterParams()
        v_params, v_profile = apply_ablation("FULL", params, profile)
        assert v_params == params and v_profile == profile

    def test_full_row_matches_baseline_eval(self, noisy_dataset):
        dataset, profile = noisy_dataset
        params = VoterParams()
        rows = run_ablation(dataset, profile, params, variants=("FULL",))
        report = evaluate_source(dataset, ENSEMBLE, profile=profile, params=params)
        assert rows[0].map50 == report.map50
        assert rows[0].precision == report.micro.precision

    def test_all_variants_run(self, noisy_dataset):
        dataset, profile = noisy_dataset
        rows = run_ablation(dataset, profile, VoterParams())
        assert [r.variant for r in rows] == list(ABLATION_VARIANTS)

    def test_duplicate_variants_rejected(self, noisy_dataset):
        dataset, profile = noisy_dataset
        with pytest.raises(ValueError):
            run_ablation(dataset, profile, VoterParams(), variants=("FULL", "FULL"))

    def test_no_f1_weight_reduces_recall(self, tmp_path):
        # MODEL_A detections sit below solo_strong, so unmatched ones survive
        # only through the rule-II F1 advantage; all-ones removes it.
        dataset, profile = build_paired_dataset(
            tmp_path / "rule2", yolo_like(seed=5), frcnn_like(seed=6),
            n_images=40, seed=12,
        )
        rows = run_ablation(
            dataset, profile, VoterParams(), variants=("FULL", "NO_F1_WEIGHT")
        )
        full, allones = rows
        assert allones.recall < full.recall
        assert full.recall - allones.recall >= 0.05

    def test_no_high_conf_reduces_map(self, tmp_path):
        # MODEL_B contributes true positives that only rule I can keep: very
        # high confidence, lower class F1, F1 gap above the margin.
        noise_a = DetectorNoiseSpec(
            model_id="MODEL_A", recall_prob=0.7, conf_range=(0.65, 0.9),
            jitter_sigma=1.0, fp_rate=0.0, seed=7,
        )
        noise_b = DetectorNoiseSpec(
            model_id="MODEL_B", recall_prob=0.5, conf_range=(0.96, 0.99),
            jitter_sigma=1.0, fp_rate=0.0, seed=8,
        )
        dataset, profile = build_paired_dataset(
            tmp_path / "rule1", noise_a, noise_b,
            n_images=40, f1_a=0.9, f1_b=0.6, seed=13,
        )
        rows = run_ablation(
            dataset, profile, VoterParams(), variants=("FULL", "NO_HIGH_CONF")
        )
        full, no_high = rows
        assert full.map50 > no_high.map50
        assert full.map50 >= no_high.map50

    def test_always_tie_widens_margin(self, noisy_dataset):
        _, profile = noisy_dataset
        params, _ = apply_ablation("ALWAYS_TIE", VoterParams(), profile)
        assert params.f1_margin == 1.0

    def test_unknown_variant(self, noisy_dataset):
        _, profile = noisy_dataset
        with pytest.raises(ValueError):
            apply_ablation("NOPE", VoterParams(), profile)


class TestReports:
    def test_format_table_three_decimals(self):
        table = format_table(["a", "b"], [[0.123456, 1], ["x", 0.5]])
        assert "0.123" in table and "0.500" in table

    def test_format_csv(self):
        csv = format_csv(["a", "b"], [[1.23456, "x"]])
        assert csv == "a,b\n1.235,x\n"

    def test_sweep_rows_table_headers(self, noisy_dataset):
        dataset, profile = noisy_dataset
        rows = run_sweep(dataset, profile, VoterParams(), SweepSpec(axes={"gamma": [1, 2]}))
        headers, table = sweep_rows_table(rows)
        assert headers == ["gamma", "condition", "map50", "map50_95", "precision", "recall"]
        assert len(table) == 2

    def test_trace_count_totals(self, noiseless_dataset):
        dataset, profile = noiseless_dataset
        results = [
            fuse_frame(rec, profile, VoterParams()) for rec in dataset.records()
        ]
        totals = trace_count_totals(results)
        n_inputs = sum(
            len(rec.detections_for(m))
            for rec in dataset.records()
            for m in ("MODEL_A", "MODEL_B")
        )
        accounted = (
            2 * totals["AGREEMENT_FUSED"]
            + totals["SOLO_STRONG"]
            + totals["SOLO_ADVANTAGE"]
            + totals["SOLO_NEAR_TIE"]
            + totals["DROPPED_UNMATCHED"]
            + totals["DROPPED_PREFILTER"]
            + totals["DROPPED_NMS"]
        )
        assert accounted == n_inputs
