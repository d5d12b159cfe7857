import json

import numpy as np
import pytest

from fairlift.metrics import (
    AUC_GRID_MM,
    EvalReport,
    evaluate_poses,
    mpjpe,
    pa_mpjpe,
    pck_auc,
)

from test_linalg import random_rotation


class TestMpjpe:
    def test_zero_at_match(self, rng):
        pose = rng.normal(size=(17, 3))
        assert mpjpe(pose, pose) == 0.0

    def test_constant_offset_cancels(self, rng):
        pose = rng.normal(size=(17, 3))
        shifted = pose + np.array([10.0, -4.0, 2.5])
        assert mpjpe(shifted, pose) < 1e-12

    def test_single_joint_displacement(self, rng):
        gt = rng.normal(size=(17, 3))
        pred = gt.copy()
        pred[5] += np.array([17.0, 0.0, 0.0])  # root untouched
        assert mpjpe(pred, gt, root=0) == pytest.approx(1.0)

    def test_invariant_under_common_rigid_motion(self, rng):
        pred = rng.normal(size=(17, 3))
        gt = rng.normal(size=(17, 3))
        rot = random_rotation(rng)
        shift = rng.normal(size=3)
        moved_pred = pred @ rot.T + shift
        moved_gt = gt @ rot.T + shift
        assert mpjpe(moved_pred, moved_gt) == pytest.approx(mpjpe(pred, gt), rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mpjpe(np.zeros((5, 3)), np.zeros((4, 3)))


class TestPaMpjpe:
    def test_rigid_transform_scores_zero(self, rng):
        gt = rng.normal(size=(17, 3)) * 100.0
        rot = random_rotation(rng)
        pred = gt @ rot.T + np.array([50.0, -20.0, 10.0])
        assert pa_mpjpe(pred, gt) < 1e-9

    def test_scale_absorbed(self, rng):
        gt = rng.normal(size=(17, 3)) * 100.0
        assert pa_mpjpe(0.5 * gt, gt) < 1e-9

    def test_scale_not_absorbed_when_rigid_only(self, rng):
        gt = rng.normal(size=(17, 3)) * 100.0
        assert pa_mpjpe(0.5 * gt, gt, with_scale=False) > 1.0

    def test_never_worse_than_root_alignment(self, rng):
        for _ in range(50):
            gt = rng.normal(size=(17, 3)) * 100.0
            pred = gt + rng.normal(size=(17, 3)) * 20.0
            pred -= pred[0]
            gt0 = gt - gt[0]
            assert pa_mpjpe(pred, gt0) <= mpjpe(pred, gt0) + 1e-9

    def test_invariant_under_similarity_of_pred(self, rng):
        gt = rng.normal(size=(17, 3)) * 100.0
        pred = gt + rng.normal(size=(17, 3)) * 10.0
        base = pa_mpjpe(pred, gt)
        rot = random_rotation(rng)
        warped = 3.0 * (pred @ rot.T) + np.array([1.0, 2.0, 3.0])
        assert pa_mpjpe(warped, gt) == pytest.approx(base, rel=1e-9)


class TestPckAuc:
    def test_perfect_predictions(self, rng):
        gt = rng.normal(size=(4, 17, 3)) * 100.0
        pck, auc = pck_auc(gt, gt)
        assert pck == 1.0
        assert auc == 1.0

    def test_everything_beyond_threshold(self, rng):
        gt = rng.normal(size=(2, 17, 3)) * 10.0
        pred = gt.copy()
        pred[:, 1:, 0] += 200.0  # non-root joints 200 mm off
        pck, _ = pck_auc(pred, gt)
        assert pck == 0.0

    def test_hand_case_100mm(self, rng):
        # non-root joints exactly 100 mm off: correct at 150, and at the
        # 11 grid thresholds >= 100 out of 31; integer coordinates keep
        # the displaced distances exactly 100.0
        gt = rng.integers(-50, 50, size=(3, 17, 3)).astype(float)
        pred = gt.copy()
        pred[:, 1:, 2] += 100.0
        pck, auc = pck_auc(pred, gt)
        assert pck == 1.0
        assert auc == pytest.approx(11.0 / 31.0)

    def test_monotone_in_threshold(self, rng):
        gt = rng.normal(size=(5, 17, 3)) * 100.0
        pred = gt + rng.normal(size=(5, 17, 3)) * 60.0
        values = [pck_auc(pred, gt, threshold=t)[0] for t in (50.0, 100.0, 150.0, 250.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            pck_auc(np.zeros((0, 17, 3)), np.zeros((0, 17, 3)))

    def test_grid_has_31_points(self):
        assert len(AUC_GRID_MM) == 31
        assert AUC_GRID_MM[0] == 0.0
        assert AUC_GRID_MM[-1] == 150.0


class TestEvalReport:
    def test_pa_bounded_by_mpjpe_on_random_sets(self, rng):
        gt = rng.normal(size=(20, 17, 3)) * 100.0
        pred = gt + rng.normal(size=(20, 17, 3)) * 15.0
        pred = pred - pred[:, 0:1, :]
        gt = gt - gt[:, 0:1, :]
        report = evaluate_poses(pred, gt)
        assert report.pa_mpjpe_mm <= report.mpjpe_mm + 1e-9
        assert 0.0 <= report.pck150 <= 1.0
        assert 0.0 <= report.auc <= 1.0
        assert len(report.per_sample_mpjpe) == 20

    def test_json_round_trip(self, tmp_path, rng):
        gt = rng.normal(size=(3, 17, 3)) * 100.0
        report = evaluate_poses(gt, gt)
        path = tmp_path / "report.json"
        report.write_json(path)
        data = json.loads(path.read_text())
        assert data["mpjpe_mm"] == 0.0
        assert data["pck150"] == 1.0
        assert "pa_mpjpe_mm" in data

    def test_protocol_one_omits_pa(self, rng):
        gt = rng.normal(size=(3, 17, 3)) * 100.0
        report = evaluate_poses(gt, gt, with_pa=False)
        data = report.to_dict()
        assert "pa_mpjpe_mm" not in data
        assert report.pa_mpjpe_mm is None

    def test_csv_append(self, tmp_path, rng):
        gt = rng.normal(size=(3, 17, 3)) * 100.0
        report = evaluate_poses(gt, gt)
        path = tmp_path / "agg.csv"
        report.append_csv_row(path, label="run1")
        report.append_csv_row(path, label="run2")
        lines = path.read_text().splitlines()
        assert lines[0] == "label,mpjpe_mm,pa_mpjpe_mm,pck150,auc"
        assert len(lines) == 3
        assert lines[1].startswith("run1,")
