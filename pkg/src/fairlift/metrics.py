"""Pose evaluation protocols.

Root-aligned mean per-joint position error, its Procrustes-aligned
variant (optimal similarity alignment of the prediction before
measuring), and thresholded keypoint correctness (fraction of non-root
joints within 150 mm, plus the mean of that fraction over a threshold
grid).  All distances are in millimeters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import kabsch_align

PCK_THRESHOLD_MM = 150.0
AUC_GRID_MM = tuple(float(t) for t in range(0, 151, 5))  # 31 thresholds


def _pose_pair(pred, gt):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"pred shape {p.shape} does not match gt shape {g.shape}")
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"poses must be N x 3, got {p.shape}")
    return p, g


def mpjpe(pred, gt, root: int = 0) -> float:
    """Mean joint distance after aligning both poses at the root joint."""
    p, g = _pose_pair(pred, gt)
    if not 0 <= root < p.shape[0]:
        raise ValueError(f"root index {root} out of range for {p.shape[0]} joints")
    p_aligned = p - p[root]
    g_aligned = g - g[root]
    return float(np.linalg.norm(p_aligned - g_aligned, axis=1).mean())


def pa_mpjpe(pred, gt, with_scale: bool = True) -> float:
    """Mean joint distance after optimal similarity alignment of ``pred``.

    ``with_scale`` follows common practice and lets the alignment absorb
    a global scale; disable it for a strictly rigid alignment.
    """
    p, g = _pose_pair(pred, gt)
    rotation, translation, scale = kabsch_align(p, g, with_scale=with_scale)
    aligned = scale * (p @ rotation.T) + translation
    return float(np.linalg.norm(aligned - g, axis=1).mean())


def _stacked_set(pred_set, gt_set):
    preds = np.asarray(pred_set, dtype=np.float64)
    gts = np.asarray(gt_set, dtype=np.float64)
    if preds.ndim == 2:
        preds = preds[None]
        gts = gts[None]
    if preds.shape != gts.shape or preds.ndim != 3 or preds.shape[-1] != 3:
        raise ValueError(
            f"pose sets must share an (n, N, 3) shape, got {preds.shape} vs {gts.shape}"
        )
    if preds.shape[0] == 0:
        raise ValueError("pose set is empty")
    return preds, gts


def pck_auc(
    pred_set,
    gt_set,
    root: int = 0,
    threshold: float = PCK_THRESHOLD_MM,
    auc_grid=AUC_GRID_MM,
) -> tuple[float, float]:
    """Fraction of correct keypoints and its mean over a threshold grid.

    Poses are root-aligned first; the root joint itself is excluded from
    the counts (it is correct by construction).  A joint at distance
    exactly equal to a threshold counts as correct.
    """
    preds, gts = _stacked_set(pred_set, gt_set)
    n_joints = preds.shape[1]
    if not 0 <= root < n_joints:
        raise ValueError(f"root index {root} out of range for {n_joints} joints")
    pa = preds - preds[:, root : root + 1, :]
    ga = gts - gts[:, root : root + 1, :]
    dists = np.linalg.norm(pa - ga, axis=-1)
    dists = np.delete(dists, root, axis=1)
    pck = float((dists <= threshold).mean())
    auc = float(np.mean([(dists <= t).mean() for t in auc_grid]))
    return pck, auc


@dataclass
class EvalReport:
    """Aggregate metrics over a pose set, with per-sample breakdowns."""

    mpjpe_mm: float
    pa_mpjpe_mm: float | None
    pck150: float
    auc: float
    per_sample_mpjpe: list[float] = field(default_factory=list)
    per_sample_pa_mpjpe: list[float] | None = None
    auc_grid: tuple[float, ...] = AUC_GRID_MM

    def to_dict(self) -> dict:
        out = {
            "mpjpe_mm": self.mpjpe_mm,
            "pck150": self.pck150,
            "auc": self.auc,
            "auc_grid_mm": list(self.auc_grid),
            "per_sample_mpjpe": self.per_sample_mpjpe,
        }
        if self.pa_mpjpe_mm is not None:
            out["pa_mpjpe_mm"] = self.pa_mpjpe_mm
            out["per_sample_pa_mpjpe"] = self.per_sample_pa_mpjpe
        return out

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def append_csv_row(self, path, label: str = "") -> None:
        """Append one aggregate row (for sweep-style accumulation)."""
        path = Path(path)
        header = "label,mpjpe_mm,pa_mpjpe_mm,pck150,auc\n"
        pa = "" if self.pa_mpjpe_mm is None else repr(self.pa_mpjpe_mm)
        line = f"{label},{self.mpjpe_mm!r},{pa},{self.pck150!r},{self.auc!r}\n"
        new_file = not path.exists()
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            if new_file:
                fh.write(header)
            fh.write(line)


def evaluate_poses(
    pred_set,
    gt_set,
    root: int = 0,
    with_pa: bool = True,
    pa_scale: bool = True,
    threshold: float = PCK_THRESHOLD_MM,
    auc_grid=AUC_GRID_MM,
) -> EvalReport:
    """Build a full report over a set of predicted/ground-truth poses."""
    preds, gts = _stacked_set(pred_set, gt_set)
    per_mpjpe = [mpjpe(preds[i], gts[i], root) for i in range(len(preds))]
    per_pa = None
    pa_mean = None
    if with_pa:
        per_pa = [pa_mpjpe(preds[i], gts[i], with_scale=pa_scale) for i in range(len(preds))]
        pa_mean = float(np.mean(per_pa))
    pck, auc = pck_auc(preds, gts, root, threshold, auc_grid)
    return EvalReport(
        mpjpe_mm=float(np.mean(per_mpjpe)),
        pa_mpjpe_mm=pa_mean,
        pck150=pck,
        auc=auc,
        per_sample_mpjpe=per_mpjpe,
        per_sample_pa_mpjpe=per_pa,
        auc_grid=tuple(float(t) for t in auc_grid),
    )
