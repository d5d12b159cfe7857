"""Synthetic pose data, normalization, and CSV ingestion.

Poses are generated by forward kinematics from a canonical T-pose:
random per-joint rotations (bounded angles, applied down each kinematic
chain so bone lengths are preserved exactly), a random global rotation,
placement at a fixed camera distance, and a pinhole projection to 2D.
Gaussian noise, when requested, perturbs only the 2D observations.

Externally supplied poses use the same CSV layout written by
:func:`save_poses`: one sample per row, a ``sample_id`` column, then the
2D coordinates joint by joint, then the 3D coordinates.  Detections from
any off-the-shelf 2D keypoint model can be lifted by converting them to
this layout against the built-in 17-joint skeleton.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .graph import SkeletonGraph, default_human36m_skeleton

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8


class DatasetFormatError(ValueError):
    """A pose CSV file does not match the expected layout."""


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera used by the synthetic generator (units: mm, px).

    The default distance is close enough for real perspective
    foreshortening across the body; lifting from these projections is a
    genuinely nonlinear problem.
    """

    focal: float = 1150.0
    principal_point: tuple[float, float] = (500.0, 500.0)
    subject_distance: float = 2500.0

    def __post_init__(self):
        if self.focal <= 0.0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.subject_distance <= 0.0:
            raise ValueError(f"subject_distance must be positive, got {self.subject_distance}")


@dataclass(frozen=True)
class PoseSample:
    joints2d: np.ndarray  # (N, 2)
    joints3d: np.ndarray  # (N, 3), camera frame, mm


@dataclass
class Dataset:
    """A batch of paired 2D observations and 3D targets on one skeleton."""

    skeleton: SkeletonGraph
    x2d: np.ndarray  # (n, N, 2)
    y3d: np.ndarray  # (n, N, 3)

    def __post_init__(self):
        n_joints = self.skeleton.num_joints
        if self.x2d.ndim != 3 or self.x2d.shape[1:] != (n_joints, 2):
            raise ValueError(f"x2d shape {self.x2d.shape} does not match {n_joints} joints")
        if self.y3d.ndim != 3 or self.y3d.shape[1:] != (n_joints, 3):
            raise ValueError(f"y3d shape {self.y3d.shape} does not match {n_joints} joints")
        if len(self.x2d) != len(self.y3d):
            raise ValueError("x2d and y3d hold different sample counts")
        if not (np.isfinite(self.x2d).all() and np.isfinite(self.y3d).all()):
            raise ValueError("dataset contains non-finite entries")

    def __len__(self) -> int:
        return len(self.x2d)

    def sample(self, index: int) -> PoseSample:
        return PoseSample(self.x2d[index], self.y3d[index])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.skeleton, self.x2d[idx].copy(), self.y3d[idx].copy())


@dataclass
class NormStats:
    """Per-coordinate z-scoring statistics, computed on a training split.

    3D statistics refer to root-relative coordinates; the root row is
    identically zero there and its std is floored, which leaves it at
    zero through the round trip.
    """

    mean2d: np.ndarray  # (N, 2)
    std2d: np.ndarray
    mean3d: np.ndarray  # (N, 3)
    std3d: np.ndarray
    root_joint: int

    def to_dict(self) -> dict:
        return {
            "mean2d": self.mean2d.tolist(),
            "std2d": self.std2d.tolist(),
            "mean3d": self.mean3d.tolist(),
            "std3d": self.std3d.tolist(),
            "root_joint": self.root_joint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(
            mean2d=np.asarray(data["mean2d"], dtype=np.float64),
            std2d=np.asarray(data["std2d"], dtype=np.float64),
            mean3d=np.asarray(data["mean3d"], dtype=np.float64),
            std3d=np.asarray(data["std3d"], dtype=np.float64),
            root_joint=int(data["root_joint"]),
        )


# ---------------------------------------------------------------------------
# Canonical template and rotation helpers.

# T-pose joint positions in mm, root at the origin, y up, x lateral.
_H36M_TPOSE_MM = np.array(
    [
        [0.0, 0.0, 0.0],  # Hip
        [-130.0, 0.0, 0.0],  # RHip
        [-130.0, -450.0, 0.0],  # RKnee
        [-130.0, -900.0, 0.0],  # RAnkle
        [130.0, 0.0, 0.0],  # LHip
        [130.0, -450.0, 0.0],  # LKnee
        [130.0, -900.0, 0.0],  # LAnkle
        [0.0, 250.0, 0.0],  # Spine
        [0.0, 500.0, 0.0],  # Thorax
        [0.0, 615.0, 0.0],  # Neck
        [0.0, 730.0, 0.0],  # Head
        [180.0, 500.0, 0.0],  # LShoulder
        [460.0, 500.0, 0.0],  # LElbow
        [720.0, 500.0, 0.0],  # LWrist
        [-180.0, 500.0, 0.0],  # RShoulder
        [-460.0, 500.0, 0.0],  # RElbow
        [-720.0, 500.0, 0.0],  # RWrist
    ]
)

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def pose_template(skeleton: SkeletonGraph) -> np.ndarray:
    """Canonical rest pose (mm, root at the origin) for a skeleton.

    The built-in 17-joint skeleton gets an anatomical T-pose; any other
    topology gets a deterministic procedural layout with 300 mm bones
    fanned out along golden-angle directions.
    """
    default = default_human36m_skeleton()
    if (
        skeleton.num_joints == default.num_joints
        and skeleton.edges == default.edges
        and skeleton.root_joint == default.root_joint
    ):
        return _H36M_TPOSE_MM.copy()
    order, parents = skeleton.bfs_order()
    template = np.zeros((skeleton.num_joints, 3))
    for step, joint in enumerate(order[1:]):
        angle = _GOLDEN_ANGLE * (step + 1)
        direction = np.array(
            [math.cos(angle), math.sin(angle), 0.35 * math.sin(0.7 * (step + 1))]
        )
        direction /= np.linalg.norm(direction)
        template[joint] = template[parents[joint]] + 300.0 * direction
    return template


def _axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def _random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    vec = rng.normal(size=3)
    norm = np.linalg.norm(vec)
    while norm < 1e-12:
        vec = rng.normal(size=3)
        norm = np.linalg.norm(vec)
    return vec / norm


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    # uniform rotation from a normalized Gaussian quaternion
    quat = rng.normal(size=4)
    quat /= np.linalg.norm(quat)
    w, x, y, z = quat
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def project_points(points3d: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Pinhole projection of camera-frame points (requires z > 0)."""
    pts = np.asarray(points3d, dtype=np.float64)
    if (pts[..., 2] <= 0.0).any():
        raise ValueError("cannot project points at or behind the camera (z <= 0)")
    uv = camera.focal * pts[..., :2] / pts[..., 2:3]
    return uv + np.asarray(camera.principal_point)


def synth_generate(
    skeleton: SkeletonGraph,
    camera: CameraModel,
    n: int,
    noise_std_2d: float = 0.0,
    seed=0,
    angle_bound_deg: float = 60.0,
    max_retries: int = 20,
) -> Dataset:
    """Generate ``n`` paired samples by randomized forward kinematics.

    Deterministic per seed.  A pose that puts any joint behind the camera
    is resampled up to ``max_retries`` times before giving up.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if noise_std_2d < 0.0:
        raise ValueError(f"noise_std_2d must be >= 0, got {noise_std_2d}")
    rng = np.random.default_rng(seed)
    template = pose_template(skeleton)
    template = template - template[skeleton.root_joint]
    order, parents = skeleton.bfs_order()
    extent = float(np.linalg.norm(template, axis=1).max())
    if camera.subject_distance <= extent:
        raise ValueError(
            f"subject_distance {camera.subject_distance} must exceed the "
            f"skeleton extent {extent:.1f} mm"
        )
    bound = math.radians(angle_bound_deg)
    offset = np.array([0.0, 0.0, camera.subject_distance])

    num = skeleton.num_joints
    x2d = np.empty((n, num, 2))
    y3d = np.empty((n, num, 3))
    for i in range(n):
        for attempt in range(max_retries + 1):
            rotations = np.empty((num, 3, 3))
            positions = np.zeros((num, 3))
            rotations[skeleton.root_joint] = _random_rotation(rng)
            for joint in order[1:]:
                parent = parents[joint]
                delta = _axis_angle_matrix(
                    _random_unit_vector(rng), rng.uniform(-bound, bound)
                )
                rotations[joint] = rotations[parent] @ delta
                bone = template[joint] - template[parent]
                positions[joint] = positions[parent] + rotations[joint] @ bone
            cam3d = positions + offset
            if (cam3d[:, 2] > 0.0).all():
                break
        else:
            raise RuntimeError(
                f"sample {i}: joints behind the camera after {max_retries} retries; "
                "increase subject_distance"
            )
        y3d[i] = cam3d
        x2d[i] = project_points(cam3d, camera)
    if noise_std_2d > 0.0:
        x2d = x2d + rng.normal(0.0, noise_std_2d, size=x2d.shape)
    return Dataset(skeleton=skeleton, x2d=x2d, y3d=y3d)


# ---------------------------------------------------------------------------
# Normalization.


def normalize(dataset: Dataset, stats: NormStats | None = None) -> tuple[Dataset, NormStats]:
    """Root-center the 3D targets and z-score both modalities per coordinate.

    Statistics are computed from ``dataset`` when not supplied (i.e. on
    the training split) and reused verbatim otherwise.  Zero-variance
    coordinates get their std floored at ``STD_FLOOR`` with a warning.
    """
    root = dataset.skeleton.root_joint
    y_rel = dataset.y3d - dataset.y3d[:, root : root + 1, :]
    if stats is None:
        std2d = dataset.x2d.std(axis=0)
        std3d = y_rel.std(axis=0)
        floored = int((std2d < STD_FLOOR).sum() + (std3d < STD_FLOOR).sum())
        if floored:
            logger.warning(
                "normalize: %d coordinate(s) have (near-)zero variance; std floored at %g",
                floored,
                STD_FLOOR,
            )
        stats = NormStats(
            mean2d=dataset.x2d.mean(axis=0),
            std2d=np.maximum(std2d, STD_FLOOR),
            mean3d=y_rel.mean(axis=0),
            std3d=np.maximum(std3d, STD_FLOOR),
            root_joint=root,
        )
    x2d_norm = (dataset.x2d - stats.mean2d) / stats.std2d
    y3d_norm = (y_rel - stats.mean3d) / stats.std3d
    return Dataset(dataset.skeleton, x2d_norm, y3d_norm), stats


def denormalize(pred_norm: np.ndarray, stats: NormStats) -> np.ndarray:
    """Map normalized predictions back to root-relative millimeters."""
    return np.asarray(pred_norm, dtype=np.float64) * stats.std3d + stats.mean3d


# ---------------------------------------------------------------------------
# CSV persistence.


def _joint_labels(skeleton: SkeletonGraph) -> list[str]:
    if skeleton.joint_names is not None:
        return list(skeleton.joint_names)
    return [f"j{i:02d}" for i in range(skeleton.num_joints)]


def pose_csv_header(skeleton: SkeletonGraph) -> list[str]:
    labels = _joint_labels(skeleton)
    header = ["sample_id"]
    header += [f"{name}_2d_{axis}" for name in labels for axis in ("u", "v")]
    header += [f"{name}_3d_{axis}" for name in labels for axis in ("x", "y", "z")]
    return header


def save_poses(dataset: Dataset, path) -> None:
    """Write the dataset as CSV, one sample per row (see module docstring)."""
    header = pose_csv_header(dataset.skeleton)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(dataset)):
            row = [str(i)]
            row += [repr(float(v)) for v in dataset.x2d[i].ravel()]
            row += [repr(float(v)) for v in dataset.y3d[i].ravel()]
            writer.writerow(row)


def load_poses(path, skeleton: SkeletonGraph | None = None) -> Dataset:
    """Read a pose CSV written by :func:`save_poses`.

    The joint count is inferred from the header; it must match the given
    skeleton (the built-in 17-joint skeleton is assumed when none is
    supplied).  Malformed rows report their 1-based line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: line 1: file is empty") from None
        n_cols = len(header)
        if n_cols < 6 or (n_cols - 1) % 5 != 0:
            raise DatasetFormatError(
                f"{path}: line 1: expected 1 + 5*N columns, found {n_cols}"
            )
        n_joints = (n_cols - 1) // 5
        if skeleton is None:
            skeleton = default_human36m_skeleton()
        if n_joints != skeleton.num_joints:
            raise DatasetFormatError(
                f"{path}: line 1: file has {n_joints} joints but the skeleton "
                f"expects {skeleton.num_joints}"
            )
        rows_2d = []
        rows_3d = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise DatasetFormatError(
                    f"{path}: line {line_no}: expected {n_cols} fields, found {len(row)}"
                )
            try:
                values = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {line_no}: {exc}") from None
            if not np.isfinite(values).all():
                raise DatasetFormatError(f"{path}: line {line_no}: non-finite value")
            rows_2d.append(values[: 2 * n_joints].reshape(n_joints, 2))
            rows_3d.append(values[2 * n_joints :].reshape(n_joints, 3))
    if not rows_2d:
        raise DatasetFormatError(f"{path}: file holds no samples")
    return Dataset(skeleton, np.stack(rows_2d), np.stack(rows_3d))
