"""Bit-exact reading and writing of the on-disk dataset layout.

Formats (all little-endian):

* ``<frame>.bin``   -- N consecutive float32 quadruples (x, y, z, intensity).
* ``<frame>.label`` -- N uint32 words; the low 16 bits are the semantic
  class id, the high 16 bits (instance id) are discarded on load.
* ``<frame>.pred`` / ``<frame>.feat`` -- 8-byte header of two uint32
  (n_rows, n_cols) followed by n_rows * n_cols float32 values, row-major.
* ``manifest.json`` -- ``{"frames": [{"frame_id", "points_path",
  "labels_path"?, "preds_path"?, "feats_path"?}, ...]}``; relative paths
  resolve against the manifest's directory.

All loaders are pure functions over immutable inputs and are safe to call
concurrently across frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

POINT_RECORD_BYTES = 16  # 4 x float32
MATRIX_HEADER_BYTES = 8  # 2 x uint32

# Row sums of a prediction matrix may deviate from 1 by at most this much
# before the file is rejected; smaller deviations (float32 softmax
# round-off) are silently renormalized.
ROW_SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class PointCloudFrame:
    """One LiDAR scan: float32 (N, 4) array of x, y, z, intensity."""

    frame_id: str
    points: np.ndarray

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]


@dataclass(frozen=True)
class FrameEntry:
    frame_id: str
    points_path: Path
    labels_path: Path | None = None
    preds_path: Path | None = None
    feats_path: Path | None = None
    n_points: int = 0


@dataclass(frozen=True)
class DatasetIndex:
    frames: list[FrameEntry] = field(default_factory=list)
    total_points: int = 0

    def entry(self, frame_id: str) -> FrameEntry:
        for e in self.frames:
            if e.frame_id == frame_id:
                return e
        raise KeyError(frame_id)


def load_frame(path, frame_id: str | None = None) -> PointCloudFrame:
    """Decode a point file into a frame, validating coordinate finiteness."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise FormatError(
            f"{path}: size {len(raw)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    points = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    bad = ~np.isfinite(points[:, :3])
    if bad.any():
        idx = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise ValidationError(f"{path}: point {idx} has non-finite coordinates")
    return PointCloudFrame(frame_id or path.stem, points)


def write_frame(path, points: np.ndarray) -> None:
    points = np.ascontiguousarray(points, dtype="<f4")
    if points.ndim != 2 or points.shape[1] != 4:
        raise ValueError("expected an (N, 4) array of x, y, z, intensity")
    Path(path).write_bytes(points.tobytes())


def load_labels(path, n_points: int) -> np.ndarray:
    """Load per-point semantic labels (low 16 bits of each uint32 word)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) != 4 * n_points:
        raise FormatError(
            f"{path}: expected {n_points} uint32 words, got {len(raw) // 4}"
        )
    words = np.frombuffer(raw, dtype="<u4")
    return (words & 0xFFFF).astype(np.uint16)


def write_labels(path, semantic: np.ndarray, instance: np.ndarray | None = None) -> None:
    semantic = np.asarray(semantic)
    words = semantic.astype("<u4")
    if instance is not None:
        words = words | (np.asarray(instance).astype("<u4") << 16)
    Path(path).write_bytes(np.ascontiguousarray(words, dtype="<u4").tobytes())


def _load_matrix(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < MATRIX_HEADER_BYTES:
        raise FormatError(f"{path}: missing (n_rows, n_cols) header")
    n, c = (int(v) for v in np.frombuffer(raw[:MATRIX_HEADER_BYTES], dtype="<u4"))
    body = raw[MATRIX_HEADER_BYTES:]
    if len(body) != 4 * n * c:
        raise FormatError(
            f"{path}: header says {n}x{c} but payload holds {len(body) // 4} floats"
        )
    return np.frombuffer(body, dtype="<f4").reshape(n, c)


def _write_matrix(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    header = np.array(matrix.shape, dtype="<u4").tobytes()
    Path(path).write_bytes(header + matrix.tobytes())


def load_prediction_matrix(path) -> np.ndarray:
    """Load a per-point class-probability matrix, renormalizing rows.

    Rows whose sum deviates from 1 by more than ROW_SUM_TOLERANCE are a
    validation error; anything closer is divided by its own sum.
    """
    probs = _load_matrix(path)
    if probs.size == 0:
        return probs
    if not np.isfinite(probs).all() or (probs < 0).any():
        raise ValidationError(f"{path}: probabilities must be finite and >= 0")
    sums = probs.sum(axis=1, dtype=np.float64)
    off = np.abs(sums - 1.0)
    if (off > ROW_SUM_TOLERANCE).any():
        row = int(np.argmax(off > ROW_SUM_TOLERANCE))
        raise ValidationError(
            f"{path}: row {row} sums to {sums[row]:.6f}, outside "
            f"1 +/- {ROW_SUM_TOLERANCE}"
        )
    return (probs / sums[:, None]).astype(np.float32)


def write_prediction_matrix(path, probs: np.ndarray) -> None:
    _write_matrix(path, probs)


def load_feature_matrix(path) -> np.ndarray:
    """Load a per-point feature matrix; every entry must be finite."""
    feats = _load_matrix(path)
    bad = ~np.isfinite(feats)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        raise ValidationError(f"{path}: non-finite value at row {r}, col {c}")
    return feats


def write_feature_matrix(path, feats: np.ndarray) -> None:
    _write_matrix(path, feats)


def write_manifest(path, entries: list[dict]) -> None:
    Path(path).write_text(json.dumps({"frames": entries}, indent=1) + "\n")


def scan_dataset(manifest_path) -> DatasetIndex:
    """Read a manifest and compute per-frame and total point counts.

    Frame order is the manifest order; total_points is derived from the
    point-file sizes so it covers every point in the dataset.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: invalid JSON ({exc})") from exc
    raw_frames = doc.get("frames")
    if not isinstance(raw_frames, list):
        raise FormatError(f"{manifest_path}: missing 'frames' list")

    base = manifest_path.parent
    seen: set[str] = set()
    entries: list[FrameEntry] = []
    total = 0
    for rec in raw_frames:
        frame_id = rec.get("frame_id")
        points_path = rec.get("points_path")
        if not frame_id or not points_path:
            raise FormatError(
                f"{manifest_path}: frame entries need frame_id and points_path"
            )
        if frame_id in seen:
            raise FormatError(f"{manifest_path}: duplicate frame_id {frame_id!r}")
        seen.add(frame_id)

        def _resolve(key):
            value = rec.get(key)
            return (base / value) if value else None

        points = base / points_path
        if not points.is_file():
            raise FormatError(f"{manifest_path}: missing points file {points}")
        size = points.stat().st_size
        if size % POINT_RECORD_BYTES != 0:
            raise FormatError(
                f"{points}: size {size} is not a multiple of {POINT_RECORD_BYTES}"
            )
        n_points = size // POINT_RECORD_BYTES
        total += n_points
        entries.append(
            FrameEntry(
                frame_id=frame_id,
                points_path=points,
                labels_path=_resolve("labels_path"),
                preds_path=_resolve("preds_path"),
                feats_path=_resolve("feats_path"),
                n_points=n_points,
            )
        )
    return DatasetIndex(frames=entries, total_points=total)


def write_ground_mask(path, mask: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(mask, dtype=np.uint8).tobytes())


def load_ground_mask(path, n_points: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) != n_points:
        raise FormatError(f"{path}: expected {n_points} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).astype(bool)


def write_cluster_ids(path, ids: np.ndarray) -> None:
    Path(path).write_bytes(np.ascontiguousarray(ids, dtype="<i4").tobytes())


def load_cluster_ids(path, n_points: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) != 4 * n_points:
        raise FormatError(f"{path}: expected {n_points} int32 ids")
    return np.frombuffer(raw, dtype="<i4").copy()
