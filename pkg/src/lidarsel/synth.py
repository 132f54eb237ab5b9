"""Synthetic scenes with class-characteristic object sizes, a mock model,
and naive reference implementations of the scoring formulas.

Scenes are a flat ground plane at z = 0, box-shaped object blobs whose
bounding-box dimension sum follows a per-class size distribution, and a
sprinkle of scattered noise points. The generator also returns the
planted point-to-unit assignment (-2 ground, -1 noise, 0..K-1 objects) so
closed-loop tests can verify recovery end to end.

The mock model stands in for a segmentation network: predictions are
sharpened class distributions with a configurable flip rate, features are
per-class prototype vectors plus Gaussian noise. Everything is a pure
function of (seed, iteration, frame), so reruns are bit-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset_io
from .dataset_io import DatasetIndex, PointCloudFrame
from .errors import ConfigError
from .rng import generator

GROUND_CLASS = 1
NOISE_CLASS = 0

# Minimum xy gap between object bounding boxes; at least twice the default
# cluster-selection epsilon so planted objects are recoverable.
MIN_OBJECT_GAP = 1.5


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    size_mean: float
    size_sd: float
    points_per_meter: float
    frequency: float


@dataclass(frozen=True)
class SceneSpec:
    n_frames: int
    classes: tuple[ClassSpec, ...]
    ground_extent: float = 30.0
    ground_points: int = 6000
    objects_per_frame: int = 15
    noise_rate: float = 0.002
    seed: int = 0

    def __post_init__(self):
        total = sum(c.frequency for c in self.classes)
        if self.classes and abs(total - 1.0) > 1e-6:
            raise ConfigError(f"class frequencies must sum to 1, got {total}")
        for c in self.classes:
            if c.size_mean <= 0:
                raise ConfigError(f"class {c.class_id}: size_mean must be > 0")
            if c.class_id <= GROUND_CLASS:
                raise ConfigError(
                    f"class ids must be > {GROUND_CLASS} "
                    f"({NOISE_CLASS} = noise, {GROUND_CLASS} = ground)"
                )

    @property
    def n_classes(self) -> int:
        top = max((c.class_id for c in self.classes), default=GROUND_CLASS)
        return top + 1

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        try:
            classes = tuple(ClassSpec(**c) for c in doc.get("classes", []))
            kwargs = {k: v for k, v in doc.items() if k != "classes"}
            return cls(classes=classes, **kwargs)
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"bad scene spec: {exc}") from exc

    def to_json(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "classes": [vars(c) for c in self.classes],
            "ground_extent": self.ground_extent,
            "ground_points": self.ground_points,
            "objects_per_frame": self.objects_per_frame,
            "noise_rate": self.noise_rate,
            "seed": self.seed,
        }


def default_scene_spec(n_frames: int = 200, seed: int = 0) -> SceneSpec:
    """Ground plus five object classes: six labeled classes whose dataset
    point fractions span roughly 0.5% (small rare objects) to 50%
    (ground), with object size characteristic of class."""
    return SceneSpec(
        n_frames=n_frames,
        classes=(
            ClassSpec(2, 1.8, 0.15, 30.0, 0.07),
            ClassSpec(3, 3.0, 0.20, 20.0, 0.26),
            ClassSpec(4, 6.0, 0.50, 25.0, 0.26),
            ClassSpec(5, 11.0, 0.90, 30.0, 0.26),
            ClassSpec(6, 18.0, 1.50, 50.0, 0.15),
        ),
        ground_points=4500,
        seed=seed,
    )


def generate_scene(
    spec: SceneSpec, rng: np.random.Generator, frame_id: str = "000000"
) -> tuple[PointCloudFrame, np.ndarray, np.ndarray]:
    """One frame: returns (frame, semantic labels, planted assignment)."""
    extent = spec.ground_extent
    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    planted: list[np.ndarray] = []

    ground_xy = rng.uniform(-extent, extent, size=(spec.ground_points, 2))
    ground = np.concatenate(
        [ground_xy, np.zeros((spec.ground_points, 1))], axis=1
    )
    blocks.append(ground)
    labels.append(np.full(spec.ground_points, GROUND_CLASS, dtype=np.uint16))
    planted.append(np.full(spec.ground_points, -2, dtype=np.int32))

    freqs = np.array([c.frequency for c in spec.classes], dtype=np.float64)
    placed: list[tuple[float, float, float, float]] = []  # cx, cy, half L, half W
    n_obj_points = 0
    for k in range(spec.objects_per_frame):
        cls = spec.classes[int(rng.choice(len(spec.classes), p=freqs))]
        size = float(
            np.clip(rng.normal(cls.size_mean, cls.size_sd), 0.5, 24.5)
        )
        shares = rng.uniform(0.5, 1.0, size=3)
        dims = np.sort(size * shares / shares.sum())
        width, length, height = dims  # tallest dimension points up

        lo = -extent + length / 2
        hi = extent - length / 2
        if hi <= lo:
            raise ConfigError(
                f"object of size {size:.1f} m does not fit in extent {extent} m"
            )
        for _ in range(200):
            cx = float(rng.uniform(lo, hi))
            cy = float(rng.uniform(-extent + width / 2, extent - width / 2))
            ok = True
            for px, py, phl, phw in placed:
                gap_x = abs(cx - px) - (length / 2 + phl)
                gap_y = abs(cy - py) - (width / 2 + phw)
                if max(gap_x, gap_y) < MIN_OBJECT_GAP:
                    ok = False
                    break
            if ok:
                break
        else:
            raise ConfigError(
                f"infeasible packing: cannot place object {k} "
                f"({spec.objects_per_frame} objects in {2 * extent:.0f} m extent)"
            )
        placed.append((cx, cy, length / 2, width / 2))

        n_pts = max(8, int(round(cls.points_per_meter * size)))
        pts = rng.uniform(0.0, 1.0, size=(n_pts, 3))
        pts[:, 0] = cx + (pts[:, 0] - 0.5) * length
        pts[:, 1] = cy + (pts[:, 1] - 0.5) * width
        pts[:, 2] = pts[:, 2] * height
        blocks.append(pts)
        labels.append(np.full(n_pts, cls.class_id, dtype=np.uint16))
        planted.append(np.full(n_pts, k, dtype=np.int32))
        n_obj_points += n_pts

    n_noise = int(round(spec.noise_rate * (spec.ground_points + n_obj_points)))
    if n_noise > 0:
        # sparse clutter above the ground-strip band; kept rare so object
        # bounding boxes stay class-characteristic
        noise = rng.uniform(0.0, 1.0, size=(n_noise, 3))
        noise[:, 0] = (noise[:, 0] - 0.5) * 2 * extent
        noise[:, 1] = (noise[:, 1] - 0.5) * 2 * extent
        noise[:, 2] = 0.5 + noise[:, 2] * 5.5
        blocks.append(noise)
        labels.append(np.full(n_noise, NOISE_CLASS, dtype=np.uint16))
        planted.append(np.full(n_noise, -1, dtype=np.int32))

    xyz = np.concatenate(blocks, axis=0)
    intensity = rng.random(xyz.shape[0])
    points = np.concatenate([xyz, intensity[:, None]], axis=1).astype(np.float32)
    return (
        PointCloudFrame(frame_id, points),
        np.concatenate(labels),
        np.concatenate(planted),
    )


def generate_dataset(spec: SceneSpec, out_dir) -> DatasetIndex:
    """Emit the standard dataset layout (manifest + .bin/.label sidecars).

    The planted assignment is stored next to each frame as
    ``<frame>.plant`` (same int32 format as the cluster-id sidecar).
    Prediction/feature paths are pre-declared in the manifest; the files
    appear once a model (real or mock) writes them.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(spec.n_frames):
        frame_id = f"{i:06d}"
        rng = generator(spec.seed, "scene", i)
        frame, labels, planted = generate_scene(spec, rng, frame_id)
        dataset_io.write_frame(frames_dir / f"{frame_id}.bin", frame.points)
        dataset_io.write_labels(frames_dir / f"{frame_id}.label", labels)
        dataset_io.write_cluster_ids(frames_dir / f"{frame_id}.plant", planted)
        entries.append(
            {
                "frame_id": frame_id,
                "points_path": f"frames/{frame_id}.bin",
                "labels_path": f"frames/{frame_id}.label",
                "preds_path": f"frames/{frame_id}.pred",
                "feats_path": f"frames/{frame_id}.feat",
            }
        )
    manifest = out_dir / "manifest.json"
    dataset_io.write_manifest(manifest, entries)
    return dataset_io.scan_dataset(manifest)


# --- mock model --------------------------------------------------------------

def default_prototypes(n_classes: int, dim: int, radius: float = 5.0) -> np.ndarray:
    protos = np.zeros((n_classes, dim), dtype=np.float64)
    for c in range(n_classes):
        angle = 2.0 * math.pi * c / n_classes
        protos[c, 0] = radius * math.cos(angle)
        protos[c, 1] = radius * math.sin(angle)
    return protos


@dataclass(frozen=True)
class MockModelParams:
    n_classes: int
    label_flip_rate: float = 0.0
    # scalar, or a {class_id: value} map (keys may be JSON strings) with
    # an optional "default" entry
    concentration: float | dict = 8.0
    feature_dim: int = 8
    prototypes: np.ndarray | None = None
    feature_noise_sd: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.label_flip_rate <= 1.0:
            raise ConfigError("label_flip_rate must be in [0, 1]")
        if self.feature_dim < 2:
            raise ConfigError("feature_dim must be >= 2")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")

    def concentration_for(self, class_ids: np.ndarray) -> np.ndarray:
        if isinstance(self.concentration, dict):
            default = self.concentration.get("default", 8.0)
            table = np.full(self.n_classes, float(default))
            for cls, value in self.concentration.items():
                if cls == "default":
                    continue
                table[int(cls)] = float(value)
            return table[class_ids]
        return np.full(class_ids.shape[0], float(self.concentration))

    def prototype_table(self) -> np.ndarray:
        if self.prototypes is not None:
            protos = np.asarray(self.prototypes, dtype=np.float64)
            if protos.shape != (self.n_classes, self.feature_dim):
                raise ConfigError("prototype table shape mismatch")
            return protos
        return default_prototypes(self.n_classes, self.feature_dim)


def mock_predict(
    labels: np.ndarray, params: MockModelParams, rng: np.random.Generator
) -> np.ndarray:
    """Class distributions peaked at the (possibly flipped) true class.

    Each row is (g + kappa * onehot(target)) / (1 + kappa) with g a flat
    Dirichlet draw; kappa comes from the true class, so entropy can be
    raised selectively per class. For kappa >= 1 the target is guaranteed
    the argmax.
    """
    n = labels.shape[0]
    c = params.n_classes
    g = rng.gamma(1.0, size=(n, c))
    g /= g.sum(axis=1, keepdims=True)

    targets = labels.astype(np.int64)
    if params.label_flip_rate > 0.0:
        flip = rng.random(n) < params.label_flip_rate
        other = rng.integers(0, c - 1, size=n)
        other = other + (other >= targets)
        targets = np.where(flip, other, targets)

    kappa = params.concentration_for(labels.astype(np.int64))
    g[np.arange(n), targets] += kappa
    g /= (1.0 + kappa)[:, None]
    return g.astype(np.float32)


def mock_features(
    labels: np.ndarray, params: MockModelParams, rng: np.random.Generator
) -> np.ndarray:
    protos = params.prototype_table()
    feats = protos[labels.astype(np.int64)]
    if params.feature_noise_sd > 0.0:
        feats = feats + rng.normal(
            0.0, params.feature_noise_sd, size=feats.shape
        )
    return feats.astype(np.float32)


class MockModel:
    """Model-interface stand-in: fresh deterministic outputs per iteration."""

    def __init__(self, params: MockModelParams, labels_by_frame: dict, seed: int):
        self.params = params
        self.labels_by_frame = labels_by_frame
        self.seed = seed
        self.iteration = 0

    def refresh(self, iteration: int, labeled=None) -> None:
        self.iteration = iteration

    def predictions(self, frame_id: str) -> np.ndarray:
        rng = generator(self.seed, "pred", self.iteration, frame_id)
        return mock_predict(self.labels_by_frame[frame_id], self.params, rng)

    def features(self, frame_id: str) -> np.ndarray:
        rng = generator(self.seed, "feat", self.iteration, frame_id)
        return mock_features(self.labels_by_frame[frame_id], self.params, rng)


# --- naive reference implementations (test oracles) --------------------------

def oracle_api(n_clusters: int, n_points: int) -> float:
    return n_clusters / math.log(n_points)


def oracle_entropy(probs) -> float:
    rows = [list(map(float, row)) for row in probs]
    total = 0.0
    for row in rows:
        for p in row:
            if p > 0.0:
                total += p * math.log(p)
    return -total / len(rows)


def oracle_mean_feature(rows) -> list[float]:
    rows = [list(map(float, row)) for row in rows]
    dim = len(rows[0])
    out = []
    for d in range(dim):
        s = 0.0
        for row in rows:
            s += row[d]
        out.append(s / len(rows))
    return out


def oracle_diversity(feature, labeled_means) -> float:
    f = list(map(float, feature))
    total = 0.0
    for other in labeled_means:
        sq = 0.0
        for a, b in zip(other, f):
            sq += (float(a) - b) ** 2
        total += math.sqrt(sq)
    return total


def oracle_rank(uids, entropies, diversities) -> list:
    """Fused ordering computed from explicit pairwise comparisons."""
    n = len(uids)

    def rank_of(values, j):
        r = 1
        for i in range(n):
            if values[i] > values[j]:
                r += 1
            elif values[i] == values[j] and uids[i] < uids[j]:
                r += 1
        return r

    fused = []
    for j in range(n):
        fused.append(1.0 / rank_of(entropies, j) + 1.0 / rank_of(diversities, j))
    ordering: list = [None] * n
    for j in range(n):
        pos = 0
        for i in range(n):
            if fused[i] > fused[j]:
                pos += 1
            elif fused[i] == fused[j] and uids[i] < uids[j]:
                pos += 1
        ordering[pos] = uids[j]
    return ordering
