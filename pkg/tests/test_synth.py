import math

import numpy as np
import pytest

from lidarsel import dataset_io
from lidarsel.errors import ConfigError
from lidarsel.partition import cluster_size
from lidarsel.rng import generator
from lidarsel.synth import (
    ClassSpec,
    MockModelParams,
    SceneSpec,
    default_scene_spec,
    generate_dataset,
    generate_scene,
    mock_features,
    mock_predict,
    oracle_rank,
)

TWO_CLASSES = (
    ClassSpec(2, 2.0, 0.01, 30.0, 0.5),
    ClassSpec(3, 10.0, 0.01, 20.0, 0.5),
)


class TestGenerateScene:
    def test_zero_objects_ground_only(self):
        spec = SceneSpec(n_frames=1, classes=TWO_CLASSES, objects_per_frame=0,
                         ground_points=500, noise_rate=0.0)
        frame, labels, planted = generate_scene(spec, generator(0, "s"))
        assert frame.n_points == 500
        assert (labels == 1).all()
        assert (planted == -2).all()

    def test_planted_sizes_match_class_draws(self):
        spec = SceneSpec(n_frames=1, classes=TWO_CLASSES, objects_per_frame=10,
                         ground_points=200, noise_rate=0.0, ground_extent=40.0)
        frame, labels, planted = generate_scene(spec, generator(1, "s"))
        class_size = {2: 2.0, 3: 10.0}
        for k in range(10):
            pts = frame.xyz[planted == k]
            cls = int(labels[planted == k][0])
            assert abs(cluster_size(pts) - class_size[cls]) <= 1

    def test_seed_determinism_bytes(self, tmp_path):
        spec = SceneSpec(n_frames=2, classes=TWO_CLASSES, ground_points=300,
                         objects_per_frame=4, seed=9)
        generate_dataset(spec, tmp_path / "a")
        generate_dataset(spec, tmp_path / "b")
        for name in ("frames/000000.bin", "frames/000001.bin",
                     "frames/000000.label", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()

    def test_infeasible_packing(self):
        spec = SceneSpec(n_frames=1, classes=TWO_CLASSES, objects_per_frame=200,
                         ground_points=10, ground_extent=8.0)
        with pytest.raises(ConfigError, match="packing|fit"):
            generate_scene(spec, generator(2, "s"))

    def test_planted_clusters_recovered_end_to_end(self, tmp_path):
        from sklearn.metrics import adjusted_rand_score

        from lidarsel.cluster import HdbscanParams
        from lidarsel.ground import GroundParams
        from lidarsel.pipeline import preprocess_frame

        spec = default_scene_spec(n_frames=1, seed=21)
        frame, _, planted = generate_scene(spec, generator(spec.seed, "scene", 0))
        path = tmp_path / "f.bin"
        dataset_io.write_frame(path, frame.points)
        art = preprocess_frame(path, "f", GroundParams(), HdbscanParams(), seed=21)
        nonground = ~art.ground_mask
        ari = adjusted_rand_score(planted[nonground], art.cluster_ids[nonground])
        assert ari >= 0.9

    def test_dataset_layout_scans(self, tmp_path):
        spec = SceneSpec(n_frames=3, classes=TWO_CLASSES, ground_points=300,
                         objects_per_frame=3, seed=4)
        index = generate_dataset(spec, tmp_path)
        rescanned = dataset_io.scan_dataset(tmp_path / "manifest.json")
        assert rescanned.total_points == index.total_points
        assert [e.frame_id for e in rescanned.frames] == ["000000", "000001", "000002"]
        labels = dataset_io.load_labels(index.frames[0].labels_path,
                                        index.frames[0].n_points)
        assert labels.shape[0] == index.frames[0].n_points


class TestMockPredict:
    def test_high_concentration_is_one_hot(self):
        labels = np.array([0, 1, 2, 3], dtype=np.uint16)
        params = MockModelParams(n_classes=4, label_flip_rate=0.0,
                                 concentration=1e9)
        probs = mock_predict(labels, params, generator(5, "p"))
        assert (probs.argmax(axis=1) == labels).all()
        assert (probs.max(axis=1) > 0.999999).all()

    def test_flip_rate_controls_accuracy(self):
        rng = generator(6, "p")
        labels = rng.integers(0, 8, size=100_000).astype(np.uint16)
        params = MockModelParams(n_classes=8, label_flip_rate=0.5,
                                 concentration=9.0)
        probs = mock_predict(labels, params, generator(7, "p"))
        accuracy = (probs.argmax(axis=1) == labels).mean()
        assert abs(accuracy - 0.5) < 0.01

    def test_rows_sum_to_one(self):
        labels = np.zeros(500, dtype=np.uint16)
        params = MockModelParams(n_classes=5, concentration=2.0)
        probs = mock_predict(labels, params, generator(8, "p"))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_per_class_concentration_raises_entropy(self):
        labels = np.concatenate([np.zeros(2000), np.ones(2000)]).astype(np.uint16)
        params = MockModelParams(
            n_classes=4, concentration={"default": 9.0, "1": 0.2}
        )
        probs = mock_predict(labels, params, generator(9, "p"))
        ent = -(np.where(probs > 0, probs * np.log(probs), 0)).sum(axis=1)
        assert ent[labels == 1].mean() > ent[labels == 0].mean() + 0.5

    def test_param_validation(self):
        with pytest.raises(ConfigError):
            MockModelParams(n_classes=4, label_flip_rate=1.5)
        with pytest.raises(ConfigError):
            MockModelParams(n_classes=4, feature_dim=1)
        with pytest.raises(ConfigError):
            MockModelParams(n_classes=1)


class TestMockFeatures:
    def test_zero_noise_equals_prototype(self):
        protos = np.arange(12, dtype=float).reshape(4, 3)
        params = MockModelParams(n_classes=4, feature_dim=3, prototypes=protos,
                                 feature_noise_sd=0.0)
        labels = np.array([0, 3, 1], dtype=np.uint16)
        feats = mock_features(labels, params, generator(10, "f"))
        np.testing.assert_allclose(feats, protos[[0, 3, 1]])

    def test_prototype_distance_becomes_diversity(self):
        from lidarsel.measures import cluster_mean_feature, diversity

        protos = np.zeros((4, 2))
        protos[2] = [7.0, 0.0]  # distance 7 from class 3's prototype at origin
        params = MockModelParams(n_classes=4, feature_dim=2, prototypes=protos,
                                 feature_noise_sd=0.0)
        feats_a = mock_features(np.full(10, 2, np.uint16), params, generator(11, "f"))
        feats_b = mock_features(np.full(6, 3, np.uint16), params, generator(12, "f"))
        mean_a = cluster_mean_feature(feats_a)
        mean_b = cluster_mean_feature(feats_b)
        assert diversity(mean_b, mean_a[None, :]) == pytest.approx(7.0)

    def test_same_class_zero_noise_zero_diversity(self):
        from lidarsel.measures import cluster_mean_feature, diversity

        params = MockModelParams(n_classes=4, feature_dim=2,
                                 feature_noise_sd=0.0)
        a = mock_features(np.full(5, 1, np.uint16), params, generator(13, "f"))
        b = mock_features(np.full(9, 1, np.uint16), params, generator(14, "f"))
        assert diversity(cluster_mean_feature(b),
                         cluster_mean_feature(a)[None, :]) == 0.0


class TestOracles:
    def test_rank_oracle_worked_example(self):
        uids = [("f", "a"), ("f", "b"), ("f", "c")]
        order = oracle_rank(uids, [3.0, 2.0, 1.0], [1.0, 2.0, 3.0])
        assert order == [("f", "a"), ("f", "c"), ("f", "b")]

    def test_entropy_oracle_uniform(self):
        from lidarsel.synth import oracle_entropy

        assert math.isclose(oracle_entropy([[0.25] * 4] * 3), math.log(4),
                            abs_tol=1e-12)

    def test_frequencies_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            SceneSpec(n_frames=1, classes=(ClassSpec(2, 1.0, 0.1, 10.0, 0.4),))

    def test_default_spec_valid(self):
        spec = default_scene_spec(n_frames=1)
        assert sum(c.frequency for c in spec.classes) == pytest.approx(1.0)
        # ground + five object classes (ids 2..6), so class ids run 0..6
        assert spec.n_classes == 7
