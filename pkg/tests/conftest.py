import time
from types import SimpleNamespace

import pytest

from lidarsel import dataset_io
from lidarsel.cluster import HdbscanParams
from lidarsel.ground import GroundParams
from lidarsel.pipeline import preprocess_dataset
from lidarsel.synth import default_scene_spec, generate_dataset


def load_all_labels(index):
    return {
        e.frame_id: dataset_io.load_labels(e.labels_path, e.n_points)
        for e in index.frames
    }


def load_all_planted(index):
    return {
        e.frame_id: dataset_io.load_cluster_ids(
            e.points_path.with_suffix(".plant"), e.n_points
        )
        for e in index.frames
    }


def build_sim(tmp_path_factory, name, n_frames, seed, jobs=1):
    start = time.monotonic()
    root = tmp_path_factory.mktemp(name)
    spec = default_scene_spec(n_frames=n_frames, seed=seed)
    index = generate_dataset(spec, root)
    records, table = preprocess_dataset(
        index, 3, GroundParams(), HdbscanParams(), seed=seed, jobs=jobs
    )
    return SimpleNamespace(
        root=root,
        spec=spec,
        index=index,
        records=records,
        table=table,
        labels=load_all_labels(index),
        planted=load_all_planted(index),
        build_seconds=time.monotonic() - start,
    )


@pytest.fixture(scope="session")
def small_sim(tmp_path_factory):
    """Six synthetic frames, preprocessed: cheap shared environment."""
    return build_sim(tmp_path_factory, "small_sim", n_frames=6, seed=11)


@pytest.fixture(scope="session")
def big_sim(tmp_path_factory):
    """200 synthetic frames for the protocol-level acceptance criteria."""
    return build_sim(tmp_path_factory, "big_sim", n_frames=200, seed=5, jobs=4)
