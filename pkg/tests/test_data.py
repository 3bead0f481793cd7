import numpy as np
import pytest
import coca3d.config
import coca3d.data
from coca3d.data import describe_relation
from coca3d.evaluate import Box3D
from coca3d.evaluate import iou3d


def box(x=0.0, y=0.0, z=0.15, size=0.3):
    return Box3D(center=(x, y, z), size=(size, size, size))


@pytest.fixture
def config():
    return coca3d.config.Config(
        dataset=coca3d.config.Dataset(count=10, points_per_scene=128)
    )


def test_describe_relation():
    assert describe_relation(box(-1.0), box()) == "left of"
    assert describe_relation(box(1.0), box()) == "right of"
    assert describe_relation(box(y=1.0), box()) == "behind"
    assert describe_relation(box(y=-1.0), box()) == "in front of"
    assert describe_relation(box(0.4), box()) == "next to"
    assert describe_relation(box(z=0.45), box()) == "above"
    assert describe_relation(box(), box(z=0.45)) is None


def test_caption_object():
    red_box = {"color": "red", "shape": "box"}
    blue_sphere = {"color": "blue", "shape": "sphere"}
    assert coca3d.data.caption_object(red_box) == "a red box"
    assert (
        coca3d.data.caption_object(red_box, blue_sphere, "behind")
        == "the red box is behind the blue sphere"
    )


@pytest.mark.parametrize("relation", ["left of", "behind", "next to", "above"])
def test_place_relative(relation):
    rng = np.random.default_rng(0)
    anchor = box()
    for _ in range(20):
        size = rng.uniform(0.2, 0.4, size=3)
        center = coca3d.data.place_relative(relation, size, anchor, rng)
        placed = Box3D(center=tuple(center), size=tuple(size))
        assert describe_relation(placed, anchor) == relation


@pytest.mark.parametrize("shape", ["box", "sphere", "cylinder"])
def test_sample_surface(shape):
    b = Box3D(center=(1, 2, 0.2), size=(0.4, 0.4, 0.4))
    points = coca3d.data.sample_surface(shape, b, 500, np.random.default_rng(0))
    assert points.shape == (500, 3)
    assert np.all(points >= b.lower - 1e-9)
    assert np.all(points <= b.upper + 1e-9)
    if shape == "sphere":
        radius = np.linalg.norm(points - np.asarray(b.center), axis=1)
        np.testing.assert_allclose(radius, 0.2)


def test_generate_scene(config):
    for index in range(10):
        scene = coca3d.data.generate_scene(config.dataset, index, 0)
        assert scene.points.shape == (128, 7)
        assert 1 <= len(scene.objects) <= 4
        assert scene.caption == scene.objects[0].captions[0]
        assert [o.object_id for o in scene.objects] == list(range(len(scene.objects)))
        for o in scene.objects:
            assert len(o.captions) <= config.dataset.captions_per_object

        # The primary caption states the relation to object 1
        if len(scene.objects) > 1:
            relation = describe_relation(scene.objects[0].box, scene.objects[1].box)
            assert " is %s the " % relation in scene.caption


def test_generate_scene_is_deterministic(config):
    a = coca3d.data.generate_scene(config.dataset, 3, 0)
    b = coca3d.data.generate_scene(config.dataset, 3, 0)
    c = coca3d.data.generate_scene(config.dataset, 3, 1)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.objects == b.objects
    assert not np.array_equal(a.points, c.points)


def test_split_indices(config):
    splits = coca3d.data.split_indices(10, config.dataset, 0)
    assert [len(splits[s]) for s in ["train", "val", "test"]] == [8, 1, 1]
    assert sorted(sum(splits.values(), [])) == list(range(10))
    assert splits == coca3d.data.split_indices(10, config.dataset, 0)


def test_generate_dataset(tmp_path, config):
    directory = str(tmp_path / "dataset")
    dataset = coca3d.data.generate_dataset(config, directory)
    assert len(dataset) == 10
    assert len(dataset.pairs("train")) == 8

    loaded = coca3d.data.load_dataset(directory)
    for i in range(10):
        np.testing.assert_allclose(loaded.scene(i).points, dataset.scene(i).points)
        assert loaded.scene(i).objects == dataset.scene(i).objects
    assert len(loaded.ground_truth()) == sum(len(s.objects) for s in loaded.scenes())
    assert len(loaded.corpus("test")) >= 1

    prior = loaded.box_prior()
    for gt in loaded.ground_truth():
        assert iou3d(prior, gt.box) > 0

    with pytest.raises(ValueError):
        loaded.indices("holdout")


def test_generate_dataset_from_config_file(tmp_path):
    config_file = str(tmp_path / "config.yaml")
    coca3d.config.new(config_file)
    dataset = coca3d.data.generate_dataset(
        config_file, str(tmp_path / "dataset"), count=3, seed=7
    )
    assert len(dataset) == 3
    assert dataset.seed == 7


def test_generate_dataset_with_workers(tmp_path):
    config_file = str(tmp_path / "config.yaml")
    coca3d.config.new(config_file)
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    coca3d.data.generate_dataset(config_file, str(serial), count=4, seed=3)
    coca3d.data.generate_dataset(
        config_file,
        str(parallel),
        count=4,
        seed=3,
        cluster_method="local",
        cluster_max_workers=2,
    )
    filenames = sorted(p.name for p in serial.iterdir())
    assert filenames == sorted(p.name for p in parallel.iterdir())
    for name in filenames:
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()


def test_load_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        coca3d.data.load_dataset(str(tmp_path))
