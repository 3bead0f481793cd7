import os
import pydantic
import pytest
import yaml
import coca3d.config


def dict_approx_equal(a, b):
    def walk(a, b):
        if isinstance(a, dict):
            if a.keys() != b.keys():
                return False
            return all([walk(a[k], b[k]) for k in a.keys()])
        elif isinstance(a, list):
            if len(a) != len(b):
                return False
            return all([walk(a[i], b[i]) for i in range(len(a))])
        elif isinstance(a, float):
            return a == pytest.approx(b)
        else:
            return a == b

    return walk(a, b)


def test_default():
    config = coca3d.config.default()
    assert config.training.lambda_ == 1.0
    assert config.generation.mode == "greedy"
    assert config.cluster.method is None


def test_save(tmp_path):
    filename = os.path.join(tmp_path, "tmp-save.yaml")
    config = coca3d.config.default()
    coca3d.config.save(config, filename)
    with open(filename) as infile:
        d = yaml.safe_load(infile)
    assert d["training"]["lambda"] == 1.0
    assert "lambda_" not in d["training"]


def test_new(tmp_path):
    filename = os.path.join(tmp_path, "tmp.yaml")
    coca3d.config.new(filename)
    with open(filename) as infile:
        d = yaml.safe_load(infile)
    assert set(d["training"].keys()) == {"lambda", "learning_rate", "batch_size", "epochs"}

    filename = os.path.join(tmp_path, "tmp-full.yaml")
    coca3d.config.new(filename, full=True)
    with open(filename) as infile:
        d = yaml.safe_load(infile)
    assert "beta1" in d["training"]


def test_edit(tmp_path):
    filename = os.path.join(tmp_path, "tmp.yaml")
    coca3d.config.new(filename)
    config = coca3d.config.edit(
        filename,
        config_obj="""
        training:
            lambda: 0.5
    """,
    )
    config = coca3d.config.edit(
        filename,
        config_obj="""
        evaluation:
            iou_thresholds:
                - 0.25
    """,
    )
    assert config.training.lambda_ == 0.5
    assert config.evaluation.iou_thresholds == [0.25]
    assert coca3d.config.load(filename).training.lambda_ == 0.5

    out_filename = os.path.join(tmp_path, "tmp-out.yaml")
    config = coca3d.config.edit(filename, out_filename, {"seed": 3})
    assert coca3d.config.load(out_filename).seed == 3
    assert coca3d.config.load(filename).seed == 0


def test_load(tmp_path):
    filename = os.path.join(tmp_path, "tmp.yaml")
    coca3d.config.new(filename)
    config = coca3d.config.load(filename)

    assert dict_approx_equal(
        config.model_dump(), coca3d.config.default().model_dump()
    )

    with pytest.raises(FileNotFoundError):
        coca3d.config.load(os.path.join(tmp_path, "missing.yaml"))


def test_load_copies_config_objects():
    config = coca3d.config.default()
    copy = coca3d.config.load(config)
    copy.training.lambda_ = 2.0
    assert config.training.lambda_ == 1.0


def test_validation():
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"training": {"lambda": -1}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"training": {"batch_size": 1}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"dataset": {"min_objects": 3, "max_objects": 2}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"dataset": {"train_fraction": 0.9}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"vocabulary": {"max_size": 100}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"model": {"decoder": {"model_dim": 10, "heads": 4}}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"model": {"decoder": {"layer": 2}}})
    with pytest.raises(pydantic.ValidationError):
        coca3d.config.load({"generation": {"mode": "sample"}})

    # A single pair is fine when only the caption loss is active
    config = coca3d.config.load(
        {"training": {"batch_size": 1, "lambda": 0, "lambda_target": "contrastive"}}
    )
    assert config.training.batch_size == 1


def test_show():
    config = coca3d.config.Config(seed=5)
    assert yaml.safe_load(coca3d.config.show(config)) == {"seed": 5}
    assert "training" in yaml.safe_load(coca3d.config.show(config, full=True))
    assert "properties" in yaml.safe_load(
        coca3d.config.show(config, schema="/$defs/Training")
    )
    with pytest.raises(RuntimeError):
        coca3d.config.show(config, schema="/$defs/Missing")
    with pytest.raises(RuntimeError):
        coca3d.config.show(config, schema="Training")


def test_deepmerge():
    a = {"x": {"y": 1, "z": 2}, "w": None}
    b = {"x": {"y": 3}, "w": {"v": 1}}
    assert coca3d.config.deepmerge(a, b) == {"x": {"y": 3, "z": 2}, "w": {"v": 1}}
    assert a == {"x": {"y": 1, "z": 2}, "w": None}
