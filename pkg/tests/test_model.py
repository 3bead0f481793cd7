import numpy as np
import pytest
import coca3d.checkpoint
import coca3d.config
import coca3d.data
from coca3d.gradcheck import tiny_config
from coca3d.model import CoCa3D
from coca3d.model import decoder_targets
from coca3d.text import PAD
from coca3d.text import build_vocab
from coca3d.text import tokenize
from coca3d.train import AdamW


def small_config(**training):
    config = tiny_config()
    config.model.text_encoder.max_len = 40
    config.model.decoder.max_decode_len = 40
    config.dataset.count = 8
    config.dataset.points_per_scene = 64
    for key, value in training.items():
        setattr(config.training, key, value)
    return coca3d.config.load(config.model_dump(mode="json", by_alias=True))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    directory = str(tmp_path_factory.mktemp("model") / "dataset")
    return coca3d.data.generate_dataset(small_config(), directory)


@pytest.fixture
def model(dataset):
    vocab = build_vocab(dataset.corpus("train"), 300)
    return CoCa3D(small_config(), vocab, box_prior=dataset.box_prior("train"))


def test_decoder_targets():
    vocab = build_vocab(["a red box", "a box"], 300)
    inputs, targets = decoder_targets(["a red box", "a box"], vocab, 8)
    first = tokenize("a red box", vocab)[1:]
    second = tokenize("a box", vocab)[1:]
    assert inputs.shape == targets.shape == (2, 4)
    np.testing.assert_array_equal(inputs[0], first[:-1])
    np.testing.assert_array_equal(targets[0], first[1:])
    np.testing.assert_array_equal(inputs[1], second[:-1] + [PAD])
    np.testing.assert_array_equal(targets[1], second[1:] + [PAD])
    with pytest.raises(ValueError):
        decoder_targets(["a red box"], vocab, 3)


def test_encoders_are_frozen(model):
    for name, p in model.parameters().items():
        encoder = name.startswith("scene_backbone.") or name.startswith("text_backbone.")
        assert p.frozen == encoder, name
    assert len(model.trainable_parameters()) > 0


def test_initialisation_streams_are_independent(dataset):
    vocab = build_vocab(dataset.corpus("train"), 300)
    config = small_config()
    a = CoCa3D(config, vocab)
    config.model.decoder.layers = 2
    b = CoCa3D(config, vocab)
    pa = a.parameters()
    pb = b.parameters()
    for name in pa:
        if not name.startswith("decoder."):
            np.testing.assert_array_equal(pa[name].data, pb[name].data)
    assert coca3d.checkpoint.frozen_hash(a) == coca3d.checkpoint.frozen_hash(b)


def test_compute_losses(dataset, model):
    scenes = dataset.scenes("train")[:2]
    grouped = [model.group(s.cloud) for s in scenes]
    groups = np.stack([g for g, _ in grouped])
    centers = np.stack([c for _, c in grouped])
    captions = [s.caption for s in scenes]
    gt_boxes = [[o.box for o in s.objects] for s in scenes]

    losses = model.compute_losses(groups, centers, captions, gt_boxes=gt_boxes)
    values = losses.to_dict()
    assert set(values) == {"l_con", "l_cap", "l_total", "l_box"}
    assert all(np.isfinite(v) for v in values.values())
    assert losses.sim.shape == (2, 2)
    expected = values["l_con"] + values["l_cap"] + values["l_box"]
    assert values["l_total"] == pytest.approx(expected)

    # Without the caption term the total is the contrastive loss
    model.config = small_config(lambda_=0.0)
    losses = model.compute_losses(groups, centers, captions)
    assert losses.l_box is None
    assert losses.l_total.item() == pytest.approx(losses.l_con.item())

    losses.l_total.backward()
    for p in model.frozen_parameters().values():
        assert p.grad is None


def test_save_and_load(tmp_path, dataset, model):
    model.proj_v.layer1.weight.data[...] += 1
    model.save(str(tmp_path))
    loaded, records = CoCa3D.load(str(tmp_path))
    assert loaded.vocab.size == model.vocab.size
    for name, p in model.parameters().items():
        np.testing.assert_array_equal(loaded.parameters()[name].data, p.data)
        assert loaded.parameters()[name].frozen == p.frozen
    assert coca3d.checkpoint.frozen_hash(loaded) == coca3d.checkpoint.frozen_hash(model)

    with pytest.raises(FileNotFoundError):
        CoCa3D.load(str(tmp_path / "missing"))


def test_step_without_caption_term_leaves_decoder(dataset, model):
    model.config = small_config(lambda_=0.0, weight_decay=0.1)
    scenes = dataset.scenes("train")[:4]
    grouped = [model.group(s.cloud) for s in scenes]
    groups = np.stack([g for g, _ in grouped])
    centers = np.stack([c for _, c in grouped])
    before = model.state_dict()

    model.zero_grad(set_to_none=True)
    losses = model.compute_losses(groups, centers, [s.caption for s in scenes])
    losses.l_total.backward()
    AdamW(model.parameters(), model.config.training).step(0.01)

    after = model.state_dict()
    for name in before:
        if name.startswith("decoder."):
            np.testing.assert_array_equal(after[name], before[name], err_msg=name)
            assert model.parameters()[name].grad is None
    assert not np.array_equal(after["proj_v.layer1.weight"], before["proj_v.layer1.weight"])
