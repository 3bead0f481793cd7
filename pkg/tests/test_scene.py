import numpy as np
import pytest
import coca3d.config
import coca3d.nn
from coca3d.pointcloud import PatchTokens
from coca3d.scene import SceneBackbone
from coca3d.scene import TaskTokens
from coca3d.scene import encode_scene
from coca3d.scene import freeze_backbone
from coca3d.tensor import Tensor


def backbone(layers=0, model_dim=4, heads=1):
    config = coca3d.config.SceneEncoder(layers=layers, heads=heads, model_dim=model_dim)
    return SceneBackbone(config, np.random.default_rng(0))


def test_task_tokens_are_distinct():
    task = TaskTokens(3, 2)
    np.testing.assert_array_equal(task.embeddings.data, [[1, 1], [2, 2], [3, 3]])
    assert task.m_t == 3


def test_identity_backbone():
    patches = np.random.default_rng(0).normal(size=(3, 4))
    task = TaskTokens(2, 4)
    scene = encode_scene(PatchTokens(Tensor(patches)), task, backbone())
    assert scene.token_outputs.shape == (5, 4)
    np.testing.assert_array_equal(scene.token_outputs.data[:3], patches)
    np.testing.assert_array_equal(scene.task_outputs.data, task.embeddings.data)
    np.testing.assert_allclose(scene.global_feature.data, [1.5] * 4)


def test_single_task_token():
    rng = np.random.default_rng(1)
    patches = rng.normal(size=(2, 3, 4))
    scene = encode_scene(PatchTokens(Tensor(patches)), TaskTokens(1, 4), backbone(1))
    assert scene.token_outputs.shape == (2, 4, 4)
    np.testing.assert_allclose(
        scene.global_feature.data, scene.token_outputs.data[:, 3, :]
    )


def test_hand_weight_backbone():
    # One block, one head, M = 1, m_t = 1 with identity projections and a
    # zero feed-forward, so the output is x + attention(layer_norm(x))
    model = backbone(1, model_dim=2)
    block = model.blocks[0]
    for linear in [block.attn.w_q, block.attn.w_k, block.attn.w_v, block.attn.w_o]:
        linear.weight.data[...] = np.eye(2)
        linear.bias.data[...] = 0
    block.mlp.layer2.weight.data[...] = 0
    block.mlp.layer2.bias.data[...] = 0

    patch = np.array([[3.0, 1.0]])
    task = TaskTokens(1, 2)
    task.embeddings.data[...] = [[0.0, 2.0]]
    scene = encode_scene(PatchTokens(Tensor(patch)), task, model)

    # Layer norm maps both rows to [1, -1] and [-1, 1]
    eps = 1e-5
    n = np.array([[1.0, -1.0], [-1.0, 1.0]]) / np.sqrt(1 + eps)
    scores = n @ n.T / np.sqrt(2)
    weights = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
    expected = np.array([[3.0, 1.0], [0.0, 2.0]]) + weights @ n
    np.testing.assert_allclose(scene.token_outputs.data, expected)
    np.testing.assert_allclose(scene.global_feature.data, expected[1])


def test_width_checks():
    patches = PatchTokens(Tensor(np.zeros((3, 6))))
    with pytest.raises(ValueError):
        encode_scene(patches, TaskTokens(1, 4), backbone())
    with pytest.raises(ValueError):
        encode_scene(patches, TaskTokens(1, 6), backbone())

    adapter = coca3d.nn.Linear(6, 4, np.random.default_rng(0))
    scene = encode_scene(patches, TaskTokens(1, 6), backbone(), adapter=adapter)
    assert scene.token_outputs.shape == (4, 4)


def test_freeze_backbone():
    model = backbone(1)
    freeze_backbone(model)
    freeze_backbone(model)
    assert len(model.trainable_parameters()) == 0
    assert all(p.frozen for p in model.parameters().values())
