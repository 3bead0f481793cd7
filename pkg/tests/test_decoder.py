import itertools
import numpy as np
import pytest
import scipy.special
import coca3d.config
import coca3d.tensor as T
from math import log
from coca3d.decoder import CaptionDecoder
from coca3d.decoder import DecoderState
from coca3d.decoder import beam_search
from coca3d.decoder import caption_loss
from coca3d.decoder import decoder_forward
from coca3d.decoder import generate
from coca3d.decoder import greedy_search
from coca3d.decoder import total_loss
from coca3d.scene import SceneTokens
from coca3d.tensor import Tensor
from coca3d.text import BOS
from coca3d.text import EOS
from coca3d.text import PAD

VOCAB_SIZE = 6


def decoder(layers=1, max_decode_len=8):
    config = coca3d.config.Decoder(
        layers=layers, heads=2, model_dim=4, mlp_ratio=2, max_decode_len=max_decode_len
    )
    return CaptionDecoder(config, VOCAB_SIZE, 4, np.random.default_rng(0))


def scene(seed=0):
    tokens = np.random.default_rng(seed).normal(size=(5, 4))
    return SceneTokens(Tensor(tokens), Tensor(tokens[3:].mean(axis=0)), 3)


def toy_step(prefix):
    # A fixed pseudo random next token distribution per prefix
    logits = np.random.default_rng(list(prefix)).normal(size=4) * 2
    return scipy.special.log_softmax(logits)


def test_caption_loss_uniform():
    reference = np.array([3, 1, 2])
    loss = caption_loss(np.zeros((3, 5)), reference).item()
    assert loss == pytest.approx(3 * log(5))


def test_caption_loss_perfect():
    reference = np.array([3, 4, 2])
    logits = np.full((3, 6), -100.0)
    logits[np.arange(3), reference] = 100.0
    assert caption_loss(logits, reference).item() == pytest.approx(0, abs=1e-12)


def test_caption_loss_hand_case():
    logits = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
    reference = np.array([1, 2])
    expected = -(
        2.0 - log(np.exp(1) + np.exp(2) + 1) + 3.0 - log(2 + np.exp(3))
    )
    assert caption_loss(logits, reference).item() == pytest.approx(expected)


def test_caption_loss_masks_pad_and_averages_batch():
    logits = np.zeros((2, 3, 4))
    reference = np.array([[1, 2, PAD], [1, 3, 2]])
    assert caption_loss(logits, reference).item() == pytest.approx(2.5 * log(4))
    with pytest.raises(ValueError):
        caption_loss(np.zeros((3, 4)), np.array([1, 2]))
    with pytest.raises(ValueError):
        caption_loss(np.zeros((2, 4)), np.array([1, 4]))


def test_total_loss():
    l_con, l_cap = Tensor(0.3), Tensor(2.0)
    assert total_loss(l_con, l_cap, 0.0) is l_con
    assert total_loss(l_con, l_cap, 1.0).item() == pytest.approx(2.3)
    assert total_loss(l_con, l_cap, 0.5).item() == pytest.approx(1.3)
    assert total_loss(l_con, l_cap, 0.5, "contrastive").item() == pytest.approx(2.15)
    with pytest.raises(ValueError):
        total_loss(l_con, l_cap, -0.1)


def test_decoder_input_checks():
    model = decoder(max_decode_len=3)
    memory = scene().token_outputs
    assert model([BOS, 3, 4], memory).shape == (3, VOCAB_SIZE)
    batch = np.stack([memory.data, memory.data])
    assert model(np.array([[BOS, 3], [BOS, 5]]), batch).shape == (2, 2, VOCAB_SIZE)
    with pytest.raises(ValueError):
        model([3, 4], memory)
    with pytest.raises(ValueError):
        model([BOS, 3, 4, 5], memory)


def test_decoder_is_causal():
    model = decoder()
    memory = scene().token_outputs
    a = model([BOS, 3, 4, 5], memory).data
    b = model([BOS, 3, 2, 2], memory).data
    np.testing.assert_allclose(a[:2], b[:2])


def test_zero_value_projection_ignores_scene():
    model = decoder()
    for layer in model.layers:
        layer.cross_attn.w_v.weight.data[...] = 0
        layer.cross_attn.w_v.bias.data[...] = 0
    a = decoder_forward([BOS, 3, 4], scene(0), model).data
    b = decoder_forward([BOS, 3, 4], scene(1), model).data
    np.testing.assert_allclose(a, b)


def test_cached_state_matches_forward():
    model = decoder()
    s = scene()
    state = DecoderState(model, s)
    full = T.log_softmax(model([BOS, 3, 4], s.token_outputs), axis=-1).data
    np.testing.assert_allclose(state([BOS, 3, 4]), full[-1])
    np.testing.assert_allclose(state.advance(3), full[1])
    assert state.step == 1


def test_greedy_stops_at_eos():
    def step(prefix):
        log_probs = np.full(4, log(0.1))
        log_probs[EOS] = log(0.7)
        return log_probs

    hypothesis = greedy_search(step, 5)
    assert hypothesis.token_ids == [EOS]
    assert hypothesis.finished


def test_greedy_ties_to_lowest_id():
    hypothesis = greedy_search(lambda prefix: np.zeros(4), 2)
    assert hypothesis.token_ids == [0, 0]
    assert not hypothesis.finished


def test_beam_matches_exhaustive_search():
    max_len = 3

    # Every sequence that either ends at EOS or reaches max_len
    candidates = []
    for length in range(1, max_len + 1):
        for ids in itertools.product(range(4), repeat=length):
            if EOS in ids[:-1]:
                continue
            if length < max_len and ids[-1] != EOS:
                continue
            log_prob = sum(toy_step([BOS] + list(ids[:i]))[t] for i, t in enumerate(ids))
            candidates.append((-log_prob / length, list(ids)))
    best = sorted(candidates)[0][1]

    assert beam_search(toy_step, 4**max_len, max_len).token_ids == best


def test_beam_width_one_is_greedy():
    assert (
        beam_search(toy_step, 1, 4).token_ids == greedy_search(toy_step, 4).token_ids
    )
    with pytest.raises(ValueError):
        beam_search(toy_step, 0, 4)


def test_generate():
    model = decoder()
    s = scene()
    greedy = generate(s, model, "greedy", max_len=20)
    assert len(greedy) <= model.max_decode_len
    assert greedy.token_ids == greedy_search(DecoderState(model, s), 8).token_ids
    beam = generate(s, model, "beam", width=3, max_len=5)
    assert len(beam) <= 5
    with pytest.raises(ValueError):
        generate(s, model, "beam", width=0)
    with pytest.raises(ValueError):
        generate(s, model, "sample")
