import numpy as np
import pytest
import torch

from augrec.acoustic import (AcousticModel, DurationConfig, DurationModel, clamp_durations, encode, forward,
                             length_regulate, predict_durations, train_duration_model)
from augrec.batching import Batch
from augrec.corpus_io import Corpus
from augrec.errors import ContractError, InventoryMismatchError, ShapeMismatchError
from augrec.types import PhonemeInventory, Utterance


def test_length_regulate_examples():
    h = torch.tensor([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
    out = length_regulate(h, [2, 1, 3])
    assert out[:, 0].tolist() == [1, 1, 2, 3, 3, 3]
    assert length_regulate(h[:1], [1]).shape == (1, 2)
    with pytest.raises(ContractError):
        length_regulate(h, [1, 0, 2])
    with pytest.raises(ShapeMismatchError):
        length_regulate(h, [1, 2])


def test_length_regulate_random(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        d = rng.integers(1, 9, size=n)
        h = torch.from_numpy(rng.normal(size=(n, 3)))
        out = length_regulate(h, d)
        assert out.shape[0] == d.sum()
        # frame t copies the token whose cumulative span covers it
        owner = np.searchsorted(np.cumsum(d), np.arange(d.sum()), side="right")
        assert torch.equal(out, h[owner])


@pytest.fixture(scope="module")
def fresh():
    torch.manual_seed(0)
    return AcousticModel(13, 9, 20).eval()


def test_encode_and_forward_shapes(fresh):
    h = encode(fresh, [0, 3, 4, 0])
    assert h.shape == (4, 64)
    mel = forward(fresh, [0, 3, 4, 0], [2, 3, 1, 5], speaker=2)
    assert mel.shape == (11, 20)
    np.testing.assert_array_equal(mel, forward(fresh, [0, 3, 4, 0], [2, 3, 1, 5], speaker=2))
    with pytest.raises(ContractError):
        encode(fresh, [0, 13])
    with pytest.raises(ContractError):
        forward(fresh, [0, 1], [1, 1], speaker=9)
    with pytest.raises(ShapeMismatchError):
        forward(fresh, [0, 1], [1], speaker=0)


def test_speakers_differ(pretrained):
    a = forward(pretrained, [0, 3, 4, 0], [2, 3, 3, 2], speaker=0)
    b = forward(pretrained, [0, 3, 4, 0], [2, 3, 3, 2], speaker=1)
    assert np.abs(a - b).max() > 1e-4


def test_batched_forward_matches_single(pretrained, small_corpus):
    utts = small_corpus.utterances[:5]
    with torch.no_grad():
        y, mask = pretrained.forward_utts(Batch(utts))
    for b, u in enumerate(utts):
        single = forward(pretrained, u.tokens, u.durations, u.speaker)
        np.testing.assert_allclose(y[b, : u.n_frames].numpy(), single, atol=1e-5)
        assert int(mask[b].sum()) == u.n_frames


def test_parameter_groups_partition_the_model(fresh):
    enc = {id(p) for p in fresh.encoder_parameters()}
    dec = {id(p) for p in fresh.decoder_parameters()}
    assert not enc & dec
    assert enc | dec == {id(p) for p in fresh.parameters()}


def test_frozen_encoder_gets_no_gradient(small_corpus):
    torch.manual_seed(1)
    model = AcousticModel(13, 9, 20)
    for p in model.encoder_parameters():
        p.requires_grad_(False)
    before = [p.clone() for p in model.encoder_parameters()]
    opt = torch.optim.Adam(model.decoder_parameters(), lr=1e-2)
    batch = Batch(small_corpus.utterances[:4])
    y, mask = model.forward_utts(batch)
    loss = ((y - batch.mel) ** 2)[mask].sum()
    opt.zero_grad()
    loss.backward()
    assert all(p.grad is None for p in model.encoder_parameters())
    assert any(p.grad is not None and float(p.grad.abs().sum()) > 0 for p in model.decoder_parameters())
    opt.step()
    assert all(torch.equal(a, b) for a, b in zip(before, model.encoder_parameters()))


def test_checkpoint_round_trip(pretrained, tmp_path, lang):
    path = pretrained.save(tmp_path / "a.ckpt")
    back = AcousticModel.load(path, lang.inventory)
    np.testing.assert_array_equal(forward(back, [0, 5, 0], [2, 4, 2], 3), forward(pretrained, [0, 5, 0], [2, 4, 2], 3))
    with pytest.raises(InventoryMismatchError):
        AcousticModel.load(path, PhonemeInventory.default(4))


def test_clamp_durations():
    np.testing.assert_array_equal(clamp_durations([0.2, 1.49, 2.6, 7.0, -3.0]), [1, 1, 3, 7, 1])


def _constant_duration_corpus(lang):
    g = np.random.default_rng(0)
    utts = []
    for i in range(24):
        n = int(g.integers(3, 8))
        tokens = np.concatenate([[0], g.integers(1, 13, size=n - 2), [0]])
        mel = np.zeros((4 * n, 20), np.float32)
        utts.append(Utterance(f"d{i}", int(g.integers(0, 8)), tokens, np.full(n, 4), mel))
    return Corpus(utts, lang.inventory)


def test_duration_model_learns_constant(lang, pretrained):
    corpus = _constant_duration_corpus(lang)
    dm = train_duration_model(corpus, pretrained, DurationConfig(epochs=60, batch_size=8), seed=0)
    for u in corpus.utterances[:6]:
        d = predict_durations(dm, encode(pretrained, u.tokens), u.speaker)
        assert (d == 4).all()
    dm2 = train_duration_model(corpus, pretrained, DurationConfig(epochs=60, batch_size=8), seed=0)
    h = encode(pretrained, corpus.utterances[0].tokens)
    np.testing.assert_array_equal(predict_durations(dm, h, 1), predict_durations(dm2, h, 1))


def test_duration_checkpoint_round_trip(lang, pretrained, tmp_path):
    dm = train_duration_model(_constant_duration_corpus(lang), pretrained, DurationConfig(epochs=1), seed=0)
    back = DurationModel.load(dm.save(tmp_path / "d.ckpt"), lang.inventory)
    h = encode(pretrained, [0, 1, 2, 0])
    np.testing.assert_array_equal(predict_durations(back, h, 2), predict_durations(dm, h, 2))
