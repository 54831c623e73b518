import numpy as np
import pytest
import torch

from augrec.classifier import (ClassifierConfig, PhoneClassifier, frame_accuracy, freeze, gather_truth,
                               infer_posteriors, is_frozen, train_classifier)
from augrec.corpus_io import Corpus
from augrec.errors import ContractError, InventoryMismatchError, ShapeMismatchError
from augrec.toyworld import generate_corpus, nearest_template_labels
from augrec.types import PhonemeInventory, Utterance


@pytest.fixture(scope="module")
def untrained():
    return freeze(PhoneClassifier(20, 13, seed=0))


@pytest.mark.parametrize("t", [1, 2, 7, 100, 512])
def test_posteriors_keep_length_and_sum_to_one(untrained, rng, t):
    post = infer_posteriors(untrained, rng.normal(size=(t, 20)))
    assert post.shape == (t, 13)
    np.testing.assert_allclose(post.sum(1), 1.0, atol=1e-6)
    assert (post >= 0).all()


def test_wrong_mel_width_is_rejected(untrained):
    with pytest.raises(ShapeMismatchError):
        infer_posteriors(untrained, np.zeros((4, 19)))


def test_gather_truth_examples():
    post = np.array([[0.1, 0.7, 0.2], [0.5, 0.25, 0.25]])
    np.testing.assert_array_equal(gather_truth(post, [1, 0]), [0.7, 0.5])
    uniform = np.full((5, 13), 1 / 13)
    np.testing.assert_allclose(gather_truth(uniform, [0, 3, 12, 6, 1]), 1 / 13)
    np.testing.assert_array_equal(gather_truth(np.eye(13)[[4]], [4]), [1.0])
    with pytest.raises(ShapeMismatchError):
        gather_truth(post, [0])
    with pytest.raises(ContractError):
        gather_truth(post, [0, 3])


def test_trained_accuracy_on_heldout(lang, classifier):
    heldout = generate_corpus(lang, list(range(8)), 10, seed=99)
    acc = frame_accuracy(classifier, heldout)
    oracle_hits = sum(int((nearest_template_labels(lang, u.mel, u.speaker) == u.labels).sum()) for u in heldout)
    oracle_acc = oracle_hits / sum(u.n_frames for u in heldout)
    assert oracle_acc >= 0.99
    assert acc >= 0.95


def test_constant_phoneme_corpus_is_learned_exactly(lang):
    inv = lang.inventory
    g = np.random.default_rng(0)
    utts = []
    for i in range(8):
        mel = (lang.templates[3] + 0.1 * g.normal(size=(10, 20))).astype(np.float32)
        utts.append(Utterance(f"c{i}", 0, [3], [10], mel))
    model = train_classifier(Corpus(utts, inv), ClassifierConfig(epochs=20, batch_size=4), seed=0)
    assert frame_accuracy(model, utts) == 1.0


def test_inventory_mismatch_is_refused(small_corpus):
    other = PhonemeInventory.default(5)
    with pytest.raises(InventoryMismatchError):
        train_classifier(small_corpus, ClassifierConfig(epochs=1, inventory=other), seed=0)


def test_empty_corpus_is_refused(lang):
    with pytest.raises(ContractError):
        train_classifier(Corpus([], lang.inventory), ClassifierConfig(epochs=1))


def test_trained_model_is_frozen(classifier):
    assert is_frozen(classifier) and not classifier.training


def test_input_gradient_matches_finite_differences(classifier, lang):
    torch.manual_seed(0)
    y = torch.tensor(np.stack([lang.templates[2], lang.templates[5]]) + 0.05, dtype=torch.float64)
    model = PhoneClassifier(20, 13, seed=classifier.seed).double()
    model.load_state_dict({k: v.double() for k, v in classifier.state_dict().items()})
    freeze(model)
    labels = torch.tensor([2, 5])

    def f(x):
        return model.log_posteriors(x[None])[0].gather(1, labels[:, None]).sum()

    x = y.clone().requires_grad_(True)
    (g,) = torch.autograd.grad(f(x), x)
    fd = torch.zeros_like(y)
    h = 1e-5
    for idx in np.ndindex(*y.shape):
        e = torch.zeros_like(y)
        e[idx] = h
        fd[idx] = (f(y + e) - f(y - e)) / (2 * h)
    rel = float((g - fd).norm() / max(float(fd.norm()), 1e-12))
    assert rel < 1e-3


def test_checkpoint_round_trip(classifier, tmp_path, lang):
    path = classifier.save(tmp_path / "c.ckpt")
    back = PhoneClassifier.load(path, lang.inventory)
    assert back.model_id == classifier.model_id and is_frozen(back)
    mel = lang.templates[[0, 1, 2, 3]]
    np.testing.assert_array_equal(infer_posteriors(back, mel), infer_posteriors(classifier, mel))
    with pytest.raises(InventoryMismatchError):
        PhoneClassifier.load(path, PhonemeInventory.default(5))


def test_training_is_deterministic(small_corpus):
    cfg = ClassifierConfig(epochs=2)
    a = train_classifier(small_corpus, cfg, seed=3)
    b = train_classifier(small_corpus, cfg, seed=3)
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)
