import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augrec.errors import ContractError, ShapeMismatchError
from augrec.types import HyperParams, LossBreakdown, PhonemeInventory, Utterance, expand_labels

A, B, SIL = 1, 2, 0


@pytest.mark.parametrize(
    "tokens, durations, expected",
    [
        ([A, B], [2, 3], [A, A, B, B, B]),
        ([A], [1], [A]),
        ([SIL, A, SIL], [1, 2, 1], [SIL, A, A, SIL]),
    ],
)
def test_expand_labels_examples(tokens, durations, expected):
    assert expand_labels(tokens, durations).tolist() == expected


@pytest.mark.parametrize("tokens, durations", [([1, 2], [1]), ([1], [0]), ([1, 2], [3, -1]), ([], [])])
def test_expand_labels_rejects_bad_input(tokens, durations):
    with pytest.raises((ContractError, ShapeMismatchError)):
        expand_labels(tokens, durations)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 12), st.integers(1, 9)), min_size=1, max_size=30))
def test_expand_labels_runs_match_durations(pairs):
    tokens = [p[0] for p in pairs]
    durations = [p[1] for p in pairs]
    out = expand_labels(tokens, durations)
    assert len(out) == sum(durations)
    pos = 0
    for tok, d in pairs:
        assert np.all(out[pos:pos + d] == tok)
        pos += d


def test_inventory_invariants():
    inv = PhonemeInventory.default()
    assert inv.size == 13
    assert inv.symbols[inv.silence_id] == "sil"
    assert PhonemeInventory.from_dict(inv.to_dict()) == inv
    assert PhonemeInventory.from_dict(inv.to_dict()).digest() == inv.digest()
    with pytest.raises(ContractError):
        PhonemeInventory(("a", "a", "sil"))
    with pytest.raises(ContractError):
        PhonemeInventory(("a", "b"))


def test_utterance_checks_duration_sum():
    with pytest.raises(ContractError, match="u1"):
        Utterance("u1", 0, [1, 2], [2, 2], np.zeros((5, 3)))
    u = Utterance("u2", 0, [1, 2], [2, 3], np.zeros((5, 3)), [0, 0, 1, 1, 1])
    assert u.labels.tolist() == [1, 1, 2, 2, 2]
    assert u.impaired_mask.dtype == bool


def test_hyperparams_defaults_and_validation():
    hp = HyperParams()
    assert (hp.beta, hp.gamma, hp.lambda_) == (0.05, 0.3, 25.0)
    with pytest.raises(ContractError):
        HyperParams(lambda_=0)
    with pytest.raises(ContractError):
        HyperParams(beta=-1)


def test_loss_breakdown_recomposition():
    b = LossBreakdown(1.0, -1.0, 2.0, 1.55, 3, beta=0.05, gamma=0.3)
    assert abs(b.recomposed() - b.l_total) < 1e-9
