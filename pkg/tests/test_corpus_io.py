import json

import numpy as np
import pytest

from augrec.corpus_io import Corpus, load_corpus, read_matrix, save_corpus
from augrec.errors import CorpusFormatError, InvariantError, NonFiniteError, ShapeMismatchError
from augrec.types import PhonemeInventory, Utterance


@pytest.fixture
def corpus(rng):
    inv = PhonemeInventory.default(4)
    utts = []
    for i in range(3):
        durations = rng.integers(1, 5, size=4)
        mel = rng.normal(size=(int(durations.sum()), 20)).astype(np.float32)
        mask = rng.random(int(durations.sum())) < 0.3 if i else None
        utts.append(Utterance(f"u{i}", i % 2, rng.integers(0, 5, size=4), durations, mel, mask))
    return Corpus(utts, inv, extra={"note": "x"})


def test_round_trip_is_exact(corpus, tmp_path):
    save_corpus(corpus, corpus.inventory, tmp_path / "c")
    back = load_corpus(tmp_path / "c")
    assert back.inventory == corpus.inventory
    assert back.speakers == corpus.speakers
    assert back.extra == corpus.extra
    for a, b in zip(corpus, back):
        assert a.utt_id == b.utt_id and a.speaker == b.speaker
        assert np.array_equal(a.tokens, b.tokens) and np.array_equal(a.durations, b.durations)
        assert a.mel.tobytes() == b.mel.tobytes()
        if a.impaired_mask is None:
            assert b.impaired_mask is None
        else:
            assert np.array_equal(a.impaired_mask, b.impaired_mask)


def test_matrix_header_layout(corpus, tmp_path):
    save_corpus(corpus, corpus.inventory, tmp_path / "c")
    raw = (tmp_path / "c" / "mels" / "u0.melf").read_bytes()
    t, m = corpus.utterances[0].mel.shape
    assert raw[:4] == b"MELF"
    assert int.from_bytes(raw[4:8], "little") == t
    assert int.from_bytes(raw[8:12], "little") == m
    assert len(raw) == 16 + 4 * t * m
    first = np.frombuffer(raw[16:20], dtype="<f4")[0]
    assert first == corpus.utterances[0].mel[0, 0]


def test_truncated_matrix_is_shape_error(corpus, tmp_path):
    save_corpus(corpus, corpus.inventory, tmp_path / "c")
    f = tmp_path / "c" / "mels" / "u1.melf"
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(ShapeMismatchError):
        load_corpus(tmp_path / "c")


def test_duration_sum_mismatch_names_utterance(corpus, tmp_path):
    save_corpus(corpus, corpus.inventory, tmp_path / "c")
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    manifest["utterances"][2]["durations"][0] += 1
    (tmp_path / "c" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(InvariantError, match="u2"):
        load_corpus(tmp_path / "c")


def test_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(CorpusFormatError):
        load_corpus(tmp_path)


def test_non_finite_matrix(corpus, tmp_path):
    save_corpus(corpus, corpus.inventory, tmp_path / "c")
    f = tmp_path / "c" / "mels" / "u0.melf"
    raw = bytearray(f.read_bytes())
    raw[16:20] = np.array([np.nan], dtype="<f4").tobytes()
    f.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteError):
        read_matrix(f)


def test_error_classes_are_distinct():
    assert len({ShapeMismatchError, InvariantError, NonFiniteError, CorpusFormatError}) == 4
    assert len({c.exit_code for c in (ShapeMismatchError, InvariantError, NonFiniteError, CorpusFormatError)}) == 4
