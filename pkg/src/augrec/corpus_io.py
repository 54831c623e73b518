"""On-disk corpus format.

A corpus is a directory holding ``manifest.json`` plus one matrix file per
utterance.  Matrix files are a 16-byte header followed by the frames::

    bytes 0-3    magic b"MELF"
    bytes 4-7    T, uint32 little-endian
    bytes 8-11   M, uint32 little-endian
    bytes 12-15  reserved, zero
    then T*M float32 little-endian values, frame-major

The manifest carries the inventory, the speaker list, optional generator
metadata (``extra``) and one record per utterance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CorpusFormatError, InvariantError, NonFiniteError, ShapeMismatchError
from .types import PhonemeInventory, Utterance

MAGIC = b"MELF"
HEADER = struct.Struct("<4sIII")
FORMAT_VERSION = 1


@dataclass
class Corpus:
    utterances: list[Utterance]
    inventory: PhonemeInventory
    speakers: list[int] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.speakers:
            self.speakers = sorted({u.speaker for u in self.utterances})

    def __len__(self):
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def n_mels(self) -> int:
        return self.utterances[0].mel.shape[1]

    def by_speaker(self, speaker: int) -> list[Utterance]:
        return [u for u in self.utterances if u.speaker == speaker]

    def subset(self, utterances: list[Utterance]) -> "Corpus":
        return Corpus(list(utterances), self.inventory, sorted({u.speaker for u in utterances}), dict(self.extra))


def write_matrix(path: Path, mel: np.ndarray) -> None:
    mel = np.ascontiguousarray(mel, dtype="<f4")
    t, m = mel.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, t, m, 0))
        fh.write(mel.tobytes(order="C"))


def read_matrix(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ShapeMismatchError(f"{path}: file shorter than header")
    magic, t, m, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CorpusFormatError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + 4 * t * m
    if len(raw) != expected:
        raise ShapeMismatchError(f"{path}: header says {t}x{m} ({expected} bytes) but file has {len(raw)}")
    mel = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(t, m).astype(np.float32)
    if not np.all(np.isfinite(mel)):
        raise NonFiniteError(f"{path}: non-finite values")
    return mel


def save_corpus(utterances, inventory: PhonemeInventory, path, *, speakers=None, extra=None) -> Path:
    """Write ``utterances`` and a manifest under directory ``path``.

    ``utterances`` may also be a :class:`Corpus`, whose speakers and extra
    metadata are then used unless overridden.
    """
    if isinstance(utterances, Corpus):
        speakers = speakers if speakers is not None else utterances.speakers
        extra = extra if extra is not None else utterances.extra
        utterances = utterances.utterances
    corpus = Corpus(list(utterances), inventory, list(speakers or []), dict(extra or {}))
    path = Path(path)
    (path / "mels").mkdir(parents=True, exist_ok=True)
    m = None
    records = []
    for utt in corpus.utterances:
        if m is None:
            m = utt.mel.shape[1]
        elif utt.mel.shape[1] != m:
            raise ShapeMismatchError(f"{utt.utt_id}: M={utt.mel.shape[1]} differs from corpus M={m}")
        rel = f"mels/{utt.utt_id}.melf"
        write_matrix(path / rel, utt.mel)
        records.append(
            {
                "utt_id": utt.utt_id,
                "speaker": int(utt.speaker),
                "tokens": utt.tokens.tolist(),
                "durations": utt.durations.tolist(),
                "impaired_mask": None if utt.impaired_mask is None else [int(b) for b in utt.impaired_mask],
                "mel": rel,
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "inventory": corpus.inventory.to_dict(),
        "n_mels": m,
        "speakers": [int(s) for s in corpus.speakers],
        "extra": corpus.extra,
        "utterances": records,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_corpus(path) -> Corpus:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        inventory = PhonemeInventory.from_dict(manifest["inventory"])
        records = manifest["utterances"]
        speakers = [int(s) for s in manifest["speakers"]]
        n_mels: Optional[int] = manifest.get("n_mels")
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorpusFormatError(f"{path}: malformed manifest ({exc})") from exc

    utterances = []
    for rec in records:
        try:
            utt_id = rec["utt_id"]
            mel = read_matrix(path / rec["mel"])
            tokens = np.asarray(rec["tokens"], dtype=np.int64)
            durations = np.asarray(rec["durations"], dtype=np.int64)
            mask = rec.get("impaired_mask")
            speaker = int(rec["speaker"])
        except (KeyError, TypeError) as exc:
            raise CorpusFormatError(f"{path}: malformed utterance record ({exc})") from exc
        if n_mels is not None and mel.shape[1] != n_mels:
            raise ShapeMismatchError(f"{utt_id}: M={mel.shape[1]} but manifest says {n_mels}")
        if len(tokens) != len(durations) or int(durations.sum()) != mel.shape[0] or np.any(durations < 1):
            raise InvariantError(
                f"{utt_id}: durations (sum {int(durations.sum())}) inconsistent with {mel.shape[0]} frames"
            )
        if np.any(tokens < 0) or np.any(tokens >= inventory.size):
            raise InvariantError(f"{utt_id}: token id outside inventory")
        if mask is not None and len(mask) != mel.shape[0]:
            raise InvariantError(f"{utt_id}: impaired_mask length {len(mask)} != {mel.shape[0]}")
        utterances.append(
            Utterance(utt_id, speaker, tokens, durations, mel, None if mask is None else np.asarray(mask, bool))
        )
    return Corpus(utterances, inventory, speakers, manifest.get("extra", {}))
