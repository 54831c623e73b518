"""Shared domain types: phoneme inventory, utterances, hyper-parameters.

Arrays are plain numpy; token, duration and label sequences are 1-D integer
arrays, spectrograms are ``(T, M)`` float arrays and posteriors ``(T, K)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeMismatchError

SILENCE = "sil"


@dataclass(frozen=True)
class PhonemeInventory:
    """Ordered phoneme symbols; the silence symbol is a regular class."""

    symbols: tuple[str, ...]
    silence: str = SILENCE

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        if len(set(self.symbols)) != len(self.symbols):
            raise ContractError("inventory symbols must be unique")
        if self.symbols.count(self.silence) != 1:
            raise ContractError(f"silence symbol {self.silence!r} must appear exactly once")

    @classmethod
    def default(cls, n_phonemes: int = 12) -> "PhonemeInventory":
        return cls((SILENCE,) + tuple(f"p{i:02d}" for i in range(n_phonemes)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def silence_id(self) -> int:
        return self.symbols.index(self.silence)

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    def digest(self) -> str:
        """Stable hash used to tag checkpoints trained on this inventory."""
        payload = json.dumps({"symbols": list(self.symbols), "silence": self.silence})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"symbols": list(self.symbols), "silence": self.silence}

    @classmethod
    def from_dict(cls, d: dict) -> "PhonemeInventory":
        return cls(tuple(d["symbols"]), d.get("silence", SILENCE))


def expand_labels(tokens: Sequence[int], durations: Sequence[int]) -> np.ndarray:
    """Replicate each token by its frame duration.

    >>> expand_labels([3, 5], [2, 3]).tolist()
    [3, 3, 5, 5, 5]
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    if tokens.ndim != 1 or durations.ndim != 1:
        raise ContractError("tokens and durations must be 1-D")
    if len(tokens) != len(durations):
        raise ShapeMismatchError(
            f"{len(tokens)} tokens but {len(durations)} durations"
        )
    if len(tokens) == 0:
        raise ContractError("token sequence must be non-empty")
    if np.any(durations < 1):
        raise ContractError("durations must all be >= 1")
    return np.repeat(tokens, durations)


@dataclass(frozen=True, eq=False)
class Utterance:
    utt_id: str
    speaker: int
    tokens: np.ndarray
    durations: np.ndarray
    mel: np.ndarray
    impaired_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        durations = np.asarray(self.durations, dtype=np.int64)
        mel = np.asarray(self.mel)
        if mel.ndim != 2 or mel.shape[0] < 1:
            raise ContractError(f"{self.utt_id}: mel must be a non-empty (T, M) matrix")
        if len(tokens) != len(durations) or len(tokens) == 0:
            raise ContractError(f"{self.utt_id}: token/duration length mismatch")
        if np.any(durations < 1):
            raise ContractError(f"{self.utt_id}: durations must be >= 1")
        if int(durations.sum()) != mel.shape[0]:
            raise ContractError(
                f"{self.utt_id}: durations sum to {int(durations.sum())} but mel has {mel.shape[0]} frames"
            )
        if not np.all(np.isfinite(mel)):
            raise ContractError(f"{self.utt_id}: mel contains non-finite values")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "mel", mel)
        if self.impaired_mask is not None:
            mask = np.asarray(self.impaired_mask, dtype=bool)
            if mask.shape != (mel.shape[0],):
                raise ContractError(f"{self.utt_id}: impaired_mask length must equal T")
            object.__setattr__(self, "impaired_mask", mask)

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return expand_labels(self.tokens, self.durations)


@dataclass(frozen=True)
class HyperParams:
    """Loss weights. ``sigma2`` only parameterises the impairment density."""

    beta: float = 0.05
    gamma: float = 0.3
    lambda_: float = 25.0
    sigma2: float = 1.0
    eps_floor: float = 1e-8

    def __post_init__(self):
        for name in ("lambda_", "sigma2", "eps_floor"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be > 0")
        # zero is allowed for the baseline and ablation stages
        for name in ("beta", "gamma"):
            if not getattr(self, name) >= 0:
                raise ContractError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    l_rec: float
    l_reg: float
    l_consis: float
    l_total: float
    frame_count: int
    beta: float = field(default=0.0)
    gamma: float = field(default=0.0)

    def recomposed(self) -> float:
        return self.l_rec + self.beta * self.l_reg + self.gamma * self.l_consis

    def as_record(self) -> dict:
        return {
            "l_rec": self.l_rec,
            "l_reg": self.l_reg,
            "l_consis": self.l_consis,
            "l_total": self.l_total,
            "frame_count": self.frame_count,
        }
