"""Padding helpers and deterministic batch order."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .types import Utterance


def pad_frames(mels: Sequence[np.ndarray]):
    """Stack ``(T_i, M)`` arrays into ``(B, T_max, M)`` float32 plus a ``(B, T_max)`` mask."""
    t_max = max(m.shape[0] for m in mels)
    out = np.zeros((len(mels), t_max, mels[0].shape[1]), dtype=np.float32)
    mask = np.zeros((len(mels), t_max), dtype=bool)
    for i, m in enumerate(mels):
        out[i, : len(m)] = m
        mask[i, : len(m)] = True
    return torch.from_numpy(out), torch.from_numpy(mask)


def pad_ints(seqs: Sequence[np.ndarray], fill: int = 0):
    n_max = max(len(s) for s in seqs)
    out = np.full((len(seqs), n_max), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), n_max), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
        mask[i, : len(s)] = True
    return torch.from_numpy(out), torch.from_numpy(mask)


class Batch:
    """Padded view of a list of utterances."""

    def __init__(self, utts: Sequence[Utterance]):
        self.utts = list(utts)
        self.mel, self.frame_mask = pad_frames([u.mel for u in utts])
        self.tokens, self.token_mask = pad_ints([u.tokens for u in utts])
        self.durations, _ = pad_ints([u.durations for u in utts])
        self.labels, _ = pad_ints([u.labels for u in utts])
        self.speakers = torch.tensor([u.speaker for u in utts], dtype=torch.int64)

    def __len__(self):
        return len(self.utts)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]
