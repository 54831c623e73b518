"""Stride-free frame-level phone classifier.

A stack of width-5 temporal convolutions with stride 1 and same padding, so
the output has exactly one posterior row per input frame.  Activations past
an utterance's end are zeroed after every block, which makes a padded batch
give the same per-utterance result as running each utterance alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .batching import Batch, epoch_batches
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus_io import Corpus
from .errors import ContractError, InventoryMismatchError, ShapeMismatchError
from .types import PhonemeInventory

log = logging.getLogger(__name__)


class PhoneClassifier(nn.Module):
    def __init__(self, n_mels: int, n_classes: int, hidden: int = 64, n_blocks: int = 3,
                 kernel_size: int = 5, inventory_digest: str = "", seed: int = 0):
        super().__init__()
        self.n_mels = n_mels
        self.n_classes = n_classes
        self.hidden = hidden
        self.kernel_size = kernel_size
        self.inventory_digest = inventory_digest
        self.seed = seed
        pad = kernel_size // 2
        chans = [n_mels] + [hidden] * n_blocks
        self.blocks = nn.ModuleList(
            nn.Conv1d(c_in, c_out, kernel_size, stride=1, padding=pad) for c_in, c_out in zip(chans, chans[1:])
        )
        self.head = nn.Conv1d(hidden, n_classes, 1)

    @property
    def model_id(self) -> str:
        return f"phone-classifier:{self.inventory_digest}:seed{self.seed}"

    def forward(self, mel: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """``(B, T, M)`` frames to ``(B, T, K)`` logits."""
        if mel.shape[-1] != self.n_mels:
            raise ShapeMismatchError(f"classifier expects M={self.n_mels}, got {mel.shape[-1]}")
        x = mel.transpose(1, 2)
        m = None if mask is None else mask[:, None, :].to(x.dtype)
        if m is not None:
            x = x * m
        for conv in self.blocks:
            x = torch.relu(conv(x))
            if m is not None:
                x = x * m
        return self.head(x).transpose(1, 2)

    def log_posteriors(self, mel, mask=None) -> torch.Tensor:
        return torch.log_softmax(self(mel, mask), dim=-1)

    def meta(self) -> dict:
        return {"kind": "phone-classifier", "inventory_digest": self.inventory_digest, "n_mels": self.n_mels,
                "n_classes": self.n_classes, "hidden": self.hidden, "n_blocks": len(self.blocks),
                "kernel_size": self.kernel_size, "seed": self.seed}

    def save(self, path):
        return save_checkpoint(path, self.state_dict(), self.meta())

    @classmethod
    def load(cls, path, inventory: Optional[PhonemeInventory] = None) -> "PhoneClassifier":
        state, meta = load_checkpoint(path, "phone-classifier", inventory.digest() if inventory else None)
        model = cls(meta["n_mels"], meta["n_classes"], meta["hidden"], meta["n_blocks"], meta["kernel_size"],
                    meta["inventory_digest"], meta["seed"])
        model.load_state_dict(state)
        return freeze(model)


def freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def is_frozen(module: nn.Module) -> bool:
    return not any(p.requires_grad for p in module.parameters())


@dataclass
class ClassifierConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    hidden: int = 64
    n_blocks: int = 3
    kernel_size: int = 5
    inventory: Optional[PhonemeInventory] = None


def train_classifier(corpus: Corpus, config: ClassifierConfig = ClassifierConfig(), seed: int = 0) -> PhoneClassifier:
    """Frame-wise cross-entropy on duration-expanded labels; returns a frozen model."""
    if len(corpus) == 0:
        raise ContractError("cannot train a classifier on an empty corpus")
    if config.inventory is not None and config.inventory.digest() != corpus.inventory.digest():
        raise InventoryMismatchError("corpus inventory differs from the configured inventory")
    torch.manual_seed(seed)
    rng = np.random.default_rng([seed, 0xC1A5])
    model = PhoneClassifier(corpus.n_mels, corpus.inventory.size, config.hidden, config.n_blocks,
                            config.kernel_size, corpus.inventory.digest(), seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    utts = corpus.utterances
    for epoch in range(config.epochs):
        total, frames = 0.0, 0
        for idx in epoch_batches(len(utts), config.batch_size, rng):
            batch = Batch([utts[i] for i in idx])
            logits = model(batch.mel, batch.frame_mask)
            nll = nn.functional.cross_entropy(logits[batch.frame_mask], batch.labels[batch.frame_mask],
                                              reduction="sum")
            n = int(batch.frame_mask.sum())
            opt.zero_grad()
            (nll / n).backward()
            opt.step()
            total += nll.item()
            frames += n
        log.debug("classifier epoch %d nll/frame %.4f", epoch, total / frames)
    return freeze(model)


def infer_posteriors(model: PhoneClassifier, mel) -> np.ndarray:
    """``(T, K)`` row-stochastic posteriors for one spectrogram."""
    mel = np.asarray(mel, dtype=np.float32)
    if mel.ndim != 2 or mel.shape[1] != model.n_mels:
        raise ShapeMismatchError(f"expected (T, {model.n_mels}) frames, got {mel.shape}")
    with torch.no_grad():
        logits = model(torch.from_numpy(mel)[None])[0]
    return torch.softmax(logits.double(), dim=-1).numpy()


def gather_truth(posteriors, labels) -> np.ndarray:
    """Posterior of the ground-truth class at each frame."""
    probs = np.asarray(posteriors)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise ShapeMismatchError(f"{probs.shape[0] if probs.ndim == 2 else '?'} posterior rows for {len(labels)} labels")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ContractError("label outside the classifier's classes")
    return probs[np.arange(len(labels)), labels]


def frame_accuracy(model: PhoneClassifier, utterances) -> float:
    hits = total = 0
    for u in utterances:
        pred = infer_posteriors(model, u.mel).argmax(axis=1)
        hits += int((pred == u.labels).sum())
        total += u.n_frames
    return hits / total
