"""Acoustic model: token encoder, length regulator, speaker-conditioned decoder.

Dataflow: token ids -> embedding -> convolutional encoder -> hidden states
``h`` (one per token) -> replicate each by its duration -> concatenate the
speaker embedding on every frame -> convolutional decoder -> mel frames.
A separate :class:`DurationModel` predicts durations at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from .batching import Batch, epoch_batches
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus_io import Corpus
from .errors import ContractError, ShapeMismatchError
from .types import PhonemeInventory


def length_regulate(h: torch.Tensor, durations) -> torch.Tensor:
    """Repeat row ``n`` of ``h`` (N, D) ``durations[n]`` times."""
    d = torch.as_tensor(np.asarray(durations) if not isinstance(durations, torch.Tensor) else durations,
                        dtype=torch.int64)
    if d.ndim != 1 or len(d) != h.shape[0]:
        raise ShapeMismatchError(f"{h.shape[0]} hidden vectors but {len(d)} durations")
    if bool((d < 1).any()):
        raise ContractError("durations must all be >= 1")
    return torch.repeat_interleave(h, d, dim=0)


def length_regulate_batch(h: torch.Tensor, durations: torch.Tensor, token_mask: torch.Tensor):
    """Batched length regulation; returns ``(B, T_max, D)`` and the frame mask."""
    d = torch.where(token_mask, durations, torch.zeros_like(durations))
    lengths = d.sum(dim=1)
    t_max = int(lengths.max())
    out = h.new_zeros(h.shape[0], t_max, h.shape[2])
    for b in range(h.shape[0]):
        n = int(token_mask[b].sum())
        out[b, : int(lengths[b])] = torch.repeat_interleave(h[b, :n], d[b, :n], dim=0)
    mask = torch.arange(t_max)[None, :] < lengths[:, None]
    return out, mask


class ConvStack(nn.Module):
    """Same-padded 1-D convolutions with ReLU between; masks padding each layer."""

    def __init__(self, dims, kernel_size: int, final_activation: bool = True):
        super().__init__()
        self.layers = nn.ModuleList(
            nn.Conv1d(a, b, kernel_size, padding=kernel_size // 2) for a, b in zip(dims, dims[1:])
        )
        self.final_activation = final_activation

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        # x: (B, T, C)
        x = x.transpose(1, 2)
        m = None if mask is None else mask[:, None, :].to(x.dtype)
        for i, layer in enumerate(self.layers):
            x = layer(x if m is None else x * m)
            if i < len(self.layers) - 1 or self.final_activation:
                x = torch.relu(x)
        if m is not None:
            x = x * m
        return x.transpose(1, 2)


class AcousticModel(nn.Module):
    def __init__(self, n_tokens: int, n_speakers: int, n_mels: int, token_dim: int = 32, hidden: int = 64,
                 speaker_dim: int = 16, encoder_layers: int = 2, decoder_layers: int = 3,
                 encoder_kernel: int = 5, decoder_kernel: int = 3, inventory_digest: str = ""):
        super().__init__()
        self.dims = dict(n_tokens=n_tokens, n_speakers=n_speakers, n_mels=n_mels, token_dim=token_dim,
                         hidden=hidden, speaker_dim=speaker_dim, encoder_layers=encoder_layers,
                         decoder_layers=decoder_layers, encoder_kernel=encoder_kernel,
                         decoder_kernel=decoder_kernel)
        self.inventory_digest = inventory_digest
        self.token_embedding = nn.Embedding(n_tokens, token_dim)
        self.encoder = ConvStack([token_dim] + [hidden] * encoder_layers, encoder_kernel)
        self.speaker_embedding = nn.Embedding(n_speakers, speaker_dim)
        self.decoder = ConvStack([hidden + speaker_dim] + [hidden] * (decoder_layers - 1) + [n_mels],
                                 decoder_kernel, final_activation=False)

    @property
    def n_mels(self) -> int:
        return self.dims["n_mels"]

    def encoder_parameters(self):
        return list(self.token_embedding.parameters()) + list(self.encoder.parameters())

    def decoder_parameters(self):
        return list(self.decoder.parameters()) + list(self.speaker_embedding.parameters())

    def _check_tokens(self, tokens: torch.Tensor):
        if bool((tokens < 0).any()) or bool((tokens >= self.dims["n_tokens"]).any()):
            raise ContractError("token id outside the inventory")

    def encode_batch(self, tokens: torch.Tensor, token_mask: torch.Tensor) -> torch.Tensor:
        self._check_tokens(tokens)
        return self.encoder(self.token_embedding(tokens), token_mask)

    def decode_batch(self, h_frames: torch.Tensor, frame_mask: torch.Tensor, speakers: torch.Tensor):
        if bool((speakers < 0).any()) or bool((speakers >= self.dims["n_speakers"]).any()):
            raise ContractError("unknown speaker id")
        s = self.speaker_embedding(speakers)[:, None, :].expand(-1, h_frames.shape[1], -1)
        return self.decoder(torch.cat([h_frames, s], dim=-1), frame_mask)

    def forward_batch(self, tokens, token_mask, durations, speakers):
        h = self.encode_batch(tokens, token_mask)
        h_frames, frame_mask = length_regulate_batch(h, durations, token_mask)
        return self.decode_batch(h_frames, frame_mask, speakers), frame_mask

    def forward_utts(self, batch: Batch):
        return self.forward_batch(batch.tokens, batch.token_mask, batch.durations, batch.speakers)

    def meta(self) -> dict:
        return {"kind": "acoustic-model", "inventory_digest": self.inventory_digest, **self.dims}

    def save(self, path):
        return save_checkpoint(path, self.state_dict(), self.meta())

    @classmethod
    def load(cls, path, inventory: Optional[PhonemeInventory] = None) -> "AcousticModel":
        state, meta = load_checkpoint(path, "acoustic-model", inventory.digest() if inventory else None)
        dims = {k: v for k, v in meta.items() if k not in ("kind", "inventory_digest")}
        model = cls(**dims, inventory_digest=meta["inventory_digest"])
        model.load_state_dict(state)
        return model


def encode(model: AcousticModel, tokens) -> torch.Tensor:
    """Hidden states ``(N, hidden)`` for one token sequence."""
    t = torch.as_tensor(np.asarray(tokens), dtype=torch.int64)
    if t.ndim != 1 or len(t) == 0:
        raise ContractError("tokens must be a non-empty 1-D sequence")
    with torch.no_grad():
        return model.encode_batch(t[None], torch.ones(1, len(t), dtype=torch.bool))[0]


def forward(model: AcousticModel, tokens, durations, speaker: int) -> np.ndarray:
    """Mel ``(sum(durations), M)`` for one utterance, without gradient."""
    t = torch.as_tensor(np.asarray(tokens), dtype=torch.int64)[None]
    d = torch.as_tensor(np.asarray(durations), dtype=torch.int64)[None]
    if t.shape != d.shape:
        raise ShapeMismatchError("tokens and durations differ in length")
    if bool((d < 1).any()):
        raise ContractError("durations must all be >= 1")
    with torch.no_grad():
        mel, _ = model.forward_batch(t, torch.ones_like(t, dtype=torch.bool), d,
                                     torch.tensor([int(speaker)]))
    return mel[0].numpy()


class DurationModel(nn.Module):
    """Per-token log-duration regressor on encoder states plus a speaker embedding."""

    def __init__(self, hidden_in: int, n_speakers: int, speaker_dim: int = 8, hidden: int = 32,
                 kernel_size: int = 3, inventory_digest: str = ""):
        super().__init__()
        self.dims = dict(hidden_in=hidden_in, n_speakers=n_speakers, speaker_dim=speaker_dim,
                         hidden=hidden, kernel_size=kernel_size)
        self.inventory_digest = inventory_digest
        self.speaker_embedding = nn.Embedding(n_speakers, speaker_dim)
        self.net = ConvStack([hidden_in + speaker_dim, hidden, 1], kernel_size, final_activation=False)

    def forward(self, h: torch.Tensor, token_mask: torch.Tensor, speakers: torch.Tensor) -> torch.Tensor:
        s = self.speaker_embedding(speakers)[:, None, :].expand(-1, h.shape[1], -1)
        return self.net(torch.cat([h, s], dim=-1), token_mask)[..., 0]

    def meta(self) -> dict:
        return {"kind": "duration-model", "inventory_digest": self.inventory_digest, **self.dims}

    def save(self, path):
        return save_checkpoint(path, self.state_dict(), self.meta())

    @classmethod
    def load(cls, path, inventory: Optional[PhonemeInventory] = None) -> "DurationModel":
        state, meta = load_checkpoint(path, "duration-model", inventory.digest() if inventory else None)
        dims = {k: v for k, v in meta.items() if k not in ("kind", "inventory_digest")}
        model = cls(**dims, inventory_digest=meta["inventory_digest"])
        model.load_state_dict(state)
        return model


@dataclass
class DurationConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3


def train_duration_model(corpus: Corpus, acoustic: AcousticModel, config: DurationConfig = DurationConfig(),
                         seed: int = 0) -> DurationModel:
    """Squared error on log-durations, reading the acoustic model's encoder (not updated)."""
    if len(corpus) == 0:
        raise ContractError("cannot train a duration model on an empty corpus")
    torch.manual_seed(seed)
    rng = np.random.default_rng([seed, 0xD0])
    dm = DurationModel(acoustic.dims["hidden"], acoustic.dims["n_speakers"],
                       inventory_digest=acoustic.inventory_digest)
    opt = torch.optim.Adam(dm.parameters(), lr=config.lr)
    utts = corpus.utterances
    for _ in range(config.epochs):
        for idx in epoch_batches(len(utts), config.batch_size, rng):
            batch = Batch([utts[i] for i in idx])
            with torch.no_grad():
                h = acoustic.encode_batch(batch.tokens, batch.token_mask)
            pred = dm(h, batch.token_mask, batch.speakers)
            target = torch.log(batch.durations.clamp(min=1).float())
            err = ((pred - target) ** 2)[batch.token_mask].mean()
            opt.zero_grad()
            err.backward()
            opt.step()
    dm.eval()
    return dm


def clamp_durations(raw) -> np.ndarray:
    """Round frame counts and clamp to at least one frame."""
    return np.maximum(np.rint(np.asarray(raw, dtype=np.float64)), 1).astype(np.int64)


def predict_durations(dm: DurationModel, h: torch.Tensor, speaker: int) -> np.ndarray:
    """Integer durations (>= 1) for hidden states ``h`` of shape ``(N, hidden)``."""
    with torch.no_grad():
        log_d = dm(h[None], torch.ones(1, h.shape[0], dtype=torch.bool), torch.tensor([int(speaker)]))[0]
    return clamp_durations(torch.exp(log_d).numpy())
