"""Training protocol: multi-speaker pretraining, then target-speaker fine-tuning.

Fine-tuning freezes the token embedding and encoder, treats the phone
classifier as a fixed differentiable critic, and mixes clean multi-speaker
utterances into every batch so the generator cannot drift into regions
where only the critic is fooled.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .acoustic import AcousticModel, DurationModel, encode, forward, predict_durations
from .batching import Batch, epoch_batches
from .classifier import PhoneClassifier, is_frozen
from .corpus_io import Corpus
from .errors import ConfigError, ContractError, IncompatibleArtifactError, InventoryMismatchError
from .loss import breakdown, loss_terms
from .types import HyperParams, LossBreakdown

log = logging.getLogger(__name__)

PRETRAIN = "pretrain"
FINETUNE = "finetune"
BASELINE = "baseline-finetune"
ABLATION = "ablation-no-reg"
STAGES = (PRETRAIN, FINETUNE, BASELINE, ABLATION)


@dataclass
class TrainConfig:
    stage: str = FINETUNE
    epochs: int = 60
    steps: int = 750
    batch_size: int = 32
    lr: float = 1e-4
    hp: HyperParams = field(default_factory=HyperParams)
    mix_ratio: float = 0.5
    seed: int = 0
    checkpoint_every: int = 0
    mask_silence: bool = False

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.epochs < 1 or self.steps < 1 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("epochs, steps, batch_size and lr must be positive")
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ConfigError("mix_ratio must lie in [0, 1]")
        if self.stage == BASELINE:
            self.hp = replace(self.hp, beta=0.0, gamma=0.0)
        elif self.stage == ABLATION:
            self.hp = replace(self.hp, beta=0.0)

    @classmethod
    def for_stage(cls, stage: str, **overrides) -> "TrainConfig":
        defaults = {"lr": 1e-3} if stage == PRETRAIN else {}
        defaults.update(overrides)
        return cls(stage=stage, **defaults)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hp"] = asdict(self.hp)
        return d


class TrainingLog:
    """Per-step loss records; serialised as JSON lines."""

    def __init__(self):
        self.records: list[dict] = []

    def add(self, step: int, stage: str, b: LossBreakdown, **extra):
        self.records.append({"step": step, "stage": stage, **b.as_record(), **extra})

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records))
        return path

    @staticmethod
    def read(path) -> list[dict]:
        return [json.loads(line) for line in Path(path).read_text().splitlines() if line]


def _flatten(frame_mask: torch.Tensor, *tensors):
    return [t[frame_mask] for t in tensors]


def pretrain_tts(corpus: Corpus, config: TrainConfig, seed: int = 0, n_speakers: Optional[int] = None,
                 heldout: Optional[Corpus] = None):
    """Reconstruction-only training of every parameter.

    Returns ``(model, log, epoch_heldout_rec)``, the last being the mean
    per-frame reconstruction loss on ``heldout`` after each epoch (empty
    when no held-out set is given).
    """
    if len(corpus) == 0:
        raise ContractError("empty pretraining corpus")
    speakers = sorted({u.speaker for u in corpus})
    if len(speakers) < 2:
        log.warning("pretraining on a single speaker; the speaker table carries little information")
    n_speakers = n_speakers or max(speakers) + 1
    torch.manual_seed(seed)
    rng = np.random.default_rng([seed, 0x7E])
    model = AcousticModel(corpus.inventory.size, n_speakers, corpus.n_mels,
                          inventory_digest=corpus.inventory.digest())
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    train_log = TrainingLog()
    curve = []
    utts = corpus.utterances
    step = 0
    for epoch in range(config.epochs):
        for idx in epoch_batches(len(utts), config.batch_size, rng):
            batch = Batch([utts[i] for i in idx])
            y, mask = model.forward_utts(batch)
            y_star, y_hat = _flatten(mask, batch.mel, y)
            n = y_hat.shape[0]
            l_rec = ((y_star - y_hat) ** 2).sum()
            opt.zero_grad()
            (l_rec / n).backward()
            opt.step()
            train_log.add(step, PRETRAIN, LossBreakdown(l_rec.item(), 0.0, 0.0, l_rec.item(), n), epoch=epoch)
            step += 1
        if heldout is not None:
            curve.append(reconstruction_per_frame(model, heldout))
    return model, train_log, curve


def reconstruction_per_frame(model: AcousticModel, corpus: Corpus) -> float:
    with torch.no_grad():
        batch = Batch(corpus.utterances)
        y, mask = model.forward_utts(batch)
        y_star, y_hat = _flatten(mask, batch.mel, y)
        return float(((y_star - y_hat) ** 2).sum() / y_hat.shape[0])


def _check_compatible(model: AcousticModel, classifier: PhoneClassifier, *corpora: Corpus):
    for c in corpora:
        if c.inventory.digest() != model.inventory_digest:
            raise InventoryMismatchError("corpus inventory differs from the acoustic model's")
    if classifier.inventory_digest != model.inventory_digest:
        raise InventoryMismatchError("classifier and acoustic model use different inventories")
    if classifier.n_mels != model.n_mels:
        raise IncompatibleArtifactError("classifier and acoustic model disagree on M")


def _truth_posteriors(classifier: PhoneClassifier, utts) -> dict:
    out = {}
    with torch.no_grad():
        for u in utts:
            lp = classifier.log_posteriors(torch.from_numpy(np.asarray(u.mel, np.float32))[None])[0]
            out[u.utt_id] = torch.exp(lp[torch.arange(u.n_frames), torch.from_numpy(u.labels)])
    return out


def batch_composition(step: int, batch_size: int, mix_ratio: float) -> int:
    """Number of multi-speaker utterances in the batch at ``step``.

    Carries the fractional part forward so the running share tracks
    ``mix_ratio`` to within one utterance over any window.
    """
    return int(np.floor((step + 1) * batch_size * mix_ratio + 1e-9) - np.floor(step * batch_size * mix_ratio + 1e-9))


class _Cycler:
    """Endless seeded permutations over ``n`` items."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n, self.rng, self.buf = n, rng, []

    def take(self, k: int) -> list[int]:
        out = []
        while len(out) < k:
            if not self.buf:
                self.buf = list(self.rng.permutation(self.n))
            out.append(int(self.buf.pop()))
        return out


def finetune_tts(model: AcousticModel, target: Corpus, multispeaker: Corpus, classifier: PhoneClassifier,
                 config: TrainConfig, seed: int = 0, step_hook=None):
    """Fine-tune the decoder and speaker table with the augmented loss.

    Returns ``(model, log)``.  ``model`` is updated in place.  ``step_hook``
    (if given) is called as ``step_hook(step, model, batch_utts)`` after each
    optimiser step.
    """
    if config.stage == PRETRAIN:
        raise ConfigError("finetune_tts needs a fine-tuning stage")
    if not is_frozen(classifier):
        raise ContractError("the phone classifier must be frozen before fine-tuning")
    if len(target) == 0:
        raise ContractError("empty target corpus")
    n_multi_max = int(np.ceil(config.batch_size * config.mix_ratio))
    if n_multi_max and len(multispeaker) == 0:
        raise ContractError("mixing requested but the multi-speaker pool is empty")
    _check_compatible(model, classifier, target, multispeaker)

    torch.manual_seed(seed)
    rng = np.random.default_rng([seed, 0xF7])
    for p in model.encoder_parameters():
        p.requires_grad_(False)
    trainable = model.decoder_parameters()
    opt = torch.optim.Adam(trainable, lr=config.lr)
    hp = config.hp
    sil = target.inventory.silence_id

    p_star_cache = _truth_posteriors(classifier, list(target) + list(multispeaker))
    tgt_cycle = _Cycler(len(target), rng)
    multi_cycle = _Cycler(max(len(multispeaker), 1), rng)
    train_log = TrainingLog()
    for step in range(config.steps):
        n_multi = batch_composition(step, config.batch_size, config.mix_ratio)
        utts = [target.utterances[i] for i in tgt_cycle.take(config.batch_size - n_multi)]
        utts += [multispeaker.utterances[i] for i in multi_cycle.take(n_multi)]
        batch = Batch(utts)
        y, mask = model.forward_utts(batch)
        log_p = classifier.log_posteriors(y, mask)
        log_p_gen = log_p.gather(-1, batch.labels[..., None])[..., 0]
        p_star = torch.zeros(mask.shape)
        for b, u in enumerate(utts):
            p_star[b, : u.n_frames] = p_star_cache[u.utt_id]
        y_star, y_hat, ps, lpg, lab = _flatten(mask, batch.mel, y, p_star, log_p_gen, batch.labels)
        frame_mask = (lab != sil).double() if config.mask_silence else None
        # float64 loss so the logged components recompose the logged total exactly
        terms = loss_terms(y_star.double(), y_hat.double(), ps.double(), hp=hp, log_p_gen=lpg.double(),
                           frame_mask=frame_mask)
        n = y_hat.shape[0]
        opt.zero_grad()
        (terms["l_total"] / n).backward()
        opt.step()
        train_log.add(step, config.stage, breakdown(terms, n, hp), n_multi=n_multi,
                      n_target=len(utts) - n_multi)
        if step_hook is not None:
            step_hook(step, model, utts)
    for p in model.encoder_parameters():
        p.requires_grad_(True)
    return model, train_log


def synthesize(model: AcousticModel, dm: DurationModel, tokens, speaker: int):
    """Mel and the predicted durations used to produce it."""
    h = encode(model, tokens)
    durations = predict_durations(dm, h, speaker)
    return forward(model, tokens, durations, speaker).astype(np.float32), durations
