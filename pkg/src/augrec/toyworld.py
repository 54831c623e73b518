"""Synthetic "toy language" corpora with controllable articulation impairment.

Clean frames are ``coloration[speaker] * template[phoneme] + noise``.  A
designated target speaker can have a subset of phonemes corrupted, either by
blending toward a confusable phoneme's template (``substitution``) or by
drawing the frame from the radial impairment density around the clean frame
(``eq1-sampled``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus_io import Corpus
from .errors import ContractError
from .types import PhonemeInventory, Utterance

SUBSTITUTION = "substitution"
EQ1_SAMPLED = "eq1-sampled"


@dataclass
class ToyLanguageSpec:
    inventory: PhonemeInventory
    templates: np.ndarray  # (K, M)
    colorations: np.ndarray  # (S, M), multiplicative gains
    base_durations: np.ndarray  # (K,)
    noise_scale: float = 0.1
    duration_range: tuple[int, int] = (2, 8)
    sentence_length: tuple[int, int] = (4, 12)

    def __post_init__(self):
        self.templates = np.asarray(self.templates, dtype=np.float64)
        self.colorations = np.asarray(self.colorations, dtype=np.float64)
        self.base_durations = np.asarray(self.base_durations, dtype=np.int64)
        k, m = self.templates.shape
        if k != self.inventory.size:
            raise ContractError(f"{k} templates for an inventory of {self.inventory.size}")
        if self.colorations.shape[1] != m:
            raise ContractError("coloration and template widths differ")
        if self.min_template_distance() < 4 * self.noise_scale:
            raise ContractError("templates are not separated by 4x the frame noise scale")

    @property
    def n_mels(self) -> int:
        return self.templates.shape[1]

    @property
    def n_speakers(self) -> int:
        return self.colorations.shape[0]

    def min_template_distance(self) -> float:
        d = np.linalg.norm(self.templates[:, None] - self.templates[None], axis=-1)
        return float(d[~np.eye(len(d), dtype=bool)].min())

    def clean_mean(self, speaker: int, labels) -> np.ndarray:
        return self.colorations[speaker] * self.templates[np.asarray(labels)]

    def to_dict(self) -> dict:
        return {
            "inventory": self.inventory.to_dict(),
            "templates": self.templates.tolist(),
            "colorations": self.colorations.tolist(),
            "base_durations": self.base_durations.tolist(),
            "noise_scale": self.noise_scale,
            "duration_range": list(self.duration_range),
            "sentence_length": list(self.sentence_length),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToyLanguageSpec":
        return cls(
            PhonemeInventory.from_dict(d["inventory"]),
            np.asarray(d["templates"]),
            np.asarray(d["colorations"]),
            np.asarray(d["base_durations"]),
            d["noise_scale"],
            tuple(d["duration_range"]),
            tuple(d["sentence_length"]),
        )


def make_language(seed: int = 0, n_speakers: int = 9, n_mels: int = 20, n_phonemes: int = 12,
                  noise_scale: float = 0.1, bump_height: float = 1.0, floor: float = 0.3,
                  coloration_spread: float = 0.2) -> ToyLanguageSpec:
    """Build templates with two spectral bumps each and random speaker gains.

    Phoneme ``i`` gets bumps at a distinct pair of band centres, so some
    pairs share one bump and are natural confusable partners.
    """
    rng = np.random.default_rng([seed, 0xC0])
    inventory = PhonemeInventory.default(n_phonemes)
    n_centres = 2
    while n_centres * (n_centres - 1) // 2 < n_phonemes:
        n_centres += 1
    centres = np.linspace(1.5, n_mels - 2.5, n_centres)
    pairs = list(itertools.combinations(range(n_centres), 2))[:n_phonemes]
    bins = np.arange(n_mels)
    templates = np.zeros((inventory.size, n_mels))
    for i, (a, b) in enumerate(pairs):
        bump = np.exp(-0.5 * (bins - centres[a]) ** 2) + np.exp(-0.5 * (bins - centres[b]) ** 2)
        templates[inventory.index(f"p{i:02d}")] = floor + bump_height * bump
    colorations = np.exp(coloration_spread * rng.standard_normal((n_speakers, n_mels)))
    lo, hi = 2, 8
    base = rng.integers(3, 7, size=inventory.size)
    base[inventory.silence_id] = 4
    return ToyLanguageSpec(inventory, templates, colorations, base, noise_scale, (lo, hi))


@dataclass
class ImpairmentSpec:
    target_speaker: int
    phonemes: tuple[int, ...]
    mode: str = SUBSTITUTION
    rho: float = 0.85
    confusable: dict = field(default_factory=dict)  # impaired id -> partner id
    alpha: float = 25.0
    sigma2: float = 0.01

    def __post_init__(self):
        self.phonemes = tuple(int(p) for p in self.phonemes)
        self.confusable = {int(k): int(v) for k, v in self.confusable.items()}
        if self.mode not in (SUBSTITUTION, EQ1_SAMPLED):
            raise ContractError(f"unknown impairment mode {self.mode!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ContractError("rho must lie in [0, 1]")
        if self.alpha < 0 or not self.sigma2 > 0:
            raise ContractError("need alpha >= 0 and sigma2 > 0")
        if self.mode == SUBSTITUTION and set(self.confusable) != set(self.phonemes):
            raise ContractError("every impaired phoneme needs a confusable partner")

    def validate(self, lang: ToyLanguageSpec):
        if lang.inventory.silence_id in self.phonemes:
            raise ContractError("silence cannot be impaired")
        if any(p >= lang.inventory.size for p in self.phonemes):
            raise ContractError("impaired phoneme outside inventory")

    def to_dict(self) -> dict:
        return {
            "target_speaker": self.target_speaker,
            "phonemes": list(self.phonemes),
            "mode": self.mode,
            "rho": self.rho,
            "confusable": {str(k): v for k, v in self.confusable.items()},
            "alpha": self.alpha,
            "sigma2": self.sigma2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImpairmentSpec":
        return cls(d["target_speaker"], tuple(d["phonemes"]), d["mode"], d["rho"],
                   {int(k): v for k, v in d["confusable"].items()}, d["alpha"], d["sigma2"])


def default_impairment(lang: ToyLanguageSpec, target_speaker: int, n_impaired: int = 3,
                       rho: float = 0.85, mode: str = SUBSTITUTION) -> ImpairmentSpec:
    """Impair the first ``n_impaired`` phonemes, each toward its nearest clean neighbour."""
    sil = lang.inventory.silence_id
    phones = [i for i in range(lang.inventory.size) if i != sil]
    impaired = phones[:n_impaired]
    partners = {}
    for p in impaired:
        cands = [q for q in phones if q not in impaired]
        d = [np.linalg.norm(lang.templates[p] - lang.templates[q]) for q in cands]
        partners[p] = cands[int(np.argmin(d))]
    return ImpairmentSpec(target_speaker, tuple(impaired), mode, rho, partners)


def sample_impaired_frames(y_clean, alpha: float, sigma2: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` frames from density ``r**alpha * exp(-r**2 / (2 sigma2))`` around ``y_clean``.

    The density is isotropic in ``r = |y - y_clean|``, so ``r**2`` is
    Gamma((alpha + M) / 2, scale 2 sigma2) and the direction is uniform.
    """
    if alpha < 0 or not sigma2 > 0:
        raise ContractError("need alpha >= 0 and sigma2 > 0")
    y_clean = np.asarray(y_clean, dtype=np.float64)
    m = y_clean.shape[-1]
    r = np.sqrt(rng.gamma((alpha + m) / 2.0, 2.0 * sigma2, size=n))
    direction = rng.standard_normal((n, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return y_clean + r[:, None] * direction


def sample_impaired_frame(y_clean_frame, alpha: float, sigma2: float, seed=None) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return sample_impaired_frames(y_clean_frame, alpha, sigma2, 1, rng)[0]


def sample_sentence(lang: ToyLanguageSpec, rng: np.random.Generator):
    """Random token sequence framed by silence, with jittered durations."""
    sil = lang.inventory.silence_id
    lo, hi = lang.sentence_length
    n = int(rng.integers(lo, hi + 1))
    phones = [i for i in range(lang.inventory.size) if i != sil]
    tokens = np.concatenate([[sil], rng.choice(phones, size=n - 2), [sil]]).astype(np.int64)
    jitter = rng.integers(-1, 2, size=n)
    durations = np.clip(lang.base_durations[tokens] + jitter, *lang.duration_range).astype(np.int64)
    return tokens, durations


def render(lang: ToyLanguageSpec, tokens, durations, speaker: int, rng: np.random.Generator,
           impairment: Optional[ImpairmentSpec] = None):
    """Spectrogram (float32) and impaired-frame mask for one token sequence."""
    labels = np.repeat(np.asarray(tokens), np.asarray(durations))
    gain = lang.colorations[speaker]
    means = gain * lang.templates[labels]
    mask = np.zeros(len(labels), dtype=bool)
    if impairment is not None and speaker == impairment.target_speaker:
        mask = np.isin(labels, impairment.phonemes)
        if impairment.mode == SUBSTITUTION:
            for p in impairment.phonemes:
                q = impairment.confusable[p]
                blended = (1 - impairment.rho) * lang.templates[p] + impairment.rho * lang.templates[q]
                means[labels == p] = gain * blended
    mel = means + lang.noise_scale * rng.standard_normal(means.shape)
    if impairment is not None and impairment.mode == EQ1_SAMPLED and mask.any():
        idx = np.flatnonzero(mask)
        for t in idx:
            mel[t] = sample_impaired_frames(mel[t], impairment.alpha, impairment.sigma2, 1, rng)[0]
    return mel.astype(np.float32), mask


def generate_corpus(lang: ToyLanguageSpec, speakers: Sequence[int], sentences_per_speaker,
                    impairment: Optional[ImpairmentSpec] = None, seed: int = 0,
                    prefix: str = "utt") -> Corpus:
    """Deterministic corpus; each utterance draws from its own (seed, speaker, index) stream.

    ``sentences_per_speaker`` is an int or a ``{speaker: count}`` mapping.
    """
    if impairment is not None:
        impairment.validate(lang)
        if impairment.target_speaker not in speakers:
            raise ContractError(f"impaired speaker {impairment.target_speaker} not in speaker list")
    counts = sentences_per_speaker if isinstance(sentences_per_speaker, dict) else {
        s: sentences_per_speaker for s in speakers}
    utterances = []
    for s in speakers:
        if not 0 <= s < lang.n_speakers:
            raise ContractError(f"speaker {s} has no coloration")
        for i in range(counts[s]):
            rng = np.random.default_rng([seed, s, i])
            tokens, durations = sample_sentence(lang, rng)
            mel, mask = render(lang, tokens, durations, s, rng, impairment)
            utterances.append(Utterance(f"{prefix}_s{s:02d}_{i:04d}", s, tokens, durations, mel, mask))
    extra = {"lang": lang.to_dict(), "seed": seed}
    if impairment is not None:
        extra["impairment"] = impairment.to_dict()
    return Corpus(utterances, lang.inventory, list(speakers), extra)


def nearest_template_labels(lang: ToyLanguageSpec, frames, speaker: int) -> np.ndarray:
    """Oracle labelling by nearest coloured template (knows the speaker's gain)."""
    means = lang.colorations[speaker] * lang.templates
    d = ((np.asarray(frames)[:, None, :] - means[None]) ** 2).sum(-1)
    return d.argmin(axis=1)
