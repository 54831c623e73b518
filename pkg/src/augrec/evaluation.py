"""Objective evaluation: oracle frame error rate and speaker-coloration recovery.

Frame error rate (FER) is measured by an oracle classifier trained with a
different seed from the one used inside fine-tuning.  It is a frame-level
stand-in for phone error rate and is stricter than it, since every
misclassified frame counts.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifier import PhoneClassifier, infer_posteriors
from .errors import ContractError, InsufficientDataError, OracleReuseError
from .toyworld import ToyLanguageSpec

FER_NOTE = ("FER = fraction of frames whose oracle-classifier argmax differs from the duration-expanded "
            "input label; frame-level analogue of phone error rate, stricter than PER.")

ROW_ORDER = ("recording-source", "recording-target", "baseline-finetune", "ablation-no-reg", "augrec-full")


@dataclass
class FERBreakdown:
    errors: int
    frames: int
    errors_impaired: int
    frames_impaired: int
    errors_clean: int
    frames_clean: int

    @property
    def fer(self) -> float:
        return self.errors / self.frames if self.frames else 0.0

    @property
    def fer_impaired(self) -> float:
        return self.errors_impaired / self.frames_impaired if self.frames_impaired else 0.0

    @property
    def fer_clean(self) -> float:
        return self.errors_clean / self.frames_clean if self.frames_clean else 0.0


def frame_errors(oracle: PhoneClassifier, mels: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenated per-frame error flags."""
    if len(mels) != len(labels):
        raise ContractError("one label sequence per spectrogram required")
    flags = []
    for mel, lab in zip(mels, labels):
        lab = np.asarray(lab)
        if len(lab) != len(mel):
            raise ContractError("label length differs from spectrogram length")
        flags.append(infer_posteriors(oracle, mel).argmax(axis=1) != lab)
    return np.concatenate(flags) if flags else np.zeros(0, bool)


def evaluate_fer(oracle: PhoneClassifier, mels, labels, impaired_set=(), training_classifier_id: Optional[str] = None
                 ) -> FERBreakdown:
    """Frame error rate overall and split by whether the label is in ``impaired_set``."""
    if training_classifier_id is not None and oracle.model_id == training_classifier_id:
        raise OracleReuseError("the evaluation oracle must not be the classifier used during training")
    err = frame_errors(oracle, mels, labels)
    lab = np.concatenate([np.asarray(x) for x in labels]) if len(labels) else np.zeros(0, int)
    imp = np.isin(lab, list(impaired_set))
    return FERBreakdown(int(err.sum()), int(err.size), int(err[imp].sum()), int(imp.sum()),
                        int(err[~imp].sum()), int((~imp).sum()))


def estimate_coloration(mels, labels, lang: ToyLanguageSpec, min_frames: int = 10) -> np.ndarray:
    """Per-bin least-squares gain of frames against their phoneme templates.

    Only phonemes with at least ``min_frames`` frames contribute.
    """
    y = np.concatenate([np.asarray(m, dtype=np.float64) for m in mels])
    lab = np.concatenate([np.asarray(x) for x in labels])
    counts = np.bincount(lab, minlength=lang.inventory.size)
    usable = (counts >= min_frames) & (np.abs(lang.templates).sum(axis=1) > 0)
    if not usable.any():
        raise InsufficientDataError(f"no phoneme has at least {min_frames} frames")
    keep = usable[lab]
    tmpl = lang.templates[lab[keep]]
    num = (y[keep] * tmpl).sum(axis=0)
    den = (tmpl * tmpl).sum(axis=0)
    if np.any(den == 0):
        raise InsufficientDataError("some mel bins are not covered by any usable phoneme")
    return num / den


def coloration_similarity(estimated, reference) -> float:
    """Cosine of the mean-removed gain vectors, mapped from [-1, 1] to [0, 1]."""
    a = np.asarray(estimated, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InsufficientDataError("degenerate coloration estimate (no spectral variation)")
    return float((1.0 + a @ b / (na * nb)) / 2.0)


def evaluate_speaker_similarity(mels, labels, lang: ToyLanguageSpec, speaker: int, min_frames: int = 10) -> float:
    return coloration_similarity(estimate_coloration(mels, labels, lang, min_frames), lang.colorations[speaker])


@dataclass
class SystemOutputs:
    """Spectrograms one system produced for the evaluation sentences."""

    name: str
    utt_ids: list
    mels: list
    labels: list


@dataclass
class ReportRow:
    system: str
    fer: float
    fer_impaired: float
    fer_clean: float
    errors: int
    frames: int
    errors_impaired: int
    frames_impaired: int
    errors_clean: int
    frames_clean: int
    speaker_similarity: float
    max_other_speaker_similarity: float
    utterances: int


@dataclass
class EvalReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def row(self, system: str) -> ReportRow:
        for r in self.rows:
            if r.system == system:
                return r
        raise KeyError(system)

    def to_dict(self) -> dict:
        return {"note": FER_NOTE, "meta": self.meta, "rows": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["# " + FER_NOTE])
        writer.writerow(["system", "FER%", "FER_impaired%", "FER_clean%", "speaker_similarity", "frames", "utterances"])
        for r in self.rows:
            writer.writerow([r.system, f"{100 * r.fer:.2f}", f"{100 * r.fer_impaired:.2f}",
                             f"{100 * r.fer_clean:.2f}", f"{r.speaker_similarity:.4f}", r.frames, r.utterances])
        return buf.getvalue()


def build_report(systems: Sequence[SystemOutputs], oracle: PhoneClassifier, lang: ToyLanguageSpec,
                 target_speaker: int, impaired_set, other_speakers=(), training_classifier_id=None,
                 meta: Optional[dict] = None) -> EvalReport:
    """One row per system, in the given order, all on the same sentence set."""
    if not systems:
        raise ContractError("no systems to report")
    ref_ids = list(systems[0].utt_ids)
    for s in systems[1:]:
        if list(s.utt_ids) != ref_ids:
            raise ContractError(f"system {s.name!r} was evaluated on a different sentence set")
    rows = []
    for s in systems:
        b = evaluate_fer(oracle, s.mels, s.labels, impaired_set, training_classifier_id)
        est = estimate_coloration(s.mels, s.labels, lang)
        sim = coloration_similarity(est, lang.colorations[target_speaker])
        others = [coloration_similarity(est, lang.colorations[o]) for o in other_speakers]
        rows.append(ReportRow(s.name, b.fer, b.fer_impaired, b.fer_clean, b.errors, b.frames,
                              b.errors_impaired, b.frames_impaired, b.errors_clean, b.frames_clean,
                              sim, max(others) if others else float("nan"), len(s.mels)))
    m = {"oracle": oracle.model_id, "target_speaker": target_speaker, "impaired_set": list(impaired_set)}
    m.update(meta or {})
    return EvalReport(rows, m)


def write_report(report: EvalReport, out_dir, systems: Sequence[SystemOutputs] = (), n_images: int = 0) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    if n_images:
        (out / "mels").mkdir(exist_ok=True)
        for s in systems:
            for uid, mel in list(zip(s.utt_ids, s.mels))[:n_images]:
                write_pgm(out / "mels" / f"{s.name}__{uid}.pgm", mel)
    return out


def write_pgm(path, mel, lo: float = -0.5, hi: float = 2.5) -> None:
    """Binary greyscale image, frequency bins bottom-up, frames left to right."""
    img = np.clip((np.asarray(mel, dtype=np.float64).T[::-1] - lo) / (hi - lo), 0, 1)
    img = np.rint(255 * img).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())
