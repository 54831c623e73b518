"""End-to-end desk-scale experiment, organised as resumable steps on a run directory.

Run-directory layout (``<runs_root>/<config-hash>-seed<seed>``)::

    config.cfg                    effective configuration
    corpus/pretrain/              clean multi-speaker corpus
    corpus/target_train/          impaired target speaker, fine-tuning split
    corpus/target_heldout/        impaired target speaker, evaluation split
    corpus/source_heldout/        clean rendition of the evaluation sentences
    classifier_train.ckpt         critic used inside fine-tuning
    classifier_oracle.ckpt        independent evaluation oracle
    pretrain/acoustic.ckpt, pretrain/log.jsonl, pretrain/curve.json
    duration.ckpt
    finetune/<stage>/acoustic.ckpt, finetune/<stage>/log.jsonl
    synth/<stage>/                synthesized evaluation sentences (corpus format)
    report/report.json, report/report.csv, report/mels/*.pgm
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .acoustic import AcousticModel, DurationConfig, DurationModel, train_duration_model
from .classifier import ClassifierConfig, PhoneClassifier, train_classifier
from .corpus_io import Corpus, load_corpus, save_corpus
from .errors import ConfigError, MissingArtifactError
from .evaluation import EvalReport, SystemOutputs, build_report, write_report
from .toyworld import (ImpairmentSpec, ToyLanguageSpec, default_impairment, generate_corpus, make_language, render)
from .training import ABLATION, BASELINE, FINETUNE, PRETRAIN, TrainConfig, pretrain_tts, finetune_tts, synthesize
from .types import HyperParams, Utterance

log = logging.getLogger(__name__)

RUNS_ENV = "AUGREC_RUNS"
SECTION = "augrec"
FINETUNE_STAGES = (BASELINE, ABLATION, FINETUNE)
SYSTEM_NAMES = {BASELINE: "baseline-finetune", ABLATION: "ablation-no-reg", FINETUNE: "augrec-full"}


@dataclass
class ExperimentConfig:
    """Every knob of the default experiment; each field is also a CLI flag."""

    seed: int = 7
    n_mels: int = 20
    n_phonemes: int = 12
    noise_scale: float = 0.1
    n_pretrain_speakers: int = 8
    pretrain_sentences: int = 200
    target_sentences: int = 60
    heldout_sentences: int = 30
    source_speaker: int = 0
    n_impaired: int = 3
    impairment_mode: str = "substitution"
    rho: float = 0.85
    classifier_epochs: int = 30
    classifier_batch_size: int = 32
    classifier_lr: float = 1e-3
    pretrain_epochs: int = 60
    pretrain_batch_size: int = 32
    pretrain_lr: float = 1e-3
    duration_epochs: int = 30
    finetune_steps: int = 750
    finetune_batch_size: int = 32
    finetune_lr: float = 1e-4
    mix_ratio: float = 0.5
    stage: str = FINETUNE
    beta: float = 0.05
    gamma: float = 0.3
    lambda_: float = 25.0
    sigma2: float = 1.0
    eps_floor: float = 1e-8
    mask_silence: bool = False
    images: int = 2

    def __post_init__(self):
        if self.heldout_sentences >= self.target_sentences:
            raise ConfigError("heldout_sentences must be smaller than target_sentences")
        if not 0 <= self.source_speaker < self.n_pretrain_speakers:
            raise ConfigError("source_speaker must be one of the pretraining speakers")
        if self.stage not in FINETUNE_STAGES:
            raise ConfigError(f"stage must be one of {FINETUNE_STAGES}")

    @property
    def target_speaker(self) -> int:
        return self.n_pretrain_speakers

    def hp(self) -> HyperParams:
        return HyperParams(self.beta, self.gamma, self.lambda_, self.sigma2, self.eps_floor)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:10]

    def write(self, path) -> None:
        cp = configparser.ConfigParser()
        cp[SECTION] = {config_key(k): str(v) for k, v in self.to_dict().items()}
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def read(cls, path, **overrides) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if cp.sections() != [SECTION]:
            raise ConfigError(f"config must contain exactly one [{SECTION}] section")
        values = {}
        for key, raw in cp[SECTION].items():
            name = field_name(key)
            values[name] = parse_value(name, raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


FIELD_TYPES = {f.name: type(f.default) for f in fields(ExperimentConfig)}


def config_key(name: str) -> str:
    return "lambda" if name == "lambda_" else name


def field_name(key: str) -> str:
    name = "lambda_" if key == "lambda" else key.replace("-", "_")
    if name not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    return name


def parse_value(name: str, raw: str):
    kind = FIELD_TYPES[name]
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {config_key(name)}: {raw!r}") from exc


def runs_root(override=None) -> Path:
    return Path(override or os.environ.get(RUNS_ENV, "runs"))


def run_dir_for(cfg: ExperimentConfig, root=None) -> Path:
    return runs_root(root) / f"{cfg.digest()}-seed{cfg.seed}"


def set_deterministic() -> None:
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path}; run the earlier pipeline step first")
    return path


def _seed(cfg: ExperimentConfig, salt: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, salt]).generate_state(1)[0])


class Run:
    """Pipeline steps reading and writing one run directory."""

    def __init__(self, cfg: ExperimentConfig, path):
        self.cfg = cfg
        self.path = Path(path)

    def _write_config(self):
        self.path.mkdir(parents=True, exist_ok=True)
        self.cfg.write(self.path / "config.cfg")

    # corpus ---------------------------------------------------------------

    def language(self) -> ToyLanguageSpec:
        c = self.cfg
        return make_language(c.seed, c.n_pretrain_speakers + 1, c.n_mels, c.n_phonemes, c.noise_scale)

    def gen_corpus(self) -> None:
        c = self.cfg
        self._write_config()
        lang = self.language()
        imp = default_impairment(lang, c.target_speaker, c.n_impaired, c.rho, c.impairment_mode)
        pre = generate_corpus(lang, list(range(c.n_pretrain_speakers)), c.pretrain_sentences, seed=c.seed,
                              prefix="pre")
        tgt = generate_corpus(lang, [c.target_speaker], c.target_sentences, imp, seed=c.seed, prefix="tgt")
        n_train = c.target_sentences - c.heldout_sentences
        train, held = tgt.utterances[:n_train], tgt.utterances[n_train:]
        source = []
        for u in held:
            rng = np.random.default_rng([c.seed, 0x5C, int(u.utt_id.rsplit("_", 1)[1])])
            mel, mask = render(lang, u.tokens, u.durations, c.source_speaker, rng)
            source.append(Utterance(u.utt_id, c.source_speaker, u.tokens, u.durations, mel, mask))
        for name, utts, extra in (("pretrain", pre.utterances, pre.extra), ("target_train", train, tgt.extra),
                                  ("target_heldout", held, tgt.extra), ("source_heldout", source, pre.extra)):
            save_corpus(utts, lang.inventory, self.path / "corpus" / name, extra=extra)

    def corpus(self, name: str) -> Corpus:
        return load_corpus(_require(self.path / "corpus" / name))

    def lang_and_impairment(self):
        extra = self.corpus("target_heldout").extra
        return ToyLanguageSpec.from_dict(extra["lang"]), ImpairmentSpec.from_dict(extra["impairment"])

    # classifiers ----------------------------------------------------------

    def train_classifiers(self) -> None:
        c = self.cfg
        pre = self.corpus("pretrain")
        cc = ClassifierConfig(c.classifier_epochs, c.classifier_batch_size, c.classifier_lr, inventory=pre.inventory)
        train_classifier(pre, cc, _seed(c, 1)).save(self.path / "classifier_train.ckpt")
        train_classifier(pre, cc, _seed(c, 2)).save(self.path / "classifier_oracle.ckpt")

    def classifier(self, role: str) -> PhoneClassifier:
        return PhoneClassifier.load(_require(self.path / f"classifier_{role}.ckpt"))

    # acoustic model -------------------------------------------------------

    def pretrain(self) -> None:
        c = self.cfg
        pre = self.corpus("pretrain")
        lang = ToyLanguageSpec.from_dict(pre.extra["lang"])
        monitor = generate_corpus(lang, list(range(c.n_pretrain_speakers)), 4, seed=_seed(c, 3), prefix="mon")
        tc = TrainConfig.for_stage(PRETRAIN, epochs=c.pretrain_epochs, batch_size=c.pretrain_batch_size,
                                   lr=c.pretrain_lr, seed=c.seed)
        model, train_log, curve = pretrain_tts(pre, tc, _seed(c, 4), n_speakers=c.n_pretrain_speakers + 1,
                                               heldout=monitor)
        out = self.path / "pretrain"
        out.mkdir(parents=True, exist_ok=True)
        model.save(out / "acoustic.ckpt")
        train_log.write(out / "log.jsonl")
        (out / "curve.json").write_text(json.dumps(curve))
        both = Corpus(pre.utterances + self.corpus("target_train").utterances, pre.inventory)
        dm = train_duration_model(both, model, DurationConfig(epochs=c.duration_epochs), _seed(c, 5))
        dm.save(self.path / "duration.ckpt")

    def acoustic(self, stage: Optional[str] = None) -> AcousticModel:
        sub = "pretrain" if stage is None else f"finetune/{stage}"
        return AcousticModel.load(_require(self.path / sub / "acoustic.ckpt"))

    def finetune(self, stage: Optional[str] = None) -> None:
        c = self.cfg
        stage = stage or c.stage
        model = self.acoustic()
        tc = TrainConfig.for_stage(stage, steps=c.finetune_steps, batch_size=c.finetune_batch_size,
                                   lr=c.finetune_lr, hp=c.hp(), mix_ratio=c.mix_ratio, seed=c.seed,
                                   mask_silence=c.mask_silence)
        model, train_log = finetune_tts(model, self.corpus("target_train"), self.corpus("pretrain"),
                                        self.classifier("train"), tc, _seed(c, 6))
        out = self.path / "finetune" / stage
        out.mkdir(parents=True, exist_ok=True)
        model.save(out / "acoustic.ckpt")
        train_log.write(out / "log.jsonl")

    def synthesize(self, stage: Optional[str] = None) -> None:
        c = self.cfg
        stage = stage or c.stage
        model = self.acoustic(stage)
        dm = DurationModel.load(_require(self.path / "duration.ckpt"))
        held = self.corpus("target_heldout")
        utts = []
        for u in held:
            mel, durations = synthesize(model, dm, u.tokens, c.target_speaker)
            utts.append(Utterance(u.utt_id, c.target_speaker, u.tokens, durations, mel))
        save_corpus(utts, held.inventory, self.path / "synth" / stage, extra={"stage": stage})

    # evaluation -----------------------------------------------------------

    def systems(self) -> list[SystemOutputs]:
        def outputs(name, corpus):
            return SystemOutputs(name, [u.utt_id for u in corpus], [u.mel for u in corpus],
                                 [u.labels for u in corpus])

        rows = [outputs("recording-source", self.corpus("source_heldout")),
                outputs("recording-target", self.corpus("target_heldout"))]
        for stage in FINETUNE_STAGES:
            rows.append(outputs(SYSTEM_NAMES[stage], load_corpus(_require(self.path / "synth" / stage))))
        return rows

    def evaluate(self) -> EvalReport:
        c = self.cfg
        lang, imp = self.lang_and_impairment()
        oracle = self.classifier("oracle")
        critic_id = self.classifier("train").model_id
        meta = {"config_digest": c.digest(), "seed": c.seed}
        report = build_report(self.systems(), oracle, lang, c.target_speaker, imp.phonemes,
                              other_speakers=range(c.n_pretrain_speakers), training_classifier_id=critic_id,
                              meta=meta)
        out = self.path / "report"
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        return report

    def report(self) -> Path:
        report_json = _require(self.path / "report" / "report.json")
        report = load_report(report_json)
        return write_report(report, self.path / "report", self.systems(), self.cfg.images)

    def reproduce(self) -> EvalReport:
        self.gen_corpus()
        self.train_classifiers()
        self.pretrain()
        for stage in FINETUNE_STAGES:
            self.finetune(stage)
            self.synthesize(stage)
        report = self.evaluate()
        self.report()
        return report


def load_report(path) -> EvalReport:
    from .evaluation import ReportRow

    d = json.loads(Path(path).read_text())
    return EvalReport([ReportRow(**r) for r in d["rows"]], d["meta"])


@dataclass
class Criterion:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_report(report: EvalReport) -> list[Criterion]:
    """Ordering criteria of the articulation-repair and speaker-preservation experiment."""
    rec = report.row("recording-target")
    base = report.row("baseline-finetune")
    abl = report.row("ablation-no-reg")
    full = report.row("augrec-full")
    r, b, a, f = rec.fer_impaired, base.fer_impaired, abl.fer_impaired, full.fer_impaired
    return [
        Criterion("impaired recordings FER >= 50%", r >= 0.5, f"{r:.4f}"),
        Criterion("baseline retains impairment (|baseline - recordings| <= 0.15)", abs(b - r) <= 0.15,
                  f"baseline {b:.4f} vs recordings {r:.4f}"),
        Criterion("full <= 50% of baseline impaired FER", f <= 0.5 * b, f"full {f:.4f} vs baseline {b:.4f}"),
        Criterion("ablation between full and baseline, or within 0.02 of full",
                  (f <= a <= b) or abs(a - f) <= 0.02, f"ablation {a:.4f}"),
        Criterion("clean-phoneme FER of full within 0.03 of baseline", abs(full.fer_clean - base.fer_clean) <= 0.03,
                  f"full {full.fer_clean:.4f} vs baseline {base.fer_clean:.4f}"),
        Criterion("speaker similarity of full within 0.05 of baseline",
                  abs(full.speaker_similarity - base.speaker_similarity) <= 0.05,
                  f"full {full.speaker_similarity:.4f} vs baseline {base.speaker_similarity:.4f}"),
        Criterion("full is closer to the target than to any other speaker",
                  full.speaker_similarity > full.max_other_speaker_similarity,
                  f"target {full.speaker_similarity:.4f} vs best other {full.max_other_speaker_similarity:.4f}"),
    ]
