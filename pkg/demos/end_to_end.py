"""The articulation-repair experiment at reduced scale, step by step.

Builds the toy world, trains a critic and an oracle classifier, pretrains
the acoustic model on clean speakers, then fine-tunes it on the impaired
target speaker three ways and compares oracle frame error rates.  The full
default experiment is ``augrec reproduce``; this script trims the corpus
and step counts so it finishes in about a minute.

Run: python demos/end_to_end.py
"""

import copy

import numpy as np
import torch

from augrec.acoustic import DurationConfig, train_duration_model
from augrec.classifier import ClassifierConfig, train_classifier
from augrec.corpus_io import Corpus
from augrec.evaluation import ROW_ORDER, SystemOutputs, build_report
from augrec.toyworld import default_impairment, generate_corpus, make_language, render
from augrec.training import ABLATION, BASELINE, FINETUNE, PRETRAIN, TrainConfig, finetune_tts, pretrain_tts, synthesize
from augrec.types import Utterance

torch.set_num_threads(1)
SEED, TARGET = 7, 8

lang = make_language(SEED, n_speakers=9)
imp = default_impairment(lang, TARGET)
print("impaired phonemes:", imp.phonemes, "-> substituted toward", [imp.confusable[p] for p in imp.phonemes])

pre = generate_corpus(lang, list(range(8)), 80, seed=SEED, prefix="pre")
tgt = generate_corpus(lang, [TARGET], 50, imp, seed=SEED, prefix="tgt")
train, held = Corpus(tgt.utterances[:30], tgt.inventory), tgt.utterances[30:]

critic = train_classifier(pre, ClassifierConfig(epochs=15), seed=1)
oracle = train_classifier(pre, ClassifierConfig(epochs=15), seed=2)

model, _, curve = pretrain_tts(pre, TrainConfig.for_stage(PRETRAIN, epochs=30), seed=SEED, n_speakers=9)
dm = train_duration_model(Corpus(pre.utterances + train.utterances, pre.inventory), model, seed=SEED)


def as_system(name, utts):
    return SystemOutputs(name, [u.utt_id for u in utts], [u.mel for u in utts], [u.labels for u in utts])


# the same sentences spoken by clean speaker 0
source = []
for i, u in enumerate(held):
    mel, _ = render(lang, u.tokens, u.durations, 0, np.random.default_rng([SEED, i]))
    source.append(Utterance(u.utt_id, 0, u.tokens, u.durations, mel))
systems = [as_system("recording-source", source), as_system("recording-target", held)]

for stage, name in ((BASELINE, "baseline-finetune"), (ABLATION, "ablation-no-reg"), (FINETUNE, "augrec-full")):
    tuned, log = finetune_tts(copy.deepcopy(model), train, pre, critic, TrainConfig(stage, steps=300), seed=SEED)
    last = log.records[-1]
    print(f"{name:18s} last step: rec/frame {last['l_rec'] / last['frame_count']:.4f} "
          f"consis/frame {last['l_consis'] / last['frame_count']:.3f}")
    synth = []
    for u in held:
        mel, d = synthesize(tuned, dm, u.tokens, TARGET)
        synth.append(Utterance(u.utt_id, TARGET, u.tokens, d, mel))
    systems.append(as_system(name, synth))

report = build_report(systems, oracle, lang, TARGET, imp.phonemes, other_speakers=range(8),
                      training_classifier_id=critic.model_id)
assert [r.system for r in report.rows] == list(ROW_ORDER)
print()
print(report.to_csv())
