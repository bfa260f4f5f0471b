"""Evaluation: beam decode a manifest, score it, and emit the per-sentence
report, corpus accuracy, and the 12-class confusion table."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..corpus import vocab
from ..corpus.data import load_manifest, make_buckets, collate
from ..errors import ConfigError
from ..gradcore import load_checkpoint
from ..model import encode
from ..objectives import (sentence_counts, ScoreCounts, confusion_matrix,
                          ConfusionMatrix)
from .build import Model, build_model, RecordLoader, load_model_weights, \
    frontend_forward
from .config import ExperimentConfig, load_config
from .train import decode_single, CONFIG_FILE


@dataclass
class SentenceResult:
    clip_id: str
    ref: list[int]
    hyp: list[int]
    subs: int
    dels: int
    ins: int


@dataclass
class EvalResult:
    counts: ScoreCounts
    confusion: ConfusionMatrix
    sentences: list[SentenceResult] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.counts.accuracy


def load_model_from_checkpoint(ckpt_path, cfg: ExperimentConfig | None = None) -> Model:
    if cfg is None:
        sidecar = os.path.join(os.path.dirname(os.path.abspath(ckpt_path)), CONFIG_FILE)
        if not os.path.exists(sidecar):
            raise ConfigError(f"no config given and no {CONFIG_FILE} beside {ckpt_path}")
        cfg = load_config(sidecar)
    model = build_model(cfg)
    params, _ = load_checkpoint(ckpt_path)
    load_model_weights(model, params)
    return model


def run_eval(ckpt_path, manifest, beam_width: int | None = None,
             cfg: ExperimentConfig | None = None, out_dir=None) -> EvalResult:
    model = load_model_from_checkpoint(ckpt_path, cfg)
    config = model.config
    width = beam_width if beam_width is not None else config.beam_width
    records = load_manifest(manifest)
    loader = RecordLoader(config)

    sentences: dict[str, SentenceResult] = {}
    buckets = make_buckets(records)
    for key in sorted(buckets):
        grp = buckets[key]
        for i in range(0, len(grp), config.batch_size):
            group = grp[i:i + config.batch_size]
            batch = collate(group, loader)
            feats = frontend_forward(model, batch, training=False, rng=None, tape=None)
            enc_out = encode(model.encoder, feats, batch.feature_lengths,
                             cell_clip=config.cell_clip, training=False)
            for b, rec in enumerate(group):
                toks = decode_single(model, enc_out, b, width)
                hyp = [t - 1 for t in toks]
                ref = list(rec.tokens)
                c = sentence_counts(ref, hyp)
                sentences[rec.clip_id] = SentenceResult(rec.clip_id, ref, hyp,
                                                        c.subs, c.dels, c.ins)
    ordered = [sentences[r.clip_id] for r in records]
    counts = ScoreCounts()
    for s in ordered:
        counts.add(sentence_counts(s.ref, s.hyp))
    conf = confusion_matrix([s.ref for s in ordered], [s.hyp for s in ordered],
                            vocab.N_VISEMES)
    result = EvalResult(counts, conf, ordered)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_report(os.path.join(out_dir, "eval_report.txt"), result)
        write_confusion(os.path.join(out_dir, "confusion.txt"), conf)
    return result


def write_report(path, result: EvalResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in result.sentences:
            fh.write(f"clip={s.clip_id}\n")
            fh.write(f"  ref: {' '.join(vocab.tokens_to_names(s.ref))}\n")
            fh.write(f"  hyp: {' '.join(vocab.tokens_to_names(s.hyp))}\n")
            fh.write(f"  S={s.subs} D={s.dels} I={s.ins}\n")
        c = result.counts
        fh.write(f"corpus: N={c.n_ref} S={c.subs} D={c.dels} I={c.ins} "
                 f"accuracy={c.accuracy:.2f} error_rate={c.error_rate:.2f}\n")


def write_confusion(path, conf: ConfusionMatrix) -> None:
    acc = conf.per_class_accuracy()
    with open(path, "w", encoding="utf-8") as fh:
        header = "viseme".ljust(22) + " ".join(f"{n[:6]:>7}" for n in vocab.SHORT_NAMES)
        fh.write(header + f" {'dels':>6} {'acc%':>7}\n")
        for i, name in enumerate(vocab.SHORT_NAMES):
            row = " ".join(f"{conf.counts[i, j]:7d}" for j in range(conf.n_classes))
            a = f"{acc[i]:7.2f}" if np.isfinite(acc[i]) else "    n/a"
            fh.write(f"{name:<22}{row} {conf.dels[i]:6d} {a}\n")
        fh.write(f"insertions_total={conf.ins_total}\n")
