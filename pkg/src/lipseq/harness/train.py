"""The training loop: epochs of shuffled, bucketed batches through the full
pipeline (front-end -> encoder -> decoder -> loss -> backward -> L2 ->
global-norm clip -> Adam), per-epoch held-out accuracy, best checkpointing,
and plateau-based convergence tracking.

All per-epoch randomness (shuffle order, dropout masks, scheduled-sampling
draws) derives from (seed, epoch), so runs are bit-reproducible and a run
resumed from the last checkpoint continues exactly as the uninterrupted one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..corpus import vocab
from ..corpus.data import (epoch_record_batches, collate, load_manifest,
                           stream_rng, make_buckets)
from ..errors import ConfigError, DataError, NumericError
from ..gradcore import (Tape, backward, OptimizerState, training_step,
                        save_checkpoint, load_checkpoint, restore_optimizer)
from ..model import encode, prepare_inference, init_decode_state, decoder_step_infer
from ..objectives import greedy_decode_batch, beam_search_decode, default_max_len, \
    sentence_counts, ScoreCounts
from .build import Model, build_model, RecordLoader, forward_batch, frontend_forward
from .config import ExperimentConfig, save_config

STATE_FILE = "train_state.txt"
LOG_FILE = "train.log"
BEST_CKPT = "best.ckpt"
LAST_CKPT = "last.ckpt"
CONFIG_FILE = "config.txt"


@dataclass
class TrainResult:
    best_acc: float
    best_epoch: int
    converged_epoch: int
    epochs_run: int
    out_dir: str
    log_lines: list[str] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    @property
    def best_checkpoint(self) -> str:
        return os.path.join(self.out_dir, BEST_CKPT)

    @property
    def last_checkpoint(self) -> str:
        return os.path.join(self.out_dir, LAST_CKPT)


def evaluate_greedy(model: Model, records, loader, batch_size: int = 16,
                    beam_width: int = 1) -> ScoreCounts:
    """Held-out scoring with width-1 (greedy) or small-beam decoding."""
    counts = ScoreCounts()
    buckets = make_buckets(records)
    groups = []
    for key in sorted(buckets):
        grp = buckets[key]
        for i in range(0, len(grp), batch_size):
            groups.append(grp[i:i + batch_size])
    cfg = model.config
    exclude = (vocab.PAD_ID, vocab.START_ID)
    for group in groups:
        batch = collate(group, loader)
        feats = frontend_forward(model, batch, training=False, rng=None, tape=None)
        enc_out = encode(model.encoder, feats, batch.feature_lengths,
                         cell_clip=cfg.cell_clip, training=False)
        max_len = default_max_len(int(batch.feature_lengths.max()))
        if beam_width <= 1:
            ctxinfo = prepare_inference(model.decoder, enc_out)
            state = init_decode_state(model.decoder, enc_out)
            step = lambda s, t: decoder_step_infer(model.decoder, ctxinfo, s, t,
                                                   cfg.cell_clip)
            hyp_tokens = greedy_decode_batch(step, state, vocab.START_ID,
                                             vocab.END_ID, max_len, exclude)
        else:
            hyp_tokens = [decode_single(model, enc_out, b, beam_width)
                          for b in range(batch.size)]
        for b, rec in enumerate(group):
            hyp = [t - 1 for t in hyp_tokens[b]]
            counts.add(sentence_counts(list(rec.tokens), hyp))
    return counts


def decode_single(model: Model, enc_out, index: int, width: int):
    """Beam decode one element of an encoded batch; returns decoder-space tokens."""
    from ..model.encoder import EncoderOutput
    from ..gradcore import Tensor

    sl = slice(index, index + 1)
    sub = EncoderOutput(
        Tensor(enc_out.memory.data[:, sl]),
        [(Tensor(h.data[sl]), Tensor(c.data[sl])) for h, c in enc_out.init_states],
        enc_out.lengths[sl], enc_out.mask[:, sl])
    t_len = int(sub.lengths[0])
    sub = EncoderOutput(Tensor(sub.memory.data[:t_len]), sub.init_states,
                        sub.lengths, sub.mask[:t_len])
    cfg = model.config
    ctxinfo = prepare_inference(model.decoder, sub)
    state = init_decode_state(model.decoder, sub)
    step = lambda s, t: decoder_step_infer(model.decoder, ctxinfo, s, t, cfg.cell_clip)
    hyps = beam_search_decode(step, state, vocab.START_ID, vocab.END_ID,
                              width=width, max_len=default_max_len(t_len),
                              exclude_ids=(vocab.PAD_ID, vocab.START_ID),
                              length_normalize=cfg.length_normalize)
    return hyps[0].tokens if hyps else []


def _read_state(path) -> dict:
    state = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.strip().split("=", 1)
                state[k] = v
    return state


def _write_state(path, epoch: int, best_acc: float, best_epoch: int,
                 converged_epoch: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"next_epoch={epoch}\n")
        fh.write(f"best_acc={best_acc:.6f}\n")
        fh.write(f"best_epoch={best_epoch}\n")
        fh.write(f"converged_epoch={converged_epoch}\n")


def run_training(cfg: ExperimentConfig, train_manifest, out_dir,
                 eval_manifest=None, resume: bool = False,
                 echo=None) -> TrainResult:
    """Train a model per config; writes checkpoints, config, and a
    deterministic key=value log under out_dir."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    train_records = load_manifest(train_manifest)
    if not train_records:
        raise DataError(f"empty train manifest {train_manifest}")
    if eval_manifest:
        eval_records = load_manifest(eval_manifest)
    else:
        # hold out every 10th record, deterministically
        eval_records = [r for i, r in enumerate(train_records) if i % 10 == 9]
        train_records = [r for i, r in enumerate(train_records) if i % 10 != 9]
        if not eval_records:
            eval_records = train_records[:1]
    loader = RecordLoader(cfg)

    model = build_model(cfg)
    opt = OptimizerState(model.params, lr=cfg.lr, clip_norm=cfg.clip_norm,
                         l2={"recurrent": cfg.l2_recurrent, "conv": cfg.l2_conv})
    start_epoch = 0
    best_acc = -np.inf
    best_epoch = -1
    converged_epoch = 0
    log_lines: list[str] = []
    history: list[dict] = []

    state_path = os.path.join(out_dir, STATE_FILE)
    if resume:
        ckpt = os.path.join(out_dir, LAST_CKPT)
        if not (os.path.exists(ckpt) and os.path.exists(state_path)):
            raise ConfigError(f"cannot resume: missing {ckpt} or {state_path}")
        params, opt_dict = load_checkpoint(ckpt)
        from .build import load_model_weights
        load_model_weights(model, params)
        if opt_dict is None:
            raise ConfigError("last checkpoint lacks optimizer state")
        opt = restore_optimizer(opt_dict, model.params)
        st = _read_state(state_path)
        start_epoch = int(st["next_epoch"])
        best_acc = float(st["best_acc"])
        best_epoch = int(st["best_epoch"])
        converged_epoch = int(st["converged_epoch"])

    save_config(os.path.join(out_dir, CONFIG_FILE), cfg)
    log_mode = "a" if resume else "w"
    log_path = os.path.join(out_dir, LOG_FILE)
    log_fh = open(log_path, log_mode)

    def log(line: str) -> None:
        log_lines.append(line)
        log_fh.write(line + "\n")
        log_fh.flush()
        if echo:
            echo(line)

    epochs_run = start_epoch
    try:
        for epoch in range(start_epoch, cfg.max_epochs):
            rng = stream_rng(cfg.seed, "train-epoch", epoch)
            groups = epoch_record_batches(train_records, cfg.seed, epoch,
                                          cfg.batch_size)
            ce_sum = 0.0
            ce_tokens = 0
            ctc_sum = 0.0
            ctc_seqs = 0
            for bi, group in enumerate(groups):
                batch = collate(group, loader)
                tape = Tape()
                for p in model.params.values():
                    p.zero_grad()
                try:
                    total, report, _, _ = forward_batch(model, batch,
                                                        training=True, rng=rng,
                                                        tape=tape)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch} batch {bi}: {exc}") from None
                if not np.isfinite(total.data):
                    raise NumericError(f"non-finite loss at epoch {epoch} batch {bi} "
                                       f"(clips {batch.clip_ids[:3]}...)")
                backward(tape, total)
                training_step(opt, model.params, model.groups)
                n_tok = int((batch.target_lengths + 1).sum())
                ce_sum += report.ce_loss * n_tok
                ce_tokens += n_tok
                if report.ctc_loss is not None:
                    ctc_sum += report.ctc_loss * batch.size
                    ctc_seqs += batch.size

            ce_epoch = ce_sum / max(ce_tokens, 1)
            ctc_epoch = ctc_sum / ctc_seqs if ctc_seqs else None
            counts = evaluate_greedy(model, eval_records, loader, cfg.batch_size,
                                     cfg.train_eval_beam)
            acc = counts.accuracy
            improved = acc > best_acc + cfg.min_delta
            if improved:
                best_acc = acc
                best_epoch = epoch
                converged_epoch = epoch
                save_checkpoint(os.path.join(out_dir, BEST_CKPT), model.params)
            entry = {"epoch": epoch, "ce": ce_epoch, "ctc": ctc_epoch,
                     "acc": acc, "best": best_acc}
            history.append(entry)
            if ctc_epoch is None:
                log(f"epoch={epoch} ce={ce_epoch:.6f} total={ce_epoch:.6f} "
                    f"acc={acc:.2f} best={best_acc:.2f}")
            else:
                total_epoch = cfg.lambda_ctc * ctc_epoch + (1 - cfg.lambda_ctc) * ce_epoch
                log(f"epoch={epoch} ce={ce_epoch:.6f} ctc={ctc_epoch:.6f} "
                    f"total={total_epoch:.6f} acc={acc:.2f} best={best_acc:.2f}")
            save_checkpoint(os.path.join(out_dir, LAST_CKPT), model.params, opt)
            _write_state(state_path, epoch + 1, best_acc, best_epoch,
                         converged_epoch)
            epochs_run = epoch + 1
            if epoch - converged_epoch >= cfg.patience:
                log(f"early_stop=1 epoch={epoch} plateau_epochs={cfg.patience}")
                break
        log(f"converged_epoch={converged_epoch} best_acc={best_acc:.2f} "
            f"epochs_run={epochs_run}")
    finally:
        log_fh.close()
    return TrainResult(best_acc, best_epoch, converged_epoch, epochs_run,
                       out_dir, log_lines, history)
