"""Greedy and beam-search decoding over an abstract decoder step function.

A step function maps (state, last tokens) to (log-probabilities (n,V),
new state, alignment rows or None); states expose .take(indices) so beams
can be reordered. Width-1 beam search reproduces greedy decoding token for
token (ties break toward the lowest token id in both).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Hypothesis:
    """One decoded candidate: content tokens only, no sentinels."""

    tokens: list[int]
    log_prob: float
    finished: bool = True
    alignment: np.ndarray | None = None

    def score(self, length_normalize: bool = False) -> float:
        if length_normalize and self.tokens:
            return self.log_prob / len(self.tokens)
        return self.log_prob


def default_max_len(memory_len: int) -> int:
    return int(1.5 * memory_len) + 10


def greedy_decode(step_fn, init_state, start_id: int, end_id: int,
                  max_len: int, exclude_ids=()) -> Hypothesis:
    """Argmax decoding of a single sequence (state batch must be 1)."""
    state = init_state
    tokens_in = np.array([start_id], dtype=np.int64)
    out: list[int] = []
    rows = []
    logp = 0.0
    finished = False
    for _ in range(max_len):
        logprobs, state, align = step_fn(state, tokens_in)
        lp = logprobs[0].copy()
        for tok in exclude_ids:
            lp[tok] = -np.inf
        nxt = int(np.argmax(lp))
        logp += float(lp[nxt])
        if align is not None:
            rows.append(align[0])
        if nxt == end_id:
            finished = True
            break
        out.append(nxt)
        tokens_in = np.array([nxt], dtype=np.int64)
    alignment = np.stack(rows) if rows else None
    return Hypothesis(out, logp, finished=finished, alignment=alignment)


def greedy_decode_batch(step_fn, init_state, start_id: int, end_id: int,
                        max_len: int, exclude_ids=()) -> list[list[int]]:
    """Batched argmax decoding; returns one token list per batch row."""
    batch = init_state.batch
    state = init_state
    tokens_in = np.full(batch, start_id, dtype=np.int64)
    alive = np.ones(batch, dtype=bool)
    out: list[list[int]] = [[] for _ in range(batch)]
    for _ in range(max_len):
        logprobs, state, _ = step_fn(state, tokens_in)
        lp = logprobs.copy()
        for tok in exclude_ids:
            lp[:, tok] = -np.inf
        nxt = lp.argmax(axis=1)
        for b in range(batch):
            if not alive[b]:
                continue
            if nxt[b] == end_id:
                alive[b] = False
            else:
                out[b].append(int(nxt[b]))
        if not alive.any():
            break
        tokens_in = np.where(alive, nxt, end_id)
    return out


def beam_search_decode(step_fn, init_state, start_id: int, end_id: int,
                       width: int = 4, max_len: int = 50, exclude_ids=(),
                       length_normalize: bool = False) -> list[Hypothesis]:
    """Standard beam search; returns hypotheses sorted by score, best first.

    Each step ranks every one-token extension of the live beam and keeps the
    best `width` of them; end-token extensions compete for those slots and
    are finalized when selected, so a width-1 beam follows exactly the greedy
    argmax chain (ties break by score desc, source hypothesis, token id).
    Candidates still live at max_len come back marked finished=False.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    state = init_state
    live_tokens: list[list[int]] = [[]]
    live_logp = np.zeros(1)
    live_rows: list[list[np.ndarray]] = [[]]
    tokens_in = np.array([start_id], dtype=np.int64)
    finalized: list[Hypothesis] = []
    truncated = False

    for step in range(max_len):
        logprobs, new_state, align = step_fn(state, tokens_in)
        lp = logprobs.copy()
        for tok in exclude_ids:
            lp[:, tok] = -np.inf
        n, vocab = lp.shape
        scores = (live_logp[:, None] + lp).ravel()
        hyp_idx = np.repeat(np.arange(n), vocab)
        tok_idx = np.tile(np.arange(vocab), n)
        order = np.lexsort((tok_idx, hyp_idx, -scores))

        sel_hyp, sel_tok, sel_score = [], [], []
        taken = 0
        for flat in order:
            if taken >= width:
                break
            sc = float(scores[flat])
            if not np.isfinite(sc):
                break
            h, tok = int(hyp_idx[flat]), int(tok_idx[flat])
            if tok == end_id:
                rows = live_rows[h] + ([align[h]] if align is not None else [])
                finalized.append(Hypothesis(
                    list(live_tokens[h]), sc, finished=True,
                    alignment=np.stack(rows) if rows else None))
            else:
                sel_hyp.append(h)
                sel_tok.append(tok)
                sel_score.append(sc)
            taken += 1
        if not sel_hyp:
            break
        new_rows = []
        for h in sel_hyp:
            rows = list(live_rows[h])
            if align is not None:
                rows.append(align[h])
            new_rows.append(rows)
        live_tokens = [live_tokens[h] + [tok] for h, tok in zip(sel_hyp, sel_tok)]
        live_rows = new_rows
        live_logp = np.asarray(sel_score)
        state = new_state.take(np.asarray(sel_hyp))
        tokens_in = np.asarray(sel_tok, dtype=np.int64)
        if len(finalized) >= width:
            kth = sorted((h.log_prob for h in finalized), reverse=True)[width - 1]
            if live_logp.max() <= kth:
                break
        if step == max_len - 1:
            truncated = True

    if truncated:
        for toks, lgp, rows in zip(live_tokens, live_logp, live_rows):
            finalized.append(Hypothesis(list(toks), float(lgp), finished=False,
                                        alignment=np.stack(rows) if rows else None))

    finalized.sort(key=lambda h: (-h.score(length_normalize), len(h.tokens)))
    return finalized[:width]
