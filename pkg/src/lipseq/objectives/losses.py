"""Training objectives: masked cross-entropy over decoder logits, CTC over
encoder logits, and the mixed joint loss.

The CTC negative log-likelihood marginalises over every blank-augmented
frame labelling that collapses to the target; the forward dynamic program
runs in log space and the gradient uses the standard forward-backward
posterior: dL/d logit[t,k] = softmax(logit[t])_k - sum of posteriors of
extended-label states emitting k at frame t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..gradcore import Tensor, accumulate_grad, ops
from ..gradcore.ops import as_tensor, _wants_grad

NEG_INF = -np.inf


@dataclass
class LossReport:
    """Scalar loss components for one batch (or epoch aggregate)."""

    ce_loss: float
    ctc_loss: float | None = None
    lam: float = 0.2

    @property
    def total(self) -> float:
        if self.ctc_loss is None:
            return self.ce_loss
        return self.lam * self.ctc_loss + (1.0 - self.lam) * self.ce_loss


def cross_entropy_sequence_loss(logits, targets: np.ndarray,
                                mask: np.ndarray | None = None, tape=None) -> Tensor:
    """Mean negative log softmax probability of the targets over unmasked steps.

    logits: (U,B,V) or (U,V); targets: matching (U,B) or (U,) integer ids;
    the end-of-sentence token is expected as the final in-mask target.
    """
    logits = as_tensor(logits)
    squeezed = logits.ndim == 2
    ld = logits.data[:, None, :] if squeezed else logits.data
    targets = np.asarray(targets, dtype=np.int64)
    if squeezed and targets.ndim == 1:
        targets = targets[:, None]
    if ld.shape[:2] != targets.shape:
        raise ValueError(f"logits steps {ld.shape[:2]} do not match targets "
                         f"{targets.shape}")
    if mask is None:
        mask = np.ones(targets.shape, dtype=bool)
    elif squeezed and mask.ndim == 1:
        mask = mask[:, None]
    n = int(mask.sum())
    if n == 0:
        raise ValueError("cross entropy needs at least one unmasked position")

    shifted = ld - ld.max(axis=2, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    log_sm = shifted - logz
    u, b = targets.shape
    picked = log_sm[np.arange(u)[:, None], np.arange(b)[None, :], targets]
    value = -(picked * mask).sum() / n

    out = Tensor(np.asarray(value), requires_grad=_wants_grad(tape, logits))
    if out.requires_grad:
        def bwd(g):
            soft = np.exp(log_sm)
            grad = soft.copy()
            grad[np.arange(u)[:, None], np.arange(b)[None, :], targets] -= 1.0
            grad *= (mask[:, :, None] * (float(g) / n))
            if squeezed:
                grad = grad[:, 0, :]
            accumulate_grad(logits, grad.astype(logits.data.dtype, copy=False))
        tape.record([out], [logits], bwd)
    return out


def ctc_required_length(target) -> int:
    """Minimum frame count admitting a valid alignment (repeats force blanks)."""
    target = list(target)
    return len(target) + sum(1 for a, b in zip(target, target[1:]) if a == b)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _ctc_single(logits: np.ndarray, target: list[int], blank: int):
    """Forward-backward for one sequence. Returns (nll, dnll/dlogits)."""
    t_len = logits.shape[0]
    needed = ctc_required_length(target)
    if t_len < needed:
        raise DataError(f"CTC pair infeasible: {t_len} frames cannot align "
                        f"a target needing {needed}")
    ext = [blank]
    for tok in target:
        ext.extend((tok, blank))
    s_len = len(ext)
    ext = np.asarray(ext)
    logp = _log_softmax(logits.astype(np.float64))
    emit = logp[:, ext]                                    # (T,S)

    skip_ok = np.zeros(s_len, dtype=bool)                  # s-2 transition allowed
    skip_ok[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        stay = prev
        step = np.full(s_len, NEG_INF)
        step[1:] = prev[:-1]
        skip = np.full(s_len, NEG_INF)
        skip[2:] = prev[:-2]
        skip[~skip_ok] = NEG_INF
        m = np.maximum(np.maximum(stay, step), skip)
        safe = m > NEG_INF
        tot = np.full(s_len, NEG_INF)
        tot[safe] = m[safe] + np.log(np.exp(stay[safe] - m[safe])
                                     + np.exp(step[safe] - m[safe])
                                     + np.exp(skip[safe] - m[safe]))
        alpha[t] = tot + emit[t]

    end = alpha[t_len - 1, s_len - 1]
    if s_len > 1:
        hi = max(end, alpha[t_len - 1, s_len - 2])
        end = hi + np.log(np.exp(end - hi) + np.exp(alpha[t_len - 1, s_len - 2] - hi)) \
            if hi > NEG_INF else NEG_INF
    log_p = end
    if not np.isfinite(log_p):
        raise DataError("CTC forward collapsed to zero probability")

    # beta excludes the emission at t, so alpha[t] + beta[t] sums to log_p
    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = 0.0
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        step = np.full(s_len, NEG_INF)
        step[:-1] = nxt[1:]
        skip = np.full(s_len, NEG_INF)
        ok = skip_ok[2:]
        skip[:-2][ok] = nxt[2:][ok]
        m = np.maximum(np.maximum(stay, step), skip)
        safe = m > NEG_INF
        tot = np.full(s_len, NEG_INF)
        tot[safe] = m[safe] + np.log(np.exp(stay[safe] - m[safe])
                                     + np.exp(step[safe] - m[safe])
                                     + np.exp(skip[safe] - m[safe]))
        beta[t] = tot

    gamma = np.exp(alpha + beta - log_p)                   # (T,S) posteriors
    grad = np.exp(logp)                                    # softmax(logits)
    for s in range(s_len):
        grad[:, ext[s]] -= gamma[:, s]
    return -log_p, grad


def ctc_loss(logits, targets, input_lengths=None, blank: int | None = None,
             tape=None) -> Tensor:
    """CTC negative log-likelihood, averaged per sequence for batches.

    logits: (T,V'+1) for one sequence or (T,B,V'+1) for a batch; `targets` is
    one label list or a list of lists; the blank index defaults to the last
    class. Frames at or beyond a sequence's input length are ignored.
    """
    logits = as_tensor(logits)
    squeezed = logits.ndim == 2
    ld = logits.data[:, None, :] if squeezed else logits.data
    if squeezed:
        targets = [list(targets)]
    else:
        targets = [list(t) for t in targets]
    t_max, batch, n_class = ld.shape
    if blank is None:
        blank = n_class - 1
    if input_lengths is None:
        input_lengths = np.full(batch, t_max, dtype=np.int64)
    input_lengths = np.asarray(input_lengths, dtype=np.int64)

    nll = np.zeros(batch)
    grads = np.zeros((t_max, batch, n_class))
    for i in range(batch):
        t_len = int(input_lengths[i])
        loss_i, grad_i = _ctc_single(ld[:t_len, i, :], targets[i], blank)
        nll[i] = loss_i
        grads[:t_len, i, :] = grad_i
    value = nll.mean()

    out = Tensor(np.asarray(value), requires_grad=_wants_grad(tape, logits))
    if out.requires_grad:
        def bwd(g):
            full = grads * (float(g) / batch)
            if squeezed:
                full = full[:, 0, :]
            accumulate_grad(logits, full.astype(logits.data.dtype, copy=False))
        tape.record([out], [logits], bwd)
    return out


def joint_loss(ce, ctc=None, lam: float = 0.2, tape=None) -> Tensor:
    """lam * ctc + (1 - lam) * ce; plain ce when no CTC component is present."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixing coefficient must lie in [0,1], got {lam}")
    ce = as_tensor(ce)
    if ctc is None:
        return ce
    ctc = as_tensor(ctc)
    if not (np.all(np.isfinite(ce.data)) and np.all(np.isfinite(ctc.data))):
        raise ValueError("joint loss requires finite components")
    return ops.add(ops.scale(ctc, lam, tape), ops.scale(ce, 1.0 - lam, tape), tape)
