"""Levenshtein scoring: edit distance with S/D/I decomposition, corpus-level
viseme accuracy, and the confusion matrix over aligned reference/hypothesis
pairs.

Accuracy follows the HTK convention (N - S - D - I) / N * 100 over the
pooled corpus counts; it can go negative when insertions dominate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


def _edit_dp(ref, hyp) -> np.ndarray:
    m, n = len(ref), len(hyp)
    dp = np.zeros((m + 1, n + 1), dtype=np.int32)
    dp[:, 0] = np.arange(m + 1)
    dp[0, :] = np.arange(n + 1)
    for i in range(1, m + 1):
        ri = ref[i - 1]
        row = dp[i]
        prev = dp[i - 1]
        for j in range(1, n + 1):
            row[j] = min(prev[j - 1] + (ri != hyp[j - 1]),
                         prev[j] + 1,
                         row[j - 1] + 1)
    return dp


def levenshtein_align(ref, hyp):
    """Edit distance plus one optimal alignment.

    Returns (distance, S, D, I, steps) where steps is a list of
    (op, ref_token_or_None, hyp_token_or_None). When several backtraces are
    optimal, ties prefer substitution over deletion over insertion.
    """
    ref, hyp = list(ref), list(hyp)
    dp = _edit_dp(ref, hyp)
    i, j = len(ref), len(hyp)
    steps = []
    subs = dels = ins = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
                steps.append((SUB, ref[i - 1], hyp[j - 1]))
            else:
                steps.append((MATCH, ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            steps.append((DEL, ref[i - 1], None))
            i -= 1
        else:
            ins += 1
            steps.append((INS, None, hyp[j - 1]))
            j -= 1
    steps.reverse()
    return int(dp[len(ref), len(hyp)]), subs, dels, ins, steps


def levenshtein(ref, hyp):
    """Minimal unit-cost edit distance and its S/D/I decomposition."""
    dist, s, d, i, _ = levenshtein_align(ref, hyp)
    return dist, s, d, i


@dataclass
class ScoreCounts:
    n_ref: int = 0
    subs: int = 0
    dels: int = 0
    ins: int = 0
    matches: int = 0

    def add(self, other: "ScoreCounts") -> None:
        self.n_ref += other.n_ref
        self.subs += other.subs
        self.dels += other.dels
        self.ins += other.ins
        self.matches += other.matches

    @property
    def accuracy(self) -> float:
        if self.n_ref == 0:
            raise ValueError("accuracy undefined for an empty reference corpus")
        return (self.n_ref - self.subs - self.dels - self.ins) / self.n_ref * 100.0

    @property
    def error_rate(self) -> float:
        return 100.0 - self.accuracy


def sentence_counts(ref, hyp) -> ScoreCounts:
    dist, s, d, i, steps = levenshtein_align(ref, hyp)
    matches = sum(1 for op, _, _ in steps if op == MATCH)
    return ScoreCounts(n_ref=len(list(ref)), subs=s, dels=d, ins=i, matches=matches)


def viseme_accuracy(refs, hyps) -> float:
    """Corpus accuracy (N-S-D-I)/N * 100 from pooled counts (not a per-sentence mean)."""
    if len(refs) != len(hyps):
        raise ValueError("refs and hyps must pair up")
    total = ScoreCounts()
    for ref, hyp in zip(refs, hyps):
        total.add(sentence_counts(ref, hyp))
    return total.accuracy


@dataclass
class ConfusionMatrix:
    """Aligned (ref, hyp) counts over matches and substitutions only;
    insertions and deletions are tallied separately."""

    counts: np.ndarray
    dels: np.ndarray
    ins_total: int

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def per_class_accuracy(self) -> np.ndarray:
        row = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc = np.where(row > 0, np.diag(self.counts) / np.maximum(row, 1) * 100.0,
                           np.nan)
        return acc


def confusion_matrix(refs, hyps, n_classes: int = 12) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    dels = np.zeros(n_classes, dtype=np.int64)
    ins_total = 0
    for ref, hyp in zip(refs, hyps):
        _, _, _, _, steps = levenshtein_align(ref, hyp)
        for op, r, h in steps:
            if op in (MATCH, SUB):
                counts[r, h] += 1
            elif op == DEL:
                dels[r] += 1
            else:
                ins_total += 1
    return ConfusionMatrix(counts, dels, ins_total)
