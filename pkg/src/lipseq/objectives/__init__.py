"""Losses, decoding, and scoring."""

from .losses import (LossReport, cross_entropy_sequence_loss, ctc_loss,
                     ctc_required_length, joint_loss)
from .decoding import (Hypothesis, greedy_decode, greedy_decode_batch,
                       beam_search_decode, default_max_len)
from .scoring import (levenshtein, levenshtein_align, sentence_counts,
                      ScoreCounts, viseme_accuracy, confusion_matrix,
                      ConfusionMatrix, MATCH, SUB, DEL, INS)

__all__ = [
    "LossReport", "cross_entropy_sequence_loss", "ctc_loss",
    "ctc_required_length", "joint_loss",
    "Hypothesis", "greedy_decode", "greedy_decode_batch", "beam_search_decode",
    "default_max_len",
    "levenshtein", "levenshtein_align", "sentence_counts", "ScoreCounts",
    "viseme_accuracy", "confusion_matrix", "ConfusionMatrix",
    "MATCH", "SUB", "DEL", "INS",
]
