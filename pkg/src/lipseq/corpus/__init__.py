"""Viseme vocabulary, manifest loading, batching, and the synthetic corpus."""

from . import vocab
from .vocab import (VISEME_TABLE, N_VISEMES, PAD_ID, START_ID, END_ID,
                    VOCAB_SIZE, BLANK_ID, CTC_CLASSES, SHORT_NAMES, LONG_NAMES,
                    PHONEME_TO_VISEME, map_phonemes, verify_table,
                    names_to_tokens, tokens_to_names, to_decoder_ids,
                    from_decoder_ids)
from .data import (SentenceRecord, Batch, load_manifest, save_manifest,
                   bucket_of, make_buckets, epoch_record_batches, epoch_stream,
                   collate, padded_cells, stream_rng, BUCKET_WIDTH_FRAMES)
from .synth import (SynthConfig, viseme_glyphs, unigram_prior, sample_transcript,
                    render_sentence, synth_generate, write_dataset, SILENCE_ID,
                    TOP2_IDS, DEFAULT_TOP2_MASS)

__all__ = [
    "vocab", "VISEME_TABLE", "N_VISEMES", "PAD_ID", "START_ID", "END_ID",
    "VOCAB_SIZE", "BLANK_ID", "CTC_CLASSES", "SHORT_NAMES", "LONG_NAMES",
    "PHONEME_TO_VISEME", "map_phonemes", "verify_table", "names_to_tokens",
    "tokens_to_names", "to_decoder_ids", "from_decoder_ids",
    "SentenceRecord", "Batch", "load_manifest", "save_manifest", "bucket_of",
    "make_buckets", "epoch_record_batches", "epoch_stream", "collate",
    "padded_cells", "stream_rng", "BUCKET_WIDTH_FRAMES",
    "SynthConfig", "viseme_glyphs", "unigram_prior", "sample_transcript",
    "render_sentence", "synth_generate", "write_dataset", "SILENCE_ID",
    "TOP2_IDS", "DEFAULT_TOP2_MASS",
]
