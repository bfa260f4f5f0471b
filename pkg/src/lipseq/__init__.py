"""lipseq: a desk-scale, end-to-end trainable viseme lipreading toolkit.

Visual front-ends (2D-DCT features or small 2D/3D CNNs) feed an LSTM
encoder-decoder with content or online monotonic attention, trained with
cross-entropy, CTC, or a joint loss, and scored by Levenshtein alignment
over a 12-class viseme vocabulary.
"""

__version__ = "0.1.0"
